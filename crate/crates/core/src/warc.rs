//! WARC record parsing (ISO 28500) and HTML payload decoding.

use std::fmt;
use std::io::Read;

use encoding_rs::Encoding;
use flate2::read::{GzDecoder, ZlibDecoder};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Pages whose decoded text is more than this fraction of U+FFFD are
/// treated as binary.
pub const MAX_REPLACEMENT_RATIO: f64 = 0.10;
const META_SCAN_BYTES: usize = 1024;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum WarcErrorKind {
    #[error("corrupt gzip member: {0}")]
    Corrupt(String),
    #[error("missing WARC version line")]
    MissingVersion,
    #[error("malformed header line {0:?}")]
    MalformedHeader(String),
    #[error("header block is not terminated by an empty line")]
    UnterminatedHeaders,
    #[error("missing Content-Length header")]
    MissingContentLength,
    #[error("invalid Content-Length {0:?}")]
    BadContentLength(String),
    #[error("block truncated: Content-Length {declared}, {available} bytes available")]
    Truncated { declared: u64, available: u64 },
    #[error("record block is not followed by CRLF CRLF")]
    MissingTrailer,
    #[error("malformed HTTP response: {0}")]
    MalformedHttp(String),
}

/// A parse failure at a byte offset into the record.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("at byte {offset}: {kind}")]
pub struct WarcError {
    pub offset: usize,
    pub kind: WarcErrorKind,
}

impl WarcError {
    fn at(offset: usize, kind: WarcErrorKind) -> Self {
        WarcError { offset, kind }
    }
}

/// Inflates the first gzip member of `compressed`; anything after it is
/// ignored.
pub fn decompress_member(compressed: &[u8]) -> Result<Vec<u8>, WarcError> {
    let mut out = Vec::with_capacity(compressed.len() * 4);
    GzDecoder::new(compressed)
        .read_to_end(&mut out)
        .map_err(|e| WarcError::at(0, WarcErrorKind::Corrupt(e.to_string())))?;
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WarcRecord {
    pub warc_version: String,
    pub warc_headers: Vec<(String, String)>,
    /// Set for `response` records whose block is an HTTP message.
    pub http: Option<HttpHead>,
    /// The HTTP body for responses, otherwise the whole block.
    pub payload: Vec<u8>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HttpHead {
    pub status_line: String,
    pub status: u16,
    pub headers: Vec<(String, String)>,
    /// Length of the status line and header block including the blank line.
    pub head_len: usize,
}

fn lookup<'a>(headers: &'a [(String, String)], name: &str) -> Option<&'a str> {
    headers.iter().find(|(k, _)| k.eq_ignore_ascii_case(name)).map(|(_, v)| v.as_str())
}

impl HttpHead {
    pub fn header(&self, name: &str) -> Option<&str> {
        lookup(&self.headers, name)
    }
}

impl WarcRecord {
    pub fn header(&self, name: &str) -> Option<&str> {
        lookup(&self.warc_headers, name)
    }

    pub fn warc_type(&self) -> Option<&str> {
        self.header("WARC-Type")
    }

    pub fn is_response(&self) -> bool {
        self.warc_type().is_some_and(|t| t.eq_ignore_ascii_case("response"))
    }

    pub fn target_uri(&self) -> Option<&str> {
        self.header("WARC-Target-URI")
    }

    pub fn record_date(&self) -> Option<&str> {
        self.header("WARC-Date")
    }

    pub fn http_status(&self) -> Option<u16> {
        self.http.as_ref().map(|h| h.status)
    }
}

fn find(hay: &[u8], needle: &[u8]) -> Option<usize> {
    hay.windows(needle.len()).position(|w| w == needle)
}

fn is_token(s: &str) -> bool {
    !s.is_empty() && s.bytes().all(|b| b.is_ascii_graphic() && !b"()<>@,;:\\\"/[]?={}".contains(&b))
}

/// Parses `Name: value` lines from `raw[start..]` up to and including the
/// blank line. Returns the headers and the offset just past the blank line.
fn parse_header_block(raw: &[u8], start: usize) -> Result<(Vec<(String, String)>, usize), WarcError> {
    let mut headers: Vec<(String, String)> = Vec::new();
    let mut pos = start;
    loop {
        let Some(rel) = find(&raw[pos..], b"\r\n") else {
            return Err(WarcError::at(raw.len(), WarcErrorKind::UnterminatedHeaders));
        };
        let line = &raw[pos..pos + rel];
        if line.is_empty() {
            return Ok((headers, pos + 2));
        }
        let text = String::from_utf8_lossy(line);
        if line[0] == b' ' || line[0] == b'\t' {
            // Obsolete line folding.
            match headers.last_mut() {
                Some((_, v)) => {
                    v.push(' ');
                    v.push_str(text.trim());
                }
                None => return Err(WarcError::at(pos, WarcErrorKind::MalformedHeader(text.into_owned()))),
            }
        } else {
            let Some((name, value)) = text.split_once(':') else {
                return Err(WarcError::at(pos, WarcErrorKind::MalformedHeader(text.into_owned())));
            };
            if !is_token(name) {
                return Err(WarcError::at(pos, WarcErrorKind::MalformedHeader(text.into_owned())));
            }
            headers.push((name.to_string(), value.trim_matches([' ', '\t']).to_string()));
        }
        pos += rel + 2;
    }
}

fn parse_http_head(block: &[u8], block_offset: usize) -> Result<HttpHead, WarcError> {
    let bad = |off: usize, msg: String| WarcError::at(block_offset + off, WarcErrorKind::MalformedHttp(msg));
    let Some(eol) = find(block, b"\r\n") else {
        return Err(bad(0, "missing status line".into()));
    };
    let status_line = String::from_utf8_lossy(&block[..eol]).into_owned();
    let mut parts = status_line.splitn(3, ' ');
    let version = parts.next().unwrap_or("");
    let code = parts.next().unwrap_or("");
    if !version.starts_with("HTTP/") || code.len() != 3 {
        return Err(bad(0, format!("bad status line {status_line:?}")));
    }
    let status: u16 = code.parse().map_err(|_| bad(0, format!("bad status code {code:?}")))?;
    let (headers, end) = parse_header_block(block, eol + 2).map_err(|e| bad(e.offset, e.kind.to_string()))?;
    Ok(HttpHead { status_line, status, headers, head_len: end })
}

/// Parses one uncompressed WARC record.
pub fn parse_warc(raw: &[u8]) -> Result<WarcRecord, WarcError> {
    let Some(eol) = find(raw, b"\r\n") else {
        return Err(WarcError::at(0, WarcErrorKind::MissingVersion));
    };
    let version = std::str::from_utf8(&raw[..eol]).unwrap_or("");
    if !version.starts_with("WARC/") || version.len() <= 5 {
        return Err(WarcError::at(0, WarcErrorKind::MissingVersion));
    }
    let (warc_headers, block_start) = parse_header_block(raw, eol + 2)?;

    let cl = lookup(&warc_headers, "Content-Length")
        .ok_or_else(|| WarcError::at(block_start, WarcErrorKind::MissingContentLength))?;
    let declared: u64 = cl
        .parse()
        .map_err(|_| WarcError::at(block_start, WarcErrorKind::BadContentLength(cl.to_string())))?;
    let available = (raw.len() - block_start) as u64;
    if declared > available {
        return Err(WarcError::at(raw.len(), WarcErrorKind::Truncated { declared, available }));
    }
    let block_end = block_start + declared as usize;
    if raw.get(block_end..block_end + 4) != Some(b"\r\n\r\n") {
        return Err(WarcError::at(block_end, WarcErrorKind::MissingTrailer));
    }
    let block = &raw[block_start..block_end];

    let mut rec = WarcRecord { warc_version: version.to_string(), warc_headers, http: None, payload: Vec::new() };
    if rec.is_response() && block.starts_with(b"HTTP/") {
        let head = parse_http_head(block, block_start)?;
        rec.payload = block[head.head_len..].to_vec();
        rec.http = Some(head);
    } else {
        rec.payload = block.to_vec();
    }
    Ok(rec)
}

/// Writes `rec` back in WARC framing. For records parsed from conformant
/// input (`Name: value` headers, CRLF line endings) the output is
/// byte-identical to the input.
pub fn serialize(rec: &WarcRecord) -> Vec<u8> {
    let mut block = Vec::new();
    if let Some(h) = &rec.http {
        block.extend_from_slice(h.status_line.as_bytes());
        block.extend_from_slice(b"\r\n");
        for (k, v) in &h.headers {
            block.extend_from_slice(format!("{k}: {v}\r\n").as_bytes());
        }
        block.extend_from_slice(b"\r\n");
    }
    block.extend_from_slice(&rec.payload);

    let mut out = Vec::with_capacity(block.len() + 512);
    out.extend_from_slice(rec.warc_version.as_bytes());
    out.extend_from_slice(b"\r\n");
    for (k, v) in &rec.warc_headers {
        let v = if k.eq_ignore_ascii_case("Content-Length") { block.len().to_string() } else { v.clone() };
        out.extend_from_slice(format!("{k}: {v}\r\n").as_bytes());
    }
    out.extend_from_slice(b"\r\n");
    out.extend_from_slice(&block);
    out.extend_from_slice(b"\r\n\r\n");
    out
}

/// Removes HTTP/1.1 chunked transfer coding. Trailers are discarded.
pub fn dechunk(body: &[u8]) -> Result<Vec<u8>, String> {
    let mut out = Vec::with_capacity(body.len());
    let mut pos = 0;
    loop {
        let Some(rel) = body[pos..].iter().position(|&b| b == b'\n') else {
            return Err(format!("missing chunk size line at byte {pos}"));
        };
        let line = String::from_utf8_lossy(&body[pos..pos + rel]);
        let size_str = line.trim_end_matches('\r').split(';').next().unwrap_or("").trim();
        let size = usize::from_str_radix(size_str, 16).map_err(|_| format!("bad chunk size {size_str:?} at byte {pos}"))?;
        pos += rel + 1;
        if size == 0 {
            return Ok(out);
        }
        let end = pos.checked_add(size).filter(|&e| e <= body.len()).ok_or_else(|| format!("chunk at byte {pos} overruns body"))?;
        out.extend_from_slice(&body[pos..end]);
        pos = end;
        if body[pos..].starts_with(b"\r\n") {
            pos += 2;
        } else if body[pos..].starts_with(b"\n") {
            pos += 1;
        } else {
            return Err(format!("missing CRLF after chunk at byte {pos}"));
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CharsetSource {
    HttpHeader,
    MetaTag,
    Utf8Default,
}

impl fmt::Display for CharsetSource {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            CharsetSource::HttpHeader => "http-header",
            CharsetSource::MetaTag => "meta-tag",
            CharsetSource::Utf8Default => "utf8-default",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HtmlPage {
    pub url: String,
    pub html: String,
    pub charset_source: CharsetSource,
    pub encoding: &'static str,
    pub replacements: usize,
    pub crawl_id: String,
    pub record_date: String,
}

/// Why a fetched record produced no page. Each skipped record has exactly
/// one reason.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SkipReason {
    /// Gzip or WARC framing could not be parsed.
    Corrupt,
    NotResponse,
    HttpStatus,
    NotHtml,
    /// Transfer or content coding could not be undone.
    BadEncoding,
    /// Too many undecodable bytes.
    Garbage,
    /// Extraction kept no block.
    NoText,
}

impl SkipReason {
    pub const ALL: [SkipReason; 7] = [
        SkipReason::Corrupt,
        SkipReason::NotResponse,
        SkipReason::HttpStatus,
        SkipReason::NotHtml,
        SkipReason::BadEncoding,
        SkipReason::Garbage,
        SkipReason::NoText,
    ];

    pub fn name(self) -> &'static str {
        match self {
            SkipReason::Corrupt => "corrupt",
            SkipReason::NotResponse => "not_response",
            SkipReason::HttpStatus => "http_status",
            SkipReason::NotHtml => "not_html",
            SkipReason::BadEncoding => "bad_encoding",
            SkipReason::Garbage => "garbage",
            SkipReason::NoText => "no_text",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("{}: {detail}", reason.name())]
pub struct Skip {
    pub reason: SkipReason,
    pub detail: String,
}

impl Skip {
    pub fn new(reason: SkipReason, detail: impl Into<String>) -> Self {
        Skip { reason, detail: detail.into() }
    }
}

fn charset_param(content_type: &str) -> Option<&str> {
    content_type.split(';').skip(1).find_map(|p| {
        let (k, v) = p.split_once('=')?;
        k.trim().eq_ignore_ascii_case("charset").then(|| v.trim().trim_matches(['"', '\'']))
    })
}

fn is_html_type(content_type: &str) -> bool {
    let mime = content_type.split(';').next().unwrap_or("").trim();
    mime.eq_ignore_ascii_case("text/html") || mime.eq_ignore_ascii_case("application/xhtml+xml")
}

/// Finds a charset declared in a `<meta>` tag within the first 1024 bytes.
pub fn meta_charset(body: &[u8]) -> Option<&'static Encoding> {
    let head = &body[..body.len().min(META_SCAN_BYTES)];
    let lower: Vec<u8> = head.iter().map(u8::to_ascii_lowercase).collect();
    let mut from = 0;
    while let Some(rel) = find(&lower[from..], b"<meta") {
        let start = from + rel + 5;
        let end = lower[start..].iter().position(|&b| b == b'>').map_or(lower.len(), |e| start + e);
        let tag = &lower[start..end];
        if let Some(c) = find(tag, b"charset") {
            let mut i = c + 7;
            while i < tag.len() && tag[i].is_ascii_whitespace() {
                i += 1;
            }
            if tag.get(i) == Some(&b'=') {
                i += 1;
                while i < tag.len() && (tag[i].is_ascii_whitespace() || tag[i] == b'"' || tag[i] == b'\'') {
                    i += 1;
                }
                let v_end = tag[i..]
                    .iter()
                    .position(|&b| b.is_ascii_whitespace() || b"\"';/>".contains(&b))
                    .map_or(tag.len(), |e| i + e);
                if let Some(enc) = Encoding::for_label(&tag[i..v_end]) {
                    // A meta tag in ASCII-compatible bytes cannot really be
                    // UTF-16; browsers treat that declaration as UTF-8.
                    return Some(if enc == encoding_rs::UTF_16LE || enc == encoding_rs::UTF_16BE {
                        encoding_rs::UTF_8
                    } else {
                        enc
                    });
                }
            }
        }
        from = end.max(start);
    }
    None
}

fn undo_content_encoding(body: Vec<u8>, coding: &str) -> Result<Vec<u8>, String> {
    let mut out = Vec::new();
    match coding.trim().to_ascii_lowercase().as_str() {
        "" | "identity" => return Ok(body),
        "gzip" | "x-gzip" => GzDecoder::new(&body[..]).read_to_end(&mut out),
        "deflate" => ZlibDecoder::new(&body[..]).read_to_end(&mut out),
        other => return Err(format!("unsupported content coding {other:?}")),
    }
    .map_err(|e| e.to_string())?;
    Ok(out)
}

/// Decodes the HTML payload of a response record into Unicode.
pub fn decode_html(rec: &WarcRecord, crawl_id: &str) -> Result<HtmlPage, Skip> {
    if !rec.is_response() {
        return Err(Skip::new(SkipReason::NotResponse, rec.warc_type().unwrap_or("missing WARC-Type")));
    }
    let Some(http) = &rec.http else {
        return Err(Skip::new(SkipReason::NotResponse, "response block is not an HTTP message"));
    };
    if !(200..300).contains(&http.status) {
        return Err(Skip::new(SkipReason::HttpStatus, http.status.to_string()));
    }
    let content_type = http.header("Content-Type").unwrap_or("");
    if !is_html_type(content_type) {
        return Err(Skip::new(SkipReason::NotHtml, content_type));
    }

    let mut body = rec.payload.clone();
    if http.header("Transfer-Encoding").is_some_and(|te| te.to_ascii_lowercase().contains("chunked")) {
        body = dechunk(&body).map_err(|e| Skip::new(SkipReason::BadEncoding, e))?;
    }
    if let Some(ce) = http.header("Content-Encoding") {
        body = undo_content_encoding(body, ce).map_err(|e| Skip::new(SkipReason::BadEncoding, e))?;
    }

    let (encoding, source) = if let Some(enc) = charset_param(content_type).and_then(|c| Encoding::for_label(c.as_bytes())) {
        (enc, CharsetSource::HttpHeader)
    } else if let Some(enc) = meta_charset(&body) {
        (enc, CharsetSource::MetaTag)
    } else {
        (encoding_rs::UTF_8, CharsetSource::Utf8Default)
    };
    let (text, had_errors) = encoding.decode_without_bom_handling(&body);
    let mut html = text.into_owned();
    if html.starts_with('\u{feff}') {
        html.remove(0);
    }
    let replacements = if had_errors { html.chars().filter(|&c| c == '\u{fffd}').count() } else { 0 };
    let total = html.chars().count();
    if replacements > 0 && replacements as f64 > MAX_REPLACEMENT_RATIO * total as f64 {
        return Err(Skip::new(SkipReason::Garbage, format!("{replacements} of {total} characters replaced")));
    }

    Ok(HtmlPage {
        url: rec.target_uri().unwrap_or("").to_string(),
        html,
        charset_source: source,
        encoding: encoding.name(),
        replacements,
        crawl_id: crawl_id.to_string(),
        record_date: rec.record_date().unwrap_or("").to_string(),
    })
}

/// Gzip member to decoded page.
pub fn page_from_member(compressed: &[u8], crawl_id: &str) -> Result<HtmlPage, Skip> {
    let raw = decompress_member(compressed).map_err(|e| Skip::new(SkipReason::Corrupt, e.to_string()))?;
    let rec = parse_warc(&raw).map_err(|e| Skip::new(SkipReason::Corrupt, e.to_string()))?;
    decode_html(&rec, crawl_id)
}

#[cfg(test)]
mod tests {
    use super::*;
    use flate2::write::GzEncoder;
    use std::io::Write;

    fn gz(data: &[u8]) -> Vec<u8> {
        let mut e = GzEncoder::new(Vec::new(), flate2::Compression::default());
        e.write_all(data).unwrap();
        e.finish().unwrap()
    }

    fn response(http_headers: &str, body: &[u8]) -> Vec<u8> {
        let mut block = format!("HTTP/1.1 200 OK\r\n{http_headers}\r\n").into_bytes();
        block.extend_from_slice(body);
        let mut out = format!(
            "WARC/1.0\r\nWARC-Type: response\r\nWARC-Date: 2023-03-20T10:00:00Z\r\nWARC-Target-URI: https://a.et/\r\nContent-Length: {}\r\n\r\n",
            block.len()
        )
        .into_bytes();
        out.extend_from_slice(&block);
        out.extend_from_slice(b"\r\n\r\n");
        out
    }

    #[test]
    fn first_member_only() {
        assert_eq!(decompress_member(&gz(b"hello")).unwrap(), b"hello");
        let mut two = gz(b"a");
        two.extend(gz(b"b"));
        assert_eq!(decompress_member(&two).unwrap(), b"a");
        let g = gz(b"hello world, hello world");
        assert!(matches!(decompress_member(&g[..g.len() - 6]).unwrap_err().kind, WarcErrorKind::Corrupt(_)));
    }

    #[test]
    fn parses_and_round_trips() {
        let raw = response("Content-Type: text/html; charset=utf-8\r\n", "<p>ሰላም</p>".as_bytes());
        let rec = parse_warc(&raw).unwrap();
        assert_eq!(rec.warc_version, "WARC/1.0");
        assert_eq!(rec.http_status(), Some(200));
        assert_eq!(rec.payload, "<p>ሰላም</p>".as_bytes());
        assert_eq!(serialize(&rec), raw);
        let page = decode_html(&rec, "CC-MAIN-2023-14").unwrap();
        assert_eq!(page.html, "<p>ሰላም</p>");
        assert_eq!(page.charset_source, CharsetSource::HttpHeader);
        assert_eq!(page.url, "https://a.et/");
    }

    #[test]
    fn request_records_are_not_pages() {
        let raw = b"WARC/1.1\r\nWARC-Type: request\r\nContent-Length: 5\r\n\r\nGET /\r\n\r\n";
        let rec = parse_warc(raw).unwrap();
        assert!(!rec.is_response());
        assert_eq!(serialize(&rec), raw);
        assert_eq!(decode_html(&rec, "c").unwrap_err().reason, SkipReason::NotResponse);
    }

    #[test]
    fn structural_errors() {
        let raw = response("Content-Type: text/html\r\n", b"<p>x</p>");
        let e = parse_warc(&raw[..raw.len() - 10]).unwrap_err();
        assert!(matches!(e.kind, WarcErrorKind::Truncated { .. }));
        assert_eq!(e.offset, raw.len() - 10);
        assert_eq!(parse_warc(b"HTTP/1.1 200\r\n\r\n").unwrap_err().kind, WarcErrorKind::MissingVersion);
        let bad = b"WARC/1.0\r\nno colon here\r\n\r\n";
        assert_eq!(parse_warc(bad).unwrap_err().offset, 10);
    }

    #[test]
    fn meta_and_default_charsets() {
        let latin = encoding_rs::WINDOWS_1252.encode("café crème").0.into_owned();
        let mut body = b"<html><head><meta charset=\"iso-8859-1\"></head><p>".to_vec();
        body.extend_from_slice(&latin);
        let rec = parse_warc(&response("Content-Type: text/html\r\n", &body)).unwrap();
        let page = decode_html(&rec, "c").unwrap();
        assert_eq!(page.charset_source, CharsetSource::MetaTag);
        assert!(page.html.ends_with("café crème"));

        let rec = parse_warc(&response("Content-Type: text/html\r\n", "<p>ሰላም</p>".as_bytes())).unwrap();
        assert_eq!(decode_html(&rec, "c").unwrap().charset_source, CharsetSource::Utf8Default);
    }

    #[test]
    fn meta_http_equiv() {
        let body = b"<meta http-equiv=\"Content-Type\" content=\"text/html; charset=windows-1251\">";
        assert_eq!(meta_charset(body), Some(encoding_rs::WINDOWS_1251));
        assert_eq!(meta_charset(b"<p>charset=koi8-r</p>"), None);
    }

    #[test]
    fn skips_non_html_and_errors() {
        let rec = parse_warc(&response("Content-Type: image/png\r\n", b"\x89PNG")).unwrap();
        assert_eq!(decode_html(&rec, "c").unwrap_err().reason, SkipReason::NotHtml);
        let raw = response("Content-Type: text/html\r\n", b"x").replace_status("HTTP/1.1 404 Not Found");
        let rec = parse_warc(&raw).unwrap();
        assert_eq!(decode_html(&rec, "c").unwrap_err().reason, SkipReason::HttpStatus);
        let garbage: Vec<u8> = (0..200).map(|i| if i % 3 == 0 { 0xC3 } else { b'a' }).collect();
        let rec = parse_warc(&response("Content-Type: text/html\r\n", &garbage)).unwrap();
        assert_eq!(decode_html(&rec, "c").unwrap_err().reason, SkipReason::Garbage);
    }

    trait ReplaceStatus {
        fn replace_status(self, line: &str) -> Vec<u8>;
    }

    impl ReplaceStatus for Vec<u8> {
        fn replace_status(self, line: &str) -> Vec<u8> {
            let rec = parse_warc(&self).unwrap();
            let mut http = rec.http.clone().unwrap();
            http.status_line = line.to_string();
            serialize(&WarcRecord { http: Some(http), ..rec })
        }
    }

    #[test]
    fn chunked_and_gzip_bodies() {
        assert_eq!(dechunk(b"5\r\nhello\r\n6;ext=1\r\n world\r\n0\r\n\r\n").unwrap(), b"hello world");
        assert!(dechunk(b"zz\r\n").is_err());
        assert!(dechunk(b"10\r\nshort\r\n").is_err());

        let body = b"5\r\n<p>ok\r\n4\r\n</p>\r\n0\r\n\r\n";
        let rec = parse_warc(&response("Content-Type: text/html\r\nTransfer-Encoding: chunked\r\n", body)).unwrap();
        assert_eq!(decode_html(&rec, "c").unwrap().html, "<p>ok</p>");

        let rec = parse_warc(&response("Content-Type: text/html\r\nContent-Encoding: gzip\r\n", &gz(b"<p>zip</p>"))).unwrap();
        assert_eq!(decode_html(&rec, "c").unwrap().html, "<p>zip</p>");
    }
}
