//! Synthetic Common Crawl fixtures and a local HTTP server that serves
//! them with range support and scripted faults.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{self, BufRead, BufReader, Write};
use std::net::{Shutdown, SocketAddr, TcpListener, TcpStream};
use std::path::Path;
use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};
use std::sync::{Arc, Mutex};
use std::time::Duration;

use arrow_array::{ArrayRef, BinaryArray, Int16Array, Int32Array, RecordBatch, StringArray};
use arrow_schema::{DataType, Field, Schema};
use flate2::write::GzEncoder;
use parquet::arrow::ArrowWriter;
use parquet::file::properties::WriterProperties;
use rand::seq::IndexedRandom;
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;


fn gzip(data: &[u8]) -> Vec<u8> {
    let mut e = GzEncoder::new(Vec::new(), flate2::Compression::default());
    e.write_all(data).expect("in-memory write");
    e.finish().expect("in-memory write")
}

/// A WARC record with the given headers plus a computed Content-Length.
pub fn build_warc_record(version: &str, headers: &[(&str, &str)], block: &[u8]) -> Vec<u8> {
    let mut out = format!("{version}\r\n").into_bytes();
    for (k, v) in headers {
        out.extend_from_slice(format!("{k}: {v}\r\n").as_bytes());
    }
    out.extend_from_slice(format!("Content-Length: {}\r\n\r\n", block.len()).as_bytes());
    out.extend_from_slice(block);
    out.extend_from_slice(b"\r\n\r\n");
    out
}

// ---------------------------------------------------------------------------
// Text generation

fn ethiopic_word(rng: &mut ChaCha8Rng) -> String {
    let n = rng.random_range(2..=5);
    (0..n).map(|_| char::from_u32(rng.random_range(0x1200..0x1248)).expect("assigned")).collect()
}

fn ethiopic_sentence(rng: &mut ChaCha8Rng) -> String {
    let n = rng.random_range(5..=12);
    let words: Vec<String> = (0..n).map(|_| ethiopic_word(rng)).collect();
    format!("{}።", words.join(" "))
}

pub fn ethiopic_paragraph(rng: &mut ChaCha8Rng) -> String {
    let n = rng.random_range(2..=5);
    (0..n).map(|_| ethiopic_sentence(rng)).collect::<Vec<_>>().join(" ")
}

const ENGLISH: &[&str] = &[
    "the", "market", "river", "report", "city", "council", "season", "water", "school", "news", "local", "road",
    "price", "farm", "people", "weather", "team", "north", "health", "plan",
];

fn english_paragraph(rng: &mut ChaCha8Rng) -> String {
    let n = rng.random_range(20..=60);
    let words: Vec<&str> = (0..n).map(|_| *ENGLISH.choose(rng).expect("non-empty")).collect();
    format!("{}.", words.join(" "))
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

// ---------------------------------------------------------------------------
// Corpus

#[derive(Debug, Clone)]
pub struct MockSpec {
    pub seed: u64,
    pub crawls: Vec<String>,
    pub pages_per_archive: usize,
    pub warc_files_per_archive: usize,
    pub index_shards_per_archive: usize,
    pub target: String,
}

impl Default for MockSpec {
    fn default() -> Self {
        MockSpec {
            seed: 7,
            crawls: vec!["CC-MAIN-2023-06".into(), "CC-MAIN-2023-14".into()],
            pages_per_archive: 260,
            warc_files_per_archive: 3,
            index_shards_per_archive: 3,
            target: "amh".into(),
        }
    }
}

/// One row of a synthetic index shard.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MockRow {
    pub url: String,
    pub surt: String,
    pub status: i16,
    pub mime: String,
    pub languages: Option<String>,
    pub warc_filename: String,
    pub offset: i32,
    pub length: i32,
}

#[derive(Debug, Clone, Default)]
pub struct MockCorpus {
    /// Path (relative to the server root) to bytes.
    pub files: BTreeMap<String, Vec<u8>>,
    /// All index rows per crawl, including other languages.
    pub rows: BTreeMap<String, Vec<MockRow>>,
}

impl MockCorpus {
    pub fn total_bytes(&self) -> u64 {
        self.files.values().map(|v| v.len() as u64).sum()
    }
}

fn surt(url: &str) -> String {
    let rest = url.split_once("://").map_or(url, |(_, r)| r);
    let (host, path) = rest.split_once('/').unwrap_or((rest, ""));
    let mut parts: Vec<&str> = host.split('.').collect();
    parts.reverse();
    format!("{})/{}", parts.join(","), path)
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum PageKind {
    Target,
    Other,
}

struct PageSpec {
    url: String,
    kind: PageKind,
    languages: Option<String>,
    status: u16,
    mime: &'static str,
}

fn page_html(rng: &mut ChaCha8Rng, site: usize, title: &str, paragraphs: &[String]) -> String {
    let mut html = String::from("<!DOCTYPE html>\n<html lang=\"am\"><head><meta charset=\"utf-8\">");
    html.push_str(&format!("<title>{}</title>", escape(title)));
    html.push_str("<script>window.dataLayer = [];</script><style>p { margin: 0 }</style></head>\n<body>");
    html.push_str("<header><nav><a href=\"/\">መነሻ ገጽ</a> <a href=\"/news\">ዜና</a> <a href=\"/sport\">ስፖርት</a> <a href=\"/about\">ስለ እኛ</a></nav></header>\n");
    html.push_str("<main><article>");
    html.push_str(&format!("<h1>{}</h1>\n", escape(title)));
    for p in paragraphs {
        if rng.random_bool(0.2) {
            html.push_str(&format!("<p>{}<br>\n</p>\n", escape(p)));
        } else {
            html.push_str(&format!("<p>{}</p>\n", escape(p)));
        }
    }
    html.push_str("</article><aside><a href=\"/r1\">ተዛማጅ</a> <a href=\"/r2\">ተጨማሪ</a></aside></main>\n");
    html.push_str(&format!("<footer><p>© 2023 site{site}.et ሁሉም መብቶች በሕግ የተጠበቁ ናቸው።</p></footer></body></html>\n"));
    html
}

fn chunked(body: &[u8], rng: &mut ChaCha8Rng) -> Vec<u8> {
    let mut out = Vec::new();
    let mut pos = 0;
    while pos < body.len() {
        let n = rng.random_range(1..=2048).min(body.len() - pos);
        out.extend_from_slice(format!("{n:x}\r\n").as_bytes());
        out.extend_from_slice(&body[pos..pos + n]);
        out.extend_from_slice(b"\r\n");
        pos += n;
    }
    out.extend_from_slice(b"0\r\n\r\n");
    out
}

struct Pools {
    global: Vec<String>,
}

fn archive_pages(rng: &mut ChaCha8Rng, crawl: &str, n: usize, target: &str) -> Vec<PageSpec> {
    let mut pages = Vec::with_capacity(n);
    for i in 0..n {
        let site = rng.random_range(0..12);
        let roll = rng.random_range(0..100);
        let (kind, languages, status, mime) = match roll {
            0..=54 => (PageKind::Target, Some(target.to_string()), 200, "text/html"),
            55..=69 => (PageKind::Target, Some(format!("{target},eng")), 200, "text/html"),
            70..=79 => (PageKind::Other, Some("eng".to_string()), 200, "text/html"),
            80..=84 => (PageKind::Other, Some(format!("eng,{target}")), 200, "text/html"),
            85..=89 => (PageKind::Target, Some(format!("{target},eng,fra")), 200, "text/html"),
            90..=92 => (PageKind::Other, None, 200, "text/html"),
            93..=95 => (PageKind::Target, Some(target.to_string()), 301, "text/html"),
            _ => (PageKind::Target, Some(target.to_string()), 200, "application/pdf"),
        };
        let url = format!("https://site{site}.et/{}/article-{i}.html", crawl.to_lowercase());
        pages.push(PageSpec { url, kind, languages, status, mime });
    }
    pages
}

fn http_block(rng: &mut ChaCha8Rng, page: &PageSpec, html: &[u8]) -> Vec<u8> {
    let reason = match page.status {
        200 => "OK",
        301 => "Moved Permanently",
        _ => "Other",
    };
    let mut head = format!("HTTP/1.1 {} {reason}\r\n", page.status);
    head.push_str("Server: nginx\r\n");
    let variant = rng.random_range(0..10);
    let ctype = if page.mime == "text/html" {
        if variant < 6 { "text/html; charset=UTF-8".to_string() } else { "text/html".to_string() }
    } else {
        page.mime.to_string()
    };
    head.push_str(&format!("Content-Type: {ctype}\r\n"));
    let body = match variant {
        7 => {
            head.push_str("Transfer-Encoding: chunked\r\n");
            chunked(html, rng)
        }
        8 => {
            head.push_str("Content-Encoding: gzip\r\n");
            gzip(html)
        }
        _ => html.to_vec(),
    };
    if page.status == 301 {
        head.push_str("Location: https://example.et/\r\n");
    }
    head.push_str(&format!("Content-Length: {}\r\n\r\n", body.len()));
    let mut block = head.into_bytes();
    block.extend_from_slice(&body);
    block
}

fn page_body(rng: &mut ChaCha8Rng, page: &PageSpec, site_slogans: &[String], local: &[String], pools: &Pools) -> Vec<u8> {
    if page.mime != "text/html" {
        let mut b = b"%PDF-1.4\n".to_vec();
        let mut junk = vec![0u8; 600];
        rng.fill_bytes(&mut junk);
        b.extend_from_slice(&junk);
        return b;
    }
    let site: usize = page.url["https://site".len()..].split('.').next().and_then(|s| s.parse().ok()).unwrap_or(0);
    let n = rng.random_range(3..=8);
    let mut paragraphs = Vec::with_capacity(n + 1);
    if page.kind == PageKind::Target {
        paragraphs.push(site_slogans[site % site_slogans.len()].clone());
        for _ in 0..n {
            let r = rng.random_range(0..100);
            paragraphs.push(match r {
                0..=54 => ethiopic_paragraph(rng),
                55..=79 => local.choose(rng).expect("pool").clone(),
                _ => pools.global.choose(rng).expect("pool").clone(),
            });
        }
        let title = ethiopic_sentence(rng);
        page_html(rng, site, &title, &paragraphs).into_bytes()
    } else {
        for _ in 0..n {
            paragraphs.push(english_paragraph(rng));
        }
        page_html(rng, site, "Local news", &paragraphs).into_bytes()
    }
}

/// Generates a deterministic multi-archive fixture: WARC files made of
/// per-record gzip members, columnar index shards, and shard listings.
pub fn generate(spec: &MockSpec) -> MockCorpus {
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let pools = Pools { global: (0..20).map(|_| ethiopic_paragraph(&mut rng)).collect() };
    let mut corpus = MockCorpus::default();

    for crawl in &spec.crawls {
        let slogans: Vec<String> = (0..12).map(|_| ethiopic_sentence(&mut rng)).collect();
        let local: Vec<String> = (0..30).map(|_| ethiopic_paragraph(&mut rng)).collect();
        let pages = archive_pages(&mut rng, crawl, spec.pages_per_archive, &spec.target);
        let nfiles = spec.warc_files_per_archive.max(1);
        let mut warcs: Vec<Vec<u8>> = vec![Vec::new(); nfiles];
        let names: Vec<String> = (0..nfiles)
            .map(|k| format!("crawl-data/{crawl}/segments/1680000000.{k}/warc/{crawl}-20230320-{k:05}.warc.gz"))
            .collect();
        let mut rows = Vec::new();
        for (i, page) in pages.iter().enumerate() {
            let f = i % nfiles;
            let date = format!("2023-03-{:02}T{:02}:{:02}:00Z", 20 + (i % 8), i % 24, i % 60);
            let body = page_body(&mut rng, page, &slogans, &local, &pools);
            let block = http_block(&mut rng, page, &body);

            let request = build_warc_record(
                "WARC/1.0",
                &[
                    ("WARC-Type", "request"),
                    ("WARC-Date", &date),
                    ("WARC-Record-ID", &format!("<urn:uuid:req-{crawl}-{i}>")),
                    ("WARC-Target-URI", &page.url),
                    ("Content-Type", "application/http; msgtype=request"),
                ],
                format!("GET / HTTP/1.1\r\nHost: {}\r\n\r\n", &page.url[8..]).as_bytes(),
            );
            warcs[f].extend(gzip(&request));

            let response = build_warc_record(
                "WARC/1.0",
                &[
                    ("WARC-Type", "response"),
                    ("WARC-Date", &date),
                    ("WARC-Record-ID", &format!("<urn:uuid:resp-{crawl}-{i}>")),
                    ("WARC-Target-URI", &page.url),
                    ("Content-Type", "application/http; msgtype=response"),
                ],
                &block,
            );
            let member = gzip(&response);
            let offset = warcs[f].len();
            warcs[f].extend_from_slice(&member);
            rows.push(MockRow {
                url: page.url.clone(),
                surt: surt(&page.url),
                status: page.status as i16,
                mime: page.mime.to_string(),
                languages: page.languages.clone(),
                warc_filename: names[f].clone(),
                offset: offset as i32,
                length: member.len() as i32,
            });

            let metadata = build_warc_record(
                "WARC/1.0",
                &[("WARC-Type", "metadata"), ("WARC-Date", &date), ("WARC-Target-URI", &page.url), ("Content-Type", "application/warc-fields")],
                b"fetchTimeMs: 120\r\n",
            );
            warcs[f].extend(gzip(&metadata));
        }
        for (name, data) in names.into_iter().zip(warcs) {
            corpus.files.insert(name, data);
        }

        // Index shards are sorted by SURT key, as in the real index.
        let mut sorted = rows.clone();
        sorted.sort_by(|a, b| a.surt.cmp(&b.surt));
        let nshards = spec.index_shards_per_archive.max(1);
        let per = sorted.len().div_ceil(nshards).max(1);
        let mut listing = String::new();
        for (k, chunk) in sorted.chunks(per).enumerate() {
            let path = format!("cc-index/table/cc-main/warc/crawl={crawl}/subset=warc/part-{k:05}-mock.c000.gz.parquet");
            corpus.files.insert(path.clone(), index_parquet(chunk, None).expect("in-memory parquet"));
            listing.push_str(&path);
            listing.push('\n');
        }
        // A non-warc subset that must be ignored.
        let diag = format!("cc-index/table/cc-main/warc/crawl={crawl}/subset=crawldiagnostics/part-00000-mock.c000.gz.parquet");
        corpus.files.insert(diag.clone(), index_parquet(&sorted[..sorted.len().min(3)], None).expect("in-memory parquet"));
        listing.push_str(&diag);
        listing.push('\n');
        corpus.files.insert(format!("crawl-data/{crawl}/cc-index-table.paths.gz"), gzip(listing.as_bytes()));
        corpus.rows.insert(crawl.clone(), rows);
    }
    corpus
}

fn index_schema(filler: bool) -> Arc<Schema> {
    let mut fields = vec![
        Field::new("url_surtkey", DataType::Utf8, false),
        Field::new("url", DataType::Utf8, false),
        Field::new("fetch_status", DataType::Int16, false),
        Field::new("content_mime_detected", DataType::Utf8, true),
        Field::new("content_languages", DataType::Utf8, true),
        Field::new("warc_filename", DataType::Utf8, false),
        Field::new("warc_record_offset", DataType::Int32, false),
        Field::new("warc_record_length", DataType::Int32, false),
        Field::new("warc_segment", DataType::Utf8, false),
    ];
    if filler {
        fields.push(Field::new("content_digest_blob", DataType::Binary, false));
    }
    Arc::new(Schema::new(fields))
}

fn rows_batch(rows: &[MockRow], schema: &Arc<Schema>, filler: Option<&[Vec<u8>]>) -> RecordBatch {
    let mut cols: Vec<ArrayRef> = vec![
        Arc::new(StringArray::from_iter_values(rows.iter().map(|r| r.surt.as_str()))),
        Arc::new(StringArray::from_iter_values(rows.iter().map(|r| r.url.as_str()))),
        Arc::new(Int16Array::from_iter_values(rows.iter().map(|r| r.status))),
        Arc::new(StringArray::from_iter(rows.iter().map(|r| Some(r.mime.as_str())))),
        Arc::new(StringArray::from_iter(rows.iter().map(|r| r.languages.as_deref()))),
        Arc::new(StringArray::from_iter_values(rows.iter().map(|r| r.warc_filename.as_str()))),
        Arc::new(Int32Array::from_iter_values(rows.iter().map(|r| r.offset))),
        Arc::new(Int32Array::from_iter_values(rows.iter().map(|r| r.length))),
        Arc::new(StringArray::from_iter_values(rows.iter().map(|_| "1680000000.0"))),
    ];
    if let Some(f) = filler {
        cols.push(Arc::new(BinaryArray::from_iter_values(f.iter().map(|v| v.as_slice()))));
    }
    RecordBatch::try_new(schema.clone(), cols).expect("schema matches")
}

/// Serializes rows as an index shard with the real index's column names.
pub fn index_parquet(rows: &[MockRow], row_group_rows: Option<usize>) -> parquet::errors::Result<Vec<u8>> {
    let schema = index_schema(false);
    let props = WriterProperties::builder().set_max_row_group_row_count(Some(row_group_rows.unwrap_or(1024))).build();
    let mut w = ArrowWriter::try_new(Vec::new(), schema.clone(), Some(props))?;
    if !rows.is_empty() {
        w.write(&rows_batch(rows, &schema, None))?;
    }
    w.into_inner()
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LargeShard {
    pub rows: u64,
    pub matching_strict: u64,
    pub bytes: u64,
}

/// Writes an index shard of at least `target_bytes`, most of it in a
/// large non-projected column. One row in ten is a strict `target` match.
pub fn write_large_index_shard(path: &Path, target_bytes: u64, target: &str, seed: u64) -> parquet::errors::Result<LargeShard> {
    const FILLER: usize = 2000;
    const ROWS_PER_BATCH: usize = 8192;
    let schema = index_schema(true);
    let props = WriterProperties::builder()
        .set_max_row_group_row_count(Some(ROWS_PER_BATCH))
        .set_dictionary_enabled(false)
        .build();
    let file = File::create(path)?;
    let mut w = ArrowWriter::try_new(file, schema.clone(), Some(props))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut rows = 0u64;
    let mut matching = 0u64;
    let mut written = 0u64;
    while written < target_bytes {
        let mut batch_rows = Vec::with_capacity(ROWS_PER_BATCH);
        let mut filler = Vec::with_capacity(ROWS_PER_BATCH);
        for _ in 0..ROWS_PER_BATCH {
            let i = rows + batch_rows.len() as u64;
            let languages = match i % 10 {
                0 => Some(target.to_string()),
                1 => Some(format!("{target},eng")),
                2..=6 => Some("eng".to_string()),
                7 => None,
                _ => Some("fra,eng".to_string()),
            };
            let url = format!("https://site{}.example/{i}", i % 97);
            batch_rows.push(MockRow {
                surt: surt(&url),
                url,
                status: 200,
                mime: "text/html".into(),
                languages,
                warc_filename: format!("crawl-data/CC-MAIN-2023-14/segments/1/warc/f-{:05}.warc.gz", i % 800),
                offset: (i % 1_000_000) as i32 * 1000,
                length: 1000 + (i % 5000) as i32,
            });
            let mut f = vec![0u8; FILLER];
            rng.fill_bytes(&mut f);
            filler.push(f);
        }
        matching += batch_rows.iter().filter(|r| r.languages.as_deref() == Some(target)).count() as u64;
        rows += batch_rows.len() as u64;
        w.write(&rows_batch(&batch_rows, &schema, Some(&filler)))?;
        w.flush()?;
        written = w.bytes_written() as u64;
    }
    w.close()?;
    let bytes = std::fs::metadata(path)?.len();
    Ok(LargeShard { rows, matching_strict: matching, bytes })
}

// ---------------------------------------------------------------------------
// Server

/// Scripted misbehavior for requests whose path starts with a prefix.
#[derive(Debug, Clone)]
pub enum Fault {
    /// Answer the next `n` requests with `status`.
    FailTimes { status: u16, remaining: u32 },
    /// Answer range requests with 200 and the whole object.
    IgnoreRange,
    /// Send only the first `keep` bytes of a ranged body, with a matching
    /// Content-Length and an unchanged Content-Range.
    Truncate { keep: usize },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RequestLog {
    pub method: String,
    pub path: String,
    pub range: Option<String>,
    pub status: u16,
}

struct ServerState {
    files: BTreeMap<String, Arc<Vec<u8>>>,
    faults: Mutex<Vec<(String, Fault)>>,
    log: Mutex<Vec<RequestLog>>,
    bytes_sent: AtomicU64,
    stop: AtomicBool,
}

/// HTTP/1.1 server on a loopback port. Each connection serves one request.
pub struct MockServer {
    addr: SocketAddr,
    state: Arc<ServerState>,
    handle: Option<std::thread::JoinHandle<()>>,
}

impl MockServer {
    pub fn start(files: BTreeMap<String, Vec<u8>>) -> io::Result<MockServer> {
        Self::bind("127.0.0.1:0", files)
    }

    pub fn bind(addr: &str, files: BTreeMap<String, Vec<u8>>) -> io::Result<MockServer> {
        let listener = TcpListener::bind(addr)?;
        let addr = listener.local_addr()?;
        let state = Arc::new(ServerState {
            files: files.into_iter().map(|(k, v)| (k, Arc::new(v))).collect(),
            faults: Mutex::new(Vec::new()),
            log: Mutex::new(Vec::new()),
            bytes_sent: AtomicU64::new(0),
            stop: AtomicBool::new(false),
        });
        let st = Arc::clone(&state);
        let handle = std::thread::spawn(move || {
            for conn in listener.incoming() {
                if st.stop.load(Ordering::SeqCst) {
                    break;
                }
                let Ok(stream) = conn else { continue };
                let st = Arc::clone(&st);
                std::thread::spawn(move || {
                    let _ = serve(&st, stream);
                });
            }
        });
        Ok(MockServer { addr, state, handle: Some(handle) })
    }

    pub fn base_url(&self) -> String {
        format!("http://{}/", self.addr)
    }

    pub fn add_fault(&self, path_prefix: &str, fault: Fault) {
        self.state.faults.lock().expect("poisoned").push((path_prefix.to_string(), fault));
    }

    pub fn clear_faults(&self) {
        self.state.faults.lock().expect("poisoned").clear();
    }

    pub fn requests(&self) -> Vec<RequestLog> {
        self.state.log.lock().expect("poisoned").clone()
    }

    pub fn request_count(&self) -> usize {
        self.state.log.lock().expect("poisoned").len()
    }

    pub fn reset_log(&self) {
        self.state.log.lock().expect("poisoned").clear();
        self.state.bytes_sent.store(0, Ordering::SeqCst);
    }

    /// Body bytes written to clients.
    pub fn bytes_sent(&self) -> u64 {
        self.state.bytes_sent.load(Ordering::SeqCst)
    }
}

impl Drop for MockServer {
    fn drop(&mut self) {
        self.state.stop.store(true, Ordering::SeqCst);
        // Wake the accept loop.
        let _ = TcpStream::connect_timeout(&self.addr, Duration::from_secs(1));
        if let Some(h) = self.handle.take() {
            let _ = h.join();
        }
    }
}

fn parse_range(v: &str, len: u64) -> Option<Result<(u64, u64), ()>> {
    let spec = v.trim().strip_prefix("bytes=")?;
    if spec.contains(',') {
        return None;
    }
    let (a, b) = spec.split_once('-')?;
    let (first, last) = if a.is_empty() {
        let suffix: u64 = b.parse().ok()?;
        (len.saturating_sub(suffix), len.checked_sub(1)?)
    } else {
        let first: u64 = a.parse().ok()?;
        let last = if b.is_empty() { len.saturating_sub(1) } else { b.parse::<u64>().ok()?.min(len.saturating_sub(1)) };
        (first, last)
    };
    if first >= len || last < first {
        return Some(Err(()));
    }
    Some(Ok((first, last)))
}

fn take_fault(state: &ServerState, path: &str) -> Option<Fault> {
    let mut faults = state.faults.lock().expect("poisoned");
    let i = faults.iter().position(|(p, _)| path.starts_with(p.as_str()))?;
    match &mut faults[i].1 {
        Fault::FailTimes { status, remaining } => {
            let status = *status;
            *remaining -= 1;
            if *remaining == 0 {
                faults.remove(i);
            }
            Some(Fault::FailTimes { status, remaining: 0 })
        }
        other => Some(other.clone()),
    }
}

fn reason(status: u16) -> &'static str {
    match status {
        200 => "OK",
        206 => "Partial Content",
        400 => "Bad Request",
        404 => "Not Found",
        405 => "Method Not Allowed",
        416 => "Range Not Satisfiable",
        500 => "Internal Server Error",
        503 => "Service Unavailable",
        _ => "Status",
    }
}

fn serve(state: &ServerState, stream: TcpStream) -> io::Result<()> {
    stream.set_read_timeout(Some(Duration::from_secs(10)))?;
    let mut reader = BufReader::new(stream.try_clone()?);
    let mut request_line = String::new();
    reader.read_line(&mut request_line)?;
    let mut headers = Vec::new();
    loop {
        let mut line = String::new();
        if reader.read_line(&mut line)? == 0 || line.trim().is_empty() {
            break;
        }
        if let Some((k, v)) = line.split_once(':') {
            headers.push((k.trim().to_ascii_lowercase(), v.trim().to_string()));
        }
    }
    let mut parts = request_line.split_whitespace();
    let method = parts.next().unwrap_or("").to_string();
    let target = parts.next().unwrap_or("/");
    let path = target.split('?').next().unwrap_or("").trim_start_matches('/').to_string();
    let range = headers.iter().find(|(k, _)| k == "range").map(|(_, v)| v.clone());

    let mut out = stream;
    let mut respond = |status: u16, extra: &[(String, String)], body: &[u8], send_body: bool| -> io::Result<()> {
        let mut head = format!("HTTP/1.1 {status} {}\r\nConnection: close\r\n", reason(status));
        for (k, v) in extra {
            head.push_str(&format!("{k}: {v}\r\n"));
        }
        if !extra.iter().any(|(k, _)| k == "Content-Length") {
            head.push_str(&format!("Content-Length: {}\r\n", body.len()));
        }
        head.push_str("\r\n");
        state.log.lock().expect("poisoned").push(RequestLog {
            method: method.clone(),
            path: path.clone(),
            range: range.clone(),
            status,
        });
        out.write_all(head.as_bytes())?;
        if send_body {
            // Clients may hang up early (e.g. on an ignored range).
            if out.write_all(body).is_ok() {
                state.bytes_sent.fetch_add(body.len() as u64, Ordering::Relaxed);
            }
        }
        let _ = out.flush();
        let _ = out.shutdown(Shutdown::Write);
        Ok(())
    };

    if method != "GET" && method != "HEAD" {
        return respond(405, &[], b"", true);
    }
    let fault = take_fault(state, &path);
    if let Some(Fault::FailTimes { status, .. }) = fault {
        return respond(status, &[], b"injected failure", method == "GET");
    }
    let Some(data) = state.files.get(&path).cloned() else {
        return respond(404, &[], b"not found", method == "GET");
    };
    let len = data.len() as u64;
    let octet = ("Content-Type".to_string(), "application/octet-stream".to_string());
    let ranges = ("Accept-Ranges".to_string(), "bytes".to_string());
    if method == "HEAD" {
        return respond(200, &[octet, ranges, ("Content-Length".into(), len.to_string())], b"", false);
    }
    let parsed = match (&range, &fault) {
        (Some(_), Some(Fault::IgnoreRange)) | (None, _) => None,
        (Some(r), _) => parse_range(r, len),
    };
    match parsed {
        None => respond(200, &[octet, ranges], &data, true),
        Some(Err(())) => respond(416, &[("Content-Range".into(), format!("bytes */{len}"))], b"", true),
        Some(Ok((first, last))) => {
            let body = &data[first as usize..=last as usize];
            let cr = ("Content-Range".to_string(), format!("bytes {first}-{last}/{len}"));
            if let Some(Fault::Truncate { keep }) = fault {
                let body = &body[..keep.min(body.len())];
                return respond(206, &[octet, cr], body, true);
            }
            respond(206, &[octet, cr], body, true)
        }
    }
}
