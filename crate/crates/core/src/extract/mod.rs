//! Main-content extraction from HTML.
//!
//! A tolerant tokenizer walks the markup once, dropping non-content
//! subtrees and splitting the remaining text into blocks at block-level
//! tag boundaries. Blocks that are too short or mostly link text are
//! discarded as boilerplate.

mod entities;

pub use entities::decode_entities;

use serde::{Deserialize, Serialize};

use crate::document::Document;
use crate::warc::HtmlPage;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExtractConfig {
    pub min_block_chars: usize,
    pub max_link_density: f64,
}

impl Default for ExtractConfig {
    fn default() -> Self {
        ExtractConfig { min_block_chars: 25, max_link_density: 0.33 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Block {
    pub text: String,
    pub tag_path: String,
    pub link_density: f64,
    pub char_count: usize,
}

// Raw-text or non-content elements whose contents are skipped unparsed.
const SKIP_RAW: &[&str] = &[
    "script", "style", "noscript", "template", "title", "textarea", "svg", "math", "iframe", "object", "select",
];

// Subtrees whose text is parsed but discarded.
const EXCLUDED: &[&str] = &["head", "nav", "header", "footer", "aside"];

const VOID: &[&str] = &[
    "area", "base", "br", "col", "embed", "hr", "img", "input", "link", "meta", "param", "source", "track", "wbr",
];

const BLOCK: &[&str] = &[
    "address", "article", "blockquote", "body", "caption", "center", "dd", "details", "dialog", "dir", "div", "dl",
    "dt", "fieldset", "figcaption", "figure", "form", "h1", "h2", "h3", "h4", "h5", "h6", "hr", "html", "legend",
    "li", "main", "menu", "ol", "p", "pre", "section", "summary", "table", "tbody", "td", "tfoot", "th", "thead",
    "tr", "ul", "head", "nav", "header", "footer", "aside",
];

const MAX_DEPTH: usize = 512;

struct Builder {
    blocks: Vec<Block>,
    stack: Vec<&'static str>,
    excluded: usize,
    anchors: usize,
    text: String,
    anchored: usize,
    chars: usize,
    pending_space: bool,
    last_anchored: bool,
    path: Option<String>,
}

impl Builder {
    fn new() -> Self {
        Builder {
            blocks: Vec::new(),
            stack: Vec::new(),
            excluded: 0,
            anchors: 0,
            text: String::new(),
            anchored: 0,
            chars: 0,
            pending_space: false,
            last_anchored: false,
            path: None,
        }
    }

    fn push_char(&mut self, c: char, anchored: bool) {
        if c.is_whitespace() {
            self.pending_space = true;
            return;
        }
        if self.pending_space && self.chars > 0 {
            self.text.push(' ');
            self.chars += 1;
            if anchored && self.last_anchored {
                self.anchored += 1;
            }
        }
        self.pending_space = false;
        if self.path.is_none() {
            self.path = Some(self.stack.join("/"));
        }
        // Keep "<" from reading as markup in the output.
        if self.text.ends_with('<') && (c.is_ascii_alphabetic() || c == '/' || c == '!' || c == '?') {
            self.text.push(' ');
            self.chars += 1;
        }
        self.text.push(c);
        self.chars += 1;
        if anchored {
            self.anchored += 1;
        }
        self.last_anchored = anchored;
    }

    fn text(&mut self, raw: &str) {
        if self.excluded > 0 || raw.is_empty() {
            return;
        }
        let anchored = self.anchors > 0;
        for c in decode_entities(raw).chars() {
            self.push_char(c, anchored);
        }
    }

    fn flush(&mut self) {
        self.anchors = 0;
        self.pending_space = false;
        if self.chars > 0 {
            let text = std::mem::take(&mut self.text);
            self.blocks.push(Block {
                link_density: (self.anchored as f64 / self.chars as f64).min(1.0),
                char_count: self.chars,
                tag_path: self.path.take().unwrap_or_default(),
                text,
            });
        }
        self.text.clear();
        self.chars = 0;
        self.anchored = 0;
        self.last_anchored = false;
        self.path = None;
    }

    fn open(&mut self, name: &'static str) {
        let block = BLOCK.contains(&name);
        if block {
            self.flush();
            // A block start implicitly closes an open paragraph.
            if let Some(i) = self.stack.iter().rposition(|&t| t == "p") {
                if !self.stack[i..].iter().any(|t| EXCLUDED.contains(t)) {
                    self.close_from(i);
                }
            }
        }
        match name {
            "br" => {
                self.pending_space = true;
                return;
            }
            "a" => self.anchors += 1,
            "body" => {
                if let Some(i) = self.stack.iter().position(|&t| t == "head") {
                    self.close_from(i);
                }
            }
            _ => {}
        }
        // Only block-level elements are tracked; inline ones do not affect
        // grouping or exclusion.
        if !block || VOID.contains(&name) || self.stack.len() >= MAX_DEPTH {
            return;
        }
        if EXCLUDED.contains(&name) {
            self.excluded += 1;
        }
        self.stack.push(name);
    }

    fn close_from(&mut self, i: usize) {
        for t in self.stack.drain(i..) {
            if EXCLUDED.contains(&t) {
                self.excluded -= 1;
            }
        }
    }

    fn close(&mut self, name: &str) {
        if BLOCK.contains(&name) || name == "br" {
            self.flush();
        }
        if name == "a" {
            self.anchors = self.anchors.saturating_sub(1);
        }
        if let Some(i) = self.stack.iter().rposition(|&t| t == name) {
            self.close_from(i);
        }
    }
}

fn find_ci(hay: &str, from: usize, needle: &str) -> Option<usize> {
    let h = hay.as_bytes();
    let n = needle.as_bytes();
    if h.len() < n.len() {
        return None;
    }
    (from..=h.len() - n.len()).find(|&i| h[i..i + n.len()].eq_ignore_ascii_case(n))
}

/// End of the tag starting at `i` (the index just past its `>`), skipping
/// over quoted attribute values.
fn tag_end(html: &str, mut i: usize) -> usize {
    let b = html.as_bytes();
    let mut quote = None;
    while i < b.len() {
        match (quote, b[i]) {
            (None, b'"' | b'\'') => quote = Some(b[i]),
            (Some(q), c) if c == q => quote = None,
            (None, b'>') => return i + 1,
            _ => {}
        }
        i += 1;
    }
    b.len()
}

// Tag names are matched against static tables, so unknown names can be
// collapsed into one placeholder without changing behavior.
fn intern(name: &str) -> &'static str {
    for table in [SKIP_RAW, EXCLUDED, VOID, BLOCK] {
        if let Some(t) = table.iter().find(|t| t.eq_ignore_ascii_case(name)) {
            return t;
        }
    }
    if name.eq_ignore_ascii_case("a") {
        "a"
    } else {
        "_"
    }
}

/// Splits `html` into text blocks at block-level boundaries.
pub fn html_blocks(html: &str) -> Vec<Block> {
    let b = html.as_bytes();
    let mut out = Builder::new();
    let mut i = 0;
    let mut text_start = 0;
    while i < b.len() {
        if b[i] != b'<' {
            i += 1;
            continue;
        }
        let next = b.get(i + 1).copied().unwrap_or(0);
        let is_end = next == b'/' && b.get(i + 2).is_some_and(u8::is_ascii_alphabetic);
        if !(next.is_ascii_alphabetic() || is_end || next == b'!' || next == b'?') {
            i += 1;
            continue;
        }
        out.text(&html[text_start..i]);
        if html[i..].starts_with("<!--") {
            i = html[i + 4..].find("-->").map_or(b.len(), |e| i + 4 + e + 3);
            text_start = i;
            continue;
        }
        if next == b'!' || next == b'?' {
            i = tag_end(html, i + 2);
            text_start = i;
            continue;
        }
        let name_start = if is_end { i + 2 } else { i + 1 };
        let name_len = b[name_start..]
            .iter()
            .take_while(|c| c.is_ascii_alphanumeric() || **c == b'-' || **c == b':')
            .count();
        let name = intern(&html[name_start..name_start + name_len]);
        let end = tag_end(html, name_start + name_len);
        let self_closing = end >= 2 && b[end - 2] == b'/' && b[end - 1] == b'>';
        i = end;
        if is_end {
            out.close(name);
        } else if SKIP_RAW.contains(&name) && !self_closing {
            let close = format!("</{name}");
            i = find_ci(html, i, &close).map_or(b.len(), |p| tag_end(html, p + close.len()));
        } else {
            // As in HTML, a trailing slash does not close ordinary elements.
            out.open(name);
        }
        text_start = i;
    }
    out.text(&html[text_start.min(b.len())..]);
    out.flush();
    out.blocks
}

/// Blocks of a decoded page.
pub fn html_to_blocks(page: &HtmlPage) -> Vec<Block> {
    html_blocks(&page.html)
}

/// Boilerplate-free text of `blocks`, or `None` if no block survives.
pub fn main_text(blocks: &[Block], cfg: &ExtractConfig) -> Option<String> {
    let kept: Vec<&str> = blocks
        .iter()
        .filter(|b| b.char_count >= cfg.min_block_chars && b.link_density <= cfg.max_link_density)
        .map(|b| b.text.as_str())
        .collect();
    (!kept.is_empty()).then(|| kept.join("\n"))
}

/// Extracts the main text of `page` as a document, or `None` to skip it.
pub fn extract_main_text(page: &HtmlPage, cfg: &ExtractConfig) -> Option<Document> {
    let text = main_text(&html_to_blocks(page), cfg)?;
    Some(Document::new(page.url.clone(), page.crawl_id.clone(), page.record_date.clone(), text))
}

/// True if `text` contains `<` directly followed by an ASCII letter or `/`.
pub fn has_markup(text: &str) -> bool {
    text.as_bytes().windows(2).any(|w| w[0] == b'<' && (w[1].is_ascii_alphabetic() || w[1] == b'/'))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::warc::CharsetSource;

    fn texts(html: &str) -> Vec<String> {
        html_blocks(html).into_iter().map(|b| b.text).collect()
    }

    fn page(html: &str) -> HtmlPage {
        HtmlPage {
            url: "https://a.et/x".into(),
            html: html.into(),
            charset_source: CharsetSource::Utf8Default,
            encoding: "UTF-8",
            replacements: 0,
            crawl_id: "CC-MAIN-2023-14".into(),
            record_date: "2023-03-20T10:00:00Z".into(),
        }
    }

    #[test]
    fn strips_inline_markup() {
        let b = html_blocks("<p>hello <b>world</b></p>");
        assert_eq!(b.len(), 1);
        assert_eq!(b[0].text, "hello world");
        assert_eq!(b[0].link_density, 0.0);
        assert_eq!(b[0].char_count, 11);
        assert_eq!(b[0].tag_path, "p");
    }

    #[test]
    fn drops_nav_and_raw_text() {
        assert_eq!(texts("<nav><a>Home</a></nav><p>body text here</p>"), ["body text here"]);
        assert_eq!(
            texts("<script>var x = '<p>no</p>';</script><style>p{}</style><!-- <p>c</p> --><p>yes</p>"),
            ["yes"]
        );
        assert_eq!(texts("<html><head><title>T</title><meta charset=utf-8></head><body><p>b</p>"), ["b"]);
        assert_eq!(texts("<template><p>t</p></template><noscript>n</noscript>ok"), ["ok"]);
    }

    #[test]
    fn unclosed_exclusion_ends_with_parent() {
        assert_eq!(texts("<div><nav><a>x</a></div><p>after</p>"), ["after"]);
    }

    #[test]
    fn link_density() {
        let menu: String = (0..10).map(|i| format!("<a href=\"/{i}\">Link{i}</a> ")).collect();
        let para = "ሀ".repeat(200);
        let b = html_blocks(&format!("<div>{menu}</div><p>{para}</p>"));
        assert_eq!(b.len(), 2);
        assert!(b[0].link_density > 0.5, "{}", b[0].link_density);
        assert_eq!(b[1].link_density, 0.0);
        assert_eq!(b[1].char_count, 200);
    }

    #[test]
    fn entities_and_whitespace() {
        assert_eq!(texts("<p>  a&amp;b \n\t c&nbsp;&nbsp;d </p>"), ["a&b c d"]);
        assert_eq!(texts("<p>1 &lt;b&gt; 2 &lt;/p&gt;</p>"), ["1 < b> 2 < /p>"]);
        assert!(!has_markup(&texts("<p>&lt;script&gt;</p>")[0]));
    }

    #[test]
    fn br_is_a_space_and_blocks_split() {
        assert_eq!(texts("<div>one<br>two<p>three</div>four"), ["one two", "three", "four"]);
        assert_eq!(texts("<ul><li>a<li>b</ul>"), ["a", "b"]);
    }

    #[test]
    fn tolerates_garbage() {
        for html in ["<", "<<>>", "<p", "<a href='x>y", "</", "<!--", "a < b > c", "<p>x</q></p></div>", "&#;&#x;&"] {
            for b in html_blocks(html) {
                assert!(b.char_count > 0);
                assert!(!has_markup(&b.text), "{html:?} -> {:?}", b.text);
            }
        }
        assert_eq!(texts("a < b > c"), ["a < b > c"]);
    }

    #[test]
    fn extracts_article_only() {
        let html = "<html><body><header><a href=/>Home</a> <a href=/news>News</a></header>\
            <article><p>The first paragraph is long enough to be kept as content.</p>\
            <p>The second paragraph also clears the minimum length threshold.</p>\
            <p><a href=/x>A link-only paragraph that is long enough</a></p></article>\
            <footer>Copyright 2023 Example Media, all rights reserved.</footer></body></html>";
        let doc = extract_main_text(&page(html), &ExtractConfig::default()).unwrap();
        assert_eq!(
            doc.text,
            "The first paragraph is long enough to be kept as content.\n\
             The second paragraph also clears the minimum length threshold."
        );
        assert_eq!(doc.url, "https://a.et/x");
    }

    #[test]
    fn navigation_only_page_is_skipped() {
        let html = "<div><a href=/a>Home page of the site</a> | <a href=/b>Contact us today please</a></div>";
        assert!(extract_main_text(&page(html), &ExtractConfig::default()).is_none());
    }

    #[test]
    fn single_paragraph_identity() {
        let para: String = "ሰላም ".repeat(125).trim_end().to_string() + "ሀ";
        assert_eq!(para.chars().count(), 500);
        let doc = extract_main_text(&page(&format!("<p>{para}</p>")), &ExtractConfig::default()).unwrap();
        assert_eq!(doc.text, para);
        assert_eq!(doc.char_len, 500);
    }
}
