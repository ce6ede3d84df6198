//! Exact-substring deduplication.
//!
//! Documents are concatenated into one buffer with a `0xFF` byte between
//! them (never valid inside UTF-8 text). A suffix array over that buffer
//! groups every occurrence of each length-`min_len` window; all but the
//! lowest-offset occurrence are marked, merged into maximal spans, and cut
//! out of their documents. Windows that would straddle a separator never
//! count as duplicates, so spans stay inside a single document.
//!
//! `min_len` is measured in UTF-8 bytes. For three-byte scripts such as
//! Ethiopic a 50-byte window is roughly 17 characters.

mod suffix_array;

use std::io::{self, Write};

use serde::{Deserialize, Serialize};

use crate::document::Document;

pub use suffix_array::SuffixArray;

/// Byte placed between documents in the corpus buffer.
pub const SEPARATOR: u8 = 0xFF;

pub const DEFAULT_MIN_DUP_LEN: usize = 50;
pub const DEFAULT_MIN_DOC_CHARS: usize = 100;
/// Corpora larger than this are processed in chunks.
pub const DEFAULT_MEMORY_BUDGET: usize = 1 << 30;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DocBoundary {
    pub doc_id: String,
    pub start: usize,
    pub end: usize,
}

/// Concatenated document text plus the byte range each document occupies.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Corpus {
    pub buffer: Vec<u8>,
    pub boundaries: Vec<DocBoundary>,
}

impl Corpus {
    pub fn len(&self) -> usize {
        self.buffer.len()
    }

    pub fn is_empty(&self) -> bool {
        self.buffer.is_empty()
    }

    pub fn doc_bytes(&self, index: usize) -> &[u8] {
        let b = &self.boundaries[index];
        &self.buffer[b.start..b.end]
    }

    /// Index of the document containing buffer offset `pos`, if any.
    pub fn locate(&self, pos: usize) -> Option<usize> {
        let idx = self.boundaries.partition_point(|b| b.end <= pos);
        self.boundaries
            .get(idx)
            .filter(|b| b.start <= pos && pos < b.end)
            .map(|_| idx)
    }
}

/// A byte range `[start, end)` of the corpus buffer marked for removal.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct DuplicateSpan {
    pub start: usize,
    pub end: usize,
}

impl DuplicateSpan {
    pub fn len(&self) -> usize {
        self.end - self.start
    }

    pub fn is_empty(&self) -> bool {
        self.end <= self.start
    }
}

pub fn build_corpus(docs: &[Document]) -> Corpus {
    let total: usize = docs.iter().map(|d| d.text.len() + 1).sum();
    let mut buffer = Vec::with_capacity(total.saturating_sub(1));
    let mut boundaries = Vec::with_capacity(docs.len());
    for (i, doc) in docs.iter().enumerate() {
        if i > 0 {
            buffer.push(SEPARATOR);
        }
        let start = buffer.len();
        buffer.extend_from_slice(doc.text.as_bytes());
        boundaries.push(DocBoundary { doc_id: doc.id.clone(), start, end: buffer.len() });
    }
    Corpus { buffer, boundaries }
}

struct BitSet(Vec<u64>);

impl BitSet {
    fn new(n: usize) -> Self {
        BitSet(vec![0; n.div_ceil(64)])
    }
    fn set(&mut self, i: usize) {
        self.0[i >> 6] |= 1 << (i & 63);
    }
    fn get(&self, i: usize) -> bool {
        self.0[i >> 6] >> (i & 63) & 1 == 1
    }
}

#[inline]
fn is_continuation(b: u8) -> bool {
    (0x80..0xC0).contains(&b)
}

/// Shrinks `[start, end)` inward so both ends sit on UTF-8 character
/// boundaries. Returns `None` when nothing is left.
fn snap_to_chars(buf: &[u8], mut start: usize, mut end: usize) -> Option<DuplicateSpan> {
    while start < end && is_continuation(buf[start]) {
        start += 1;
    }
    while end > start && end < buf.len() && is_continuation(buf[end]) {
        end -= 1;
    }
    (start < end).then_some(DuplicateSpan { start, end })
}

/// Finds every byte that belongs to a non-first occurrence of some
/// substring of at least `min_len` bytes, merged into maximal spans.
pub fn find_duplicate_spans(corpus: &Corpus, sa: &SuffixArray, min_len: usize) -> Vec<DuplicateSpan> {
    assert!(min_len >= 1, "min_len must be positive");
    let text = &corpus.buffer;
    let n = text.len();
    debug_assert_eq!(sa.len(), n);
    if n < min_len {
        return Vec::new();
    }

    let mut window_starts = BitSet::new(n);
    {
        let plcp = sa.permuted_lcp(text);
        let order = sa.as_slice();
        let mut i = 0;
        while i < n {
            let mut j = i + 1;
            while j < n && plcp[order[j] as usize] as usize >= min_len {
                j += 1;
            }
            if j - i >= 2 {
                // Every member shares the same first min_len bytes.
                let head = order[i] as usize;
                if !text[head..head + min_len].contains(&SEPARATOR) {
                    let first = *order[i..j].iter().min().expect("non-empty group");
                    for &p in &order[i..j] {
                        if p != first {
                            window_starts.set(p as usize);
                        }
                    }
                }
            }
            i = j;
        }
    }

    let mut spans = Vec::new();
    let mut cover_until = 0usize;
    let mut run_start: Option<usize> = None;
    for p in 0..n {
        if window_starts.get(p) {
            cover_until = cover_until.max(p + min_len);
        }
        match (p < cover_until, run_start) {
            (true, None) => run_start = Some(p),
            (false, Some(s)) => {
                spans.extend(snap_to_chars(text, s, p));
                run_start = None;
            }
            _ => {}
        }
    }
    if let Some(s) = run_start {
        spans.extend(snap_to_chars(text, s, n));
    }
    spans
}

/// Cuts `spans` out of the documents the corpus was built from. Spans must
/// be sorted and lie within single documents.
pub fn remove_spans(docs: &[Document], corpus: &Corpus, spans: &[DuplicateSpan]) -> Vec<Document> {
    debug_assert_eq!(docs.len(), corpus.boundaries.len());
    let mut out = Vec::with_capacity(docs.len());
    let mut k = 0usize;
    for (doc, b) in docs.iter().zip(&corpus.boundaries) {
        while k < spans.len() && spans[k].end <= b.start {
            k += 1;
        }
        if k >= spans.len() || spans[k].start >= b.end {
            out.push(doc.clone());
            continue;
        }
        let mut kept = Vec::with_capacity(b.end - b.start);
        let mut cursor = b.start;
        while k < spans.len() && spans[k].start < b.end {
            let s = spans[k];
            debug_assert!(s.start >= b.start && s.end <= b.end, "span crosses a document boundary");
            kept.extend_from_slice(&corpus.buffer[cursor..s.start]);
            cursor = s.end;
            k += 1;
        }
        kept.extend_from_slice(&corpus.buffer[cursor..b.end]);
        let text = String::from_utf8(kept)
            .unwrap_or_else(|e| String::from_utf8_lossy(e.as_bytes()).into_owned());
        out.push(doc.with_text(text));
    }
    out
}

/// Keeps documents with at least `min_chars` Unicode scalar values.
pub fn filter_short(docs: Vec<Document>, min_chars: usize) -> Vec<Document> {
    docs.into_iter().filter(|d| d.char_len >= min_chars).collect()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DedupConfig {
    pub min_dup_len: usize,
    pub min_doc_chars: usize,
    pub memory_budget: usize,
}

impl Default for DedupConfig {
    fn default() -> Self {
        DedupConfig {
            min_dup_len: DEFAULT_MIN_DUP_LEN,
            min_doc_chars: DEFAULT_MIN_DOC_CHARS,
            memory_budget: DEFAULT_MEMORY_BUDGET,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct DedupStats {
    pub docs_in: u64,
    pub docs_out: u64,
    pub bytes_in: u64,
    pub bytes_out: u64,
    pub bytes_removed: u64,
    pub spans: u64,
    pub short_docs_dropped: u64,
    pub chunks: u64,
}

/// A removed range relative to its document, for audit dumps.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SpanRecord {
    pub doc_id: String,
    pub start: usize,
    pub end: usize,
}

#[derive(Debug, Clone, Default)]
pub struct DedupOutcome {
    pub docs: Vec<Document>,
    pub stats: DedupStats,
    pub removed: Vec<SpanRecord>,
}

/// Corpus construction, suffix array, span search, excision and the
/// short-document filter, in that order. One pass: text that becomes
/// adjacent after excision is not re-examined.
pub fn dedup_stage(docs: Vec<Document>, cfg: &DedupConfig) -> DedupOutcome {
    let mut stats = DedupStats {
        docs_in: docs.len() as u64,
        bytes_in: docs.iter().map(|d| d.text.len() as u64).sum(),
        ..Default::default()
    };
    let mut removed = Vec::new();

    let chunks = plan_chunks(&docs, cfg.memory_budget);
    stats.chunks = chunks.len() as u64;
    let mut deduped = Vec::with_capacity(docs.len());
    let mut prev: Option<std::ops::Range<usize>> = None;
    for chunk in chunks {
        // The previous chunk's original text acts as a reservoir: matches
        // against it are removed from this chunk, never from the reservoir.
        let window_start = prev.as_ref().map_or(chunk.start, |r| r.start);
        let window = &docs[window_start..chunk.end];
        let corpus = build_corpus(window);
        let spans = if corpus.is_empty() {
            Vec::new()
        } else {
            let sa = SuffixArray::build(&corpus.buffer);
            find_duplicate_spans(&corpus, &sa, cfg.min_dup_len)
        };
        let protected = chunk.start - window_start;
        let protected_end = if protected == 0 { 0 } else { corpus.boundaries[protected - 1].end + 1 };
        let spans: Vec<_> = spans.into_iter().filter(|s| s.start >= protected_end).collect();
        stats.spans += spans.len() as u64;
        stats.bytes_removed += spans.iter().map(|s| s.len() as u64).sum::<u64>();
        for s in &spans {
            if let Some(i) = corpus.locate(s.start) {
                let b = &corpus.boundaries[i];
                removed.push(SpanRecord { doc_id: b.doc_id.clone(), start: s.start - b.start, end: s.end - b.start });
            }
        }
        let cleaned = remove_spans(window, &corpus, &spans);
        deduped.extend(cleaned.into_iter().skip(protected));
        prev = Some(chunk);
    }

    let before = deduped.len();
    let docs = filter_short(deduped, cfg.min_doc_chars);
    stats.short_docs_dropped = (before - docs.len()) as u64;
    stats.docs_out = docs.len() as u64;
    stats.bytes_out = docs.iter().map(|d| d.text.len() as u64).sum();
    DedupOutcome { docs, stats, removed }
}

/// Splits documents into consecutive chunks whose corpus size stays under
/// half the budget, so a chunk plus its reservoir fits in the budget.
fn plan_chunks(docs: &[Document], budget: usize) -> Vec<std::ops::Range<usize>> {
    let total: usize = docs.iter().map(|d| d.text.len() + 1).sum();
    if docs.is_empty() || total <= budget {
        return vec![0..docs.len()];
    }
    let limit = (budget / 2).max(1);
    let mut chunks = Vec::new();
    let mut start = 0;
    let mut size = 0;
    for (i, d) in docs.iter().enumerate() {
        let len = d.text.len() + 1;
        if i > start && size + len > limit {
            chunks.push(start..i);
            start = i;
            size = 0;
        }
        size += len;
    }
    chunks.push(start..docs.len());
    chunks
}

/// Writes `<doc_id>\t<start>\t<end>` lines, offsets relative to the
/// document text in bytes.
pub fn write_span_dump<W: Write>(mut w: W, records: &[SpanRecord]) -> io::Result<()> {
    for r in records {
        writeln!(w, "{}\t{}\t{}", r.doc_id, r.start, r.end)?;
    }
    w.flush()
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::HashSet;

    fn doc(text: &str) -> Document {
        Document::new(format!("https://ex.et/{}", text.len()), "CC-MAIN-2023-14", "2023-03-20T00:00:00Z", text)
    }

    fn spans_of(texts: &[&str], min_len: usize) -> Vec<(usize, usize)> {
        let docs: Vec<_> = texts.iter().map(|t| doc(t)).collect();
        let corpus = build_corpus(&docs);
        let sa = SuffixArray::build(&corpus.buffer);
        find_duplicate_spans(&corpus, &sa, min_len).iter().map(|s| (s.start, s.end)).collect()
    }

    #[test]
    fn corpus_construction() {
        let c = build_corpus(&[doc("ab"), doc("cd")]);
        assert_eq!(c.buffer, b"ab\xFFcd");
        let b: Vec<_> = c.boundaries.iter().map(|b| (b.start, b.end)).collect();
        assert_eq!(b, vec![(0, 2), (3, 5)]);
        assert_eq!(c.locate(1), Some(0));
        assert_eq!(c.locate(2), None);
        assert_eq!(c.locate(3), Some(1));
        let empty = build_corpus(&[]);
        assert!(empty.buffer.is_empty() && empty.boundaries.is_empty());
    }

    #[test]
    fn abcabc_removes_second_copy() {
        assert_eq!(spans_of(&["abcabc"], 3), vec![(3, 6)]);
        let d = doc("abcabc");
        let corpus = build_corpus(std::slice::from_ref(&d));
        let out = remove_spans(&[d], &corpus, &[DuplicateSpan { start: 3, end: 6 }]);
        assert_eq!(out[0].text, "abc");
        assert_eq!(out[0].char_len, 3);
    }

    #[test]
    fn no_repeats_no_spans() {
        assert!(spans_of(&["abcdefghij"], 2).is_empty());
        assert!(spans_of(&["ab"], 5).is_empty());
    }

    #[test]
    fn windows_across_separator_are_ignored() {
        // "ab\xFFc" occurs twice but only spans two documents' edges.
        assert!(spans_of(&["xab", "cyy", "zab", "cww"], 4).is_empty());
    }

    fn random_text(seed: u64, chars: usize) -> String {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        (0..chars).map(|_| char::from_u32(rng.random_range(0x1200..0x1350)).unwrap()).collect()
    }

    #[test]
    fn identical_documents() {
        let text = random_text(1, 200);
        let n = text.len();
        let spans = spans_of(&[&text, &text], 50);
        assert_eq!(spans, vec![(n + 1, 2 * n + 1)]);
    }

    #[test]
    fn snapping_keeps_utf8_valid() {
        // Ethiopic characters are three bytes each; a 4-byte threshold can
        // start a window in the middle of a character.
        let a = "ሀሁሂሃሄህሆ";
        let docs = vec![doc(a), doc(&format!("ለ{}", &a[3..12]))];
        let corpus = build_corpus(&docs);
        let sa = SuffixArray::build(&corpus.buffer);
        let spans = find_duplicate_spans(&corpus, &sa, 4);
        for s in &spans {
            assert!(std::str::from_utf8(&corpus.buffer[s.start..s.end]).is_ok());
        }
        let out = remove_spans(&docs, &corpus, &spans);
        assert_eq!(out[0].text, a);
        assert_eq!(out[1].text, "ለ");
    }

    #[test]
    fn filter_short_boundary() {
        let d99 = doc(&"ሀ".repeat(99));
        let d100 = doc(&"ሀ".repeat(100));
        let kept = filter_short(vec![d99, d100.clone()], 100);
        assert_eq!(kept, vec![d100]);
        assert_eq!(filter_short(vec![doc("")], 0).len(), 1);
    }

    #[test]
    fn whole_document_span_leaves_empty_text() {
        let docs = vec![doc("hello"), doc("world")];
        let corpus = build_corpus(&docs);
        let out = remove_spans(&docs, &corpus, &[DuplicateSpan { start: 6, end: 11 }]);
        assert_eq!(out[1].text, "");
        assert_eq!(out[1].id, docs[1].id);
    }

    #[test]
    fn chunked_matches_unchunked_on_small_inputs() {
        let base: Vec<String> = (0..20).map(|i| random_text(100 + i, 60)).collect();
        let mut docs: Vec<Document> = base.iter().map(|t| doc(t)).collect();
        // A copy of doc 3 right after doc 4 lands in the same chunk pair
        // under both plans.
        docs.insert(5, doc(&base[3]));
        let whole = dedup_stage(docs.clone(), &DedupConfig { min_doc_chars: 0, ..Default::default() });
        let chunked = dedup_stage(
            docs,
            &DedupConfig { min_doc_chars: 0, memory_budget: 1500, ..Default::default() },
        );
        assert!(chunked.stats.chunks > 1);
        assert_eq!(whole.docs, chunked.docs);
        assert_eq!(whole.docs[5].text, "");
    }

    #[test]
    fn span_dump_format() {
        let recs = vec![SpanRecord { doc_id: "d0".into(), start: 3, end: 6 }];
        let mut buf = Vec::new();
        write_span_dump(&mut buf, &recs).unwrap();
        assert_eq!(buf, b"d0\t3\t6\n");
    }

    #[test]
    fn unique_text_is_unchanged() {
        let docs: Vec<Document> = (0..10).map(|i| doc(&random_text(i, 300))).collect();
        let ids: HashSet<_> = docs.iter().map(|d| d.id.clone()).collect();
        assert_eq!(ids.len(), 10);
        let out = dedup_stage(docs.clone(), &DedupConfig::default());
        assert_eq!(out.docs, docs);
        assert_eq!(out.stats.bytes_removed, 0);
    }
}
