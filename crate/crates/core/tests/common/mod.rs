#![allow(dead_code)]

use std::collections::HashSet;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use unicrawl::dedup::{build_corpus, find_duplicate_spans, SuffixArray, SEPARATOR};
use unicrawl::mock::{self, MockCorpus, MockServer, MockSpec};
use unicrawl::pipeline::{ConfigSource, PipelineConfig};
use unicrawl::Document;

pub fn doc(i: usize, text: &str) -> Document {
    Document::new(format!("https://t.example/{i}"), "CC-MAIN-2023-14", "2023-03-20T00:00:00Z", text)
}

pub fn docs(texts: &[String]) -> Vec<Document> {
    texts.iter().enumerate().map(|(i, t)| doc(i, t)).collect()
}

/// Brute force: every window of `min_len` bytes without a separator is
/// hashed; each occurrence after the first marks its bytes. Marked bytes
/// are returned as maximal `[start, end)` runs.
pub fn oracle_spans(buf: &[u8], min_len: usize) -> Vec<(usize, usize)> {
    let mut marked = vec![false; buf.len()];
    let mut seen: HashSet<&[u8]> = HashSet::new();
    if buf.len() >= min_len {
        for p in 0..=buf.len() - min_len {
            let w = &buf[p..p + min_len];
            if w.contains(&SEPARATOR) {
                continue;
            }
            if !seen.insert(w) {
                marked[p..p + min_len].iter_mut().for_each(|m| *m = true);
            }
        }
    }
    let mut out = Vec::new();
    let mut i = 0;
    while i < marked.len() {
        if marked[i] {
            let s = i;
            while i < marked.len() && marked[i] {
                i += 1;
            }
            out.push((s, i));
        } else {
            i += 1;
        }
    }
    out
}

pub fn sa_spans(documents: &[Document], min_len: usize) -> (Vec<u8>, Vec<(usize, usize)>) {
    let corpus = build_corpus(documents);
    let sa = SuffixArray::build(&corpus.buffer);
    let spans = find_duplicate_spans(&corpus, &sa, min_len).iter().map(|s| (s.start, s.end)).collect();
    (corpus.buffer, spans)
}

/// Documents over the first `alphabet` lowercase letters, at most
/// `max_total` bytes in all.
pub fn random_corpus(rng: &mut ChaCha8Rng, alphabet: u8, max_total: usize) -> Vec<Document> {
    let total = rng.random_range(0..=max_total);
    let ndocs = rng.random_range(1..=16usize);
    let mut texts = Vec::with_capacity(ndocs);
    let mut left = total;
    for i in 0..ndocs {
        let len = if i + 1 == ndocs { left } else { rng.random_range(0..=left) };
        left -= len;
        texts.push((0..len).map(|_| (b'a' + rng.random_range(0..alphabet)) as char).collect::<String>());
    }
    docs(&texts)
}

/// Random text over `lo..hi` code points.
pub fn random_text(rng: &mut ChaCha8Rng, chars: usize, lo: u32, hi: u32) -> String {
    (0..chars).map(|_| char::from_u32(rng.random_range(lo..hi)).expect("assigned")).collect()
}

pub fn seeded(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// A mock crawl served on a loopback port.
pub struct MockCrawl {
    pub corpus_rows: std::collections::BTreeMap<String, Vec<mock::MockRow>>,
    pub spec: MockSpec,
    pub server: MockServer,
    pub total_bytes: u64,
}

pub fn serve_mock(spec: MockSpec) -> MockCrawl {
    let MockCorpus { files, rows } = mock::generate(&spec);
    let total_bytes = files.values().map(|v| v.len() as u64).sum();
    let server = MockServer::start(files).expect("bind loopback");
    MockCrawl { corpus_rows: rows, spec, server, total_bytes }
}

pub fn mock_config(m: &MockCrawl, out: &Path, crawls: &[String]) -> PipelineConfig {
    PipelineConfig::resolve(
        ConfigSource {
            lang: Some(m.spec.target.clone()),
            crawls: Some(crawls.to_vec()),
            out: Some(out.to_path_buf()),
            cc_base: Some(m.server.base_url()),
            workers: Some(4),
            rate_limit: Some(2000.0),
            ..Default::default()
        },
        true,
    )
    .expect("valid config")
}

/// Concatenated bytes of every shard in a dataset, in manifest order.
pub fn dataset_bytes(dir: &Path) -> Vec<u8> {
    let m = unicrawl::store::validate_manifest(dir).expect("valid dataset");
    let mut out = Vec::new();
    for s in &m.shards {
        out.extend(std::fs::read(dir.join(&s.path)).expect("shard"));
    }
    out
}
