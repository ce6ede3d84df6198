//! Range-request fetching of individual WARC records.

use std::fs::File;
use std::io::{self, BufWriter, Read, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::http::{join_url, HttpClient, HttpError, RetryPolicy, Retryable};
use crate::index_filter::IndexRecord;
use crate::rate_limit::RateLimiter;

pub const DEFAULT_RATE_LIMIT: f64 = 20.0;
const GZIP_MAGIC: [u8; 2] = [0x1f, 0x8b];

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RangeRequest {
    pub absolute_url: String,
    pub first_byte: u64,
    /// Inclusive.
    pub last_byte: u64,
}

impl RangeRequest {
    pub fn len(&self) -> u64 {
        self.last_byte - self.first_byte + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Value of the `Range` header.
    pub fn header_value(&self) -> String {
        format!("bytes={}-{}", self.first_byte, self.last_byte)
    }
}

/// Range covering exactly one record. The record must satisfy
/// [`IndexRecord::validate`].
pub fn build_range_request(base: &str, rec: &IndexRecord) -> RangeRequest {
    debug_assert!(rec.warc_record_length >= 1);
    RangeRequest {
        absolute_url: join_url(base, &rec.warc_filename),
        first_byte: rec.warc_record_offset,
        last_byte: rec.warc_record_offset + rec.warc_record_length - 1,
    }
}

#[derive(Debug, Error)]
pub enum FetchError {
    #[error("{url}: server ignored the Range header (HTTP {status}), body discarded")]
    RangeIgnored { url: String, status: u16 },
    #[error("{url} {range}: HTTP 416, index does not match the remote object")]
    IndexMismatch { url: String, range: String },
    #[error("{url} {range}: expected {expected} bytes, received {received}")]
    Truncated { url: String, range: String, expected: u64, received: u64 },
    #[error("{url} {range}: unexpected Content-Range {content_range:?}")]
    BadContentRange { url: String, range: String, content_range: String },
    #[error("{url} {range}: record does not start with a gzip member")]
    NotGzip { url: String, range: String },
    #[error(transparent)]
    Http(#[from] HttpError),
}

impl Retryable for FetchError {
    fn is_retryable(&self) -> bool {
        match self {
            FetchError::Http(e) => e.is_retryable(),
            _ => false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FetchedRecord {
    pub source: IndexRecord,
    pub compressed_bytes: Vec<u8>,
    pub fetched_at: String,
    pub attempts: u32,
}

fn parse_content_range(v: &str) -> Option<(u64, u64)> {
    let rest = v.trim().strip_prefix("bytes ")?;
    let (range, _total) = rest.split_once('/')?;
    let (a, b) = range.split_once('-')?;
    Some((a.trim().parse().ok()?, b.trim().parse().ok()?))
}

/// One attempt at `req`. Never reads more than `req.len()` bytes of body.
pub fn fetch_range(client: &HttpClient, req: &RangeRequest) -> Result<Vec<u8>, FetchError> {
    let url = &req.absolute_url;
    let resp = client.get(url, Some((req.first_byte, req.last_byte)))?;
    let status = resp.status().as_u16();
    match status {
        206 => {}
        // Dropping the response closes the connection without reading the
        // body.
        200 => return Err(FetchError::RangeIgnored { url: url.clone(), status }),
        416 => return Err(FetchError::IndexMismatch { url: url.clone(), range: req.header_value() }),
        _ => return Err(HttpError::Status { url: url.clone(), status }.into()),
    }
    if let Some(cr) = resp.headers().get("content-range") {
        let cr = cr.to_str().unwrap_or("");
        if parse_content_range(cr) != Some((req.first_byte, req.last_byte)) {
            return Err(FetchError::BadContentRange {
                url: url.clone(),
                range: req.header_value(),
                content_range: cr.to_string(),
            });
        }
    }
    let expected = req.len();
    let mut buf = Vec::with_capacity(expected as usize);
    let read = resp.into_body().into_reader().take(expected).read_to_end(&mut buf);
    client.count_bytes(buf.len() as u64);
    if let Err(e) = read {
        return Err(HttpError::Transport { url: url.clone(), message: e.to_string() }.into());
    }
    if buf.len() as u64 != expected {
        return Err(FetchError::Truncated {
            url: url.clone(),
            range: req.header_value(),
            expected,
            received: buf.len() as u64,
        });
    }
    Ok(buf)
}

/// Fetches one record with retries, checking length and gzip framing.
/// Returns the outcome and the number of attempts made.
pub fn fetch_record(
    client: &HttpClient,
    base: &str,
    rec: &IndexRecord,
    policy: &RetryPolicy,
    limiter: Option<&RateLimiter>,
) -> (Result<FetchedRecord, FetchError>, u32) {
    let req = build_range_request(base, rec);
    let (res, attempts) = policy.run(|_| {
        if let Some(l) = limiter {
            l.acquire();
        }
        fetch_range(client, &req)
    });
    let res = res.and_then(|bytes| {
        if !bytes.starts_with(&GZIP_MAGIC) {
            return Err(FetchError::NotGzip { url: req.absolute_url.clone(), range: req.header_value() });
        }
        Ok(FetchedRecord {
            source: rec.clone(),
            compressed_bytes: bytes,
            fetched_at: chrono::Utc::now().to_rfc3339(),
            attempts,
        })
    });
    (res, attempts)
}

/// A record that could not be fetched.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FetchFailure {
    pub source: IndexRecord,
    pub error: String,
    pub attempts: u32,
}

/// Result for the `index`-th input row.
#[derive(Debug)]
pub struct FetchOutcome {
    pub index: usize,
    pub result: Result<FetchedRecord, FetchFailure>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct FetchStats {
    pub requested: u64,
    pub fetched: u64,
    pub failed: u64,
    pub attempts: u64,
    pub bytes: u64,
}

#[derive(Clone)]
pub struct FetchContext {
    pub client: HttpClient,
    pub base: String,
    pub policy: RetryPolicy,
    pub limiter: Arc<RateLimiter>,
    pub workers: usize,
    pub spool: Option<PathBuf>,
}

impl FetchContext {
    pub fn new(client: HttpClient, base: impl Into<String>, rate_limit: f64, workers: usize) -> Self {
        FetchContext {
            client,
            base: base.into(),
            policy: RetryPolicy::default(),
            limiter: Arc::new(RateLimiter::new(rate_limit, 1)),
            workers: workers.max(1),
            spool: None,
        }
    }
}

fn spool_path(dir: &Path, rec: &IndexRecord) -> PathBuf {
    let stem: String = rec
        .warc_filename
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '.' || c == '-' { c } else { '_' })
        .collect();
    dir.join(format!("{stem}@{}+{}", rec.warc_record_offset, rec.warc_record_length))
}

/// Fetches every record with a bounded worker pool, handing each outcome
/// to `sink` on the calling thread as soon as it is ready. Outcomes
/// arrive in completion order; `FetchOutcome::index` identifies the row.
pub fn fetch_all<F>(ctx: &FetchContext, records: &[IndexRecord], mut sink: F) -> FetchStats
where
    F: FnMut(FetchOutcome),
{
    let workers = ctx.workers.max(1).min(records.len().max(1));
    let (job_tx, job_rx) = crossbeam_channel::unbounded::<usize>();
    for i in 0..records.len() {
        job_tx.send(i).expect("job queue open");
    }
    drop(job_tx);
    // Bounded so fetched bytes cannot pile up ahead of the consumer.
    let (out_tx, out_rx) = crossbeam_channel::bounded::<FetchOutcome>(workers * 2);
    let mut stats = FetchStats { requested: records.len() as u64, ..Default::default() };

    std::thread::scope(|s| {
        for _ in 0..workers {
            let job_rx = job_rx.clone();
            let out_tx = out_tx.clone();
            s.spawn(move || {
                for i in job_rx.iter() {
                    let rec = &records[i];
                    let (res, attempts) = fetch_record(&ctx.client, &ctx.base, rec, &ctx.policy, Some(&ctx.limiter));
                    let result = res.map_err(|e| FetchFailure { source: rec.clone(), error: e.to_string(), attempts });
                    if let (Ok(r), Some(dir)) = (&result, &ctx.spool) {
                        if let Err(e) = std::fs::create_dir_all(dir).and_then(|_| std::fs::write(spool_path(dir, rec), &r.compressed_bytes)) {
                            log::warn!("spool write failed for {}: {e}", rec.locator());
                        }
                    }
                    if out_tx.send(FetchOutcome { index: i, result }).is_err() {
                        break;
                    }
                }
            });
        }
        drop(out_tx);
        for outcome in out_rx.iter() {
            match &outcome.result {
                Ok(r) => {
                    stats.fetched += 1;
                    stats.attempts += u64::from(r.attempts);
                    stats.bytes += r.compressed_bytes.len() as u64;
                }
                Err(f) => {
                    stats.failed += 1;
                    stats.attempts += u64::from(f.attempts);
                    log::warn!("{}: {}", f.source.locator(), f.error);
                }
            }
            sink(outcome);
        }
    });
    stats
}

#[derive(Serialize)]
struct FailureRow<'a> {
    url: &'a str,
    crawl: &'a str,
    languages: &'a [String],
    filename: &'a str,
    offset: u64,
    length: u64,
    error: &'a str,
    attempts: u32,
}

/// Writes failures as index rows with `error` and `attempts` added, so
/// the file can be passed back as an index to retry only those records.
pub fn write_failures(path: &Path, failures: &[FetchFailure]) -> io::Result<()> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir)?;
    }
    let mut w = BufWriter::new(File::create(path)?);
    for f in failures {
        let r = &f.source;
        let row = FailureRow {
            url: &r.url,
            crawl: &r.crawl_id,
            languages: &r.content_languages,
            filename: &r.warc_filename,
            offset: r.warc_record_offset,
            length: r.warc_record_length,
            error: &f.error,
            attempts: f.attempts,
        };
        serde_json::to_writer(&mut w, &row)?;
        w.write_all(b"\n")?;
    }
    w.flush()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rec(offset: u64, length: u64) -> IndexRecord {
        IndexRecord {
            url: "https://example.et/".into(),
            crawl_id: "CC-MAIN-2023-14".into(),
            content_languages: vec!["amh".into()],
            warc_filename: "crawl-data/CC-MAIN-2023-14/segments/1/warc/x.warc.gz".into(),
            warc_record_offset: offset,
            warc_record_length: length,
            fetch_status: None,
        }
    }

    #[test]
    fn range_arithmetic() {
        assert_eq!(build_range_request("https://host/", &rec(0, 1)).header_value(), "bytes=0-0");
        let r = build_range_request("https://host/", &rec(3000, 500));
        assert_eq!(r.header_value(), "bytes=3000-3499");
        assert_eq!(r.len(), 500);
        assert_eq!(r.absolute_url, "https://host/crawl-data/CC-MAIN-2023-14/segments/1/warc/x.warc.gz");
    }

    #[test]
    fn content_range_parsing() {
        assert_eq!(parse_content_range("bytes 10-19/100"), Some((10, 19)));
        assert_eq!(parse_content_range("bytes 10-19/*"), Some((10, 19)));
        assert_eq!(parse_content_range("items 1-2/3"), None);
    }

    #[test]
    fn failure_rows_read_back_as_index() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("failures.jsonl");
        let f = FetchFailure { source: rec(5, 6), error: "boom".into(), attempts: 5 };
        write_failures(&path, &[f.clone()]).unwrap();
        let back = crate::index_filter::read_index_rows(&path).unwrap();
        assert_eq!(back, vec![f.source]);
        let line = std::fs::read_to_string(&path).unwrap();
        assert!(line.contains("\"error\":\"boom\"") && line.contains("\"attempts\":5"));
    }
}
