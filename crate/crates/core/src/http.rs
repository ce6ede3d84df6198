//! Blocking HTTP client, retry policy and a range-backed random access
//! reader for remote objects.

use std::io::{self, Read};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex};
use std::time::Duration;

use bytes::Bytes;
use rand::Rng;
use thiserror::Error;
use ureq::http::{Response, StatusCode};
use ureq::Body;

pub const DEFAULT_CC_BASE: &str = "https://data.commoncrawl.org/";
pub const CC_BASE_ENV: &str = "UNICRAWL_CC_BASE";
pub const DEFAULT_USER_AGENT: &str = concat!("unicrawl/", env!("CARGO_PKG_VERSION"));

/// Base URL from `UNICRAWL_CC_BASE`, falling back to the public endpoint.
pub fn cc_base_from_env() -> String {
    std::env::var(CC_BASE_ENV).ok().filter(|s| !s.is_empty()).unwrap_or_else(|| DEFAULT_CC_BASE.to_string())
}

/// Joins a base URL and a relative path with exactly one slash between them.
pub fn join_url(base: &str, path: &str) -> String {
    format!("{}/{}", base.trim_end_matches('/'), path.trim_start_matches('/'))
}

#[derive(Debug, Error)]
pub enum HttpError {
    #[error("{url}: HTTP {status}")]
    Status { url: String, status: u16 },
    #[error("{url}: {message}")]
    Transport { url: String, message: String },
    #[error("{url}: missing or invalid Content-Length")]
    NoLength { url: String },
}

impl HttpError {
    pub fn status(&self) -> Option<u16> {
        match self {
            HttpError::Status { status, .. } => Some(*status),
            _ => None,
        }
    }
}

impl Retryable for HttpError {
    fn is_retryable(&self) -> bool {
        match self {
            HttpError::Status { status, .. } => *status >= 500 || *status == 429,
            HttpError::Transport { .. } => true,
            HttpError::NoLength { .. } => false,
        }
    }
}

/// Errors that know whether another attempt could succeed.
pub trait Retryable {
    fn is_retryable(&self) -> bool;
}

/// Exponential backoff with jitter.
#[derive(Debug, Clone, PartialEq)]
pub struct RetryPolicy {
    pub max_attempts: u32,
    pub base_delay: Duration,
    pub max_delay: Duration,
    pub jitter: bool,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        RetryPolicy {
            max_attempts: 5,
            base_delay: Duration::from_secs(1),
            max_delay: Duration::from_secs(60),
            jitter: true,
        }
    }
}

impl RetryPolicy {
    /// Policy with no waiting between attempts, for tests and local mocks.
    pub fn immediate(max_attempts: u32) -> Self {
        RetryPolicy { max_attempts, base_delay: Duration::ZERO, max_delay: Duration::ZERO, jitter: false }
    }

    /// Delay before attempt `attempt + 1`, given `attempt` failures so far.
    pub fn delay_after(&self, attempt: u32) -> Duration {
        let exp = self.base_delay.saturating_mul(1u32 << attempt.saturating_sub(1).min(20));
        let capped = exp.min(self.max_delay);
        if self.jitter && !capped.is_zero() {
            capped.mul_f64(rand::rng().random_range(0.5..1.0))
        } else {
            capped
        }
    }

    /// Runs `op` until it succeeds, fails with a non-retryable error, or
    /// runs out of attempts. Returns the result with the attempt count.
    pub fn run<T, E: Retryable>(&self, mut op: impl FnMut(u32) -> Result<T, E>) -> (Result<T, E>, u32) {
        let mut attempt = 0;
        loop {
            attempt += 1;
            match op(attempt) {
                Ok(v) => return (Ok(v), attempt),
                Err(e) if e.is_retryable() && attempt < self.max_attempts.max(1) => {
                    log::debug!("attempt {attempt} failed, retrying");
                    std::thread::sleep(self.delay_after(attempt));
                }
                Err(e) => return (Err(e), attempt),
            }
        }
    }
}

/// Shared blocking client. Cloning is cheap; clones share the pool.
#[derive(Clone)]
pub struct HttpClient {
    agent: ureq::Agent,
    bytes_received: Arc<AtomicU64>,
}

impl std::fmt::Debug for HttpClient {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("HttpClient").finish_non_exhaustive()
    }
}

impl HttpClient {
    pub fn new(user_agent: &str) -> Self {
        Self::with_timeout(user_agent, Duration::from_secs(120))
    }

    pub fn with_timeout(user_agent: &str, timeout: Duration) -> Self {
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .http_status_as_error(false)
            .user_agent(user_agent)
            .timeout_connect(Some(Duration::from_secs(30)))
            .timeout_global(Some(timeout))
            .max_idle_connections_per_host(64)
            .build()
            .into();
        HttpClient { agent, bytes_received: Arc::new(AtomicU64::new(0)) }
    }

    /// Total body bytes read through this client and its clones.
    pub fn bytes_received(&self) -> u64 {
        self.bytes_received.load(Ordering::Relaxed)
    }

    pub(crate) fn count_bytes(&self, n: u64) {
        self.bytes_received.fetch_add(n, Ordering::Relaxed);
    }

    fn transport(url: &str, e: ureq::Error) -> HttpError {
        HttpError::Transport { url: url.to_string(), message: e.to_string() }
    }

    /// GET with an optional inclusive byte range. The status is returned
    /// as-is; callers decide what is acceptable.
    pub fn get(&self, url: &str, range: Option<(u64, u64)>) -> Result<Response<Body>, HttpError> {
        let mut req = self.agent.get(url);
        if let Some((first, last)) = range {
            req = req.header("Range", format!("bytes={first}-{last}"));
        }
        req.call().map_err(|e| Self::transport(url, e))
    }

    /// GET that requires a 2xx status, returning the whole body.
    pub fn get_bytes(&self, url: &str, limit: u64) -> Result<Vec<u8>, HttpError> {
        let resp = self.get(url, None)?;
        if !resp.status().is_success() {
            return Err(HttpError::Status { url: url.to_string(), status: resp.status().as_u16() });
        }
        let mut buf = Vec::new();
        resp.into_body()
            .into_with_config()
            .limit(limit)
            .reader()
            .read_to_end(&mut buf)
            .map_err(|e| HttpError::Transport { url: url.to_string(), message: e.to_string() })?;
        self.count_bytes(buf.len() as u64);
        Ok(buf)
    }

    /// Size of a remote object via HEAD.
    pub fn content_length(&self, url: &str) -> Result<u64, HttpError> {
        let resp = self.agent.head(url).call().map_err(|e| Self::transport(url, e))?;
        if resp.status() != StatusCode::OK {
            return Err(HttpError::Status { url: url.to_string(), status: resp.status().as_u16() });
        }
        resp.headers()
            .get("content-length")
            .and_then(|v| v.to_str().ok())
            .and_then(|v| v.trim().parse().ok())
            .ok_or_else(|| HttpError::NoLength { url: url.to_string() })
    }

    /// Exactly `len` bytes starting at `start`; the server must honor the
    /// range with a 206.
    pub fn get_range_exact(&self, url: &str, start: u64, len: u64) -> Result<Vec<u8>, HttpError> {
        let resp = self.get(url, Some((start, start + len - 1)))?;
        let status = resp.status().as_u16();
        if status != 206 {
            return Err(HttpError::Status { url: url.to_string(), status });
        }
        let mut buf = Vec::with_capacity(len as usize);
        resp.into_body()
            .into_reader()
            .take(len + 1)
            .read_to_end(&mut buf)
            .map_err(|e| HttpError::Transport { url: url.to_string(), message: e.to_string() })?;
        self.count_bytes(buf.len() as u64);
        if buf.len() as u64 != len {
            return Err(HttpError::Transport {
                url: url.to_string(),
                message: format!("expected {len} bytes, received {}", buf.len()),
            });
        }
        Ok(buf)
    }
}

const WINDOW: u64 = 4 << 20;
const MAX_WINDOWS: usize = 8;

struct RemoteInner {
    client: HttpClient,
    url: String,
    len: u64,
    policy: RetryPolicy,
    // Most recently used first.
    windows: Mutex<Vec<(u64, Bytes)>>,
    requests: AtomicU64,
}

/// Random access over a remote object using range requests, with a small
/// cache of read-ahead windows. Column readers touch a few sequential
/// regions at once, so a handful of windows keeps request counts low
/// without buffering the object.
#[derive(Clone)]
pub struct RemoteObject {
    inner: Arc<RemoteInner>,
}

impl RemoteObject {
    pub fn open(client: &HttpClient, url: &str, policy: &RetryPolicy) -> Result<Self, HttpError> {
        let (len, _) = policy.run(|_| client.content_length(url));
        Ok(RemoteObject {
            inner: Arc::new(RemoteInner {
                client: client.clone(),
                url: url.to_string(),
                len: len?,
                policy: policy.clone(),
                windows: Mutex::new(Vec::new()),
                requests: AtomicU64::new(0),
            }),
        })
    }

    pub fn url(&self) -> &str {
        &self.inner.url
    }

    pub fn size(&self) -> u64 {
        self.inner.len
    }

    pub fn requests(&self) -> u64 {
        self.inner.requests.load(Ordering::Relaxed)
    }

    fn fetch(&self, start: u64, len: u64) -> Result<Bytes, HttpError> {
        let inner = &self.inner;
        let (res, attempts) = inner.policy.run(|_| inner.client.get_range_exact(&inner.url, start, len));
        inner.requests.fetch_add(u64::from(attempts), Ordering::Relaxed);
        res.map(Bytes::from)
    }

    /// Returns bytes starting at `start`: exactly `len` of them when
    /// `exact`, otherwise at least one (up to `len`).
    fn read_at(&self, start: u64, len: u64, exact: bool) -> Result<Bytes, HttpError> {
        let len = len.min(self.inner.len.saturating_sub(start));
        if len == 0 {
            return Ok(Bytes::new());
        }
        {
            let mut windows = self.inner.windows.lock().expect("window cache poisoned");
            if let Some(i) = windows.iter().position(|(s, b)| {
                let end = s + b.len() as u64;
                start >= *s && start < end && (!exact || start + len <= end)
            }) {
                let w = windows.remove(i);
                let off = (start - w.0) as usize;
                let take = (len as usize).min(w.1.len() - off);
                let out = w.1.slice(off..off + take);
                windows.insert(0, w);
                return Ok(out);
            }
        }
        if len > WINDOW {
            return self.fetch(start, len);
        }
        let wlen = WINDOW.min(self.inner.len - start);
        let data = self.fetch(start, wlen)?;
        let out = data.slice(..len as usize);
        let mut windows = self.inner.windows.lock().expect("window cache poisoned");
        windows.insert(0, (start, data));
        windows.truncate(MAX_WINDOWS);
        Ok(out)
    }
}

impl parquet::file::reader::Length for RemoteObject {
    fn len(&self) -> u64 {
        self.inner.len
    }
}

impl parquet::file::reader::ChunkReader for RemoteObject {
    type T = RemoteReader;

    fn get_read(&self, start: u64) -> parquet::errors::Result<Self::T> {
        Ok(RemoteReader { object: self.clone(), pos: start })
    }

    fn get_bytes(&self, start: u64, length: usize) -> parquet::errors::Result<Bytes> {
        self.read_at(start, length as u64, true)
            .map_err(|e| parquet::errors::ParquetError::External(Box::new(e)))
    }
}

/// Sequential reader over a [`RemoteObject`] from a given offset.
pub struct RemoteReader {
    object: RemoteObject,
    pos: u64,
}

impl Read for RemoteReader {
    fn read(&mut self, buf: &mut [u8]) -> io::Result<usize> {
        if buf.is_empty() || self.pos >= self.object.size() {
            return Ok(0);
        }
        let chunk = self.object.read_at(self.pos, buf.len() as u64, false).map_err(io::Error::other)?;
        buf[..chunk.len()].copy_from_slice(&chunk);
        self.pos += chunk.len() as u64;
        Ok(chunk.len())
    }
}
