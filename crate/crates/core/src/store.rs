//! Sharded JSONL dataset with a checksummed manifest.
//!
//! Shards are written first, each through a temporary file and a rename;
//! the manifest is published last the same way. Any existing manifest is
//! removed before the first shard is touched, so a manifest on disk always
//! describes complete shards.

use std::collections::BTreeSet;
use std::fmt;
use std::fs::{self, File};
use std::io::{self, BufRead, BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use flate2::read::MultiGzDecoder;
use flate2::write::GzEncoder;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::document::Document;
use crate::report::StageStats;

pub const MANIFEST_FILE: &str = "manifest.json";
pub const DEFAULT_MAX_SHARD_BYTES: u64 = 256 << 20;
pub const TOOL_VERSION: &str = concat!("unicrawl ", env!("CARGO_PKG_VERSION"));

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("io on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("invalid manifest {path}: {message}")]
    Manifest { path: PathBuf, message: String },
    #[error("shard {shard}: {message}")]
    Integrity { shard: String, message: String },
}

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> StoreError + '_ {
    move |source| StoreError::Io { path: path.to_path_buf(), source }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Stage {
    Raw,
    Extracted,
    DedupedArchive,
    Final,
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Stage::Raw => "raw",
            Stage::Extracted => "extracted",
            Stage::DedupedArchive => "deduped-archive",
            Stage::Final => "final",
        })
    }
}

impl FromStr for Stage {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        serde_json::from_value(serde_json::Value::String(s.to_string())).map_err(|_| format!("unknown stage {s:?}"))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Shard {
    /// File name relative to the manifest's directory.
    pub path: String,
    pub doc_count: u64,
    /// Compressed size on disk.
    pub byte_size: u64,
    pub sha256: String,
    pub crawl_ids: BTreeSet<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub target_language: String,
    pub stage: Stage,
    pub shards: Vec<Shard>,
    pub stats: StageStats,
    pub tool_version: String,
    pub created_at: String,
}

impl Manifest {
    pub fn doc_count(&self) -> u64 {
        self.shards.iter().map(|s| s.doc_count).sum()
    }

    /// Digest of everything except timestamps and timing.
    pub fn content_digest(&self) -> String {
        let mut h = Sha256::new();
        h.update(self.target_language.as_bytes());
        h.update(self.stage.to_string().as_bytes());
        for s in &self.shards {
            h.update(s.path.as_bytes());
            h.update(s.sha256.as_bytes());
            h.update(s.doc_count.to_le_bytes());
        }
        hex::encode(h.finalize())
    }
}

struct HashingWriter<W> {
    inner: W,
    hasher: Sha256,
    written: u64,
}

impl<W: Write> Write for HashingWriter<W> {
    fn write(&mut self, buf: &[u8]) -> io::Result<usize> {
        let n = self.inner.write(buf)?;
        self.hasher.update(&buf[..n]);
        self.written += n as u64;
        Ok(n)
    }

    fn flush(&mut self) -> io::Result<()> {
        self.inner.flush()
    }
}

type ShardEncoder = GzEncoder<HashingWriter<BufWriter<File>>>;

struct OpenShard {
    name: String,
    tmp: PathBuf,
    enc: ShardEncoder,
    raw_bytes: u64,
    docs: u64,
    crawls: BTreeSet<String>,
}

pub fn shard_name(index: usize) -> String {
    format!("data-{index:05}.jsonl.gz")
}

fn tmp_path(path: &Path) -> PathBuf {
    let mut name = path.file_name().unwrap_or_default().to_os_string();
    name.push(".tmp");
    path.with_file_name(name)
}

/// Writes `bytes` to `path` via a temporary file and rename.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> io::Result<()> {
    let tmp = tmp_path(path);
    {
        let mut f = File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
    }
    fs::rename(&tmp, path)
}

fn is_shard_file(name: &str) -> bool {
    name.starts_with("data-") && (name.ends_with(".jsonl.gz") || name.ends_with(".jsonl.gz.tmp"))
}

/// Removes the manifest and any shard files left in `dir`.
pub fn clear_dataset(dir: &Path) -> Result<(), StoreError> {
    let manifest = dir.join(MANIFEST_FILE);
    match fs::remove_file(&manifest) {
        Ok(()) => {}
        Err(e) if e.kind() == io::ErrorKind::NotFound => {}
        Err(e) => return Err(io_err(&manifest)(e)),
    }
    let entries = match fs::read_dir(dir) {
        Ok(e) => e,
        Err(e) if e.kind() == io::ErrorKind::NotFound => return Ok(()),
        Err(e) => return Err(io_err(dir)(e)),
    };
    for entry in entries {
        let entry = entry.map_err(io_err(dir))?;
        if entry.file_name().to_str().is_some_and(is_shard_file) {
            fs::remove_file(entry.path()).map_err(io_err(&entry.path()))?;
        }
    }
    Ok(())
}

/// Incremental shard writer. Documents are appended in order; the manifest
/// is written by [`DatasetWriter::finish`].
pub struct DatasetWriter {
    dir: PathBuf,
    max_shard_bytes: u64,
    shards: Vec<Shard>,
    current: Option<OpenShard>,
}

impl DatasetWriter {
    pub fn create(dir: &Path, max_shard_bytes: u64) -> Result<Self, StoreError> {
        fs::create_dir_all(dir).map_err(io_err(dir))?;
        clear_dataset(dir)?;
        Ok(DatasetWriter { dir: dir.to_path_buf(), max_shard_bytes: max_shard_bytes.max(1), shards: Vec::new(), current: None })
    }

    fn open_shard(&mut self) -> Result<OpenShard, StoreError> {
        let name = shard_name(self.shards.len());
        let tmp = tmp_path(&self.dir.join(&name));
        let file = File::create(&tmp).map_err(io_err(&tmp))?;
        let hw = HashingWriter { inner: BufWriter::new(file), hasher: Sha256::new(), written: 0 };
        Ok(OpenShard {
            name,
            tmp,
            enc: GzEncoder::new(hw, flate2::Compression::default()),
            raw_bytes: 0,
            docs: 0,
            crawls: BTreeSet::new(),
        })
    }

    fn close_shard(&mut self, s: OpenShard) -> Result<(), StoreError> {
        let tmp = s.tmp.clone();
        let finish = || -> io::Result<(String, u64)> {
            let mut hw = s.enc.finish()?;
            hw.flush()?;
            let file = hw.inner.into_inner().map_err(|e| e.into_error())?;
            file.sync_all()?;
            Ok((hex::encode(hw.hasher.finalize()), hw.written))
        };
        let (sha256, byte_size) = match finish() {
            Ok(v) => v,
            Err(e) => {
                let _ = fs::remove_file(&tmp);
                return Err(io_err(&tmp)(e));
            }
        };
        let path = self.dir.join(&s.name);
        fs::rename(&tmp, &path).map_err(io_err(&path))?;
        self.shards.push(Shard { path: s.name, doc_count: s.docs, byte_size, sha256, crawl_ids: s.crawls });
        Ok(())
    }

    pub fn write(&mut self, doc: &Document) -> Result<(), StoreError> {
        let mut line = serde_json::to_vec(doc).expect("document serializes");
        line.push(b'\n');
        let len = line.len() as u64;
        if self.current.as_ref().is_some_and(|s| s.docs > 0 && s.raw_bytes + len > self.max_shard_bytes) {
            let done = self.current.take().expect("checked");
            self.close_shard(done)?;
        }
        if self.current.is_none() {
            self.current = Some(self.open_shard()?);
        }
        let s = self.current.as_mut().expect("opened");
        if let Err(e) = s.enc.write_all(&line) {
            let tmp = s.tmp.clone();
            self.current = None;
            let _ = fs::remove_file(&tmp);
            return Err(io_err(&tmp)(e));
        }
        s.raw_bytes += len;
        s.docs += 1;
        if !s.crawls.contains(&doc.crawl_id) {
            s.crawls.insert(doc.crawl_id.clone());
        }
        Ok(())
    }

    /// Closes the last shard and publishes the manifest. `stats.doc_count_out`
    /// is set to the number of documents written.
    pub fn finish(mut self, target_language: &str, stage: Stage, mut stats: StageStats) -> Result<Manifest, StoreError> {
        if let Some(s) = self.current.take() {
            self.close_shard(s)?;
        }
        stats.doc_count_out = self.shards.iter().map(|s| s.doc_count).sum();
        let manifest = Manifest {
            target_language: target_language.to_string(),
            stage,
            shards: std::mem::take(&mut self.shards),
            stats,
            tool_version: TOOL_VERSION.to_string(),
            created_at: chrono::Utc::now().to_rfc3339(),
        };
        let path = self.dir.join(MANIFEST_FILE);
        let json = serde_json::to_vec_pretty(&manifest).expect("manifest serializes");
        write_atomic(&path, &json).map_err(io_err(&path))?;
        Ok(manifest)
    }
}

impl Drop for DatasetWriter {
    fn drop(&mut self) {
        if let Some(s) = self.current.take() {
            let _ = fs::remove_file(&s.tmp);
        }
    }
}

/// Writes `docs` as a dataset in `out_dir`.
pub fn write_shards<'a>(
    docs: impl IntoIterator<Item = &'a Document>,
    out_dir: &Path,
    max_shard_bytes: u64,
    target_language: &str,
    stage: Stage,
    stats: StageStats,
) -> Result<Manifest, StoreError> {
    let mut w = DatasetWriter::create(out_dir, max_shard_bytes)?;
    for d in docs {
        w.write(d)?;
    }
    w.finish(target_language, stage, stats)
}

pub fn read_manifest(path: &Path) -> Result<Manifest, StoreError> {
    let bytes = fs::read(path).map_err(io_err(path))?;
    let m: Manifest = serde_json::from_slice(&bytes)
        .map_err(|e| StoreError::Manifest { path: path.to_path_buf(), message: e.to_string() })?;
    if m.doc_count() != m.stats.doc_count_out {
        return Err(StoreError::Manifest {
            path: path.to_path_buf(),
            message: format!("shards hold {} documents but stats report {}", m.doc_count(), m.stats.doc_count_out),
        });
    }
    for s in &m.shards {
        if s.path.contains('/') || s.path.contains('\\') || s.path.starts_with('.') {
            return Err(StoreError::Manifest { path: path.to_path_buf(), message: format!("shard path {:?} escapes the dataset", s.path) });
        }
    }
    Ok(m)
}

fn verify_file(dir: &Path, shard: &Shard) -> Result<(), StoreError> {
    let path = dir.join(&shard.path);
    let integrity = |message: String| StoreError::Integrity { shard: shard.path.clone(), message };
    let mut f = File::open(&path).map_err(|e| integrity(format!("cannot open: {e}")))?;
    let mut h = Sha256::new();
    let n = io::copy(&mut f, &mut h).map_err(|e| integrity(format!("read failed: {e}")))?;
    if n != shard.byte_size {
        return Err(integrity(format!("size {n} differs from manifest {}", shard.byte_size)));
    }
    let digest = hex::encode(h.finalize());
    if digest != shard.sha256 {
        return Err(integrity("checksum mismatch".into()));
    }
    Ok(())
}

/// Streams the documents of a dataset in shard order. Each shard's file is
/// checksummed before its documents are yielded, and its document count is
/// checked once it is exhausted.
pub struct DocumentStream {
    dir: PathBuf,
    shards: std::vec::IntoIter<Shard>,
    current: Option<(Shard, Box<dyn BufRead>, u64)>,
    line: String,
    failed: bool,
}

impl DocumentStream {
    fn next_doc(&mut self) -> Result<Option<Document>, StoreError> {
        loop {
            if self.current.is_none() {
                let Some(shard) = self.shards.next() else { return Ok(None) };
                verify_file(&self.dir, &shard)?;
                let path = self.dir.join(&shard.path);
                let f = File::open(&path).map_err(io_err(&path))?;
                self.current = Some((shard, Box::new(BufReader::new(MultiGzDecoder::new(f))), 0));
            }
            let (shard, reader, seen) = self.current.as_mut().expect("opened");
            self.line.clear();
            let n = reader
                .read_line(&mut self.line)
                .map_err(|e| StoreError::Integrity { shard: shard.path.clone(), message: e.to_string() })?;
            if n == 0 {
                if *seen != shard.doc_count {
                    return Err(StoreError::Integrity {
                        shard: shard.path.clone(),
                        message: format!("holds {seen} documents, manifest says {}", shard.doc_count),
                    });
                }
                self.current = None;
                continue;
            }
            let mut doc: Document = serde_json::from_str(&self.line).map_err(|e| StoreError::Integrity {
                shard: shard.path.clone(),
                message: format!("document {}: {e}", *seen + 1),
            })?;
            doc.refresh_len();
            *seen += 1;
            return Ok(Some(doc));
        }
    }
}

impl Iterator for DocumentStream {
    type Item = Result<Document, StoreError>;

    fn next(&mut self) -> Option<Self::Item> {
        if self.failed {
            return None;
        }
        match self.next_doc() {
            Ok(Some(d)) => Some(Ok(d)),
            Ok(None) => None,
            Err(e) => {
                self.failed = true;
                Some(Err(e))
            }
        }
    }
}

/// Opens a dataset for reading. `path` may be the manifest or its directory.
pub fn read_shards(path: &Path) -> Result<(Manifest, DocumentStream), StoreError> {
    let manifest_path = if path.is_dir() { path.join(MANIFEST_FILE) } else { path.to_path_buf() };
    let manifest = read_manifest(&manifest_path)?;
    let dir = manifest_path.parent().unwrap_or(Path::new(".")).to_path_buf();
    let stream = DocumentStream {
        dir,
        shards: manifest.shards.clone().into_iter(),
        current: None,
        line: String::new(),
        failed: false,
    };
    Ok((manifest, stream))
}

pub fn read_all(path: &Path) -> Result<(Manifest, Vec<Document>), StoreError> {
    let (m, stream) = read_shards(path)?;
    let docs = stream.collect::<Result<Vec<_>, _>>()?;
    Ok((m, docs))
}

/// Fully checks a dataset: manifest schema, shard checksums, and document
/// counts. Returns the manifest on success.
pub fn validate_manifest(path: &Path) -> Result<Manifest, StoreError> {
    let (m, stream) = read_shards(path)?;
    for d in stream {
        d?;
    }
    Ok(m)
}

/// SHA-256 of a file's bytes.
pub fn file_sha256(path: &Path) -> io::Result<String> {
    let mut h = Sha256::new();
    let mut f = File::open(path)?;
    let mut buf = vec![0u8; 1 << 16];
    loop {
        let n = f.read(&mut buf)?;
        if n == 0 {
            break;
        }
        h.update(&buf[..n]);
    }
    Ok(hex::encode(h.finalize()))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn docs(n: usize, text_len: usize) -> Vec<Document> {
        (0..n)
            .map(|i| Document::new(format!("https://a.et/{i}"), "CC-MAIN-2023-14", "2023-03-20T10:00:00Z", "ሀ".repeat(text_len) + &i.to_string()))
            .collect()
    }

    #[test]
    fn single_shard_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let d = docs(10, 50);
        let m = write_shards(&d, dir.path(), DEFAULT_MAX_SHARD_BYTES, "amh", Stage::Final, StageStats::new("final")).unwrap();
        assert_eq!(m.shards.len(), 1);
        assert_eq!(m.doc_count(), 10);
        assert_eq!(m.stats.doc_count_out, 10);
        let (_, back) = read_all(dir.path()).unwrap();
        assert_eq!(back, d);
    }

    #[test]
    fn rolls_shards() {
        let dir = tempfile::tempdir().unwrap();
        let d = docs(10, 100);
        let line_len = serde_json::to_vec(&d[0]).unwrap().len() as u64 + 1;
        // Ten equal lines at four per shard: 2.5 shards' worth.
        let m = write_shards(&d, dir.path(), line_len * 4 + 1, "amh", Stage::Final, StageStats::default()).unwrap();
        assert_eq!(m.shards.len(), 3);
        assert_eq!(m.shards.iter().map(|s| s.doc_count).collect::<Vec<_>>(), [4, 4, 2]);
        assert_eq!(read_all(dir.path()).unwrap().1, d);
    }

    #[test]
    fn rewrite_removes_stale_shards() {
        let dir = tempfile::tempdir().unwrap();
        write_shards(&docs(10, 100), dir.path(), 500, "amh", Stage::Final, StageStats::default()).unwrap();
        write_shards(&docs(1, 10), dir.path(), 500, "amh", Stage::Final, StageStats::default()).unwrap();
        let files: Vec<_> = fs::read_dir(dir.path()).unwrap().map(|e| e.unwrap().file_name()).collect();
        assert_eq!(files.len(), 2, "{files:?}");
    }

    #[test]
    fn detects_tampering() {
        let dir = tempfile::tempdir().unwrap();
        let m = write_shards(&docs(3, 10), dir.path(), DEFAULT_MAX_SHARD_BYTES, "amh", Stage::Final, StageStats::default()).unwrap();
        let shard = dir.path().join(&m.shards[0].path);
        let mut bytes = fs::read(&shard).unwrap();
        let last = bytes.len() - 1;
        bytes[last] ^= 1;
        fs::write(&shard, bytes).unwrap();
        match validate_manifest(dir.path()) {
            Err(StoreError::Integrity { shard, .. }) => assert_eq!(shard, "data-00000.jsonl.gz"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn detects_count_mismatch() {
        let dir = tempfile::tempdir().unwrap();
        write_shards(&docs(3, 10), dir.path(), DEFAULT_MAX_SHARD_BYTES, "amh", Stage::Final, StageStats::default()).unwrap();
        let mpath = dir.path().join(MANIFEST_FILE);
        let mut m: Manifest = serde_json::from_slice(&fs::read(&mpath).unwrap()).unwrap();
        m.shards[0].doc_count = 4;
        m.stats.doc_count_out = 4;
        fs::write(&mpath, serde_json::to_vec(&m).unwrap()).unwrap();
        assert!(matches!(validate_manifest(&mpath), Err(StoreError::Integrity { .. })));
    }

    #[test]
    fn record_keys() {
        let dir = tempfile::tempdir().unwrap();
        write_shards(&docs(1, 1), dir.path(), DEFAULT_MAX_SHARD_BYTES, "amh", Stage::Final, StageStats::default()).unwrap();
        let mut s = String::new();
        MultiGzDecoder::new(File::open(dir.path().join("data-00000.jsonl.gz")).unwrap()).read_to_string(&mut s).unwrap();
        let v: serde_json::Value = serde_json::from_str(s.trim()).unwrap();
        let keys: BTreeSet<_> = v.as_object().unwrap().keys().cloned().collect();
        assert_eq!(keys, ["crawl", "date", "id", "text", "url"].into_iter().map(String::from).collect());
    }

    #[test]
    fn empty_dataset() {
        let dir = tempfile::tempdir().unwrap();
        let m = write_shards(&[], dir.path(), DEFAULT_MAX_SHARD_BYTES, "amh", Stage::Final, StageStats::default()).unwrap();
        assert!(m.shards.is_empty());
        assert!(read_all(dir.path()).unwrap().1.is_empty());
    }
}
