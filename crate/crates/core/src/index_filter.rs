//! Streaming language filter over the Common Crawl columnar index.
//!
//! Each Parquet shard is read with a five-column projection and a row
//! filter on `content_languages`, so only matching rows are ever decoded
//! past that column. Shards are scanned by a bounded worker pool and the
//! merged result is sorted by WARC locator, which makes the output
//! independent of worker count and completion order.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{self, BufRead, BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;

use arrow_array::cast::AsArray;
use arrow_array::types::Int64Type;
use arrow_array::{Array, BooleanArray, RecordBatch};
use arrow_schema::{ArrowError, DataType};
use flate2::read::MultiGzDecoder;
use parquet::arrow::arrow_reader::{ArrowPredicateFn, ParquetRecordBatchReaderBuilder, RowFilter};
use parquet::arrow::ProjectionMask;
use parquet::file::reader::ChunkReader;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::http::{join_url, HttpClient, HttpError, RemoteObject, RetryPolicy, Retryable};
use crate::ids::{CrawlId, LanguageCode};

pub const COL_URL: &str = "url";
pub const COL_LANGUAGES: &str = "content_languages";
pub const COL_FILENAME: &str = "warc_filename";
pub const COL_OFFSET: &str = "warc_record_offset";
pub const COL_LENGTH: &str = "warc_record_length";

/// The only columns read from an index shard.
pub const PROJECTED_COLUMNS: [&str; 5] = [COL_URL, COL_LANGUAGES, COL_FILENAME, COL_OFFSET, COL_LENGTH];

const SHARD_LISTING: &str = "cc-index-table.paths.gz";
const BATCH_SIZE: usize = 8192;

#[derive(Debug, Error)]
pub enum IndexError {
    #[error("unknown crawl {crawl}: no columnar index listing at {url}")]
    UnknownCrawl { crawl: String, url: String },
    #[error(transparent)]
    Http(#[from] HttpError),
    #[error("parquet: {0}")]
    Parquet(#[from] parquet::errors::ParquetError),
    #[error("arrow: {0}")]
    Arrow(#[from] ArrowError),
    #[error("shard is missing column {0:?}")]
    MissingColumn(&'static str),
    #[error("column {column:?} has unsupported type {data_type}")]
    ColumnType { column: &'static str, data_type: DataType },
    #[error("io: {0}")]
    Io(#[from] io::Error),
    #[error("index row {line}: {message}")]
    BadRow { line: usize, message: String },
    #[error("crawl {crawl}: shard {shard} failed after {attempts} attempts, index incomplete: {source}")]
    PartialIndex {
        crawl: String,
        shard: String,
        attempts: u32,
        #[source]
        source: Box<IndexError>,
    },
}

impl Retryable for IndexError {
    fn is_retryable(&self) -> bool {
        match self {
            IndexError::Http(e) => e.is_retryable(),
            IndexError::Parquet(parquet::errors::ParquetError::External(e)) => {
                e.downcast_ref::<HttpError>().is_some_and(Retryable::is_retryable)
            }
            _ => false,
        }
    }
}

/// One row of the columnar index.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct IndexRecord {
    pub url: String,
    pub crawl_id: String,
    pub content_languages: Vec<String>,
    pub warc_filename: String,
    pub warc_record_offset: u64,
    pub warc_record_length: u64,
    /// Not projected from the index; populated only by callers that know it.
    pub fetch_status: Option<u16>,
}

impl IndexRecord {
    /// Checks the locator invariants.
    pub fn validate(&self) -> Result<(), String> {
        if self.warc_record_length == 0 {
            return Err("warc_record_length must be at least 1".into());
        }
        if self.warc_filename.is_empty() || self.warc_filename.starts_with('/') || self.warc_filename.contains("://") {
            return Err(format!("warc_filename {:?} is not a relative path", self.warc_filename));
        }
        Ok(())
    }

    pub fn locator(&self) -> String {
        format!("{}@{}+{}", self.warc_filename, self.warc_record_offset, self.warc_record_length)
    }

    fn sort_key(&self) -> (&str, u64, &str) {
        (&self.warc_filename, self.warc_record_offset, &self.url)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FilterMode {
    /// The target is the only detected language.
    #[default]
    Strict,
    /// The target is the first-listed (primary) language.
    Lenient,
}

impl FromStr for FilterMode {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "strict" => Ok(FilterMode::Strict),
            "lenient" => Ok(FilterMode::Lenient),
            other => Err(format!("unknown filter mode {other:?} (expected strict or lenient)")),
        }
    }
}

impl std::fmt::Display for FilterMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            FilterMode::Strict => "strict",
            FilterMode::Lenient => "lenient",
        })
    }
}

fn matches_iter<'a>(mut langs: impl Iterator<Item = &'a str>, target: &str, mode: FilterMode) -> bool {
    match langs.next() {
        Some(first) if first == target => mode == FilterMode::Lenient || langs.next().is_none(),
        _ => false,
    }
}

/// Whether a row with `languages` is kept for `target`. An empty list is
/// never kept.
pub fn language_predicate<S: AsRef<str>>(languages: &[S], target: &str, mode: FilterMode) -> bool {
    matches_iter(languages.iter().map(AsRef::as_ref), target, mode)
}

/// Same predicate over the index's comma-separated encoding.
pub fn languages_field_matches(field: &str, target: &str, mode: FilterMode) -> bool {
    matches_iter(split_languages(field), target, mode)
}

fn split_languages(field: &str) -> impl Iterator<Item = &str> {
    field.split(',').map(str::trim).filter(|s| !s.is_empty())
}

pub fn parse_languages(field: &str) -> Vec<String> {
    split_languages(field).map(str::to_string).collect()
}

/// Expected filtered-index size: `language_fraction × index_size`. The
/// estimate is in the same domain as `index_size` (compressed bytes in,
/// compressed bytes out).
pub fn estimate_filtered_size(language_fraction: f64, index_size: f64) -> f64 {
    assert!((0.0..=1.0).contains(&language_fraction), "language fraction must lie in [0, 1]");
    language_fraction * index_size
}

#[derive(Debug, Clone, PartialEq)]
pub struct FilteredIndex {
    pub crawl_id: CrawlId,
    pub target_language: LanguageCode,
    pub mode: FilterMode,
    pub records: Vec<IndexRecord>,
    pub created_at: String,
}

/// Result of scanning one shard.
#[derive(Debug, Clone, Default)]
pub struct ShardScan {
    pub records: Vec<IndexRecord>,
    pub rows_scanned: u64,
    pub invalid_rows: u64,
    pub bytes: u64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct IndexStats {
    pub shards: u64,
    pub shard_bytes: u64,
    pub rows_scanned: u64,
    pub rows_kept: u64,
    pub invalid_rows: u64,
    pub attempts: u64,
}

fn column_index(schema: &parquet::schema::types::SchemaDescriptor, name: &'static str) -> Result<usize, IndexError> {
    schema
        .root_schema()
        .get_fields()
        .iter()
        .position(|f| f.name() == name)
        .ok_or(IndexError::MissingColumn(name))
}

fn as_utf8(batch: &RecordBatch, name: &'static str) -> Result<arrow_array::StringArray, IndexError> {
    let col = batch.column_by_name(name).ok_or(IndexError::MissingColumn(name))?;
    match col.data_type() {
        DataType::Utf8 | DataType::LargeUtf8 | DataType::Utf8View | DataType::Binary | DataType::LargeBinary => {
            Ok(arrow_cast::cast(col, &DataType::Utf8)?.as_string::<i32>().clone())
        }
        other => Err(IndexError::ColumnType { column: name, data_type: other.clone() }),
    }
}

fn as_i64(batch: &RecordBatch, name: &'static str) -> Result<arrow_array::Int64Array, IndexError> {
    let col = batch.column_by_name(name).ok_or(IndexError::MissingColumn(name))?;
    if !col.data_type().is_integer() {
        return Err(IndexError::ColumnType { column: name, data_type: col.data_type().clone() });
    }
    Ok(arrow_cast::cast(col, &DataType::Int64)?.as_primitive::<Int64Type>().clone())
}

/// Scans one index shard, keeping rows that pass the language predicate.
/// Memory use is bounded by the matching rows plus one decoded batch.
pub fn filter_shard<R: ChunkReader + 'static>(
    reader: R,
    crawl: &str,
    target: &LanguageCode,
    mode: FilterMode,
) -> Result<ShardScan, IndexError> {
    let bytes = reader.len();
    let builder = ParquetRecordBatchReaderBuilder::try_new(reader)?;
    let schema = builder.parquet_schema();
    let mut roots = Vec::with_capacity(PROJECTED_COLUMNS.len());
    for name in PROJECTED_COLUMNS {
        roots.push(column_index(schema, name)?);
    }
    let lang_mask = ProjectionMask::roots(schema, [column_index(schema, COL_LANGUAGES)?]);
    let projection = ProjectionMask::roots(schema, roots);
    let rows_scanned = builder.metadata().file_metadata().num_rows().max(0) as u64;

    let target_str = target.as_str().to_string();
    let predicate = ArrowPredicateFn::new(lang_mask, move |batch: RecordBatch| {
        let col = arrow_cast::cast(batch.column(0), &DataType::Utf8)?;
        let langs = col.as_string::<i32>();
        Ok(BooleanArray::from_iter(
            langs.iter().map(|v| Some(v.is_some_and(|s| languages_field_matches(s, &target_str, mode)))),
        ))
    });

    let reader = builder
        .with_projection(projection)
        .with_row_filter(RowFilter::new(vec![Box::new(predicate)]))
        .with_batch_size(BATCH_SIZE)
        .build()?;

    let mut scan = ShardScan { rows_scanned, bytes, ..Default::default() };
    for batch in reader {
        let batch = batch?;
        let urls = as_utf8(&batch, COL_URL)?;
        let langs = as_utf8(&batch, COL_LANGUAGES)?;
        let files = as_utf8(&batch, COL_FILENAME)?;
        let offsets = as_i64(&batch, COL_OFFSET)?;
        let lengths = as_i64(&batch, COL_LENGTH)?;
        for i in 0..batch.num_rows() {
            if urls.is_null(i) || files.is_null(i) || offsets.is_null(i) || lengths.is_null(i) {
                scan.invalid_rows += 1;
                continue;
            }
            let (offset, length) = (offsets.value(i), lengths.value(i));
            if offset < 0 || length < 1 {
                scan.invalid_rows += 1;
                continue;
            }
            let rec = IndexRecord {
                url: urls.value(i).to_string(),
                crawl_id: crawl.to_string(),
                content_languages: parse_languages(langs.value(i)),
                warc_filename: files.value(i).to_string(),
                warc_record_offset: offset as u64,
                warc_record_length: length as u64,
                fetch_status: None,
            };
            if rec.validate().is_err() {
                scan.invalid_rows += 1;
                continue;
            }
            scan.records.push(rec);
        }
    }
    Ok(scan)
}

/// Scans a local Parquet file.
pub fn filter_local_shard(path: &Path, crawl: &str, target: &LanguageCode, mode: FilterMode) -> Result<ShardScan, IndexError> {
    filter_shard(File::open(path)?, crawl, target, mode)
}

/// URI of the shard listing for `crawl`.
pub fn shard_listing_url(base: &str, crawl: &CrawlId) -> String {
    join_url(base, &format!("crawl-data/{crawl}/{SHARD_LISTING}"))
}

/// Lists the `subset=warc` Parquet shards of a crawl's columnar index, in
/// lexicographic order.
pub fn list_index_shards(
    client: &HttpClient,
    base: &str,
    crawl: &CrawlId,
    policy: &RetryPolicy,
) -> Result<Vec<String>, IndexError> {
    let url = shard_listing_url(base, crawl);
    let (res, _) = policy.run(|_| client.get_bytes(&url, 64 << 20));
    let gz = match res {
        Ok(b) => b,
        Err(HttpError::Status { status: 403 | 404 | 410, .. }) => {
            return Err(IndexError::UnknownCrawl { crawl: crawl.to_string(), url });
        }
        Err(e) => return Err(e.into()),
    };
    let mut text = String::new();
    MultiGzDecoder::new(&gz[..]).read_to_string(&mut text)?;
    let mut shards: Vec<String> = text
        .lines()
        .map(str::trim)
        .filter(|l| l.ends_with(".parquet") && l.contains("/subset=warc/"))
        .map(|l| join_url(base, l))
        .collect();
    shards.sort();
    shards.dedup();
    if shards.is_empty() {
        return Err(IndexError::UnknownCrawl { crawl: crawl.to_string(), url });
    }
    Ok(shards)
}

/// Scans `shards` with up to `workers` threads, retrying each shard under
/// `policy`. Any shard that still fails aborts the whole scan.
pub fn scan_shards<F>(
    crawl: &CrawlId,
    shards: &[String],
    workers: usize,
    policy: &RetryPolicy,
    scan_one: F,
) -> Result<(Vec<IndexRecord>, IndexStats), IndexError>
where
    F: Fn(&str) -> Result<ShardScan, IndexError> + Sync,
{
    let workers = workers.max(1).min(shards.len().max(1));
    let (job_tx, job_rx) = crossbeam_channel::unbounded::<usize>();
    for i in 0..shards.len() {
        job_tx.send(i).expect("job queue open");
    }
    drop(job_tx);
    let abort = AtomicBool::new(false);
    let (res_tx, res_rx) = crossbeam_channel::unbounded();

    std::thread::scope(|s| {
        for _ in 0..workers {
            let job_rx = job_rx.clone();
            let res_tx = res_tx.clone();
            let abort = &abort;
            let scan_one = &scan_one;
            s.spawn(move || {
                for i in job_rx.iter() {
                    if abort.load(Ordering::Relaxed) {
                        break;
                    }
                    let (res, attempts) = policy.run(|_| scan_one(&shards[i]));
                    if res.is_err() {
                        abort.store(true, Ordering::Relaxed);
                    }
                    if res_tx.send((i, res, attempts)).is_err() {
                        break;
                    }
                }
            });
        }
    });
    drop(res_tx);

    let mut stats = IndexStats { shards: shards.len() as u64, ..Default::default() };
    let mut scans = BTreeMap::new();
    let mut failure = None;
    for (i, res, attempts) in res_rx.iter() {
        stats.attempts += u64::from(attempts);
        match res {
            Ok(scan) => {
                scans.insert(i, scan);
            }
            Err(e) => {
                // Report the lowest failing shard so the error is stable.
                if failure.as_ref().is_none_or(|(j, _, _)| i < *j) {
                    failure = Some((i, e, attempts));
                }
            }
        }
    }
    if let Some((i, e, attempts)) = failure {
        return Err(IndexError::PartialIndex {
            crawl: crawl.to_string(),
            shard: shards[i].clone(),
            attempts,
            source: Box::new(e),
        });
    }

    let mut records = Vec::new();
    for scan in scans.into_values() {
        stats.shard_bytes += scan.bytes;
        stats.rows_scanned += scan.rows_scanned;
        stats.invalid_rows += scan.invalid_rows;
        records.extend(scan.records);
    }
    records.sort_by(|a, b| a.sort_key().cmp(&b.sort_key()));
    stats.rows_kept = records.len() as u64;
    Ok((records, stats))
}

/// Filters every shard of one archive's columnar index over HTTP.
pub fn filter_archive_index(
    client: &HttpClient,
    base: &str,
    crawl: &CrawlId,
    target: &LanguageCode,
    mode: FilterMode,
    workers: usize,
    policy: &RetryPolicy,
) -> Result<(FilteredIndex, IndexStats), IndexError> {
    let shards = list_index_shards(client, base, crawl, policy)?;
    log::info!("{crawl}: {} index shards", shards.len());
    // Retries happen per shard in scan_shards; the object handle itself
    // gets a single-attempt policy for its HEAD and range requests.
    let inner_policy = RetryPolicy { max_attempts: 1, ..policy.clone() };
    let (records, stats) = scan_shards(crawl, &shards, workers, policy, |url| {
        let obj = RemoteObject::open(client, url, &inner_policy)?;
        filter_shard(obj, crawl.as_str(), target, mode)
    })?;
    let index = FilteredIndex {
        crawl_id: crawl.clone(),
        target_language: target.clone(),
        mode,
        records,
        created_at: chrono::Utc::now().to_rfc3339(),
    };
    Ok((index, stats))
}

/// Serialized row of a filtered index. Extra keys are ignored on read so
/// that failure sidecars can be fed back in as an index.
#[derive(Debug, Clone, Serialize, Deserialize)]
struct IndexRow {
    url: String,
    crawl: String,
    languages: Vec<String>,
    filename: String,
    offset: u64,
    length: u64,
}

impl From<&IndexRecord> for IndexRow {
    fn from(r: &IndexRecord) -> Self {
        IndexRow {
            url: r.url.clone(),
            crawl: r.crawl_id.clone(),
            languages: r.content_languages.clone(),
            filename: r.warc_filename.clone(),
            offset: r.warc_record_offset,
            length: r.warc_record_length,
        }
    }
}

impl From<IndexRow> for IndexRecord {
    fn from(r: IndexRow) -> Self {
        IndexRecord {
            url: r.url,
            crawl_id: r.crawl,
            content_languages: r.languages,
            warc_filename: r.filename,
            warc_record_offset: r.offset,
            warc_record_length: r.length,
            fetch_status: None,
        }
    }
}

/// `index/<crawl>.<lang>.jsonl.gz` under `out_dir`.
pub fn index_path(out_dir: &Path, crawl: &CrawlId, target: &LanguageCode, gzip: bool) -> PathBuf {
    let ext = if gzip { "jsonl.gz" } else { "jsonl" };
    out_dir.join("index").join(format!("{crawl}.{target}.{ext}"))
}

fn is_gz(path: &Path) -> bool {
    path.extension().is_some_and(|e| e == "gz")
}

/// Writes one JSON object per record, line-delimited, gzip-compressed
/// when the path ends in `.gz`. Returns the uncompressed byte count.
pub fn write_index_rows(path: &Path, records: &[IndexRecord]) -> io::Result<u64> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir)?;
    }
    let tmp = path.with_extension("tmp");
    let file = BufWriter::new(File::create(&tmp)?);
    let mut w: Box<dyn Write> = if is_gz(path) {
        Box::new(flate2::write::GzEncoder::new(file, flate2::Compression::default()))
    } else {
        Box::new(file)
    };
    let mut written = 0u64;
    for r in records {
        let mut line = serde_json::to_vec(&IndexRow::from(r))?;
        line.push(b'\n');
        written += line.len() as u64;
        w.write_all(&line)?;
    }
    w.flush()?;
    drop(w);
    std::fs::rename(&tmp, path)?;
    Ok(written)
}

pub fn read_index_rows(path: &Path) -> Result<Vec<IndexRecord>, IndexError> {
    let file = File::open(path)?;
    let reader: Box<dyn BufRead> = if is_gz(path) {
        Box::new(BufReader::new(MultiGzDecoder::new(file)))
    } else {
        Box::new(BufReader::new(file))
    };
    let mut out = Vec::new();
    for (n, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let row: IndexRow = serde_json::from_str(&line)
            .map_err(|e| IndexError::BadRow { line: n + 1, message: e.to_string() })?;
        let rec = IndexRecord::from(row);
        rec.validate().map_err(|message| IndexError::BadRow { line: n + 1, message })?;
        out.push(rec);
    }
    Ok(out)
}

pub fn write_filtered_index(out_dir: &Path, index: &FilteredIndex) -> io::Result<(PathBuf, u64)> {
    let path = index_path(out_dir, &index.crawl_id, &index.target_language, true);
    let n = write_index_rows(&path, &index.records)?;
    Ok((path, n))
}

/// Shared handle for callers that want to keep a filtered index alive
/// across threads.
pub type SharedIndex = Arc<FilteredIndex>;
