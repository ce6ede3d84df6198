//! Stage orchestration with resumable per-archive checkpoints.
//!
//! Each archive runs index → fetch+extract → within-archive dedup. Every
//! completed stage writes a checkpoint holding a digest of its output, the
//! digest of its input, and a digest of the parameters it ran with; a
//! stage is skipped on resume only when all three still match what is on
//! disk. Once every archive is done, the surviving documents of all
//! archives are deduplicated together and written as the final dataset.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::sync::{Arc, Mutex};
use std::time::Instant;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::dedup::{dedup_stage, write_span_dump, DedupConfig, DedupOutcome, DEFAULT_MEMORY_BUDGET};
use crate::document::Document;
use crate::extract::{extract_main_text, ExtractConfig};
use crate::http::{cc_base_from_env, HttpClient, RetryPolicy, DEFAULT_USER_AGENT};
use crate::ids::{CrawlId, LanguageCode};
use crate::index_filter::{self, FilterMode, FilteredIndex, IndexError, IndexRecord};
use crate::rate_limit::RateLimiter;
use crate::report::{self, ArchiveReport, Report, StageStats};
use crate::store::{self, Manifest, Stage, StoreError, DEFAULT_MAX_SHARD_BYTES};
use crate::warc::{page_from_member, SkipReason};
use crate::warc_fetch::{fetch_all, write_failures, FetchContext, FetchFailure, DEFAULT_RATE_LIMIT};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RetryConfig {
    pub attempts: u32,
    pub base_delay_ms: u64,
    pub max_delay_ms: u64,
    pub jitter: bool,
}

impl Default for RetryConfig {
    fn default() -> Self {
        let p = RetryPolicy::default();
        RetryConfig {
            attempts: p.max_attempts,
            base_delay_ms: p.base_delay.as_millis() as u64,
            max_delay_ms: p.max_delay.as_millis() as u64,
            jitter: p.jitter,
        }
    }
}

impl RetryConfig {
    pub fn policy(&self) -> RetryPolicy {
        RetryPolicy {
            max_attempts: self.attempts.max(1),
            base_delay: std::time::Duration::from_millis(self.base_delay_ms),
            max_delay: std::time::Duration::from_millis(self.max_delay_ms),
            jitter: self.jitter,
        }
    }
}

/// Settings as they appear in a config file or on the command line. Every
/// field is optional; [`ConfigSource::merge`] layers sources.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigSource {
    #[serde(alias = "target_language")]
    pub lang: Option<String>,
    #[serde(alias = "crawl_ids")]
    pub crawls: Option<Vec<String>>,
    pub mode: Option<FilterMode>,
    pub min_dup_len: Option<usize>,
    pub min_doc_len: Option<usize>,
    pub workers: Option<usize>,
    pub rate_limit: Option<f64>,
    #[serde(alias = "out_dir")]
    pub out: Option<PathBuf>,
    pub cc_base: Option<String>,
    pub user_agent: Option<String>,
    pub spool: Option<bool>,
    pub strict_exit: Option<bool>,
    pub resume: Option<bool>,
    pub max_shard_bytes: Option<u64>,
    pub memory_budget: Option<usize>,
    pub extract: Option<ExtractConfig>,
    pub retry: Option<RetryConfig>,
}

impl ConfigSource {
    pub fn from_toml(text: &str) -> Result<Self, ConfigError> {
        toml::from_str(text).map_err(|e| ConfigError(format!("config: {e}")))
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|e| ConfigError(format!("{}: {e}", path.display())))?;
        Self::from_toml(&text).map_err(|e| ConfigError(format!("{}: {}", path.display(), e.0)))
    }

    /// Fields set in `over` replace those in `self`.
    pub fn merge(self, over: ConfigSource) -> ConfigSource {
        ConfigSource {
            lang: over.lang.or(self.lang),
            crawls: over.crawls.or(self.crawls),
            mode: over.mode.or(self.mode),
            min_dup_len: over.min_dup_len.or(self.min_dup_len),
            min_doc_len: over.min_doc_len.or(self.min_doc_len),
            workers: over.workers.or(self.workers),
            rate_limit: over.rate_limit.or(self.rate_limit),
            out: over.out.or(self.out),
            cc_base: over.cc_base.or(self.cc_base),
            user_agent: over.user_agent.or(self.user_agent),
            spool: over.spool.or(self.spool),
            strict_exit: over.strict_exit.or(self.strict_exit),
            resume: over.resume.or(self.resume),
            max_shard_bytes: over.max_shard_bytes.or(self.max_shard_bytes),
            memory_budget: over.memory_budget.or(self.memory_budget),
            extract: over.extract.or(self.extract),
            retry: over.retry.or(self.retry),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("{0}")]
pub struct ConfigError(pub String);

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineConfig {
    pub target_language: LanguageCode,
    pub crawl_ids: Vec<CrawlId>,
    pub mode: FilterMode,
    pub min_dup_len: usize,
    pub min_doc_len: usize,
    pub workers: usize,
    pub rate_limit: f64,
    pub out_dir: PathBuf,
    pub cc_base: String,
    pub user_agent: String,
    pub extract: ExtractConfig,
    pub spool: bool,
    pub strict_exit: bool,
    pub resume: bool,
    pub max_shard_bytes: u64,
    pub memory_budget: usize,
    pub retry: RetryConfig,
}

fn default_workers() -> usize {
    std::thread::available_parallelism().map_or(4, |n| n.get())
}

impl PipelineConfig {
    /// Validates a merged source, filling defaults. Crawl ids are required
    /// unless `need_crawls` is false.
    pub fn resolve(src: ConfigSource, need_crawls: bool) -> Result<Self, ConfigError> {
        let lang = src.lang.ok_or_else(|| ConfigError("a target language is required (--lang)".into()))?;
        let target_language = LanguageCode::from_str(&lang).map_err(|e| ConfigError(e.to_string()))?;
        let crawl_ids = src
            .crawls
            .unwrap_or_default()
            .iter()
            .flat_map(|c| c.split(','))
            .map(str::trim)
            .filter(|c| !c.is_empty())
            .map(|c| CrawlId::from_str(c).map_err(|e| ConfigError(e.to_string())))
            .collect::<Result<Vec<_>, _>>()?;
        if need_crawls && crawl_ids.is_empty() {
            return Err(ConfigError("at least one crawl id is required (--crawls)".into()));
        }
        let mut seen = std::collections::HashSet::new();
        if let Some(dup) = crawl_ids.iter().find(|c| !seen.insert(*c)) {
            return Err(ConfigError(format!("crawl {dup} is listed twice")));
        }
        let min_dup_len = src.min_dup_len.unwrap_or(crate::dedup::DEFAULT_MIN_DUP_LEN);
        if min_dup_len < 2 {
            return Err(ConfigError("min_dup_len must be at least 2".into()));
        }
        let workers = src.workers.unwrap_or_else(default_workers);
        if workers < 1 {
            return Err(ConfigError("workers must be at least 1".into()));
        }
        let rate_limit = src.rate_limit.unwrap_or(DEFAULT_RATE_LIMIT);
        if !(rate_limit.is_finite() && rate_limit > 0.0) {
            return Err(ConfigError("rate_limit must be a positive number of requests per second".into()));
        }
        let extract = src.extract.unwrap_or_default();
        if !(0.0..=1.0).contains(&extract.max_link_density) {
            return Err(ConfigError("extract.max_link_density must lie in [0, 1]".into()));
        }
        let cc_base = src.cc_base.filter(|s| !s.is_empty()).unwrap_or_else(cc_base_from_env);
        if !(cc_base.starts_with("http://") || cc_base.starts_with("https://")) {
            return Err(ConfigError(format!("cc_base {cc_base:?} is not an http(s) URL")));
        }
        Ok(PipelineConfig {
            target_language,
            crawl_ids,
            mode: src.mode.unwrap_or_default(),
            min_dup_len,
            min_doc_len: src.min_doc_len.unwrap_or(crate::dedup::DEFAULT_MIN_DOC_CHARS),
            workers,
            rate_limit,
            out_dir: src.out.unwrap_or_else(|| PathBuf::from("unicrawl-out")),
            cc_base,
            user_agent: src.user_agent.unwrap_or_else(|| DEFAULT_USER_AGENT.to_string()),
            extract,
            spool: src.spool.unwrap_or(false),
            strict_exit: src.strict_exit.unwrap_or(false),
            resume: src.resume.unwrap_or(true),
            max_shard_bytes: src.max_shard_bytes.unwrap_or(DEFAULT_MAX_SHARD_BYTES),
            memory_budget: src.memory_budget.unwrap_or(DEFAULT_MEMORY_BUDGET),
            retry: src.retry.unwrap_or_default(),
        })
    }

    pub fn dedup_config(&self) -> DedupConfig {
        DedupConfig { min_dup_len: self.min_dup_len, min_doc_chars: self.min_doc_len, memory_budget: self.memory_budget }
    }

    pub fn layout(&self) -> Layout {
        Layout { root: self.out_dir.clone() }
    }
}

/// Paths under the output directory.
#[derive(Debug, Clone)]
pub struct Layout {
    pub root: PathBuf,
}

impl Layout {
    pub fn index_file(&self, crawl: &CrawlId, lang: &LanguageCode) -> PathBuf {
        index_filter::index_path(&self.root, crawl, lang, true)
    }
    pub fn work(&self, crawl: &CrawlId) -> PathBuf {
        self.root.join("work").join(crawl.as_str())
    }
    pub fn extracted(&self, crawl: &CrawlId) -> PathBuf {
        self.work(crawl).join("extracted")
    }
    pub fn deduped(&self, crawl: &CrawlId) -> PathBuf {
        self.work(crawl).join("deduped")
    }
    pub fn failures(&self, crawl: &CrawlId) -> PathBuf {
        self.work(crawl).join("failures.jsonl")
    }
    pub fn spool(&self, crawl: &CrawlId) -> PathBuf {
        self.work(crawl).join("spool")
    }
    pub fn checkpoint(&self, crawl: &CrawlId, stage: ArchiveStage) -> PathBuf {
        self.root.join("checkpoints").join(crawl.as_str()).join(format!("{}.json", stage.name()))
    }
    pub fn final_dir(&self) -> PathBuf {
        self.root.join("final")
    }
}

/// Per-archive stages, in execution order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ArchiveStage {
    Index,
    FetchExtract,
    DedupArchive,
}

impl ArchiveStage {
    pub const ALL: [ArchiveStage; 3] = [ArchiveStage::Index, ArchiveStage::FetchExtract, ArchiveStage::DedupArchive];

    pub fn name(self) -> &'static str {
        match self {
            ArchiveStage::Index => "index",
            ArchiveStage::FetchExtract => "fetch-extract",
            ArchiveStage::DedupArchive => "dedup-archive",
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct StageExtras {
    pub skips: BTreeMap<String, u64>,
    pub fetch_attempts: u64,
    pub failed_records: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub crawl_id: String,
    pub completed_stage: ArchiveStage,
    /// Digest of the stage output, excluding timestamps.
    pub content_digest: String,
    pub input_digest: String,
    pub params_digest: String,
    pub stats: Vec<StageStats>,
    pub extras: StageExtras,
    pub written_at: String,
}

fn digest_of(parts: &[&str]) -> String {
    let mut h = Sha256::new();
    for p in parts {
        h.update((p.len() as u64).to_le_bytes());
        h.update(p.as_bytes());
    }
    hex::encode(h.finalize())
}

fn load_checkpoint(path: &Path) -> Option<Checkpoint> {
    let bytes = std::fs::read(path).ok()?;
    serde_json::from_slice(&bytes).ok()
}

fn save_checkpoint(path: &Path, ck: &Checkpoint) -> Result<(), PipelineError> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).map_err(|e| PipelineError::io(dir, e))?;
    }
    let json = serde_json::to_vec_pretty(ck).expect("checkpoint serializes");
    store::write_atomic(path, &json).map_err(|e| PipelineError::io(path, e))
}

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Index(#[from] IndexError),
    #[error(transparent)]
    Store(#[from] StoreError),
    #[error("io on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Report(#[from] report::ReportError),
}

impl PipelineError {
    fn io(path: &Path, source: std::io::Error) -> Self {
        PipelineError::Io { path: path.to_path_buf(), source }
    }
}

/// Process exit codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExitStatus {
    Success = 0,
    ConfigError = 2,
    Partial = 3,
    Fatal = 4,
}

impl ExitStatus {
    pub fn code(self) -> i32 {
        self as i32
    }
}

/// Shared state for one pipeline run.
pub struct Runner {
    pub cfg: PipelineConfig,
    pub client: HttpClient,
    pub limiter: Arc<RateLimiter>,
    layout: Layout,
    skipped: Mutex<Vec<String>>,
}

#[derive(Debug)]
pub struct RunOutcome {
    pub status: ExitStatus,
    pub report: Report,
    pub final_manifest: Option<Manifest>,
    /// `crawl:stage` for every stage satisfied by a checkpoint.
    pub resumed_stages: Vec<String>,
    pub errors: Vec<String>,
}

fn text_bytes(docs: &[Document]) -> u64 {
    docs.iter().map(|d| d.text.len() as u64).sum()
}

fn dataset_digest(dir: &Path) -> Option<String> {
    store::validate_manifest(dir).ok().map(|m| m.content_digest())
}

impl Runner {
    pub fn new(cfg: PipelineConfig) -> Self {
        let client = HttpClient::new(&cfg.user_agent);
        let limiter = Arc::new(RateLimiter::new(cfg.rate_limit, 1));
        let layout = cfg.layout();
        Runner { cfg, client, limiter, layout, skipped: Mutex::new(Vec::new()) }
    }

    pub fn layout(&self) -> &Layout {
        &self.layout
    }

    fn params_digest(&self, stage: ArchiveStage) -> String {
        let c = &self.cfg;
        match stage {
            ArchiveStage::Index => digest_of(&["index", c.target_language.as_str(), &c.mode.to_string(), &c.cc_base]),
            ArchiveStage::FetchExtract => digest_of(&[
                "fetch-extract",
                &c.cc_base,
                &c.extract.min_block_chars.to_string(),
                &c.extract.max_link_density.to_bits().to_string(),
            ]),
            ArchiveStage::DedupArchive => digest_of(&[
                "dedup-archive",
                &c.min_dup_len.to_string(),
                &c.min_doc_len.to_string(),
                &c.memory_budget.to_string(),
            ]),
        }
    }

    /// A checkpoint that still describes what is on disk, if any.
    fn valid_checkpoint(
        &self,
        crawl: &CrawlId,
        stage: ArchiveStage,
        input_digest: &str,
        current_output: impl FnOnce() -> Option<String>,
    ) -> Option<Checkpoint> {
        if !self.cfg.resume {
            return None;
        }
        let ck = load_checkpoint(&self.layout.checkpoint(crawl, stage))?;
        let ok = ck.crawl_id == crawl.as_str()
            && ck.completed_stage == stage
            && ck.input_digest == input_digest
            && ck.params_digest == self.params_digest(stage)
            && current_output().as_deref() == Some(ck.content_digest.as_str());
        if ok {
            log::info!("{crawl}: {} satisfied by checkpoint", stage.name());
            self.skipped.lock().expect("poisoned").push(format!("{crawl}:{}", stage.name()));
            Some(ck)
        } else {
            log::info!("{crawl}: {} checkpoint missing or stale, recomputing", stage.name());
            None
        }
    }

    fn commit(
        &self,
        crawl: &CrawlId,
        stage: ArchiveStage,
        input_digest: &str,
        content_digest: String,
        stats: Vec<StageStats>,
        extras: StageExtras,
    ) -> Result<Checkpoint, PipelineError> {
        let ck = Checkpoint {
            crawl_id: crawl.to_string(),
            completed_stage: stage,
            content_digest,
            input_digest: input_digest.to_string(),
            params_digest: self.params_digest(stage),
            stats,
            extras,
            written_at: chrono::Utc::now().to_rfc3339(),
        };
        save_checkpoint(&self.layout.checkpoint(crawl, stage), &ck)?;
        Ok(ck)
    }

    /// Filters the archive's index into `index/<crawl>.<lang>.jsonl.gz`.
    pub fn index_stage(&self, crawl: &CrawlId) -> Result<Checkpoint, PipelineError> {
        let path = self.layout.index_file(crawl, &self.cfg.target_language);
        if let Some(ck) = self.valid_checkpoint(crawl, ArchiveStage::Index, "", || store::file_sha256(&path).ok()) {
            return Ok(ck);
        }
        let t = Instant::now();
        let (index, istats) = index_filter::filter_archive_index(
            &self.client,
            &self.cfg.cc_base,
            crawl,
            &self.cfg.target_language,
            self.cfg.mode,
            self.cfg.workers,
            &self.cfg.retry.policy(),
        )?;
        let (path, written) =
            index_filter::write_filtered_index(&self.layout.root, &index).map_err(|e| PipelineError::io(&path, e))?;
        let stats = StageStats {
            stage: report::STAGE_INDEX.into(),
            bytes_in: istats.shard_bytes,
            bytes_out: written,
            doc_count_in: istats.rows_scanned,
            doc_count_out: istats.rows_kept,
            records_failed: istats.invalid_rows,
            wall_seconds: t.elapsed().as_secs_f64(),
        };
        log::info!("{crawl}: kept {} of {} index rows", istats.rows_kept, istats.rows_scanned);
        let digest = store::file_sha256(&path).map_err(|e| PipelineError::io(&path, e))?;
        self.commit(crawl, ArchiveStage::Index, "", digest, vec![stats], StageExtras::default())
    }

    /// Fetches and extracts every record of `records` into `out_dir`.
    pub fn fetch_extract(
        &self,
        crawl: &CrawlId,
        records: &[IndexRecord],
        out_dir: &Path,
        failures_path: &Path,
    ) -> Result<(Manifest, Vec<StageStats>, StageExtras), PipelineError> {
        let t = Instant::now();
        let ctx = FetchContext {
            client: self.client.clone(),
            base: self.cfg.cc_base.clone(),
            policy: self.cfg.retry.policy(),
            limiter: Arc::clone(&self.limiter),
            workers: self.cfg.workers,
            spool: self.cfg.spool.then(|| self.layout.spool(crawl)),
        };
        let mut docs: Vec<(usize, Document)> = Vec::new();
        let mut failures: Vec<(usize, FetchFailure)> = Vec::new();
        let mut skips: BTreeMap<SkipReason, u64> = BTreeMap::new();
        let fstats = fetch_all(&ctx, records, |outcome| match outcome.result {
            Ok(rec) => {
                let page = page_from_member(&rec.compressed_bytes, crawl.as_str()).and_then(|page| {
                    extract_main_text(&page, &self.cfg.extract)
                        .ok_or_else(|| crate::warc::Skip::new(SkipReason::NoText, "no block survived"))
                });
                match page {
                    Ok(doc) => docs.push((outcome.index, doc)),
                    Err(skip) => {
                        log::debug!("{}: skipped: {skip}", rec.source.locator());
                        *skips.entry(skip.reason).or_default() += 1;
                    }
                }
            }
            Err(f) => failures.push((outcome.index, f)),
        });
        let fetch_secs = t.elapsed().as_secs_f64();
        docs.sort_by_key(|(i, _)| *i);
        failures.sort_by_key(|(i, _)| *i);
        let docs: Vec<Document> = docs.into_iter().map(|(_, d)| d).collect();
        let failures: Vec<FetchFailure> = failures.into_iter().map(|(_, f)| f).collect();
        if failures.is_empty() {
            match std::fs::remove_file(failures_path) {
                Ok(()) => {}
                Err(e) if e.kind() == std::io::ErrorKind::NotFound => {}
                Err(e) => return Err(PipelineError::io(failures_path, e)),
            }
        } else {
            write_failures(failures_path, &failures).map_err(|e| PipelineError::io(failures_path, e))?;
        }

        let skipped: u64 = skips.values().sum();
        let fetch = StageStats {
            stage: report::STAGE_FETCH.into(),
            bytes_in: records.iter().map(|r| r.warc_record_length).sum(),
            bytes_out: fstats.bytes,
            doc_count_in: fstats.requested,
            doc_count_out: fstats.fetched,
            records_failed: fstats.failed,
            wall_seconds: fetch_secs,
        };
        let extract = StageStats {
            stage: report::STAGE_EXTRACT.into(),
            bytes_in: fstats.bytes,
            bytes_out: text_bytes(&docs),
            doc_count_in: fstats.fetched,
            doc_count_out: docs.len() as u64,
            records_failed: skipped,
            wall_seconds: t.elapsed().as_secs_f64() - fetch_secs,
        };
        debug_assert_eq!(skipped + docs.len() as u64, fstats.fetched);
        let manifest = store::write_shards(
            &docs,
            out_dir,
            self.cfg.max_shard_bytes,
            self.cfg.target_language.as_str(),
            Stage::Extracted,
            extract.clone(),
        )?;
        let extras = StageExtras {
            skips: skips.into_iter().map(|(k, v)| (k.name().to_string(), v)).collect(),
            fetch_attempts: fstats.attempts,
            failed_records: fstats.failed,
        };
        log::info!(
            "{crawl}: fetched {}/{} records, {} documents, {} failures",
            fstats.fetched,
            fstats.requested,
            docs.len(),
            fstats.failed
        );
        Ok((manifest, vec![fetch, extract], extras))
    }

    fn fetch_extract_stage(&self, crawl: &CrawlId, index_digest: &str) -> Result<Checkpoint, PipelineError> {
        let dir = self.layout.extracted(crawl);
        if let Some(ck) = self.valid_checkpoint(crawl, ArchiveStage::FetchExtract, index_digest, || dataset_digest(&dir)) {
            return Ok(ck);
        }
        let index_path = self.layout.index_file(crawl, &self.cfg.target_language);
        let records = index_filter::read_index_rows(&index_path)?;
        let (manifest, stats, extras) = self.fetch_extract(crawl, &records, &dir, &self.layout.failures(crawl))?;
        self.commit(crawl, ArchiveStage::FetchExtract, index_digest, manifest.content_digest(), stats, extras)
    }

    fn dedup_archive_stage(&self, crawl: &CrawlId, extracted_digest: &str) -> Result<Checkpoint, PipelineError> {
        let dir = self.layout.deduped(crawl);
        if let Some(ck) = self.valid_checkpoint(crawl, ArchiveStage::DedupArchive, extracted_digest, || dataset_digest(&dir)) {
            return Ok(ck);
        }
        let t = Instant::now();
        let (_, docs) = store::read_all(&self.layout.extracted(crawl))?;
        let (outcome, mut stats) = run_dedup(docs, &self.cfg.dedup_config(), report::STAGE_DEDUP_ARCHIVE);
        stats.wall_seconds = t.elapsed().as_secs_f64();
        let manifest = store::write_shards(
            &outcome.docs,
            &dir,
            self.cfg.max_shard_bytes,
            self.cfg.target_language.as_str(),
            Stage::DedupedArchive,
            stats.clone(),
        )?;
        log::info!("{crawl}: within-archive dedup kept {} of {} bytes", stats.bytes_out, stats.bytes_in);
        self.commit(crawl, ArchiveStage::DedupArchive, extracted_digest, manifest.content_digest(), vec![stats], StageExtras::default())
    }

    /// Runs the per-archive stages for one crawl.
    pub fn run_archive(&self, crawl: &CrawlId) -> Result<ArchiveReport, PipelineError> {
        let index = self.index_stage(crawl)?;
        let fetched = self.fetch_extract_stage(crawl, &index.content_digest)?;
        let deduped = self.dedup_archive_stage(crawl, &fetched.content_digest)?;
        let mut stages = index.stats.clone();
        stages.extend(fetched.stats.iter().cloned());
        stages.extend(deduped.stats.iter().cloned());
        Ok(ArchiveReport {
            crawl_id: crawl.to_string(),
            stages,
            skips: fetched.extras.skips.clone(),
            fetch_attempts: fetched.extras.fetch_attempts,
            failed_records: fetched.extras.failed_records,
            complete: true,
        })
    }

    /// Runs every archive, then the cross-archive stage, the final store
    /// and the report.
    pub fn run(&self) -> RunOutcome {
        let crawls = &self.cfg.crawl_ids;
        let results: Vec<Mutex<Option<Result<ArchiveReport, PipelineError>>>> = crawls.iter().map(|_| Mutex::new(None)).collect();
        let next = std::sync::atomic::AtomicUsize::new(0);
        std::thread::scope(|s| {
            for _ in 0..self.cfg.workers.min(crawls.len()).max(1) {
                s.spawn(|| loop {
                    let i = next.fetch_add(1, std::sync::atomic::Ordering::SeqCst);
                    let Some(crawl) = crawls.get(i) else { break };
                    let r = self.run_archive(crawl);
                    if let Err(e) = &r {
                        log::error!("{crawl}: {e}");
                    }
                    *results[i].lock().expect("poisoned") = Some(r);
                });
            }
        });

        let mut report = Report {
            target_language: self.cfg.target_language.to_string(),
            mode: self.cfg.mode.to_string(),
            tool_version: store::TOOL_VERSION.to_string(),
            ..Default::default()
        };
        let mut errors = Vec::new();
        let mut done = Vec::new();
        for (crawl, slot) in crawls.iter().zip(results) {
            match slot.into_inner().expect("poisoned").expect("every archive ran") {
                Ok(a) => {
                    done.push(crawl.clone());
                    report.archives.push(a);
                }
                Err(e) => {
                    errors.push(format!("{crawl}: {e}"));
                    report.archives.push(ArchiveReport { crawl_id: crawl.to_string(), ..Default::default() });
                }
            }
        }

        let mut final_manifest = None;
        let fatal = match self.cross_archive(&done) {
            Ok((manifest, stats)) => {
                report.final_docs = manifest.doc_count();
                report.final_bytes = stats.bytes_out;
                report.cross_archive = Some(stats);
                final_manifest = Some(manifest);
                false
            }
            Err(e) => {
                errors.push(format!("cross-archive: {e}"));
                true
            }
        };
        report.generated_at = chrono::Utc::now().to_rfc3339();
        report.finish(&report::bundled_prior(), Some(&report::ReferenceExpectations::bundled()));
        if let Err(e) = report::write_reports(&self.layout.root, &report) {
            errors.push(format!("report: {e}"));
        }

        let failed_records: u64 = report.archives.iter().map(|a| a.failed_records).sum();
        let status = if fatal || done.is_empty() {
            ExitStatus::Fatal
        } else if done.len() < crawls.len() || (self.cfg.strict_exit && failed_records > 0) {
            ExitStatus::Partial
        } else {
            ExitStatus::Success
        };
        let resumed_stages = self.skipped.lock().expect("poisoned").clone();
        RunOutcome { status, report, final_manifest, resumed_stages, errors }
    }

    /// Deduplicates the within-archive outputs of `crawls` together, in
    /// the given order, and writes the final dataset.
    pub fn cross_archive(&self, crawls: &[CrawlId]) -> Result<(Manifest, StageStats), PipelineError> {
        let t = Instant::now();
        let mut docs = Vec::new();
        for crawl in crawls {
            let (_, d) = store::read_all(&self.layout.deduped(crawl))?;
            docs.extend(d);
        }
        let (outcome, mut stats) = run_dedup(docs, &self.cfg.dedup_config(), report::STAGE_DEDUP_CROSS);
        stats.wall_seconds = t.elapsed().as_secs_f64();
        let manifest = store::write_shards(
            &outcome.docs,
            &self.layout.final_dir(),
            self.cfg.max_shard_bytes,
            self.cfg.target_language.as_str(),
            Stage::Final,
            stats.clone(),
        )?;
        Ok((manifest, stats))
    }
}

/// Runs `dedup_stage` and reports it as a stage.
pub fn run_dedup(docs: Vec<Document>, cfg: &DedupConfig, stage: &str) -> (DedupOutcome, StageStats) {
    let outcome = dedup_stage(docs, cfg);
    let s = &outcome.stats;
    let stats = StageStats {
        stage: stage.to_string(),
        bytes_in: s.bytes_in as u64,
        bytes_out: s.bytes_out as u64,
        doc_count_in: s.docs_in as u64,
        doc_count_out: s.docs_out as u64,
        records_failed: 0,
        wall_seconds: 0.0,
    };
    (outcome, stats)
}

/// Deduplicates a stored dataset into `out_dir`, optionally dumping the
/// removed spans.
pub fn dedup_dataset(
    input: &Path,
    out_dir: &Path,
    cfg: &DedupConfig,
    max_shard_bytes: u64,
    stage: Stage,
    span_dump: Option<&Path>,
) -> Result<Manifest, PipelineError> {
    let t = Instant::now();
    let (manifest, docs) = store::read_all(input)?;
    let (outcome, mut stats) = run_dedup(docs, cfg, &stage.to_string());
    stats.wall_seconds = t.elapsed().as_secs_f64();
    if let Some(path) = span_dump {
        let f = std::fs::File::create(path).map_err(|e| PipelineError::io(path, e))?;
        write_span_dump(std::io::BufWriter::new(f), &outcome.removed).map_err(|e| PipelineError::io(path, e))?;
    }
    Ok(store::write_shards(&outcome.docs, out_dir, max_shard_bytes, &manifest.target_language, stage, stats)?)
}

/// Filters a local index shard, as the `index --local-shard` command does.
pub fn filter_local(
    shard: &Path,
    crawl: &CrawlId,
    lang: &LanguageCode,
    mode: FilterMode,
    out_root: &Path,
) -> Result<(PathBuf, index_filter::ShardScan), PipelineError> {
    let mut scan = index_filter::filter_local_shard(shard, crawl.as_str(), lang, mode)?;
    scan.records.sort_by(|a, b| {
        (&a.warc_filename, a.warc_record_offset, &a.url).cmp(&(&b.warc_filename, b.warc_record_offset, &b.url))
    });
    let index = FilteredIndex {
        crawl_id: crawl.clone(),
        target_language: lang.clone(),
        mode,
        records: std::mem::take(&mut scan.records),
        created_at: chrono::Utc::now().to_rfc3339(),
    };
    let target = index_filter::index_path(out_root, crawl, lang, true);
    let (path, _) = index_filter::write_filtered_index(out_root, &index).map_err(|e| PipelineError::io(&target, e))?;
    scan.records = index.records;
    Ok((path, scan))
}
