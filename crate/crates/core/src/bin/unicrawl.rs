use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::str::FromStr;

use clap::{Args, Parser, Subcommand};

use unicrawl::dedup::DedupConfig;
use unicrawl::http::CC_BASE_ENV;
use unicrawl::index_filter::{self, FilterMode};
use unicrawl::pipeline::{ConfigSource, ExitStatus, PipelineConfig, PipelineError, Runner};
use unicrawl::report;
use unicrawl::store::{self, Stage};
use unicrawl::CrawlId;

#[derive(Parser)]
#[command(name = "unicrawl", version, about = "Build a monolingual text corpus from Common Crawl archives")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run every stage for the configured crawls.
    Run(Common),
    /// Filter the columnar index of each crawl.
    Index {
        #[command(flatten)]
        common: Common,
        /// Filter this local parquet shard instead of the remote index.
        #[arg(long)]
        local_shard: Option<PathBuf>,
    },
    /// Fetch and extract the records listed in an index or failures file.
    Fetch {
        #[command(flatten)]
        common: Common,
        /// JSONL index rows (a failures file works too).
        #[arg(long)]
        index: PathBuf,
        /// Dataset directory for extracted documents.
        #[arg(long)]
        dataset: PathBuf,
    },
    /// Deduplicate a stored dataset.
    Dedup {
        /// Dataset directory or manifest path.
        #[arg(long)]
        input: PathBuf,
        /// Output dataset directory.
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = unicrawl::dedup::DEFAULT_MIN_DUP_LEN)]
        min_dup_len: usize,
        #[arg(long, default_value_t = unicrawl::dedup::DEFAULT_MIN_DOC_CHARS)]
        min_doc_len: usize,
        /// Write removed spans here, one `doc_id<TAB>start<TAB>end` per line.
        #[arg(long)]
        dump_spans: Option<PathBuf>,
    },
    /// Print the report of a finished run, optionally against another table.
    Report {
        /// Output directory of the run.
        #[arg(long)]
        out: PathBuf,
        /// CSV with dataset,language,size_mb columns.
        #[arg(long)]
        compare: Option<PathBuf>,
    },
    /// Check a dataset's shards against its manifest.
    ValidateManifest {
        /// Dataset directory or manifest path.
        path: PathBuf,
    },
    /// Serve a generated mock crawl over HTTP until interrupted.
    MockServe {
        #[arg(long, default_value = "127.0.0.1:0")]
        addr: String,
        #[arg(long, default_value_t = 7)]
        seed: u64,
        #[arg(long, default_value_t = 260)]
        pages: usize,
    },
}

#[derive(Args, Clone, Default)]
struct Common {
    /// TOML config; flags override its values.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Target language (ISO 639-3).
    #[arg(long)]
    lang: Option<String>,
    /// Crawl ids, comma separated.
    #[arg(long, value_delimiter = ',')]
    crawls: Option<Vec<String>>,
    #[arg(long)]
    mode: Option<FilterMode>,
    #[arg(long)]
    min_dup_len: Option<usize>,
    #[arg(long)]
    min_doc_len: Option<usize>,
    #[arg(long)]
    workers: Option<usize>,
    /// Requests per second to the archive host.
    #[arg(long)]
    rate_limit: Option<f64>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, env = CC_BASE_ENV)]
    cc_base: Option<String>,
    #[arg(long)]
    user_agent: Option<String>,
    /// Keep fetched records on disk.
    #[arg(long)]
    spool: bool,
    /// Exit 3 when any record failed.
    #[arg(long)]
    strict_exit: bool,
    #[arg(long, overrides_with = "no_resume")]
    resume: bool,
    #[arg(long)]
    no_resume: bool,
}

impl Common {
    fn resolve(&self, need_crawls: bool) -> Result<PipelineConfig, String> {
        let file = match &self.config {
            Some(p) => ConfigSource::load(p).map_err(|e| e.to_string())?,
            None => ConfigSource::default(),
        };
        let flags = ConfigSource {
            lang: self.lang.clone(),
            crawls: self.crawls.clone(),
            mode: self.mode,
            min_dup_len: self.min_dup_len,
            min_doc_len: self.min_doc_len,
            workers: self.workers,
            rate_limit: self.rate_limit,
            out: self.out.clone(),
            cc_base: self.cc_base.clone(),
            user_agent: self.user_agent.clone(),
            spool: self.spool.then_some(true),
            strict_exit: self.strict_exit.then_some(true),
            resume: if self.no_resume { Some(false) } else { self.resume.then_some(true) },
            ..Default::default()
        };
        PipelineConfig::resolve(file.merge(flags), need_crawls).map_err(|e| e.to_string())
    }
}

fn fatal(e: impl std::fmt::Display) -> ExitCode {
    eprintln!("error: {e}");
    ExitCode::from(ExitStatus::Fatal.code() as u8)
}

fn config_error(e: impl std::fmt::Display) -> ExitCode {
    eprintln!("config error: {e}");
    ExitCode::from(ExitStatus::ConfigError.code() as u8)
}

fn cmd_run(common: &Common) -> ExitCode {
    let cfg = match common.resolve(true) {
        Ok(c) => c,
        Err(e) => return config_error(e),
    };
    let outcome = Runner::new(cfg).run();
    for e in &outcome.errors {
        eprintln!("error: {e}");
    }
    print!("{}", report::render_text(&outcome.report));
    ExitCode::from(outcome.status.code() as u8)
}

fn cmd_index(common: &Common, local_shard: Option<&Path>) -> ExitCode {
    let cfg = match common.resolve(true) {
        Ok(c) => c,
        Err(e) => return config_error(e),
    };
    if let Some(shard) = local_shard {
        let [crawl] = cfg.crawl_ids.as_slice() else {
            return config_error("--local-shard takes exactly one crawl id");
        };
        return match unicrawl::pipeline::filter_local(shard, crawl, &cfg.target_language, cfg.mode, &cfg.out_dir) {
            Ok((path, scan)) => {
                println!(
                    "{}: kept {} of {} rows ({} invalid) -> {}",
                    crawl,
                    scan.records.len(),
                    scan.rows_scanned,
                    scan.invalid_rows,
                    path.display()
                );
                ExitCode::SUCCESS
            }
            Err(e) => fatal(e),
        };
    }
    let runner = Runner::new(cfg);
    let mut status = ExitStatus::Success;
    for crawl in &runner.cfg.crawl_ids {
        match runner.index_stage(crawl) {
            Ok(ck) => {
                let s = &ck.stats[0];
                println!("{crawl}: kept {} of {} rows", s.doc_count_out, s.doc_count_in);
            }
            Err(e) => {
                eprintln!("error: {crawl}: {e}");
                status = ExitStatus::Partial;
            }
        }
    }
    ExitCode::from(status.code() as u8)
}

fn cmd_fetch(common: &Common, index: &Path, dataset: &Path) -> ExitCode {
    let cfg = match common.resolve(false) {
        Ok(c) => c,
        Err(e) => return config_error(e),
    };
    let records = match index_filter::read_index_rows(index) {
        Ok(r) => r,
        Err(e) => return fatal(e),
    };
    let crawl = match records.first().map(|r| CrawlId::from_str(&r.crawl_id)) {
        Some(Ok(c)) => c,
        Some(Err(e)) => return fatal(e),
        None => match cfg.crawl_ids.first() {
            Some(c) => c.clone(),
            None => return config_error("empty index and no --crawls given"),
        },
    };
    let strict = cfg.strict_exit;
    let runner = Runner::new(cfg);
    let failures = dataset.join("failures.jsonl");
    let result: Result<_, PipelineError> = runner.fetch_extract(&crawl, &records, dataset, &failures);
    match result {
        Ok((manifest, stats, extras)) => {
            println!(
                "fetched {} of {} records, {} documents, {} failed",
                stats[0].doc_count_out,
                stats[0].doc_count_in,
                manifest.doc_count(),
                extras.failed_records
            );
            for (reason, n) in &extras.skips {
                println!("  skipped {reason}: {n}");
            }
            if strict && extras.failed_records > 0 {
                ExitCode::from(ExitStatus::Partial.code() as u8)
            } else {
                ExitCode::SUCCESS
            }
        }
        Err(e) => fatal(e),
    }
}

fn cmd_dedup(input: &Path, out: &Path, min_dup_len: usize, min_doc_len: usize, dump: Option<&Path>) -> ExitCode {
    if min_dup_len < 2 {
        return config_error("min_dup_len must be at least 2");
    }
    let cfg = DedupConfig { min_dup_len, min_doc_chars: min_doc_len, ..Default::default() };
    match unicrawl::pipeline::dedup_dataset(input, out, &cfg, store::DEFAULT_MAX_SHARD_BYTES, Stage::DedupedArchive, dump) {
        Ok(m) => {
            println!(
                "kept {} documents, {} of {} bytes",
                m.doc_count(),
                m.stats.bytes_out,
                m.stats.bytes_in
            );
            ExitCode::SUCCESS
        }
        Err(e) => fatal(e),
    }
}

fn cmd_report(out: &Path, compare: Option<&Path>) -> ExitCode {
    let mut rep = match report::read_report(&out.join("report.json")) {
        Ok(r) => r,
        Err(e) => return fatal(e),
    };
    if let Some(csv) = compare {
        let prior = match std::fs::File::open(csv).map_err(report::ReportError::from).and_then(report::read_prior_csv) {
            Ok(p) => p,
            Err(e) => return fatal(format!("{}: {e}", csv.display())),
        };
        rep.finish(&prior, Some(&report::ReferenceExpectations::bundled()));
    }
    print!("{}", report::render_text(&rep));
    ExitCode::SUCCESS
}

fn cmd_mock_serve(addr: &str, seed: u64, pages: usize) -> ExitCode {
    let spec = unicrawl::mock::MockSpec { seed, pages_per_archive: pages, ..Default::default() };
    let corpus = unicrawl::mock::generate(&spec);
    let server = match unicrawl::mock::MockServer::bind(addr, corpus.files) {
        Ok(s) => s,
        Err(e) => return fatal(e),
    };
    println!("{}", server.base_url());
    println!("crawls: {}", spec.crawls.join(","));
    loop {
        std::thread::park();
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match &cli.command {
        Command::Run(c) => cmd_run(c),
        Command::Index { common, local_shard } => cmd_index(common, local_shard.as_deref()),
        Command::Fetch { common, index, dataset } => cmd_fetch(common, index, dataset),
        Command::Dedup { input, out, min_dup_len, min_doc_len, dump_spans } => {
            cmd_dedup(input, out, *min_dup_len, *min_doc_len, dump_spans.as_deref())
        }
        Command::Report { out, compare } => cmd_report(out, compare.as_deref()),
        Command::ValidateManifest { path } => match store::validate_manifest(path) {
            Ok(m) => {
                println!("ok: {} shards, {} documents", m.shards.len(), m.doc_count());
                ExitCode::SUCCESS
            }
            Err(e) => fatal(e),
        },
        Command::MockServe { addr, seed, pages } => cmd_mock_serve(addr, *seed, *pages),
    }
}

