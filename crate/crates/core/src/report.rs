//! Per-stage size accounting and comparison with published corpus sizes.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::io::{self, Read};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const PRIOR_WORKS_CSV: &str = include_str!("../data/prior_works.csv");
pub const REFERENCE_EXPECTATIONS_TOML: &str = include_str!("../data/reference_expectations.toml");

pub const STAGE_INDEX: &str = "index";
pub const STAGE_FETCH: &str = "fetch";
pub const STAGE_EXTRACT: &str = "extract";
pub const STAGE_DEDUP_ARCHIVE: &str = "dedup-archive";
pub const STAGE_DEDUP_CROSS: &str = "dedup-cross";

#[derive(Debug, Error)]
pub enum ReportError {
    #[error("stage {0:?} has no input bytes; reduction is undefined")]
    UndefinedReduction(String),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("io: {0}")]
    Io(#[from] io::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct StageStats {
    pub stage: String,
    pub bytes_in: u64,
    pub bytes_out: u64,
    pub doc_count_in: u64,
    pub doc_count_out: u64,
    pub records_failed: u64,
    pub wall_seconds: f64,
}

impl StageStats {
    pub fn new(stage: &str) -> Self {
        StageStats { stage: stage.to_string(), ..Default::default() }
    }
}

/// Percentage of input bytes removed by a stage.
pub fn reduction(stats: &StageStats) -> Result<f64, ReportError> {
    reduction_of(stats.bytes_in, stats.bytes_out).ok_or_else(|| ReportError::UndefinedReduction(stats.stage.clone()))
}

fn reduction_of(bytes_in: u64, bytes_out: u64) -> Option<f64> {
    (bytes_in > 0).then(|| 100.0 * (bytes_in as f64 - bytes_out as f64) / bytes_in as f64)
}

/// Adjacent stages where documents appear or vanish between one stage's
/// output and the next stage's input.
pub fn conservation_violations(stages: &[StageStats]) -> Vec<String> {
    stages
        .windows(2)
        .filter(|w| w[0].doc_count_out != w[1].doc_count_in)
        .map(|w| {
            format!(
                "{} emitted {} documents but {} received {}",
                w[0].stage, w[0].doc_count_out, w[1].stage, w[1].doc_count_in
            )
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PriorRow {
    pub dataset: String,
    pub language: String,
    pub size_mb: Option<f64>,
}

/// Reads a `dataset,language,size_mb` table. Empty sizes mean "not
/// available".
pub fn read_prior_csv<R: Read>(r: R) -> Result<Vec<PriorRow>, ReportError> {
    let mut rows = Vec::new();
    for row in csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(r).deserialize() {
        rows.push(row?);
    }
    Ok(rows)
}

/// The bundled table of published sizes.
pub fn bundled_prior() -> Vec<PriorRow> {
    read_prior_csv(PRIOR_WORKS_CSV.as_bytes()).expect("bundled table parses")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRow {
    pub dataset: String,
    pub size_mb: f64,
    /// Our size divided by theirs.
    pub ratio: f64,
}

/// Compares `final_size_mb` with every known prior size for `language`.
pub fn compare_with_prior(final_size_mb: f64, language: &str, prior: &[PriorRow]) -> Vec<ComparisonRow> {
    prior
        .iter()
        .filter(|r| r.language == language)
        .filter_map(|r| {
            let size = r.size_mb.filter(|s| *s > 0.0)?;
            Some(ComparisonRow { dataset: r.dataset.clone(), size_mb: size, ratio: final_size_mb / size })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReferenceExpectations {
    pub language: String,
    pub filtered_index_bytes: u64,
    pub warc_bytes_per_archive: u64,
    pub text_bytes_per_archive: u64,
    pub within_archive_reduction_pct: f64,
    pub combined_reduction_pct: f64,
}

impl ReferenceExpectations {
    pub fn bundled() -> Self {
        toml::from_str(REFERENCE_EXPECTATIONS_TOML).expect("bundled expectations parse")
    }
}

fn off_by_magnitude(ours: f64, expected: f64) -> bool {
    ours <= 0.0 || expected <= 0.0 || !(0.1..=10.0).contains(&(ours / expected))
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ArchiveReport {
    pub crawl_id: String,
    pub stages: Vec<StageStats>,
    /// Skipped records by reason.
    pub skips: BTreeMap<String, u64>,
    pub fetch_attempts: u64,
    pub failed_records: u64,
    pub complete: bool,
}

impl ArchiveReport {
    pub fn stage(&self, name: &str) -> Option<&StageStats> {
        self.stages.iter().find(|s| s.stage == name)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub target_language: String,
    pub mode: String,
    pub archives: Vec<ArchiveReport>,
    pub cross_archive: Option<StageStats>,
    pub final_docs: u64,
    pub final_bytes: u64,
    pub combined_reduction_pct: Option<f64>,
    pub comparisons: Vec<ComparisonRow>,
    pub warnings: Vec<String>,
    pub tool_version: String,
    pub generated_at: String,
}

impl Report {
    /// Fills derived fields: combined reduction, prior comparison, and
    /// warnings for stats that break conservation or sit an order of
    /// magnitude away from the published reference.
    pub fn finish(&mut self, prior: &[PriorRow], reference: Option<&ReferenceExpectations>) {
        let extracted: u64 = self.archives.iter().filter_map(|a| a.stage(STAGE_EXTRACT)).map(|s| s.bytes_out).sum();
        self.combined_reduction_pct = reduction_of(extracted, self.final_bytes);
        self.comparisons = compare_with_prior(self.final_bytes as f64 / 1e6, &self.target_language, prior);

        let mut warnings = Vec::new();
        for a in &self.archives {
            for v in conservation_violations(&a.stages) {
                warnings.push(format!("{}: {v}", a.crawl_id));
            }
            if !a.complete {
                warnings.push(format!("{}: archive did not complete", a.crawl_id));
            }
        }
        if let Some(r) = reference.filter(|r| r.language == self.target_language) {
            let mut check = |label: &str, ours: f64, expected: f64, unit: &str| {
                if off_by_magnitude(ours, expected) {
                    warnings.push(format!(
                        "{label}: {ours:.1} {unit} vs published {expected:.1} {unit} (order-of-magnitude deviation)"
                    ));
                }
            };
            for a in &self.archives {
                let id = &a.crawl_id;
                if let Some(s) = a.stage(STAGE_INDEX) {
                    check(&format!("{id} filtered index"), s.bytes_out as f64 / 1e6, r.filtered_index_bytes as f64 / 1e6, "MB");
                }
                if let Some(s) = a.stage(STAGE_FETCH) {
                    check(&format!("{id} WARC bytes"), s.bytes_out as f64 / 1e6, r.warc_bytes_per_archive as f64 / 1e6, "MB");
                }
                if let Some(s) = a.stage(STAGE_EXTRACT) {
                    check(&format!("{id} extracted text"), s.bytes_out as f64 / 1e6, r.text_bytes_per_archive as f64 / 1e6, "MB");
                }
                if let Some(pct) = a.stage(STAGE_DEDUP_ARCHIVE).and_then(|s| reduction(s).ok()) {
                    // Compare retained fractions; a percentage near 100 is
                    // where magnitudes differ.
                    check(&format!("{id} within-archive retained"), 100.0 - pct, 100.0 - r.within_archive_reduction_pct, "%");
                }
            }
            if let Some(pct) = self.combined_reduction_pct {
                check("combined retained", 100.0 - pct, 100.0 - r.combined_reduction_pct, "%");
            }
        }
        self.warnings = warnings;
    }
}

fn fmt_bytes(n: u64) -> String {
    const UNITS: [&str; 5] = ["B", "KB", "MB", "GB", "TB"];
    let mut v = n as f64;
    let mut u = 0;
    while v >= 1000.0 && u < UNITS.len() - 1 {
        v /= 1000.0;
        u += 1;
    }
    if u == 0 {
        format!("{n} B")
    } else {
        format!("{v:.2} {}", UNITS[u])
    }
}

fn fmt_pct(s: &StageStats) -> String {
    reduction(s).map_or_else(|_| "n/a".to_string(), |p| format!("{p:.1}%"))
}

/// Plain-text rendering of `report`.
pub fn render_text(report: &Report) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "unicrawl report: language {} ({} filter)", report.target_language, report.mode);
    let _ = writeln!(out);
    let header = format!(
        "{:<18} {:>12} {:>12} {:>9} {:>9} {:>9} {:>7} {:>8}",
        "stage", "bytes in", "bytes out", "reduce", "docs in", "docs out", "failed", "seconds"
    );
    let row = |s: &StageStats| {
        format!(
            "{:<18} {:>12} {:>12} {:>9} {:>9} {:>9} {:>7} {:>8.2}",
            s.stage,
            fmt_bytes(s.bytes_in),
            fmt_bytes(s.bytes_out),
            fmt_pct(s),
            s.doc_count_in,
            s.doc_count_out,
            s.records_failed,
            s.wall_seconds
        )
    };
    for a in &report.archives {
        let _ = writeln!(out, "{}{}", a.crawl_id, if a.complete { "" } else { " (incomplete)" });
        let _ = writeln!(out, "  {header}");
        for s in &a.stages {
            let _ = writeln!(out, "  {}", row(s));
        }
        if !a.skips.is_empty() {
            let skips: Vec<String> = a.skips.iter().map(|(k, v)| format!("{k}={v}")).collect();
            let _ = writeln!(out, "  skipped: {}", skips.join(" "));
        }
        let _ = writeln!(out, "  fetch attempts: {}, failed records: {}", a.fetch_attempts, a.failed_records);
        let _ = writeln!(out);
    }
    if let Some(s) = &report.cross_archive {
        let _ = writeln!(out, "all archives");
        let _ = writeln!(out, "  {header}");
        let _ = writeln!(out, "  {}", row(s));
        let _ = writeln!(out);
    }
    let _ = writeln!(out, "final: {} documents, {}", report.final_docs, fmt_bytes(report.final_bytes));
    if let Some(p) = report.combined_reduction_pct {
        let _ = writeln!(out, "combined reduction from extracted text: {p:.1}%");
    }
    if !report.comparisons.is_empty() {
        let _ = writeln!(out);
        let _ = writeln!(out, "{:<14} {:>10} {:>12}", "dataset", "size MB", "ours/theirs");
        for c in &report.comparisons {
            let _ = writeln!(out, "{:<14} {:>10} {:>11.3}x", c.dataset, c.size_mb, c.ratio);
        }
    }
    if !report.warnings.is_empty() {
        let _ = writeln!(out);
        for w in &report.warnings {
            let _ = writeln!(out, "warning: {w}");
        }
    }
    out
}

/// Writes `report.json` and `report.txt` into `dir`.
pub fn write_reports(dir: &Path, report: &Report) -> Result<(), ReportError> {
    std::fs::create_dir_all(dir)?;
    let json = serde_json::to_vec_pretty(report)?;
    crate::store::write_atomic(&dir.join("report.json"), &json)?;
    crate::store::write_atomic(&dir.join("report.txt"), render_text(report).as_bytes())?;
    Ok(())
}

pub fn read_report(path: &Path) -> Result<Report, ReportError> {
    Ok(serde_json::from_slice(&std::fs::read(path)?)?)
}
