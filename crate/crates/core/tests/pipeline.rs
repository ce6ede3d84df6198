mod common;

use std::path::Path;
use std::process::{Command, Output};

use unicrawl::mock::{Fault, MockSpec};
use unicrawl::pipeline::{ArchiveStage, ExitStatus, Runner};
use unicrawl::report::{self, conservation_violations};
use unicrawl::store;

fn small_spec() -> MockSpec {
    MockSpec { pages_per_archive: 80, ..MockSpec::default() }
}

fn cli(args: &[&str], base: Option<&str>) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_unicrawl"));
    cmd.args(args).env("RUST_LOG", "warn").env_remove("UNICRAWL_CC_BASE");
    if let Some(b) = base {
        cmd.env("UNICRAWL_CC_BASE", b);
    }
    cmd.output().expect("spawn unicrawl")
}

#[test]
fn invalid_config_exits_2_without_network() {
    let dead = "http://127.0.0.1:9/";
    for args in [
        vec!["run", "--lang", "AMH", "--crawls", "CC-MAIN-2023-14"],
        vec!["run", "--lang", "amh", "--crawls", "CC-MAIN-23-14"],
        vec!["run", "--lang", "amh"],
        vec!["run", "--lang", "amh", "--crawls", "CC-MAIN-2023-14", "--min-dup-len", "1"],
        vec!["run", "--lang", "amh", "--crawls", "CC-MAIN-2023-14", "--workers", "0"],
    ] {
        let out = cli(&args, Some(dead));
        assert_eq!(out.status.code(), Some(2), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    }
}

#[test]
fn config_file_is_read_and_flags_override_it() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("unicrawl.toml");
    std::fs::write(&path, "lang = \"amh\"\ncrawls = [\"CC-MAIN-2023-14\"]\nmin_dup_len = 1\n").unwrap();
    let out = cli(&["run", "--config", path.to_str().unwrap()], Some("http://127.0.0.1:9/"));
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("min_dup_len"));
}

#[test]
fn report_accounts_for_every_stage() {
    let m = common::serve_mock(small_spec());
    let tmp = tempfile::tempdir().unwrap();
    let run = Runner::new(common::mock_config(&m, tmp.path(), &m.spec.crawls)).run();
    assert_eq!(run.status, ExitStatus::Success, "{:?}", run.errors);
    let rep = &run.report;
    assert_eq!(rep.archives.len(), 2);
    let mut skip_kinds = 0;
    for a in &rep.archives {
        assert!(a.complete);
        let names: Vec<&str> = a.stages.iter().map(|s| s.stage.as_str()).collect();
        assert_eq!(names, [report::STAGE_INDEX, report::STAGE_FETCH, report::STAGE_EXTRACT, report::STAGE_DEDUP_ARCHIVE]);
        assert!(conservation_violations(&a.stages).is_empty(), "{:?}", conservation_violations(&a.stages));
        let index = a.stage(report::STAGE_INDEX).unwrap();
        let rows = &m.corpus_rows[&a.crawl_id];
        assert_eq!(index.doc_count_in, rows.len() as u64);
        let strict = rows.iter().filter(|r| r.languages.as_deref() == Some("amh")).count() as u64;
        assert_eq!(index.doc_count_out, strict);
        let extract = a.stage(report::STAGE_EXTRACT).unwrap();
        let skipped: u64 = a.skips.values().sum();
        assert_eq!(skipped + extract.doc_count_out, extract.doc_count_in);
        let strict_rows = rows.iter().filter(|r| r.languages.as_deref() == Some("amh"));
        let redirects = strict_rows.clone().filter(|r| r.status != 200).count() as u64;
        let non_html = strict_rows.filter(|r| r.status == 200 && r.mime != "text/html").count() as u64;
        assert_eq!(a.skips.get("http_status").copied().unwrap_or(0), redirects, "{:?}", a.skips);
        assert_eq!(a.skips.get("not_html").copied().unwrap_or(0), non_html, "{:?}", a.skips);
        skip_kinds += (redirects > 0) as u32 + (non_html > 0) as u32;
        let dedup = a.stage(report::STAGE_DEDUP_ARCHIVE).unwrap();
        assert!(dedup.bytes_out <= dedup.bytes_in, "{dedup:?}");
        assert_eq!(dedup.bytes_in, extract.bytes_out);
    }
    assert!(skip_kinds >= 2, "the mock corpus should exercise both skip reasons");
    let cross = rep.cross_archive.as_ref().unwrap();
    assert!(cross.bytes_out < cross.bytes_in, "shared paragraphs repeat across archives");
    assert!(rep.combined_reduction_pct.unwrap() > 0.0);
    assert!(rep.comparisons.iter().any(|c| c.dataset == "mC4"));
    assert!(tmp.path().join("report.json").exists());
    assert!(tmp.path().join("report.txt").exists());
    let back = report::read_report(&tmp.path().join("report.json")).unwrap();
    assert_eq!(&back, rep);

    let (manifest, docs) = store::read_all(&tmp.path().join("final")).unwrap();
    assert_eq!(manifest.doc_count() as usize, docs.len());
    assert_eq!(manifest.stage, store::Stage::Final);
    assert!(docs.iter().all(|d| d.char_len >= 100));
    assert!(docs.iter().all(|d| !unicrawl::extract::has_markup(&d.text)));
    assert!(docs.iter().all(|d| d.text.chars().any(|c| ('\u{1200}'..='\u{137F}').contains(&c))));
}

#[test]
fn failed_records_are_listed_and_refetchable() {
    let m = common::serve_mock(small_spec());
    let crawl = m.spec.crawls[0].clone();
    let warc_prefix = format!("crawl-data/{crawl}/segments/1680000000.1/");
    m.server.add_fault(&warc_prefix, Fault::Truncate { keep: 10 });
    let tmp = tempfile::tempdir().unwrap();
    let mut cfg = common::mock_config(&m, tmp.path(), &[crawl.clone()]);
    let run = Runner::new(cfg.clone()).run();
    assert_eq!(run.status, ExitStatus::Success);
    let failed = run.report.archives[0].failed_records;
    assert!(failed > 0);

    let failures = tmp.path().join("work").join(&crawl).join("failures.jsonl");
    let rows = unicrawl::index_filter::read_index_rows(&failures).unwrap();
    assert_eq!(rows.len() as u64, failed);
    assert!(rows.iter().all(|r| r.warc_filename.contains("1680000000.1/")));

    cfg.strict_exit = true;
    cfg.resume = false;
    let strict = Runner::new(cfg).run();
    assert_eq!(strict.status, ExitStatus::Partial);

    m.server.clear_faults();
    let dataset = tmp.path().join("retry");
    let out = cli(
        &["fetch", "--lang", "amh", "--index", failures.to_str().unwrap(), "--dataset", dataset.to_str().unwrap(), "--rate-limit", "1000"],
        Some(&m.server.base_url()),
    );
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains(&format!("fetched {failed} of {failed} records")), "{stdout}");
    assert!(!dataset.join("failures.jsonl").exists());
}

#[test]
fn stale_checkpoints_are_recomputed() {
    let m = common::serve_mock(small_spec());
    let tmp = tempfile::tempdir().unwrap();
    let crawls = &m.spec.crawls[..1];
    let cfg = common::mock_config(&m, tmp.path(), crawls);
    let first = Runner::new(cfg.clone()).run();
    let final_bytes = common::dataset_bytes(&tmp.path().join("final"));

    // Changed dedup parameters invalidate only the dedup checkpoint.
    let mut changed = cfg.clone();
    changed.min_doc_len = 150;
    let runner = Runner::new(changed);
    let second = runner.run();
    let crawl = &cfg.crawl_ids[0];
    assert_eq!(second.resumed_stages, [format!("{crawl}:index"), format!("{crawl}:fetch-extract")]);
    assert!(second.report.final_docs <= first.report.final_docs);

    // Back to the original parameters; a tampered shard forces a redo.
    let runner = Runner::new(cfg.clone());
    let extracted = runner.layout().extracted(crawl);
    let manifest = store::read_manifest(&extracted.join(store::MANIFEST_FILE)).unwrap();
    let shard = extracted.join(&manifest.shards[0].path);
    let mut bytes = std::fs::read(&shard).unwrap();
    let last = bytes.len() - 1;
    bytes[last] ^= 0xFF;
    std::fs::write(&shard, bytes).unwrap();
    m.server.reset_log();
    let third = runner.run();
    assert_eq!(third.status, ExitStatus::Success);
    assert_eq!(third.resumed_stages, [format!("{crawl}:index")]);
    assert!(m.server.request_count() > 0);
    assert_eq!(common::dataset_bytes(&tmp.path().join("final")), final_bytes);
    assert!(runner.layout().checkpoint(crawl, ArchiveStage::DedupArchive).exists());
}

#[test]
fn unknown_crawl_is_fatal() {
    let m = common::serve_mock(small_spec());
    let tmp = tempfile::tempdir().unwrap();
    let run = Runner::new(common::mock_config(&m, tmp.path(), &["CC-MAIN-2019-01".to_string()])).run();
    assert_eq!(run.status, ExitStatus::Fatal);
    assert!(run.errors.iter().any(|e| e.contains("CC-MAIN-2019-01")), "{:?}", run.errors);
}

#[test]
fn command_line_round_trip() {
    let m = common::serve_mock(small_spec());
    let tmp = tempfile::tempdir().unwrap();
    let out_dir = tmp.path().join("out");
    let out = out_dir.to_str().unwrap();
    let crawls = m.spec.crawls.join(",");
    let base = m.server.base_url();

    let run = cli(&["run", "--lang", "amh", "--crawls", &crawls, "--out", out, "--rate-limit", "1000", "--workers", "4"], Some(&base));
    assert!(run.status.success(), "{}", String::from_utf8_lossy(&run.stderr));
    let text = String::from_utf8_lossy(&run.stdout);
    assert!(text.contains("dedup-cross"), "{text}");

    let ok = cli(&["validate-manifest", &format!("{out}/final")], None);
    assert!(ok.status.success());

    let dump = tmp.path().join("spans.tsv");
    let dd = cli(
        &["dedup", "--input", &format!("{out}/work/{}/extracted", m.spec.crawls[0]), "--out", tmp.path().join("dd").to_str().unwrap(), "--dump-spans", dump.to_str().unwrap()],
        None,
    );
    assert!(dd.status.success(), "{}", String::from_utf8_lossy(&dd.stderr));
    let spans = std::fs::read_to_string(&dump).unwrap();
    assert!(spans.lines().count() > 0);
    assert!(spans.lines().all(|l| l.split('\t').count() == 3));

    let csv = tmp.path().join("mine.csv");
    std::fs::write(&csv, "dataset,language,size_mb\nMyCorpus,amh,0.01\n").unwrap();
    let rep = cli(&["report", "--out", out, "--compare", csv.to_str().unwrap()], None);
    assert!(rep.status.success());
    assert!(String::from_utf8_lossy(&rep.stdout).contains("MyCorpus"));

    let index = cli(&["index", "--lang", "amh", "--crawls", &m.spec.crawls[0], "--out", out], Some(&base));
    assert!(index.status.success());
    assert!(Path::new(out).join(format!("index/{}.amh.jsonl.gz", m.spec.crawls[0])).exists());
}
