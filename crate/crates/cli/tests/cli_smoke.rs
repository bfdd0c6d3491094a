//! End-to-end checks of the `cmdsynth` binary: argument handling, exit
//! codes, machine-readable stdout, and the synth -> stats pipeline.

use std::path::Path;
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_cmdsynth"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary must spawn")
}

fn stdout(out: &Output) -> String {
    String::from_utf8(out.stdout.clone()).expect("stdout must be utf-8")
}

fn stderr(out: &Output) -> String {
    String::from_utf8(out.stderr.clone()).expect("stderr must be utf-8")
}

fn assert_exit(out: &Output, code: i32, context: &str) {
    assert_eq!(
        out.status.code(),
        Some(code),
        "{context}: expected exit {code}\nstdout: {}\nstderr: {}",
        stdout(out),
        stderr(out)
    );
}

fn synth_into(dir: &Path, extra: &[&str]) -> Output {
    let dir = dir.to_str().unwrap();
    let mut args = vec![
        "synth",
        "--mode",
        "gcs",
        "--samples",
        "6",
        "--out-dir",
        dir,
        "--seed",
        "11",
        "--budget",
        "24",
        "--max-args",
        "5",
        "--max-commands",
        "3",
    ];
    args.extend_from_slice(extra);
    run(&args)
}

#[test]
fn help_version_and_usage_errors() {
    let help = run(&["--help"]);
    assert_exit(&help, 0, "--help");
    let text = stdout(&help);
    for sub in ["synth", "eval-budget", "stats", "validate-grammar"] {
        assert!(text.contains(sub), "--help must list {sub}");
    }

    assert_exit(&run(&["--version"]), 0, "--version");
    assert_exit(&run(&["--definitely-not-a-flag"]), 1, "unknown flag");
    assert_exit(&run(&["synth"]), 1, "synth without required args");

    let badmode = run(&[
        "synth", "--mode", "croissant", "--samples", "1", "--out-dir", "/tmp/x",
    ]);
    assert_exit(&badmode, 1, "unknown mode");
    assert!(stderr(&badmode).contains("croissant"));
}

#[test]
fn synth_manifest_matches_the_shards_on_disk() {
    let dir = tempfile::tempdir().unwrap();
    let out = synth_into(dir.path(), &[]);
    assert_exit(&out, 0, "synth");

    let manifest: serde_json::Value = serde_json::from_str(&stdout(&out)).unwrap();
    assert_eq!(manifest["samples"], 6);
    assert_eq!(manifest["records_written"], 6);
    assert_eq!(manifest["grammar"], "bundled");
    assert_eq!(manifest["backend"], "sim");
    assert_eq!(manifest["mode"], "gcs");

    // The manifest on disk is the same document that went to stdout.
    let on_disk = std::fs::read_to_string(dir.path().join("campaign.json")).unwrap();
    assert_eq!(serde_json::from_str::<serde_json::Value>(&on_disk).unwrap(), manifest);

    // Shards read back, validate, and agree with the manifest's counts.
    let records = cmdsynth_core::dataset::read_records(dir.path().to_str().unwrap()).unwrap();
    assert_eq!(records.len(), 6);
    let mean: f64 =
        records.iter().map(|r| r.irreducibility).sum::<f64>() / records.len() as f64;
    let reported = manifest["mean_irreducibility"].as_f64().unwrap();
    assert!((mean - reported).abs() < 1e-12);
    for record in &records {
        assert!(record.input.starts_with("cd /home/ubuntu"));
    }
}

#[test]
fn synth_reruns_are_byte_identical() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    assert_exit(&synth_into(a.path(), &[]), 0, "first run");
    assert_exit(&synth_into(b.path(), &[]), 0, "second run");

    let shard_a = std::fs::read(a.path().join("records-00000.ndjson")).unwrap();
    let shard_b = std::fs::read(b.path().join("records-00000.ndjson")).unwrap();
    assert_eq!(shard_a, shard_b, "shards must not depend on the run");

    let man_a = std::fs::read(a.path().join("campaign.json")).unwrap();
    let man_b = std::fs::read(b.path().join("campaign.json")).unwrap();
    assert_eq!(man_a, man_b, "manifests must not depend on the run");
}

#[test]
fn synth_then_stats_roundtrip() {
    let dir = tempfile::tempdir().unwrap();
    assert_exit(&synth_into(dir.path(), &[]), 0, "synth");

    let records = dir.path().to_str().unwrap();
    let csv = run(&["stats", "--records", records, "--label", "smoke"]);
    assert_exit(&csv, 0, "stats csv");
    let text = stdout(&csv);
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("label,n_args,count,mean,std"));
    let rows: Vec<&str> = lines.collect();
    assert!(!rows.is_empty());
    assert!(rows.iter().all(|row| row.starts_with("smoke,")));

    let json = run(&["stats", "--records", records, "--label", "smoke", "--json"]);
    assert_exit(&json, 0, "stats json");
    let doc: serde_json::Value = serde_json::from_str(&stdout(&json)).unwrap();
    assert_eq!(doc["label"], "smoke");
    assert_eq!(doc["total_records"], 6);

    let out_dir = tempfile::tempdir().unwrap();
    let written = run(&[
        "stats",
        "--records",
        records,
        "--label",
        "smoke",
        "--out-dir",
        out_dir.path().to_str().unwrap(),
    ]);
    assert_exit(&written, 0, "stats --out-dir");
    let saved_csv = std::fs::read_to_string(out_dir.path().join("stats.csv")).unwrap();
    assert_eq!(saved_csv, text);
    assert!(out_dir.path().join("stats.json").exists());
}

#[test]
fn eval_budget_emits_csv_and_an_optional_file() {
    let dir = tempfile::tempdir().unwrap();
    let out_file = dir.path().join("mae.csv");
    let out = run(&[
        "eval-budget",
        "--budgets",
        "3,7",
        "--inputs",
        "4",
        "--min-args",
        "2",
        "--max-args",
        "3",
        "--seed",
        "3",
        "--out",
        out_file.to_str().unwrap(),
    ]);
    assert_exit(&out, 0, "eval-budget");

    let text = stdout(&out);
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("n_args,budget,mae,ci_lo,ci_hi,count"));
    let mut budgets_seen = std::collections::BTreeSet::new();
    for row in lines {
        let cols: Vec<&str> = row.split(',').collect();
        assert_eq!(cols.len(), 6, "row {row}");
        let n: usize = cols[0].parse().unwrap();
        assert!((2..=3).contains(&n));
        budgets_seen.insert(cols[1].parse::<usize>().unwrap());
    }
    assert_eq!(budgets_seen.into_iter().collect::<Vec<_>>(), vec![3, 7]);
    assert_eq!(std::fs::read_to_string(&out_file).unwrap(), text);
    assert!(stderr(&out).contains("MAE at budget 3"));
    assert!(stderr(&out).contains("MAE at budget 7"));
}

#[test]
fn config_errors_exit_one_and_runtime_errors_exit_two() {
    let missing = run(&[
        "synth", "--mode", "gcs", "--samples", "1", "--out-dir", "/tmp/x", "--grammar",
        "/no/such/file.grammar",
    ]);
    assert_exit(&missing, 1, "missing grammar file");
    assert!(stderr(&missing).contains("/no/such/file.grammar"));

    let zero = run(&["synth", "--mode", "gcs", "--samples", "0", "--out-dir", "/tmp/x"]);
    assert_exit(&zero, 1, "samples 0");

    let filter = run(&[
        "synth", "--mode", "gcs", "--samples", "1", "--out-dir", "/tmp/x", "--score-filter",
        "0.9", "0.1",
    ]);
    assert_exit(&filter, 1, "inverted score filter");

    let nostats = run(&["stats", "--records", "/no/such/records.ndjson"]);
    assert_exit(&nostats, 1, "missing records path");
    assert!(stderr(&nostats).contains("/no/such/records.ndjson"));

    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("records-00000.ndjson");
    std::fs::write(&bad, "{\"not\": \"a record\"}\n").unwrap();
    let schema = run(&["stats", "--records", bad.to_str().unwrap()]);
    assert_exit(&schema, 2, "malformed record");
    assert!(stderr(&schema).contains("records-00000.ndjson:1"));

    let swapped = run(&[
        "eval-budget", "--budgets", "4", "--inputs", "2", "--min-args", "5", "--max-args", "2",
    ]);
    assert_exit(&swapped, 1, "min above max");
}

#[test]
fn validate_grammar_covers_good_startless_and_broken_files() {
    let bundled = run(&["validate-grammar"]);
    assert_exit(&bundled, 0, "bundled grammar");
    let report: serde_json::Value = serde_json::from_str(&stdout(&bundled)).unwrap();
    assert_eq!(report["commands"].as_object().unwrap().len(), 12);
    assert_eq!(report["samples"]["pwd"], "");

    let dir = tempfile::tempdir().unwrap();
    let startless = dir.path().join("startless.grammar");
    std::fs::write(&startless, "thing ::= \"a\" | \"b\"\n").unwrap();
    let warned = run(&["validate-grammar", "--grammar", startless.to_str().unwrap()]);
    assert_exit(&warned, 0, "startless grammar");
    assert!(stderr(&warned).contains("no %start bindings"));

    let broken = dir.path().join("broken.grammar");
    std::fs::write(&broken, "thing ::= \"unterminated\n").unwrap();
    let bad = run(&["validate-grammar", "--grammar", broken.to_str().unwrap()]);
    assert_exit(&bad, 1, "broken grammar");
    assert!(stderr(&bad).contains("broken.grammar"));
}

#[test]
fn sandbox_backend_enters_the_staged_home() {
    let dir = tempfile::tempdir().unwrap();
    let out = synth_into(dir.path(), &["--backend", "sandbox", "--workers", "1"]);
    assert_exit(&out, 0, "sandbox synth");

    let records = cmdsynth_core::dataset::read_records(dir.path().to_str().unwrap()).unwrap();
    assert_eq!(records.len(), 6);
    for record in &records {
        assert!(record.input.starts_with("cd home/ubuntu"));
        assert!(
            !record.output.contains("can't cd to home/ubuntu"),
            "opening row must resolve inside the staged tree: {}",
            record.output
        );
    }
}

#[test]
fn piped_stdout_terminates_quietly() {
    let script = format!(
        "{} validate-grammar | head -c 16",
        env!("CARGO_BIN_EXE_cmdsynth")
    );
    let out = Command::new("sh").args(["-c", &script]).output().unwrap();
    assert_eq!(out.status.code(), Some(0), "pipeline exit");
    let err = stderr(&out);
    assert!(!err.contains("panic"), "broken pipe must not panic: {err}");
}
