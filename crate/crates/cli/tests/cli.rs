mod common;

use std::fs;
use std::time::Instant;

use common::{csv_rows, nhanes_like_csv, run, stderr, write_file};
use serde_json::Value;
use sha2::{Digest, Sha256};

const REPORTS: [&str; 5] = ["naive_linear.csv", "full.csv", "univariate.csv", "selective.csv", "snooping.csv"];

fn small_file(dir: &std::path::Path, missing: &[usize]) -> std::path::PathBuf {
    write_file(dir, "survey.csv", &nhanes_like_csv(200, 7, missing))
}

fn analyze(input: &std::path::Path, out: &std::path::Path, extra: &[&str]) -> std::process::Output {
    let mut args = vec![
        "analyze",
        input.to_str().unwrap(),
        "--outcome",
        "log2_crp",
        "--treatment",
        "overweight",
        "--rf-trees",
        "40",
        "--seed",
        "3",
        "--out-dir",
        out.to_str().unwrap(),
    ];
    args.extend_from_slice(extra);
    run(&args)
}

#[test]
fn method_all_writes_five_reports_and_a_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let input = small_file(dir.path(), &[4]);
    let out = dir.path().join("out");
    let o = analyze(&input, &out, &[]);
    assert!(o.status.success(), "{}", stderr(&o));
    for name in REPORTS {
        let text = fs::read_to_string(out.join(name)).unwrap();
        let rows = csv_rows(&text);
        assert_eq!(rows[0], ["name", "estimate", "p_value", "ci_low", "ci_high", "stars"], "{name}");
    }
    let manifest: Value = serde_json::from_str(&fs::read_to_string(out.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["command"], "analyze");
    assert_eq!(manifest["seed"], 3);
    assert_eq!(manifest["inputs"].as_array().unwrap().len(), 1);
    // five reports and the diagnostics file, each with a matching digest
    let outputs = manifest["outputs"].as_array().unwrap();
    assert_eq!(outputs.len(), 6);
    for o in outputs {
        let bytes = fs::read(out.join(o["path"].as_str().unwrap())).unwrap();
        let digest: String = Sha256::digest(&bytes).iter().map(|b| format!("{b:02x}")).collect();
        assert_eq!(o["sha256"].as_str().unwrap(), digest, "{}", o["path"]);
    }
    assert!(manifest["warnings"][0].as_str().unwrap().contains("dropped 1 of 200 rows"));
    let diagnostics: Value = serde_json::from_str(&fs::read_to_string(out.join("diagnostics.json")).unwrap()).unwrap();
    assert_eq!(diagnostics["n"], 199);
    assert_eq!(diagnostics["p"], 30);
}

#[test]
fn categorical_columns_become_labelled_indicators() {
    let dir = tempfile::tempdir().unwrap();
    let input = small_file(dir.path(), &[]);
    let out = dir.path().join("out");
    let o = analyze(&input, &out, &["--method", "naive-linear"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let rows = csv_rows(&fs::read_to_string(out.join("naive_linear.csv")).unwrap());
    let names: Vec<&str> = rows[1..].iter().map(|r| r[0].as_str()).collect();
    assert_eq!(names.len(), 30);
    assert!(names.contains(&"Race (White)"));
    assert!(!names.contains(&"Race (Black)"), "first level is the reference");
    assert!(names.contains(&"Marital (Never married)"));
    assert!(names.contains(&"Gout"));
    assert!(!out.join("selective.csv").exists());
}

#[test]
fn identical_invocations_give_identical_reports() {
    let dir = tempfile::tempdir().unwrap();
    let input = small_file(dir.path(), &[]);
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    for out in [&a, &b] {
        let o = analyze(&input, out, &["--cross-fit", "2fold"]);
        assert!(o.status.success(), "{}", stderr(&o));
    }
    for name in REPORTS.iter().chain(["diagnostics.json"].iter()) {
        assert_eq!(fs::read(a.join(name)).unwrap(), fs::read(b.join(name)).unwrap(), "{name}");
    }
}

#[test]
fn zero_lambda_is_a_validation_error() {
    let dir = tempfile::tempdir().unwrap();
    let input = small_file(dir.path(), &[]);
    let o = analyze(&input, &dir.path().join("out"), &["--method", "selective", "--lambda", "0"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("selection event undefined at λ=0"), "{}", stderr(&o));
}

#[test]
fn unknown_column_is_named() {
    let dir = tempfile::tempdir().unwrap();
    let input = small_file(dir.path(), &[]);
    let out = dir.path().join("out");
    let o = run(&[
        "analyze",
        input.to_str().unwrap(),
        "--outcome",
        "crp",
        "--treatment",
        "overweight",
        "--out-dir",
        out.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("'crp'"));
}

#[test]
fn more_columns_than_rows_is_a_numerical_failure() {
    let dir = tempfile::tempdir().unwrap();
    let input = write_file(dir.path(), "tiny.csv", &nhanes_like_csv(25, 2, &[]));
    let o = analyze(&input, &dir.path().join("out"), &["--method", "full", "--nuisance", "zero"]);
    assert_eq!(o.status.code(), Some(3), "{}", stderr(&o));
    assert!(stderr(&o).contains("rank deficient design"), "{}", stderr(&o));
}

#[test]
fn selective_rows_match_snooping_rows() {
    let dir = tempfile::tempdir().unwrap();
    let input = write_file(dir.path(), "survey.csv", &nhanes_like_csv(1500, 9, &[]));
    let out = dir.path().join("out");
    let o = analyze(&input, &out, &["--method", "selective,snooping", "--modifiers", "Gender (Male),Age,Income,Stroke,Gout"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let sel = csv_rows(&fs::read_to_string(out.join("selective.csv")).unwrap());
    let snoop = csv_rows(&fs::read_to_string(out.join("snooping.csv")).unwrap());
    assert_eq!(sel.len(), snoop.len());
    assert!(sel.len() >= 2, "age modifies the effect");
    for (a, b) in sel.iter().zip(snoop.iter()).skip(1) {
        assert_eq!(a[0], b[0]);
        let (x, y): (f64, f64) = (a[1].parse().unwrap(), b[1].parse().unwrap());
        assert!((x - y).abs() <= 1e-10 * x.abs().max(1.0), "both modes report the relaxed fit: {x} vs {y}");
    }
}

#[test]
fn perturb_smoke_run() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let start = Instant::now();
    let o = run(&["perturb", "--n", "500", "--reps", "1", "--out-dir", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(start.elapsed().as_secs_f64() < 10.0);
    let rows = csv_rows(&fs::read_to_string(out.join("perturb.csv")).unwrap());
    assert_eq!(rows[0], ["gamma", "n", "fcp_selective", "fcp_naive"]);
    let gammas: Vec<&str> = rows[1..].iter().map(|r| r[0].as_str()).collect();
    assert_eq!(gammas, ["0.15", "0.2", "0.25", "0.3", "0.35"]);
}

#[test]
fn perturb_row_count_is_the_grid_size() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let o = run(&[
        "perturb", "--gammas", "0.2,0.4", "--n", "100,150,200", "--reps", "2", "--out-dir", out.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(csv_rows(&fs::read_to_string(out.join("perturb.csv")).unwrap()).len(), 1 + 6);
}

#[test]
fn perturb_rejects_nonpositive_gamma() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(&["perturb", "--gammas", "0.2,-0.1", "--out-dir", dir.path().to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
}

fn tiny_setting(seed: u64) -> String {
    format!(
        r#"{{"n": 120, "p": 6, "reps": 2, "seed": {seed}, "nuisance": {{"random_forest": {{"n_trees": 10, "min_node_size": 10}}}}}}"#
    )
}

#[test]
fn single_setting_gives_one_metrics_row() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_file(dir.path(), "one.json", &tiny_setting(4));
    let out = dir.path().join("out");
    let o = run(&["simulate", cfg.to_str().unwrap(), "--out-dir", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
    let rows = csv_rows(&fs::read_to_string(out.join("metrics.csv")).unwrap());
    assert_eq!(rows.len(), 2);
    assert_eq!(rows[0][0], "setting");
    assert_eq!(rows[1][11], "2");
}

#[test]
fn rerun_only_computes_missing_settings() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let first = write_file(dir.path(), "first.json", &format!("[{}]", tiny_setting(1)));
    let o = run(&["simulate", first.to_str().unwrap(), "--out-dir", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
    let metrics_one = fs::read_to_string(out.join("metrics.csv")).unwrap();

    // the same setting plus a new one, as after an interrupted run
    let both = write_file(dir.path(), "both.json", &format!(r#"{{"settings": [{}, {}]}}"#, tiny_setting(1), tiny_setting(2)));
    let o = run(&["simulate", both.to_str().unwrap(), "--out-dir", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
    let log = stderr(&o);
    assert!(log.contains("setting 0") && log.contains("already complete"), "{log}");
    assert!(log.contains("setting 1") && log.contains("2 replications"), "{log}");
    let metrics_two = fs::read_to_string(out.join("metrics.csv")).unwrap();
    assert_eq!(metrics_two.lines().nth(1), metrics_one.lines().nth(1));
    assert_eq!(metrics_two.lines().count(), 3);
}

#[test]
fn invalid_config_lists_every_violation() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_file(dir.path(), "bad.json", r#"[{"s_t": 7, "sigma": -1}, {"reps": 0}]"#);
    let o = run(&["simulate", cfg.to_str().unwrap(), "--out-dir", dir.path().join("out").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    let log = stderr(&o);
    for needle in ["setting 0: s_t", "setting 0: sigma", "setting 1: reps"] {
        assert!(log.contains(needle), "{needle} missing from {log}");
    }
}

#[test]
fn preset_is_the_first_table_row() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    // a single replication with a small forest keeps this quick
    let o = run(&["simulate", "--preset", "table1-row1", "--reps", "1", "--out-dir", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
    let rows = csv_rows(&fs::read_to_string(out.join("metrics.csv")).unwrap());
    assert_eq!(
        &rows[1][1..13],
        ["0", "lin", "5", "lin", "5", "lin", "0.25", "normal", "1000", "25", "1", "rf"]
    );
}

