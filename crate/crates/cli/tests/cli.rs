//! End-to-end runs of the `srrr` binary: exit codes, report shapes, and the
//! wiring between flags and the library. Fixtures live in tests/fixtures;
//! the toy pair carries a nearly noiseless rank-2 signal on predictors
//! {0, 1, 2} of 6, the weak pair a faint rank-2 signal on 6 of 12 under
//! unit noise.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("tests/fixtures")
        .join(name)
}

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_srrr"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn stderr_of(output: &Output) -> String {
    String::from_utf8_lossy(&output.stderr).into_owned()
}

fn json_at(path: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(path).expect("report exists")).expect("valid JSON")
}

#[test]
fn noiseless_toy_selects_the_truth_with_every_method() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    let output = run(&[
        "select",
        "--x", fixture("toy_x.csv").to_str().unwrap(),
        "--y", fixture("toy_y.csv").to_str().unwrap(),
        "--methods",
        "AIC,BIC,EBIC,PIC,PIC-recommended,CV,SCV(plugin),SCV(fractional)",
        "--out", out,
    ]);
    assert!(output.status.success(), "{}", stderr_of(&output));

    let report = json_at(&dir.path().join("select_report.json"));
    let selections = report["selections"].as_array().unwrap();
    assert_eq!(selections.len(), 8);
    for sel in selections {
        assert_eq!(sel["support"], serde_json::json!([0, 1, 2]), "{}", sel["method"]);
        assert_eq!(sel["rank"], 2, "{}", sel["method"]);
        let coeffs = dir.path().join(sel["coefficients_csv"].as_str().unwrap());
        let text = fs::read_to_string(coeffs).unwrap();
        // Header plus one row per predictor, every field a finite number.
        let mut lines = text.lines();
        assert_eq!(lines.next(), Some("y1,y2"));
        let rows: Vec<&str> = lines.collect();
        assert_eq!(rows.len(), 6);
        for row in rows {
            for field in row.split(',') {
                assert!(field.parse::<f64>().unwrap().is_finite());
            }
        }
    }
    assert_eq!(report["n"], 80);
    assert_eq!(report["p"], 6);
    assert_eq!(report["m"], 2);
}

#[test]
fn selection_respects_custom_grids() {
    let dir = tempfile::tempdir().unwrap();
    let output = run(&[
        "select",
        "--x", fixture("toy_x.csv").to_str().unwrap(),
        "--y", fixture("toy_y.csv").to_str().unwrap(),
        "--methods", "PIC",
        "--grid-j", "1..2",
        "--grid-r", "1",
        "--out", dir.path().to_str().unwrap(),
    ]);
    assert!(output.status.success(), "{}", stderr_of(&output));
    let report = json_at(&dir.path().join("select_report.json"));
    let sel = &report["selections"][0];
    assert!(sel["cardinality"].as_u64().unwrap() <= 2);
    assert_eq!(sel["rank"], 1);
    for cand in report["candidates"].as_array().unwrap() {
        assert!(cand["support"].as_array().unwrap().len() <= 2);
        assert_eq!(cand["rank"], 1);
    }
}

#[test]
fn weak_data_scv_table_mixes_finite_scores_and_exclusions() {
    let dir = tempfile::tempdir().unwrap();
    let output = run(&[
        "select",
        "--x", fixture("weak_x.csv").to_str().unwrap(),
        "--y", fixture("weak_y.csv").to_str().unwrap(),
        "--methods", "5-SCV(plugin)",
        "--out", dir.path().to_str().unwrap(),
    ]);
    assert!(output.status.success(), "{}", stderr_of(&output));
    let report = json_at(&dir.path().join("select_report.json"));
    let scores = report["selections"][0]["scores"].as_array().unwrap();
    assert_eq!(scores.len(), report["candidates"].as_array().unwrap().len());
    let finite = scores.iter().filter(|c| !c["excluded"].as_bool().unwrap());
    let excluded = scores.iter().filter(|c| c["excluded"].as_bool().unwrap());
    // Complexity caps rule out the biggest cells on a 40×12, m=4 problem,
    // while plenty of small cells stay scorable.
    assert!(finite.clone().count() > 0);
    assert!(excluded.clone().count() > 0);
    for cell in finite {
        assert!(cell["value"].as_f64().unwrap().is_finite());
    }
    for cell in excluded {
        assert!(cell["value"].is_null());
    }
}

#[test]
fn conventional_cv_reports_no_per_candidate_scores() {
    let dir = tempfile::tempdir().unwrap();
    let output = run(&[
        "select",
        "--x", fixture("toy_x.csv").to_str().unwrap(),
        "--y", fixture("toy_y.csv").to_str().unwrap(),
        "--methods", "5-CV",
        "--out", dir.path().to_str().unwrap(),
    ]);
    assert!(output.status.success(), "{}", stderr_of(&output));
    let report = json_at(&dir.path().join("select_report.json"));
    assert!(report["selections"][0]["scores"].is_null());
}

#[test]
fn row_count_mismatch_is_a_data_error() {
    let dir = tempfile::tempdir().unwrap();
    let short_y = dir.path().join("short_y.csv");
    let full = fs::read_to_string(fixture("toy_y.csv")).unwrap();
    let head: Vec<&str> = full.lines().take(10).collect();
    fs::write(&short_y, head.join("\n")).unwrap();

    let output = run(&[
        "select",
        "--x", fixture("toy_x.csv").to_str().unwrap(),
        "--y", short_y.to_str().unwrap(),
    ]);
    assert_eq!(output.status.code(), Some(2));
    assert!(stderr_of(&output).contains("dimension mismatch"));
}

#[test]
fn malformed_cells_name_their_position() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.csv");
    fs::write(&bad, "a,b\n1.0,2.0\n3.0,oops\n").unwrap();
    let output = run(&["select", "--x", bad.to_str().unwrap(), "--y", bad.to_str().unwrap()]);
    assert_eq!(output.status.code(), Some(2));
    assert!(stderr_of(&output).contains("data row 2, column 2"));

    let nan = dir.path().join("nan.csv");
    fs::write(&nan, "a,b\n1.0,2.0\n3.0,NaN\n").unwrap();
    let output = run(&["select", "--x", nan.to_str().unwrap(), "--y", nan.to_str().unwrap()]);
    assert_eq!(output.status.code(), Some(2));
    assert!(stderr_of(&output).contains("non-finite"));
}

#[test]
fn usage_errors_exit_64_and_bad_methods_exit_2() {
    let output = run(&["frobnicate"]);
    assert_eq!(output.status.code(), Some(64));

    let output = run(&["select", "--y", "only_y.csv"]);
    assert_eq!(output.status.code(), Some(64), "missing --x is a usage error");

    let output = run(&[
        "select",
        "--x", fixture("toy_x.csv").to_str().unwrap(),
        "--y", fixture("toy_y.csv").to_str().unwrap(),
        "--methods", "PIQ",
    ]);
    assert_eq!(output.status.code(), Some(2));
    assert!(stderr_of(&output).contains("unknown method"));
}

#[test]
fn identity_report_closes_on_the_reference_design() {
    let dir = tempfile::tempdir().unwrap();
    let output = run(&[
        "identity",
        "--reps", "400",
        "--out", dir.path().to_str().unwrap(),
    ]);
    assert!(output.status.success(), "{}", stderr_of(&output));
    let doc = json_at(&dir.path().join("identity_report.json"));
    assert_eq!(doc["closes"], true);
    let d = doc["report"]["d_formula"].as_f64().unwrap();
    assert!((d - 6.947368421052632).abs() < 1e-12);
    assert_eq!(doc["report"]["u_formula"].as_f64().unwrap(), 0.0);
    assert_eq!(doc["config"]["variant"], "overfit");

    let output = run(&[
        "identity",
        "--underfit",
        "--reps", "400",
        "--out", dir.path().to_str().unwrap(),
    ]);
    assert!(output.status.success(), "{}", stderr_of(&output));
    let doc = json_at(&dir.path().join("identity_report.json"));
    assert_eq!(doc["closes"], true);
    assert!(doc["report"]["u_formula"].as_f64().unwrap() > 0.0);
}

#[test]
fn audit_csv_has_the_documented_columns() {
    let dir = tempfile::tempdir().unwrap();
    // Deterministic single-response data with a real sparse signal.
    let n = 30;
    let mut x_rows = String::from("x1,x2,x3,x4\n");
    let mut y_rows = String::from("y\n");
    for i in 0..n {
        let t = i as f64;
        let x = [
            (0.7 * t).sin(),
            (0.3 * t).cos(),
            (1.3 * t + 0.5).sin(),
            (0.9 * t + 1.1).cos(),
        ];
        let noise = (13.0 * t).sin() * 0.1;
        let y = 2.0 * x[0] - 1.5 * x[2] + noise;
        x_rows.push_str(&format!("{},{},{},{}\n", x[0], x[1], x[2], x[3]));
        y_rows.push_str(&format!("{y}\n"));
    }
    let x_path = dir.path().join("x.csv");
    let y_path = dir.path().join("y.csv");
    fs::write(&x_path, x_rows).unwrap();
    fs::write(&y_path, y_rows).unwrap();

    let output = run(&[
        "audit",
        "--x", x_path.to_str().unwrap(),
        "--y", y_path.to_str().unwrap(),
        "--lambdas", "8.0,2.0,0.5",
        "--out", dir.path().to_str().unwrap(),
    ]);
    assert!(output.status.success(), "{}", stderr_of(&output));
    let csv = fs::read_to_string(dir.path().join("audit.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("lambda,min_card,med_card,max_card"));
    assert_eq!(lines.count(), 3);
    let doc = json_at(&dir.path().join("audit_report.json"));
    assert_eq!(doc["rows"].as_array().unwrap().len(), 3);
    for row in doc["rows"].as_array().unwrap() {
        assert!(row["min_card"].as_u64().unwrap() <= row["max_card"].as_u64().unwrap());
    }

    // Two responses cannot be audited; that is an input error.
    let output = run(&[
        "audit",
        "--x", fixture("toy_x.csv").to_str().unwrap(),
        "--y", fixture("toy_y.csv").to_str().unwrap(),
    ]);
    assert_eq!(output.status.code(), Some(2));
}

#[test]
fn simulate_writes_one_log_row_per_method_and_replication() {
    let dir = tempfile::tempdir().unwrap();
    let output = run(&[
        "simulate",
        "--n", "30", "--p", "8", "--m", "2",
        "--j-true", "3", "--r-true", "1",
        "--b", "0.8", "--reps", "2",
        "--methods", "PIC,5-SCV(plugin)",
        "--out", dir.path().to_str().unwrap(),
    ]);
    assert!(output.status.success(), "{}", stderr_of(&output));
    let log = fs::read_to_string(dir.path().join("replications.csv")).unwrap();
    let mut lines = log.lines();
    assert_eq!(
        lines.next(),
        Some("rep,method,J_hat,r_hat,mse,m_rate,fa_rate,runtime_ms")
    );
    assert_eq!(lines.count(), 4);
    let doc = json_at(&dir.path().join("simulation_report.json"));
    assert_eq!(doc["summaries"].as_array().unwrap().len(), 2);
    assert_eq!(doc["records"].as_array().unwrap().len(), 4);
    assert_eq!(doc["failed_method_runs"], 0);
}

#[test]
fn bootstrap_counts_are_bounded_by_the_resamples() {
    let dir = tempfile::tempdir().unwrap();
    let output = run(&[
        "bootstrap",
        "--x", fixture("toy_x.csv").to_str().unwrap(),
        "--y", fixture("toy_y.csv").to_str().unwrap(),
        "--methods", "PIC",
        "--reps", "12",
        "--out", dir.path().to_str().unwrap(),
    ]);
    assert!(output.status.success(), "{}", stderr_of(&output));
    let doc = json_at(&dir.path().join("bootstrap_pic.json"));
    let report = &doc["report"];
    let total: u64 = report["j_counts"]
        .as_object()
        .unwrap()
        .values()
        .map(|v| v.as_u64().unwrap())
        .sum();
    assert!(total <= 12);
    assert_eq!(total, report["resamples"].as_u64().unwrap());
    let freq = report["selection_frequency"].as_array().unwrap();
    assert_eq!(freq.len(), 6);
    for f in freq {
        let f = f.as_f64().unwrap();
        assert!((0.0..=1.0).contains(&f));
    }
}
