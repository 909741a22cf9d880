use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn mvmc(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mvmc"))
        .args(args)
        .current_dir(cwd)
        .output()
        .expect("spawn mvmc")
}

fn ok(args: &[&str], cwd: &Path) -> Value {
    let out = mvmc(args, cwd);
    assert!(out.status.success(), "{args:?} failed: {}", String::from_utf8_lossy(&out.stderr));
    serde_json::from_slice(&out.stdout).expect("json summary")
}

fn error_record(args: &[&str], cwd: &Path) -> (i32, Value) {
    let out = mvmc(args, cwd);
    assert!(!out.status.success(), "{args:?} unexpectedly succeeded");
    let err: Value = serde_json::from_slice(&out.stderr).expect("json error record");
    (out.status.code().unwrap(), err["error"].clone())
}

fn read_json(p: impl AsRef<Path>) -> Value {
    serde_json::from_str(&fs::read_to_string(p).unwrap()).unwrap()
}

fn synth_small(dir: &Path, name: &str, loss: &str) {
    ok(
        &["synth", "--n", "30", "--d1", "12", "--d2", "8", "--seed", "3", "--second-view-loss", loss, "--out", name],
        dir,
    );
}

fn numeric_files(dir: &Path) -> Vec<PathBuf> {
    let mut files: Vec<PathBuf> = fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.is_file() && !p.ends_with("meta.json") && !p.ends_with("timing.csv") && !p.ends_with("bench.json"))
        .collect();
    files.sort();
    files
}

fn assert_rerun_identical(dir: &Path, run: &str) {
    let first = dir.join(run);
    let again = dir.join(format!("{run}-again"));
    ok(&["rerun", "--meta", first.join("meta.json").to_str().unwrap(), "--out", again.to_str().unwrap()], dir);
    let files = numeric_files(&first);
    assert!(!files.is_empty());
    for f in files {
        let copy = again.join(f.file_name().unwrap());
        assert_eq!(fs::read(&f).unwrap(), fs::read(&copy).unwrap(), "{} differs on rerun", f.display());
    }
}

#[test]
fn synth_solve_eval_pipeline() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    ok(&["synth", "--n", "40", "--d1", "20", "--d2", "20", "--seed", "7", "--noise-sd", "0.1", "--out", "data"], dir);
    for f in ["view1.coo", "view2.coo", "view1_test.coo", "view2_test.coo", "truth/x0.csv", "truth/s2.csv", "truth/y1.csv", "meta.json"] {
        assert!(dir.join("data").join(f).exists(), "missing {f}");
    }
    let fit = ok(&["solve", "--views", "data/view1.coo", "data/view2.coo", "--model", "JLR", "--lambda", "0.3", "--alpha", "0.3", "--out", "fit"], dir);
    assert!(fit["final_objective"].as_f64().unwrap().is_finite());
    for f in ["x0.csv", "x1.csv", "x2.csv", "s1.csv", "s2.csv", "pred1.csv", "pred2.csv", "trace.csv", "timing.csv", "meta.json"] {
        assert!(dir.join("fit").join(f).exists(), "missing {f}");
    }
    let trace = fs::read_to_string(dir.join("fit/trace.csv")).unwrap();
    assert_eq!(trace.lines().count(), fit["iterations_run"].as_u64().unwrap() as usize + 1);

    let metrics = ok(
        &["eval", "--pred", "fit/pred1.csv", "fit/pred2.csv", "--test", "data/view1_test.coo", "data/view2_test.coo", "--out", "ev"],
        dir,
    );
    assert_eq!(metrics, read_json(dir.join("ev/metrics.json")));
    for v in metrics["views"].as_array().unwrap() {
        let e = v["test_error_pct"].as_f64().unwrap();
        assert!(e > 0.0 && e < 50.0, "test error {e}");
    }
    assert!(dir.join("ev/meta.json").exists());
}

#[test]
fn meta_records_the_full_configuration() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    synth_small(dir, "data", "squared");
    ok(
        &["solve", "--views", "data/view1.coo", "data/view2.coo", "--model", "JL0", "--solver", "apg", "--seed", "11", "--rho", "1.3", "--out", "fit"],
        dir,
    );
    let meta = read_json(dir.join("fit/meta.json"));
    assert_eq!(meta["command"], "solve");
    assert_eq!(meta["model"], "JL0");
    assert_eq!(meta["solver"], "apg");
    assert_eq!(meta["seed"], 11);
    assert_eq!(meta["admm"]["rho"], 1.3);
    assert_eq!(meta["apg"]["max_iters"], 2000);
    assert_eq!(meta["spec"]["robust"], false);
    assert!(meta["output_dir"].as_str().unwrap().ends_with("fit"));
    assert_eq!(meta["inputs"]["paths"].as_array().unwrap().len(), 2);

    let synth = read_json(dir.join("data/meta.json"));
    assert_eq!(synth["synth"]["seed"], 3);
    assert_eq!(synth["synth"]["n"], 30);
}

#[test]
fn reruns_reproduce_numeric_outputs_exactly() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    synth_small(dir, "data", "logistic");
    assert_rerun_identical(dir, "data");
    ok(&["solve", "--views", "data/view1.coo", "data/view2.coo", "--out", "admm"], dir);
    assert_rerun_identical(dir, "admm");
    ok(&["solve", "--views", "data/view1.coo", "data/view2.coo", "--solver", "apg", "--out", "apg"], dir);
    assert_rerun_identical(dir, "apg");
    ok(
        &["tune", "--views", "data/view1.coo", "data/view2.coo", "--model", "JLR", "--mode", "gfo", "--budget", "8", "--holdout", "0.2", "--outer-iters", "5", "--inner-iters", "2", "--seed", "4", "--out", "gfo"],
        dir,
    );
    assert_rerun_identical(dir, "gfo");
}

#[test]
fn grid_tuning_writes_one_row_per_cell() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    synth_small(dir, "data", "squared");
    let best = ok(
        &["tune", "--views", "data/view1.coo", "data/view2.coo", "--model", "JL0", "--folds", "2", "--outer-iters", "5", "--inner-iters", "2", "--out", "grid"],
        dir,
    );
    let scores = fs::read_to_string(dir.join("grid/scores.csv")).unwrap();
    let mut lines = scores.lines();
    assert_eq!(lines.next().unwrap(), "index,lambda,c,score,error");
    let rows: Vec<Vec<&str>> = lines.map(|l| l.split(',').collect()).collect();
    assert_eq!(rows.len(), 45);
    let min = rows.iter().map(|r| r[3].parse::<f64>().unwrap()).fold(f64::INFINITY, f64::min);
    assert_eq!(best["score"].as_f64().unwrap(), min);
    assert_eq!(read_json(dir.join("grid/best.json")), best);

    ok(
        &["tune", "--views", "data/view1.coo", "data/view2.coo", "--model", "JLR", "--lambda-grid", "0.1,1", "--c-grid", "0.5", "--alpha-grid", "1,10", "--folds", "2", "--outer-iters", "5", "--inner-iters", "2", "--out", "custom"],
        dir,
    );
    let custom = fs::read_to_string(dir.join("custom/scores.csv")).unwrap();
    assert_eq!(custom.lines().count(), 1 + 2 * 2 * 2);
}

#[test]
fn bench_objectives_are_monotone_after_burn_in() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    synth_small(dir, "data", "squared");
    ok(&["bench", "--views", "data/view1.coo", "data/view2.coo", "--out", "bench"], dir);
    let body = fs::read_to_string(dir.join("bench/bench.csv")).unwrap();
    let mut lines = body.lines();
    assert_eq!(lines.next().unwrap(), "iteration,admm_seconds,admm_objective,apg_seconds,apg_objective");
    let rows: Vec<Vec<String>> = lines.map(|l| l.split(',').map(str::to_string).collect()).collect();
    for col in [2, 4] {
        let values: Vec<f64> = rows.iter().filter(|r| !r[col].is_empty()).map(|r| r[col].parse().unwrap()).collect();
        assert!(values.len() > 3);
        for w in values.windows(2).skip(3) {
            assert!(w[1] <= w[0] * (1.0 + 1e-6), "column {col} rose from {} to {}", w[0], w[1]);
        }
    }
    let summary = read_json(dir.join("bench/bench.json"));
    let admm = summary["admm"]["final_objective"].as_f64().unwrap();
    let apg = summary["apg"]["final_objective"].as_f64().unwrap();
    assert!((admm - apg).abs() <= 1e-3 * apg.abs());
}

#[test]
fn multilabel_inputs_round_trip_through_eval() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    let feats: String = (0..24).map(|i| format!("{},{},{}\n", i % 5, (i * 7) % 3, i % 2)).collect();
    let labels: String = (0..24).map(|i| format!("{},{}\n", i % 2, (i / 3) % 2)).collect();
    fs::write(dir.join("f.csv"), feats).unwrap();
    fs::write(dir.join("l.csv"), labels).unwrap();
    ok(&["solve", "--features", "f.csv", "--labels", "l.csv", "--observed-fraction", "0.7", "--seed", "2", "--out", "fit"], dir);
    let metrics = ok(
        &["eval", "--pred", "fit/pred1.csv", "fit/pred2.csv", "--test", "fit/view1_test.coo", "fit/view2_test.coo", "--out", "ev"],
        dir,
    );
    let views = metrics["views"].as_array().unwrap();
    assert!(views[0]["test_error_pct"].is_number());
    let label_err = views[1]["label_error_pct"].as_f64().unwrap();
    assert!((0.0..=100.0).contains(&label_err));
    assert_rerun_identical(dir, "fit");
}

#[test]
fn dense_csv_views_are_fully_observed() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    let a: String = (0..4).map(|i| format!("{},{},{},{},{}\n", i, i + 1, i + 2, i + 3, i + 4)).collect();
    let b: String = (0..3).map(|i| format!("{},{},{},{},{}\n", -i, 1, i * 2, 0, 3)).collect();
    fs::write(dir.join("a.csv"), a).unwrap();
    fs::write(dir.join("b.csv"), b).unwrap();
    ok(&["solve", "--views", "a.csv", "b.csv", "--model", "J0R", "--weights", "1,0.5", "--out", "fit"], dir);
    assert!(dir.join("fit/x0.csv").exists());
    assert!(!dir.join("fit/x1.csv").exists());
    let meta = read_json(dir.join("fit/meta.json"));
    assert_eq!(meta["inputs"]["weights"], serde_json::json!([1.0, 0.5]));
}

#[test]
fn failures_emit_machine_readable_records() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    fs::write(dir.join("bad.coo"), "3 4 squared\n0 0 1.0\n9 0 2.0\n").unwrap();
    synth_small(dir, "data", "squared");

    let (code, err) = error_record(&["solve", "--views", "missing.coo", "--out", "x"], dir);
    assert_eq!((code, err["kind"].as_str().unwrap()), (1, "io-error"));

    let (_, err) = error_record(&["solve", "--views", "bad.coo", "--out", "x"], dir);
    assert_eq!(err["kind"], "parse-error");
    assert!(err["message"].as_str().unwrap().contains(":3:"));

    let (_, err) = error_record(&["solve", "--views", "data/view1.coo", "data/view2.coo", "--model", "XYZ", "--out", "x"], dir);
    assert_eq!(err["kind"], "invalid-argument");

    let (_, err) = error_record(&["solve", "--views", "data/view1.coo", "data/view2.coo", "--alpha", "1,2,3", "--out", "x"], dir);
    assert_eq!(err["kind"], "invalid-argument");

    let (_, err) = error_record(&["tune", "--views", "data/view1.coo", "data/view2.coo", "--metric", "label-error:3", "--out", "x"], dir);
    assert_eq!(err["kind"], "invalid-argument");

    let (_, err) = error_record(&["eval", "--pred", "data/truth/y1.csv", "--test", "data/view2_test.coo", "--out", "x"], dir);
    assert_eq!(err["kind"], "dimension-mismatch");

    let (code, err) = error_record(&["frobnicate"], dir);
    assert_eq!((code, err["kind"].as_str().unwrap()), (2, "usage"));
}
