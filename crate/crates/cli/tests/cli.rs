use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn root() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../..")
}

fn aspbench(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_aspbench"))
        .current_dir(root())
        .args(args)
        .output()
        .unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

fn gold(problem: &str) -> String {
    root()
        .join("problems")
        .join(problem)
        .join("gold.lp")
        .to_string_lossy()
        .into_owned()
}

fn copy_bundle(problem: &str, to: &Path) -> PathBuf {
    let src = root().join("problems").join(problem);
    let dst = to.join(problem);
    fs::create_dir_all(dst.join("instances")).unwrap();
    for dir in [&src, &src.join("instances")] {
        for e in fs::read_dir(dir).unwrap() {
            let e = e.unwrap();
            if e.file_type().unwrap().is_file() {
                let rel = e.path().strip_prefix(&src).unwrap().to_path_buf();
                fs::copy(e.path(), dst.join(rel)).unwrap();
            }
        }
    }
    dst
}

#[test]
fn evaluate_gold_model_based() {
    let out = tempfile::tempdir().unwrap();
    let o = aspbench(&[
        "evaluate",
        "--problem",
        "colorability",
        "--candidate",
        &gold("colorability"),
        "--metric",
        "model-based",
        "--out",
        out.path().to_str().unwrap(),
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let s = stdout(&o);
    assert!(s.contains("f1 1.000000"), "{s}");
    assert!(!s.contains("test-suite"), "{s}");
    assert!(out.path().join("evaluation-colorability.json").is_file());
}

#[test]
fn evaluate_both_metrics_in_one_report() {
    let out = tempfile::tempdir().unwrap();
    let o = aspbench(&[
        "evaluate",
        "--problem",
        "traveling_salesman",
        "--candidate",
        &gold("traveling_salesman"),
        "--metric",
        "both",
        "--out",
        out.path().to_str().unwrap(),
    ]);
    assert_eq!(code(&o), 0);
    let s = stdout(&o);
    assert!(s.contains("f1 1.000000") && s.contains("accuracy 1.000000"), "{s}");
    let report: serde_json::Value =
        serde_json::from_slice(&fs::read(out.path().join("evaluation-traveling_salesman.json")).unwrap()).unwrap();
    assert!(report.get("model_based").is_some_and(|v| !v.is_null()));
    assert!(report.get("test_suite").is_some_and(|v| !v.is_null()));
}

#[test]
fn evaluate_wrong_candidate_still_exits_zero() {
    let dir = tempfile::tempdir().unwrap();
    let cand = dir.path().join("c.lp");
    fs::write(&cand, "1 { chosenColor(N,C) : color(C) } 1 :- node(N).\n").unwrap();
    let o = aspbench(&[
        "evaluate",
        "--problem",
        "colorability",
        "--candidate",
        cand.to_str().unwrap(),
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(code(&o), 0);
    assert!(!stdout(&o).contains("f1 1.000000"));
}

#[test]
fn evaluate_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    let missing = aspbench(&[
        "evaluate",
        "--problem",
        "colorability",
        "--candidate",
        "/no/such.lp",
        "--out",
        out,
    ]);
    assert_eq!(code(&missing), 2);
    let unknown = aspbench(&[
        "evaluate",
        "--problem",
        "nope",
        "--candidate",
        &gold("colorability"),
        "--out",
        out,
    ]);
    assert_eq!(code(&unknown), 3);
    let no_solver = aspbench(&[
        "--solver",
        "/no/such/clingo",
        "evaluate",
        "--problem",
        "colorability",
        "--candidate",
        &gold("colorability"),
        "--out",
        out,
    ]);
    assert_eq!(code(&no_solver), 4);
}

#[test]
fn every_subcommand_documents_its_flags() {
    for (sub, flag) in [
        ("evaluate", "--candidate"),
        ("pipeline", "--workers"),
        ("validate", "--mutants"),
        ("record-fixtures", "--runs"),
    ] {
        let o = aspbench(&[sub, "--help"]);
        assert_eq!(code(&o), 0);
        let s = stdout(&o);
        for f in [flag, "--dataset", "--solver"] {
            assert!(s.contains(f), "{sub} --help lacks {f}");
        }
        let bad = aspbench(&[sub, "--no-such-flag"]);
        assert_eq!(code(&bad), 2, "{sub}");
    }
}

#[test]
fn validate_shipped_bundle_passes() {
    let out = tempfile::tempdir().unwrap();
    let o = aspbench(&[
        "validate",
        "--problem",
        "colorability",
        "--out",
        out.path().to_str().unwrap(),
    ]);
    assert_eq!(code(&o), 0, "{}", stdout(&o));
    assert!(out.path().join("validation-colorability.json").is_file());
}

#[test]
fn validate_weakened_suite_fails() {
    let dir = tempfile::tempdir().unwrap();
    let bundle = copy_bundle("colorability", dir.path());
    let suite = fs::read_to_string(bundle.join("tests.suite.lp")).unwrap();
    // Keep only the first case: it checks unsatisfiability and nothing else.
    let first: String = suite.split("%@test(").nth(1).map(|c| format!("%@test({c}")).unwrap();
    fs::write(bundle.join("tests.suite.lp"), first).unwrap();
    let o = aspbench(&[
        "--dataset",
        dir.path().to_str().unwrap(),
        "validate",
        "--problem",
        "colorability",
        "--out",
        dir.path().join("out").to_str().unwrap(),
    ]);
    assert_eq!(code(&o), 1, "{}", stdout(&o));
    assert!(stdout(&o).contains("survivor"));
}

#[test]
fn validate_gold_failing_its_suite_is_a_dataset_error() {
    let dir = tempfile::tempdir().unwrap();
    let bundle = copy_bundle("colorability", dir.path());
    fs::write(
        bundle.join("tests.suite.lp"),
        "%@test(name=isolated)\nnode(1..3). color(red).\n%@noAnswerSet\n",
    )
    .unwrap();
    let o = aspbench(&[
        "--dataset",
        dir.path().to_str().unwrap(),
        "validate",
        "--problem",
        "colorability",
        "--out",
        dir.path().join("out").to_str().unwrap(),
    ]);
    assert_eq!(code(&o), 3);
}

fn pipeline(out: &Path, extra: &[&str]) -> Output {
    let mut args = vec!["pipeline", "--problems", "colorability", "--out", out.to_str().unwrap()];
    args.extend_from_slice(extra);
    aspbench(&args)
}

#[test]
fn pipeline_on_one_problem_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    let o = pipeline(&a, &["--workers", "4"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert!(stdout(&o).contains("cells: 15 completed"), "{}", stdout(&o));
    assert_eq!(code(&pipeline(&b, &["--workers", "1"])), 0);
    for f in [
        "cells.csv",
        "summary.json",
        "figures/bars_with_ci.csv",
        "figures/metric_diff_bars.csv",
    ] {
        assert_eq!(fs::read(a.join(f)).unwrap(), fs::read(b.join(f)).unwrap(), "{f}");
    }
    let timing = fs::read_to_string(a.join("figures/timing_bars.csv")).unwrap();
    let rows: Vec<&str> = timing.lines().skip(1).collect();
    assert_eq!(rows.len(), 2);
    for r in rows {
        let ms: f64 = r.split(',').nth(3).unwrap().parse().unwrap();
        assert!(ms > 0.0, "{r}");
    }
}

#[test]
fn pipeline_config_file_and_flag_precedence() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.toml");
    fs::write(
        &cfg,
        "runs = 3\nvariants = [\"original\"]\nproblems = [\"dominating_set\"]\nmetrics = [\"test_suite\"]\n",
    )
    .unwrap();
    let out = dir.path().join("out");
    let o = aspbench(&[
        "pipeline",
        "--config",
        cfg.to_str().unwrap(),
        "--runs",
        "2",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let summary: serde_json::Value = serde_json::from_slice(&fs::read(out.join("summary.json")).unwrap()).unwrap();
    assert_eq!(summary["cells"], 2);
    assert_eq!(summary["problems"], serde_json::json!(["dominating_set"]));
    assert_eq!(summary["metrics"], serde_json::json!(["test_suite"]));

    fs::write(&cfg, "runz = 3\n").unwrap();
    let bad = aspbench(&[
        "pipeline",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(code(&bad), 2);
}

#[test]
fn pipeline_usage_and_endpoint_errors() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    assert_eq!(code(&pipeline(&out, &["--variants", "original,paraphrase9"])), 2);
    assert_eq!(code(&pipeline(&out, &["--runs", "0"])), 2);
    assert_eq!(code(&pipeline(&out, &["--fixtures", "/no/such/dir"])), 5);
    assert_eq!(code(&pipeline(&out, &["--mode", "live"])), 2);
}
