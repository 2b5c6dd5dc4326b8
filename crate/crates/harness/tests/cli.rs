mod common;

use std::process::{Command, Output};

fn asss(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_asss"))
        .args(args)
        .env("ASSS_WORKERS", "1")
        .output()
        .expect("binary runs")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn version_and_help_exit_zero() {
    let v = asss(&["version"]);
    assert_eq!(v.status.code(), Some(0));
    assert!(String::from_utf8_lossy(&v.stdout).starts_with("asss "));
    assert_eq!(asss(&["--help"]).status.code(), Some(0));
}

#[test]
fn bad_usage_exits_one() {
    assert_eq!(asss(&[]).status.code(), Some(1));
    assert_eq!(asss(&["frobnicate"]).status.code(), Some(1));
    assert_eq!(asss(&["run"]).status.code(), Some(1));
}

#[test]
fn gradcheck_passes() {
    let o = asss(&["gradcheck"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let text = String::from_utf8_lossy(&o.stdout);
    assert!(text.lines().count() >= 8);
    assert!(text.lines().all(|l| l.starts_with("PASS")));
}

#[test]
fn missing_dataset_names_the_path() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("c.json");
    std::fs::write(&cfg, r#"{"dataset": {"path": "nowhere/shuttle.dat"}}"#).unwrap();
    let o = asss(&["run", cfg.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("nowhere/shuttle.dat"), "{}", stderr(&o));
}

#[test]
fn invalid_config_exits_one() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("c.json");
    std::fs::write(&cfg, r#"{"dataset": {"path": "x.csv"}, "folds": 1}"#).unwrap();
    assert_eq!(asss(&["run", cfg.to_str().unwrap()]).status.code(), Some(1));
    std::fs::write(&cfg, r#"{"dataset": {"path": "x.csv"}, "bogus": 1}"#).unwrap();
    assert_eq!(asss(&["run", cfg.to_str().unwrap()]).status.code(), Some(1));
}

#[test]
fn malformed_data_exits_two_with_line() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("bad.csv"), "a,b,class\n1,2,x\n3,oops,y\n").unwrap();
    let cfg = dir.path().join("c.json");
    std::fs::write(&cfg, r#"{"dataset": {"path": "bad.csv"}}"#).unwrap();
    let o = asss(&["run", cfg.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("bad.csv"), "{}", stderr(&o));
}

#[test]
fn subsample_is_deterministic_and_sized() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = common::small_setup(dir.path(), "");
    for method in ["random", "kmeans", "nn-thinning", "asss"] {
        let a = dir.path().join(format!("{method}-a.json"));
        let b = dir.path().join(format!("{method}-b.json"));
        for out in [&a, &b] {
            let o = asss(&[
                "subsample",
                cfg.to_str().unwrap(),
                "--method",
                method,
                "--out",
                out.to_str().unwrap(),
            ]);
            assert_eq!(o.status.code(), Some(0), "{method}: {}", stderr(&o));
        }
        let ta = std::fs::read_to_string(&a).unwrap();
        assert_eq!(ta, std::fs::read_to_string(&b).unwrap(), "{method}");
        let v: serde_json::Value = serde_json::from_str(&ta).unwrap();
        let idx: Vec<u64> = v["indices"]
            .as_array()
            .unwrap()
            .iter()
            .map(|x| x.as_u64().unwrap())
            .collect();
        assert_eq!(idx.len(), 72, "{method}");
        assert!(idx.windows(2).all(|w| w[0] < w[1]));
        assert!(idx.iter().all(|&i| i < 240));
    }
    let o = asss(&[
        "subsample",
        cfg.to_str().unwrap(),
        "--method",
        "full",
        "--out",
        "/dev/null",
    ]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn evaluate_reports_metrics() {
    let dir = tempfile::tempdir().unwrap();
    let preds = dir.path().join("p.json");
    std::fs::write(
        &preds,
        r#"{"true_labels": [0, 0, 1, 1], "class_scores": [[0.9, 0.1], [0.4, 0.6], [0.35, 0.65], [0.2, 0.8]]}"#,
    )
    .unwrap();
    let o = asss(&["evaluate", "--preds", preds.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(v["accuracy"].as_f64().unwrap(), 0.75);
    assert!((v["macro_f"].as_f64().unwrap() - 11.0 / 15.0).abs() < 1e-12);
    assert_eq!(v["macro_auc"].as_f64().unwrap(), 1.0);
}

#[test]
fn run_writes_all_reports() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = common::small_setup(dir.path(), "");
    let o = asss(&["run", cfg.to_str().unwrap(), "--record-selections"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    for f in [
        "report.json",
        "summary.csv",
        "prr_bars.csv",
        "trace_asss.csv",
        "timings.json",
        "selections.json",
    ] {
        assert!(dir.path().join("out").join(f).is_file(), "{f}");
    }
    let stdout = String::from_utf8_lossy(&o.stdout);
    for m in ["full", "random", "kmeans", "nn-thinning", "asss"] {
        assert!(stdout.lines().any(|l| l.starts_with(m)), "{m}");
    }
}
