#![allow(dead_code)]

use std::path::{Path, PathBuf};

use asss_harness::synth;

/// Writes a small two-class mixture and a fast config into `dir`.
pub fn small_setup(dir: &Path, extra: &str) -> PathBuf {
    let ds = synth::gaussian_mixture(240, 3, 2, 3.0, 11).unwrap();
    synth::write_csv(&ds, &dir.join("mix.csv")).unwrap();
    let cfg = format!(
        r#"{{
  "dataset": {{"path": "mix.csv"}},
  "folds": 3,
  "repeats": 1,
  "lambda_grid": [0.01, 1.0],
  "asss": {{"epochs": 2, "batch_size": 32}},
  "final_classifier": {{"hidden": [16], "epochs": 5, "batch_size": 32, "lr": 0.01}},
  "output_dir": "out"{extra}
}}"#
    );
    let path = dir.join("config.json");
    std::fs::write(&path, cfg).unwrap();
    path
}
