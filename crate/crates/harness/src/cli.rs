//! Command-line front end.

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use asss_core::baselines::budget_for_ratio;
use asss_core::dataio::{self, FoldSplit};
use asss_core::gradcheck;
use asss_core::metrics::{self, PredictionSet};
use clap::{Parser, Subcommand};
use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::config::{ExperimentConfig, Method};
use crate::error::{HarnessError, Result};
use crate::experiment::{self, Seeds};
use crate::report::{self, to_json};

#[derive(Debug, Parser)]
#[command(name = "asss", version, about = "Task-aware subsampling benchmark")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run a full cross-validation experiment and write reports.
    Run {
        config: PathBuf,
        /// Also write the selected row indices of every cell to selections.json.
        #[arg(long)]
        record_selections: bool,
    },
    /// Select a subset of the whole (standardized) dataset and write its indices.
    Subsample {
        config: PathBuf,
        #[arg(long)]
        method: String,
        #[arg(long)]
        out: PathBuf,
    },
    /// Compute metrics for stored predictions.
    Evaluate {
        #[arg(long)]
        preds: PathBuf,
    },
    /// Run the finite-difference gradient suites.
    Gradcheck,
    /// Print the version.
    Version,
}

/// Stored predictions for `evaluate`.
#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PredictionsFile {
    pub true_labels: Vec<usize>,
    pub class_scores: Vec<Vec<f64>>,
    #[serde(default)]
    pub class_count: Option<usize>,
}

#[derive(Debug, Serialize)]
struct SubsampleOutput<'a> {
    method: Method,
    dataset: &'a str,
    rows: usize,
    budget: usize,
    indices: Vec<usize>,
}

fn write_file(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|source| HarnessError::Output {
        path: path.to_path_buf(),
        source,
    })
}

fn cmd_run(config: &Path, record_selections: bool) -> Result<i32> {
    let cfg = ExperimentConfig::load(config)?;
    let dataset = cfg.dataset.load()?;
    eprintln!(
        "dataset {}: {} rows, {} features, {} classes",
        dataset.source_name,
        dataset.len(),
        dataset.dim(),
        dataset.class_count
    );
    let outcome = experiment::run_on_dataset(&dataset, &cfg, record_selections)?;
    let written = report::emit_reports(&outcome.report, &cfg.output_dir)?;
    write_file(
        &cfg.output_dir.join("timings.json"),
        &to_json(&outcome.timings),
    )?;
    if record_selections {
        write_file(
            &cfg.output_dir.join("selections.json"),
            &to_json(&outcome.selections),
        )?;
    }
    for agg in &outcome.report.aggregates {
        let line: Vec<String> = agg
            .metrics
            .iter()
            .map(|m| format!("{} {:.4}±{:.4}", m.metric, m.mean, m.std))
            .collect();
        let prr = outcome
            .report
            .prr_value(agg.method, "macro_f")
            .map(|p| format!(" prr(macro_f) {p:.4}"))
            .unwrap_or_default();
        println!(
            "{:<12} {}{prr} [{} ok, {} failed]",
            agg.method.name(),
            line.join(" "),
            agg.runs,
            agg.failed
        );
    }
    for path in written {
        eprintln!("wrote {}", path.display());
    }
    let mut failed = outcome.report.failed_cells().peekable();
    if failed.peek().is_none() {
        return Ok(0);
    }
    let mut numerical = false;
    for c in failed {
        let msg = c.error.as_deref().unwrap_or("");
        numerical |= msg.starts_with("non-finite");
        eprintln!(
            "cell {} repeat {} fold {} failed: {msg}",
            c.method, c.repeat, c.fold
        );
    }
    Ok(if numerical { 3 } else { 2 })
}

fn cmd_subsample(config: &Path, method: &str, out: &Path) -> Result<i32> {
    let method = Method::parse(method)
        .filter(|m| *m != Method::Full)
        .ok_or_else(|| HarnessError::usage(format!("unknown subsampling method '{method}'")))?;
    let cfg = ExperimentConfig::load(config)?;
    let dataset = cfg.dataset.load()?;
    let all = FoldSplit {
        train_indices: (0..dataset.len()).collect(),
        test_indices: Vec::new(),
    };
    let stats = dataio::fit_standardizer(dataset.features.view(), &all.train_indices)?;
    let standardized =
        dataset.with_features(dataio::apply_standardizer(dataset.features.view(), &stats)?)?;
    let budget = budget_for_ratio(dataset.len(), cfg.budget_ratio);
    let seeds = Seeds {
        master: cfg.master_seed,
    };
    let (indices, _) = experiment::select_rows(
        method,
        &standardized,
        budget,
        &cfg,
        cfg.asss.lambda_sparsity,
        seeds.method(method, usize::MAX, usize::MAX),
    )?;
    let text = to_json(&SubsampleOutput {
        method,
        dataset: &dataset.source_name,
        rows: dataset.len(),
        budget,
        indices,
    });
    write_file(out, &text)?;
    eprintln!("wrote {} indices to {}", budget, out.display());
    Ok(0)
}

fn cmd_evaluate(preds: &Path) -> Result<i32> {
    let text = std::fs::read_to_string(preds).map_err(|e| {
        HarnessError::Data(asss_core::Error::Io {
            path: preds.to_path_buf(),
            source: e,
        })
    })?;
    let file: PredictionsFile = serde_json::from_str(&text).map_err(|e| {
        HarnessError::Data(asss_core::Error::Parse {
            path: preds.to_path_buf(),
            line: e.line(),
            message: e.to_string(),
        })
    })?;
    let k = file.class_scores.first().map(Vec::len).unwrap_or(0);
    if file.class_scores.iter().any(|r| r.len() != k) {
        return Err(HarnessError::Data(asss_core::Error::DimensionMismatch(
            "class_scores rows differ in length".into(),
        )));
    }
    let scores = Array2::from_shape_vec(
        (file.class_scores.len(), k),
        file.class_scores.into_iter().flatten().collect(),
    )
    .expect("rectangular by construction");
    let set = PredictionSet::from_scores(file.true_labels, scores)?;
    let report = metrics::evaluate(&set, file.class_count.unwrap_or(k))?;
    print!("{}", to_json(&report));
    Ok(0)
}

fn cmd_gradcheck() -> Result<i32> {
    let reports = gradcheck::run_all()?;
    let mut ok = true;
    for r in &reports {
        ok &= r.passed;
        println!(
            "{} {:<60} max rel err {:.3e} (tol {:.0e}, {} partials)",
            if r.passed { "PASS" } else { "FAIL" },
            r.name,
            r.max_rel_error,
            r.tolerance,
            r.params_checked
        );
    }
    Ok(if ok { 0 } else { 3 })
}

/// Parses `args` (including the program name) and runs the command.
/// Returns the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
        }
    };
    let result = match cli.command {
        Command::Run {
            config,
            record_selections,
        } => cmd_run(&config, record_selections),
        Command::Subsample {
            config,
            method,
            out,
        } => cmd_subsample(&config, &method, &out),
        Command::Evaluate { preds } => cmd_evaluate(&preds),
        Command::Gradcheck => cmd_gradcheck(),
        Command::Version => {
            println!("asss {}", env!("CARGO_PKG_VERSION"));
            Ok(0)
        }
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
