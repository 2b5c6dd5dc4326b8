//! Repeated stratified cross-validation over all configured methods.

use std::collections::BTreeMap;
use std::time::Instant;

use asss_core::asss::{retrieve_subset, train_asss, SelectionMode, TraceRecord};
use asss_core::baselines::{budget_for_ratio, subsample, SubsampleMethod, SubsampleSpec};
use asss_core::dataio::{self, Dataset, FoldSplit};
use asss_core::{seed, Error};
use ndarray::{Array2, Axis};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::classifier;
use crate::config::{ExperimentConfig, Method};
use crate::error::{HarnessError, Result};
use crate::report::{
    aggregate, AsssTrace, CellResult, DatasetSummary, LambdaScore, LambdaTuning, ReportSettings,
    RunReport,
};

pub const WORKERS_ENV: &str = "ASSS_WORKERS";

/// Seeds for one experiment, all derived from the master seed and the identity
/// of what they drive, never from execution order.
#[derive(Debug, Clone, Copy)]
pub struct Seeds {
    pub master: u64,
}

impl Seeds {
    pub fn folds(&self, repeat: usize) -> u64 {
        seed::derive(self.master, &[seed::tag("folds"), repeat as u64])
    }

    /// Shared by every method of a (repeat, fold) so final classifiers start identically.
    pub fn classifier(&self, repeat: usize, fold: usize) -> u64 {
        seed::derive(
            self.master,
            &[seed::tag("classifier"), repeat as u64, fold as u64],
        )
    }

    pub fn method(&self, method: Method, repeat: usize, fold: usize) -> u64 {
        seed::derive(
            self.master,
            &[seed::tag(method.name()), repeat as u64, fold as u64],
        )
    }

    pub fn tuning(&self, repeat: usize) -> u64 {
        seed::derive(self.master, &[seed::tag("lambda-tuning"), repeat as u64])
    }
}

/// Row indices a method trained on, in original dataset numbering.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellSelection {
    pub method: Method,
    pub repeat: usize,
    pub fold: usize,
    pub test_indices: Vec<usize>,
    pub selected: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellTiming {
    pub method: Method,
    pub repeat: usize,
    pub fold: usize,
    pub seconds: f64,
}

#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub report: RunReport,
    pub timings: Vec<CellTiming>,
    pub selections: Vec<CellSelection>,
}

struct CellOutput {
    result: CellResult,
    seconds: f64,
    trace: Option<Vec<TraceRecord>>,
    selection: Option<CellSelection>,
}

fn thread_pool() -> Result<rayon::ThreadPool> {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Ok(v) = std::env::var(WORKERS_ENV) {
        let n: usize = v.parse().ok().filter(|&n| n >= 1).ok_or_else(|| {
            HarnessError::usage(format!("{WORKERS_ENV}={v} is not a positive count"))
        })?;
        builder = builder.num_threads(n);
    }
    builder
        .build()
        .map_err(|e| HarnessError::usage(format!("cannot start worker pool: {e}")))
}

/// Standardized train and test matrices, fitted on the train rows only.
pub fn standardize_split(
    dataset: &Dataset,
    split: &FoldSplit,
) -> asss_core::Result<(Dataset, Array2<f64>)> {
    let stats = dataio::fit_standardizer(dataset.features.view(), &split.train_indices)?;
    let train = dataset.select_rows(&split.train_indices);
    let train_x = dataio::apply_standardizer(train.features.view(), &stats)?;
    let test_x = dataio::apply_standardizer(
        dataset.features.select(Axis(0), &split.test_indices).view(),
        &stats,
    )?;
    Ok((train.with_features(train_x)?, test_x))
}

/// Picks training rows (indices into `train`) for one method.
pub fn select_rows(
    method: Method,
    train: &Dataset,
    budget: usize,
    config: &ExperimentConfig,
    lambda: f64,
    seed_value: u64,
) -> asss_core::Result<(Vec<usize>, Option<Vec<TraceRecord>>)> {
    let baseline = |m| {
        subsample(
            train,
            &SubsampleSpec {
                method: m,
                budget,
                seed: seed_value,
            },
        )
    };
    Ok(match method {
        Method::Full => ((0..train.len()).collect(), None),
        Method::Random => (baseline(SubsampleMethod::Random)?, None),
        Method::Kmeans => (baseline(SubsampleMethod::Kmeans)?, None),
        Method::NnThinning => (baseline(SubsampleMethod::NnThinning)?, None),
        Method::Asss => {
            let cfg = config.asss.to_core(train.len(), lambda, seed_value);
            let outcome = train_asss(train, &cfg)?;
            let sel = retrieve_subset(
                &outcome.selector,
                train.features.view(),
                SelectionMode::TopM(budget),
            )?;
            (sel.chosen, Some(outcome.trace))
        }
    })
}

fn check_selection(selected: &[usize], n: usize, expected: Option<usize>) -> asss_core::Result<()> {
    if let Some(m) = expected {
        if selected.len() != m {
            return Err(Error::InvalidInput(format!(
                "budget violated: selected {} rows, budget {m}",
                selected.len()
            )));
        }
    }
    let mut seen = vec![false; n];
    for &i in selected {
        if i >= n || seen[i] {
            return Err(Error::InvalidInput(format!(
                "selection holds invalid or repeated row {i}"
            )));
        }
        seen[i] = true;
    }
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn run_cell(
    dataset: &Dataset,
    split: &FoldSplit,
    config: &ExperimentConfig,
    seeds: Seeds,
    method: Method,
    repeat: usize,
    fold: usize,
    lambda: Option<f64>,
    record_selection: bool,
) -> CellOutput {
    let start = Instant::now();
    let mut result = CellResult {
        method,
        repeat,
        fold,
        train_size: split.train_indices.len(),
        test_size: split.test_indices.len(),
        subset_size: None,
        lambda: (method == Method::Asss).then_some(lambda).flatten(),
        metrics: None,
        error: None,
    };
    let mut trace = None;
    let mut selection = None;
    let outcome = (|| -> asss_core::Result<()> {
        let mut in_test = vec![false; dataset.len()];
        for &t in &split.test_indices {
            in_test[t] = true;
        }
        if split.train_indices.iter().any(|&t| in_test[t]) {
            return Err(Error::InvalidInput("train and test folds overlap".into()));
        }
        let (train, test_x) = standardize_split(dataset, split)?;
        let test_y: Vec<usize> = split
            .test_indices
            .iter()
            .map(|&i| dataset.labels[i])
            .collect();
        let budget = budget_for_ratio(train.len(), config.budget_ratio);
        let lambda = match (method, lambda) {
            (Method::Asss, None) => {
                return Err(Error::InvalidInput(
                    "no sparsity weight available for this repeat".into(),
                ))
            }
            (_, l) => l.unwrap_or(config.asss.lambda_sparsity),
        };
        let (rows, tr) = select_rows(
            method,
            &train,
            budget,
            config,
            lambda,
            seeds.method(method, repeat, fold),
        )?;
        trace = tr;
        check_selection(
            &rows,
            train.len(),
            (method != Method::Full).then_some(budget),
        )?;
        let global: Vec<usize> = rows.iter().map(|&r| split.train_indices[r]).collect();
        if global.iter().any(|&g| in_test[g]) {
            return Err(Error::InvalidInput(
                "selected rows leak into the test fold".into(),
            ));
        }
        if record_selection {
            selection = Some(CellSelection {
                method,
                repeat,
                fold,
                test_indices: split.test_indices.clone(),
                selected: global,
            });
        }
        result.subset_size = Some(rows.len());
        let x = train.features.select(Axis(0), &rows);
        let y: Vec<usize> = rows.iter().map(|&r| train.labels[r]).collect();
        let model = classifier::train_classifier(
            x.view(),
            &y,
            dataset.class_count,
            &config.final_classifier,
            seeds.classifier(repeat, fold),
        )?;
        result.metrics = Some(classifier::score(
            &model,
            test_x.view(),
            &test_y,
            dataset.class_count,
        )?);
        Ok(())
    })();
    if let Err(e) = outcome {
        result.error = Some(e.to_string());
        result.metrics = None;
    }
    CellOutput {
        result,
        seconds: start.elapsed().as_secs_f64(),
        trace,
        selection,
    }
}

/// Chooses λ for one repeat by validation macro-F at the target budget.
///
/// Uses the first fold's training rows of that repeat, split again into a
/// fitting part and a stratified validation slice.
pub fn tune_lambda(
    dataset: &Dataset,
    split: &FoldSplit,
    config: &ExperimentConfig,
    seeds: Seeds,
    repeat: usize,
) -> LambdaTuning {
    let base = seeds.tuning(repeat);
    let prepared = (|| -> asss_core::Result<(Dataset, Array2<f64>, Vec<usize>)> {
        let train_labels: Vec<usize> = split
            .train_indices
            .iter()
            .map(|&i| dataset.labels[i])
            .collect();
        let inner = dataio::stratified_holdout(
            &train_labels,
            dataset.class_count,
            config.validation_fraction,
            seed::derive(base, &[seed::tag("holdout")]),
        )?;
        let as_global = |rows: &[usize]| {
            rows.iter()
                .map(|&r| split.train_indices[r])
                .collect::<Vec<_>>()
        };
        let global = FoldSplit {
            train_indices: as_global(&inner.train_indices),
            test_indices: as_global(&inner.test_indices),
        };
        let (fit, val_x) = standardize_split(dataset, &global)?;
        let val_y = global
            .test_indices
            .iter()
            .map(|&i| dataset.labels[i])
            .collect();
        Ok((fit, val_x, val_y))
    })();
    let (fit, val_x, val_y) = match prepared {
        Ok(p) => p,
        Err(e) => {
            return LambdaTuning {
                repeat,
                scores: config
                    .lambda_grid
                    .iter()
                    .map(|&lambda| LambdaScore {
                        lambda,
                        validation_macro_f: None,
                        error: Some(e.to_string()),
                    })
                    .collect(),
                chosen: None,
            }
        }
    };
    let budget = budget_for_ratio(fit.len(), config.budget_ratio);
    let scores: Vec<LambdaScore> = config
        .lambda_grid
        .iter()
        .enumerate()
        .map(|(j, &lambda)| {
            let run = || -> asss_core::Result<f64> {
                let (rows, _) = select_rows(
                    Method::Asss,
                    &fit,
                    budget,
                    config,
                    lambda,
                    seed::derive(base, &[seed::tag("asss"), j as u64]),
                )?;
                let x = fit.features.select(Axis(0), &rows);
                let y: Vec<usize> = rows.iter().map(|&r| fit.labels[r]).collect();
                let model = classifier::train_classifier(
                    x.view(),
                    &y,
                    dataset.class_count,
                    &config.final_classifier,
                    seed::derive(base, &[seed::tag("classifier")]),
                )?;
                Ok(classifier::score(&model, val_x.view(), &val_y, dataset.class_count)?.macro_f)
            };
            match run() {
                Ok(f) => LambdaScore {
                    lambda,
                    validation_macro_f: Some(f),
                    error: None,
                },
                Err(e) => LambdaScore {
                    lambda,
                    validation_macro_f: None,
                    error: Some(e.to_string()),
                },
            }
        })
        .collect();
    // highest score wins; the earlier grid entry wins a tie
    let chosen = scores
        .iter()
        .filter_map(|s| s.validation_macro_f.map(|f| (s.lambda, f)))
        .fold(None::<(f64, f64)>, |best, (l, f)| match best {
            Some((_, bf)) if bf >= f => best,
            _ => Some((l, f)),
        })
        .map(|(l, _)| l);
    LambdaTuning {
        repeat,
        scores,
        chosen,
    }
}

pub fn summarize_dataset(dataset: &Dataset) -> DatasetSummary {
    DatasetSummary {
        name: dataset.source_name.clone(),
        rows: dataset.len(),
        features: dataset.dim(),
        classes: dataset.class_count,
        class_counts: dataset.class_counts(),
    }
}

/// Runs every (method, repeat, fold) cell on an already loaded dataset.
pub fn run_on_dataset(
    dataset: &Dataset,
    config: &ExperimentConfig,
    record_selections: bool,
) -> Result<RunOutcome> {
    config.validate()?;
    let methods = config.ordered_methods();
    let seeds = Seeds {
        master: config.master_seed,
    };
    let splits: Vec<Vec<FoldSplit>> = (0..config.repeats)
        .map(|r| dataio::stratified_kfold(dataset, config.folds, seeds.folds(r)))
        .collect::<asss_core::Result<_>>()?;
    let smallest_train = splits
        .iter()
        .flatten()
        .map(|s| s.train_indices.len())
        .min()
        .unwrap_or(0);
    if budget_for_ratio(smallest_train, config.budget_ratio) < dataset.class_count {
        return Err(HarnessError::Data(Error::InvalidInput(format!(
            "budget {} of {smallest_train} training rows cannot cover {} classes",
            budget_for_ratio(smallest_train, config.budget_ratio),
            dataset.class_count
        ))));
    }
    let pool = thread_pool()?;
    pool.install(|| {
        let tuning: Vec<LambdaTuning> = if methods.contains(&Method::Asss) && config.tune_lambda {
            (0..config.repeats)
                .into_par_iter()
                .map(|r| tune_lambda(dataset, &splits[r][0], config, seeds, r))
                .collect()
        } else {
            Vec::new()
        };
        let lambda_for = |repeat: usize| -> Option<f64> {
            if config.tune_lambda {
                tuning.get(repeat).and_then(|t| t.chosen)
            } else {
                Some(config.asss.lambda_sparsity)
            }
        };
        let mut cells: Vec<(Method, usize, usize)> = Vec::new();
        for r in 0..config.repeats {
            for f in 0..config.folds {
                cells.extend(methods.iter().map(|&m| (m, r, f)));
            }
        }
        let outputs: Vec<CellOutput> = cells
            .par_iter()
            .map(|&(m, r, f)| {
                let lambda = if m == Method::Asss {
                    lambda_for(r)
                } else {
                    None
                };
                run_cell(
                    dataset,
                    &splits[r][f],
                    config,
                    seeds,
                    m,
                    r,
                    f,
                    lambda,
                    record_selections,
                )
            })
            .collect();

        let mut results = Vec::with_capacity(outputs.len());
        let mut timings = Vec::with_capacity(outputs.len());
        let mut traces = BTreeMap::new();
        let mut selections = Vec::new();
        for out in outputs {
            let c = &out.result;
            timings.push(CellTiming {
                method: c.method,
                repeat: c.repeat,
                fold: c.fold,
                seconds: out.seconds,
            });
            if let Some(t) = out.trace {
                traces.insert((c.repeat, c.fold), t);
            }
            selections.extend(out.selection);
            results.push(out.result);
        }
        let (aggregates, prr) = aggregate(&results, &methods);
        let report = RunReport {
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            dataset: summarize_dataset(dataset),
            settings: ReportSettings {
                budget_ratio: config.budget_ratio,
                folds: config.folds,
                repeats: config.repeats,
                methods: methods.clone(),
                master_seed: config.master_seed,
                tune_lambda: config.tune_lambda,
                lambda_grid: config.lambda_grid.clone(),
                validation_fraction: config.validation_fraction,
                asss: config.asss.clone(),
                final_classifier: config.final_classifier.clone(),
            },
            lambda_tuning: tuning,
            cells: results,
            aggregates,
            prr,
            traces: traces
                .into_iter()
                .map(|((repeat, fold), records)| AsssTrace {
                    repeat,
                    fold,
                    records,
                })
                .collect(),
        };
        Ok(RunOutcome {
            report,
            timings,
            selections,
        })
    })
}

/// Loads the configured dataset and runs the experiment.
pub fn run_experiment(config: &ExperimentConfig) -> Result<RunOutcome> {
    config.validate()?;
    let dataset = config.dataset.load()?;
    run_on_dataset(&dataset, config, false)
}
