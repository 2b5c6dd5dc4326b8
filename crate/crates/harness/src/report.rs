//! Run reports: per-cell results, aggregates, retention ratios and file output.

use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use asss_core::asss::TraceRecord;
use asss_core::fmt_f64;
use asss_core::metrics::MetricsReport;
use serde::{Deserialize, Serialize};

use crate::config::{AsssSection, ClassifierConfig, Method};
use crate::error::{HarnessError, Result};

/// Outcome of one (method, repeat, fold) cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellResult {
    pub method: Method,
    pub repeat: usize,
    pub fold: usize,
    pub train_size: usize,
    pub test_size: usize,
    /// Rows the final classifier was trained on.
    pub subset_size: Option<usize>,
    /// Sparsity weight used (ASSS only).
    pub lambda: Option<f64>,
    pub metrics: Option<MetricsReport>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LambdaScore {
    pub lambda: f64,
    pub validation_macro_f: Option<f64>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LambdaTuning {
    pub repeat: usize,
    pub scores: Vec<LambdaScore>,
    pub chosen: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AsssTrace {
    pub repeat: usize,
    pub fold: usize,
    pub records: Vec<TraceRecord>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricStat {
    pub metric: String,
    pub mean: f64,
    /// Sample standard deviation (0 for a single run).
    pub std: f64,
    pub min: f64,
    pub max: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodAggregate {
    pub method: Method,
    pub runs: usize,
    pub failed: usize,
    pub metrics: Vec<MetricStat>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PrrStat {
    pub metric: String,
    /// Mean over (repeat, fold) of the per-fold ratio against `full`.
    pub per_fold_mean: Option<f64>,
    /// Ratio of the method's mean to the `full` mean.
    pub of_means: Option<f64>,
    pub pairs: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodPrr {
    pub method: Method,
    pub metrics: Vec<PrrStat>,
}

/// The settings that determine the results; paths are left out so that the same
/// experiment written to two places yields identical reports.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportSettings {
    pub budget_ratio: f64,
    pub folds: usize,
    pub repeats: usize,
    pub methods: Vec<Method>,
    pub master_seed: u64,
    pub tune_lambda: bool,
    pub lambda_grid: Vec<f64>,
    pub validation_fraction: f64,
    pub asss: AsssSection,
    pub final_classifier: ClassifierConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetSummary {
    pub name: String,
    pub rows: usize,
    pub features: usize,
    pub classes: usize,
    pub class_counts: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub tool_version: String,
    pub dataset: DatasetSummary,
    pub settings: ReportSettings,
    pub lambda_tuning: Vec<LambdaTuning>,
    pub cells: Vec<CellResult>,
    pub aggregates: Vec<MethodAggregate>,
    pub prr: Vec<MethodPrr>,
    #[serde(default)]
    pub traces: Vec<AsssTrace>,
}

impl RunReport {
    pub fn aggregate_for(&self, method: Method) -> Option<&MethodAggregate> {
        self.aggregates.iter().find(|a| a.method == method)
    }

    pub fn prr_for(&self, method: Method) -> Option<&MethodPrr> {
        self.prr.iter().find(|p| p.method == method)
    }

    /// Mean of `metric` for `method`, if any run succeeded.
    pub fn mean(&self, method: Method, metric: &str) -> Option<f64> {
        self.aggregate_for(method)?
            .metrics
            .iter()
            .find(|m| m.metric == metric)
            .map(|m| m.mean)
    }

    /// Per-fold PRR of `metric` for `method`.
    pub fn prr_value(&self, method: Method, metric: &str) -> Option<f64> {
        self.prr_for(method)?
            .metrics
            .iter()
            .find(|m| m.metric == metric)?
            .per_fold_mean
    }

    pub fn failed_cells(&self) -> impl Iterator<Item = &CellResult> {
        self.cells.iter().filter(|c| c.error.is_some())
    }
}

fn stats(name: &str, values: &[f64]) -> MetricStat {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let std = if values.len() > 1 {
        (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
    } else {
        0.0
    };
    MetricStat {
        metric: name.to_string(),
        // summation error can push the mean a hair outside the observed range
        mean: mean.clamp(
            values.iter().copied().fold(f64::INFINITY, f64::min),
            values.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        ),
        std,
        min: values.iter().copied().fold(f64::INFINITY, f64::min),
        max: values.iter().copied().fold(f64::NEG_INFINITY, f64::max),
    }
}

/// Per-method means and spreads plus retention ratios against `full`.
pub fn aggregate(
    cells: &[CellResult],
    methods: &[Method],
) -> (Vec<MethodAggregate>, Vec<MethodPrr>) {
    let mut aggregates = Vec::new();
    let mut prr = Vec::new();
    let full_of = |repeat: usize, fold: usize| {
        cells
            .iter()
            .find(|c| c.method == Method::Full && c.repeat == repeat && c.fold == fold)
            .and_then(|c| c.metrics)
    };
    for &method in methods {
        let mine: Vec<&CellResult> = cells.iter().filter(|c| c.method == method).collect();
        let ok: Vec<MetricsReport> = mine.iter().filter_map(|c| c.metrics).collect();
        let metric_stats: Vec<MetricStat> = if ok.is_empty() {
            Vec::new()
        } else {
            MetricsReport::NAMES
                .iter()
                .enumerate()
                .map(|(j, name)| stats(name, &ok.iter().map(|m| m.values()[j]).collect::<Vec<_>>()))
                .collect()
        };
        if methods.contains(&Method::Full) {
            let full_stats = cells
                .iter()
                .filter(|c| c.method == Method::Full)
                .filter_map(|c| c.metrics)
                .collect::<Vec<_>>();
            let metrics = MetricsReport::NAMES
                .iter()
                .enumerate()
                .map(|(j, name)| {
                    let ratios: Vec<f64> = mine
                        .iter()
                        .filter_map(|c| {
                            let m = c.metrics?;
                            let b = full_of(c.repeat, c.fold)?;
                            let base = b.values()[j];
                            (base > 0.0).then(|| m.values()[j] / base)
                        })
                        .collect();
                    let per_fold_mean = (!ratios.is_empty())
                        .then(|| ratios.iter().sum::<f64>() / ratios.len() as f64);
                    let method_mean = metric_stats.get(j).map(|s| s.mean);
                    let full_mean = (!full_stats.is_empty()).then(|| {
                        stats(
                            name,
                            &full_stats.iter().map(|m| m.values()[j]).collect::<Vec<_>>(),
                        )
                        .mean
                    });
                    let of_means = match (method_mean, full_mean) {
                        (Some(m), Some(b)) if b > 0.0 => Some(m / b),
                        _ => None,
                    };
                    PrrStat {
                        metric: name.to_string(),
                        per_fold_mean,
                        of_means,
                        pairs: ratios.len(),
                    }
                })
                .collect();
            prr.push(MethodPrr { method, metrics });
        }
        aggregates.push(MethodAggregate {
            method,
            runs: ok.len(),
            failed: mine.len() - ok.len(),
            metrics: metric_stats,
        });
    }
    (aggregates, prr)
}

/// JSON number formatting with 17 significant digits.
struct FullPrecision;

impl serde_json::ser::Formatter for FullPrecision {
    fn write_f64<W: ?Sized + io::Write>(&mut self, writer: &mut W, value: f64) -> io::Result<()> {
        writer.write_all(fmt_f64(value).as_bytes())
    }

    fn write_f32<W: ?Sized + io::Write>(&mut self, writer: &mut W, value: f32) -> io::Result<()> {
        writer.write_all(fmt_f64(f64::from(value)).as_bytes())
    }
}

pub fn to_json<T: Serialize>(value: &T) -> String {
    let mut buf = Vec::new();
    let mut ser = serde_json::Serializer::with_formatter(&mut buf, FullPrecision);
    value
        .serialize(&mut ser)
        .expect("report types always serialize");
    buf.push(b'\n');
    String::from_utf8(buf).expect("serde_json writes UTF-8")
}

fn opt(v: Option<f64>) -> String {
    v.map(fmt_f64).unwrap_or_default()
}

pub fn summary_csv(report: &RunReport) -> String {
    let mut out = String::from("dataset,method,metric,runs,mean,std,min,max,prr,prr_of_means\n");
    for agg in &report.aggregates {
        let prr = report.prr_for(agg.method);
        for s in &agg.metrics {
            let p = prr.and_then(|p| p.metrics.iter().find(|m| m.metric == s.metric));
            out.push_str(&format!(
                "{},{},{},{},{},{},{},{},{},{}\n",
                report.dataset.name,
                agg.method,
                s.metric,
                agg.runs,
                fmt_f64(s.mean),
                fmt_f64(s.std),
                fmt_f64(s.min),
                fmt_f64(s.max),
                opt(p.and_then(|p| p.per_fold_mean)),
                opt(p.and_then(|p| p.of_means)),
            ));
        }
    }
    out
}

/// Long-format bar data: the ratio of each method's mean to the `full` mean.
pub fn prr_bars_csv(report: &RunReport) -> String {
    let mut out = String::from("dataset,method,metric,prr\n");
    for p in &report.prr {
        for m in &p.metrics {
            if let Some(v) = m.of_means {
                out.push_str(&format!(
                    "{},{},{},{}\n",
                    report.dataset.name,
                    p.method,
                    m.metric,
                    fmt_f64(v)
                ));
            }
        }
    }
    out
}

pub fn traces_csv(traces: &[AsssTrace]) -> String {
    let mut out = String::from("repeat,fold,iter,task_loss,selector_loss,mean_p,entropy,tau\n");
    for t in traces {
        for r in &t.records {
            out.push_str(&format!(
                "{},{},{},{},{},{},{},{}\n",
                t.repeat,
                t.fold,
                r.iter,
                fmt_f64(r.task_loss),
                fmt_f64(r.selector_loss),
                fmt_f64(r.mean_p),
                fmt_f64(r.entropy),
                fmt_f64(r.tau)
            ));
        }
    }
    out
}

fn write(path: PathBuf, text: &str) -> Result<PathBuf> {
    fs::write(&path, text).map_err(|source| HarnessError::Output {
        path: path.clone(),
        source,
    })?;
    Ok(path)
}

/// Writes `report.json`, `summary.csv`, `prr_bars.csv` and, when ASSS ran,
/// `trace_asss.csv` into `outdir`. Returns the written paths.
pub fn emit_reports(report: &RunReport, outdir: &Path) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(outdir).map_err(|source| HarnessError::Output {
        path: outdir.to_path_buf(),
        source,
    })?;
    let mut written = vec![
        write(outdir.join("report.json"), &to_json(report))?,
        write(outdir.join("summary.csv"), &summary_csv(report))?,
        write(outdir.join("prr_bars.csv"), &prr_bars_csv(report))?,
    ];
    if !report.traces.is_empty() {
        written.push(write(
            outdir.join("trace_asss.csv"),
            &traces_csv(&report.traces),
        )?);
    }
    Ok(written)
}

pub fn read_report(path: &Path) -> Result<RunReport> {
    let text = fs::read_to_string(path).map_err(|e| {
        HarnessError::Data(asss_core::Error::Io {
            path: path.to_path_buf(),
            source: e,
        })
    })?;
    serde_json::from_str(&text)
        .map_err(|e| HarnessError::usage(format!("{} is not a run report: {e}", path.display())))
}
