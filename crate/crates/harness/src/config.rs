//! JSON experiment configuration.

use std::fmt;
use std::path::{Path, PathBuf};

use asss_core::asss::{iters_for_epochs, AsssConfig};
use asss_core::dataio::{self, Dataset, LabelColumn};
use serde::{Deserialize, Serialize};

use crate::error::{HarnessError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    Full,
    Random,
    Kmeans,
    NnThinning,
    Asss,
}

impl Method {
    pub const ALL: [Method; 5] = [
        Method::Full,
        Method::Random,
        Method::Kmeans,
        Method::NnThinning,
        Method::Asss,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Method::Full => "full",
            Method::Random => "random",
            Method::Kmeans => "kmeans",
            Method::NnThinning => "nn-thinning",
            Method::Asss => "asss",
        }
    }

    pub fn parse(s: &str) -> Option<Method> {
        Method::ALL.into_iter().find(|m| m.name() == s)
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DataFormat {
    Keel,
    Csv,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetConfig {
    pub path: PathBuf,
    /// Inferred from the extension when absent: `.dat` is KEEL, anything else CSV.
    #[serde(default)]
    pub format: Option<DataFormat>,
    #[serde(default)]
    pub label_column: LabelColumn,
}

impl DatasetConfig {
    pub fn resolved_format(&self) -> DataFormat {
        self.format
            .unwrap_or_else(|| match self.path.extension().and_then(|e| e.to_str()) {
                Some(ext) if ext.eq_ignore_ascii_case("dat") => DataFormat::Keel,
                _ => DataFormat::Csv,
            })
    }

    pub fn load(&self) -> Result<Dataset> {
        let ds = match self.resolved_format() {
            DataFormat::Keel => dataio::parse_keel(&self.path)?,
            DataFormat::Csv => dataio::parse_csv(&self.path, &self.label_column)?,
        };
        Ok(ds)
    }
}

/// ASSS settings; the per-run seed and iteration count are filled in by the harness.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AsssSection {
    pub lambda_sparsity: f64,
    pub beta_entropy: f64,
    pub tau_init: f64,
    pub tau_final: f64,
    /// Overrides `epochs` when set.
    pub total_iters: Option<usize>,
    pub epochs: usize,
    pub batch_size: usize,
    pub lr_task: f64,
    pub lr_selector: f64,
    pub clip_norm: f64,
    pub baseline_decay: f64,
    pub selector_hidden: Vec<usize>,
    pub task_hidden: Vec<usize>,
    pub log_every: usize,
}

impl Default for AsssSection {
    fn default() -> Self {
        let c = AsssConfig::default();
        AsssSection {
            lambda_sparsity: c.lambda_sparsity,
            beta_entropy: c.beta_entropy,
            tau_init: c.tau_init,
            tau_final: c.tau_final,
            total_iters: None,
            epochs: 20,
            batch_size: c.batch_size,
            lr_task: c.lr_task,
            lr_selector: c.lr_selector,
            clip_norm: c.clip_norm,
            baseline_decay: c.baseline_decay,
            selector_hidden: c.selector_hidden,
            task_hidden: c.task_hidden,
            log_every: c.log_every,
        }
    }
}

impl AsssSection {
    pub fn to_core(&self, rows: usize, lambda: f64, seed: u64) -> AsssConfig {
        AsssConfig {
            lambda_sparsity: lambda,
            beta_entropy: self.beta_entropy,
            tau_init: self.tau_init,
            tau_final: self.tau_final,
            total_iters: self
                .total_iters
                .unwrap_or_else(|| iters_for_epochs(rows, self.batch_size, self.epochs)),
            batch_size: self.batch_size,
            lr_task: self.lr_task,
            lr_selector: self.lr_selector,
            clip_norm: self.clip_norm,
            baseline_decay: self.baseline_decay,
            selector_hidden: self.selector_hidden.clone(),
            task_hidden: self.task_hidden.clone(),
            seed,
            log_every: self.log_every,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ClassifierConfig {
    pub hidden: Vec<usize>,
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
}

impl Default for ClassifierConfig {
    fn default() -> Self {
        ClassifierConfig {
            hidden: vec![128, 64],
            epochs: 30,
            batch_size: 256,
            lr: 1e-3,
        }
    }
}

fn default_budget() -> f64 {
    0.3
}
fn default_folds() -> usize {
    5
}
fn default_repeats() -> usize {
    10
}
fn default_methods() -> Vec<Method> {
    Method::ALL.to_vec()
}
fn default_lambda_grid() -> Vec<f64> {
    vec![0.01, 0.1, 0.5, 1.0]
}
fn default_true() -> bool {
    true
}
fn default_validation() -> f64 {
    0.2
}
fn default_output() -> PathBuf {
    PathBuf::from("results")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub dataset: DatasetConfig,
    #[serde(default = "default_budget")]
    pub budget_ratio: f64,
    #[serde(default = "default_folds")]
    pub folds: usize,
    #[serde(default = "default_repeats")]
    pub repeats: usize,
    #[serde(default = "default_methods")]
    pub methods: Vec<Method>,
    #[serde(default)]
    pub asss: AsssSection,
    #[serde(default)]
    pub final_classifier: ClassifierConfig,
    #[serde(default = "default_lambda_grid")]
    pub lambda_grid: Vec<f64>,
    /// When false, `asss.lambda_sparsity` is used as is.
    #[serde(default = "default_true")]
    pub tune_lambda: bool,
    #[serde(default = "default_validation")]
    pub validation_fraction: f64,
    #[serde(default)]
    pub master_seed: u64,
    #[serde(default = "default_output")]
    pub output_dir: PathBuf,
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| HarnessError::usage(format!("invalid config: {e}")))
    }

    /// Reads a config file; relative dataset and output paths resolve against
    /// the file's directory.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| {
            HarnessError::usage(format!("cannot read config {}: {e}", path.display()))
        })?;
        let mut cfg = Self::from_json(&text)?;
        let base = path.parent().unwrap_or(Path::new("."));
        if cfg.dataset.path.is_relative() {
            cfg.dataset.path = base.join(&cfg.dataset.path);
        }
        if cfg.output_dir.is_relative() {
            cfg.output_dir = base.join(&cfg.output_dir);
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(HarnessError::usage(m));
        if !(self.budget_ratio > 0.0 && self.budget_ratio <= 1.0) {
            return bad(format!("budget_ratio {} not in (0, 1]", self.budget_ratio));
        }
        if self.folds < 2 {
            return bad(format!("folds must be >= 2, got {}", self.folds));
        }
        if self.repeats < 1 {
            return bad("repeats must be >= 1".into());
        }
        if self.methods.is_empty() {
            return bad("methods must not be empty".into());
        }
        let mut seen = self.methods.clone();
        seen.sort();
        seen.dedup();
        if seen.len() != self.methods.len() {
            return bad("methods lists a method twice".into());
        }
        if self.methods.contains(&Method::Asss) {
            if self.tune_lambda && self.lambda_grid.is_empty() {
                return bad("lambda_grid must not be empty when tune_lambda is set".into());
            }
            if let Some(l) = self
                .lambda_grid
                .iter()
                .find(|l| !(**l >= 0.0 && l.is_finite()))
            {
                return bad(format!("lambda_grid entry {l} must be >= 0"));
            }
            if !(self.validation_fraction > 0.0 && self.validation_fraction < 1.0) {
                return bad(format!(
                    "validation_fraction {} not in (0, 1)",
                    self.validation_fraction
                ));
            }
            self.asss
                .to_core(1, self.asss.lambda_sparsity, 0)
                .validate()
                .map_err(|e| HarnessError::usage(format!("asss: {e}")))?;
        }
        let fc = &self.final_classifier;
        if fc.epochs == 0 || fc.batch_size == 0 || !(fc.lr > 0.0 && fc.lr.is_finite()) {
            return bad("final_classifier needs epochs >= 1, batch_size >= 1 and lr > 0".into());
        }
        if fc.hidden.contains(&0) {
            return bad("final_classifier hidden widths must be positive".into());
        }
        Ok(())
    }

    /// Methods in canonical order.
    pub fn ordered_methods(&self) -> Vec<Method> {
        Method::ALL
            .into_iter()
            .filter(|m| self.methods.contains(m))
            .collect()
    }
}
