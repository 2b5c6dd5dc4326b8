//! The shared final classifier every method is scored with.

use asss_core::metrics::{self, MetricsReport, PredictionSet};
use asss_core::nn::{self, AdamState, MlpParams};
use asss_core::seed;
use asss_core::Result;
use ndarray::{ArrayView2, Axis};
use rand::seq::SliceRandom;

use crate::config::ClassifierConfig;

/// Trains a fresh MLP on `(x, labels)` with unit sample weights.
pub fn train_classifier(
    x: ArrayView2<f64>,
    labels: &[usize],
    class_count: usize,
    config: &ClassifierConfig,
    seed_value: u64,
) -> Result<MlpParams> {
    let mut sizes = vec![x.ncols()];
    sizes.extend(&config.hidden);
    sizes.push(class_count);
    let mut params = nn::init_mlp(&sizes, seed::derive(seed_value, &[seed::tag("init")]))?;
    let mut adam = AdamState::new(&params);
    let mut rng = seed::rng(seed::derive(seed_value, &[seed::tag("batches")]));
    let n = labels.len();
    let mut order: Vec<usize> = (0..n).collect();
    let ones = vec![1.0; config.batch_size];
    for _ in 0..config.epochs {
        order.shuffle(&mut rng);
        for rows in order.chunks(config.batch_size) {
            let xb = x.select(Axis(0), rows);
            let yb: Vec<usize> = rows.iter().map(|&r| labels[r]).collect();
            let (logits, cache) = nn::mlp_forward(&params, xb.view())?;
            let (_, dlogits) = nn::weighted_softmax_xent(logits.view(), &yb, &ones[..rows.len()])?;
            let (grads, _) = nn::mlp_backward(&params, &cache, dlogits.view())?;
            nn::adam_step(&mut params, &grads, &mut adam, config.lr)?;
        }
    }
    Ok(params)
}

pub fn predict(params: &MlpParams, x: ArrayView2<f64>, labels: &[usize]) -> Result<PredictionSet> {
    let logits = nn::mlp_predict(params, x)?;
    PredictionSet::from_scores(labels.to_vec(), nn::softmax_rows(logits.view()))
}

/// Accuracy, macro-F and macro one-vs-rest AUC of `params` on `(x, labels)`.
pub fn score(
    params: &MlpParams,
    x: ArrayView2<f64>,
    labels: &[usize],
    class_count: usize,
) -> Result<MetricsReport> {
    metrics::evaluate(&predict(params, x, labels)?, class_count)
}
