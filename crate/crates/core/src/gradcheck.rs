//! Central finite-difference checks of the analytic gradients.
//!
//! Objectives are re-evaluated with a plain loop implementation that shares no
//! code with the forward pass under test, so a bug in the engine cannot cancel
//! itself out.

use ndarray::{Array2, ArrayView2};
use rand::distr::{Distribution, Uniform};
use serde::Serialize;

use crate::asss::selector_gradient;
use crate::error::Result;
use crate::gumbel::{self, PROB_CLAMP};
use crate::nn::{self, MlpParams};
use crate::seed;

pub const FD_STEP: f64 = 1e-5;
pub const RELATIVE_FLOOR: f64 = 1e-6;
pub const NN_TOLERANCE: f64 = 1e-4;
pub const SELECTOR_TOLERANCE: f64 = 1e-3;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GradCheckReport {
    pub name: String,
    pub max_rel_error: f64,
    pub tolerance: f64,
    pub params_checked: usize,
    pub passed: bool,
}

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(RELATIVE_FLOOR)
}

fn reference_forward(params: &MlpParams, x: ArrayView2<f64>) -> Array2<f64> {
    let mut current: Vec<Vec<f64>> = x.rows().into_iter().map(|r| r.to_vec()).collect();
    let last = params.layers.len() - 1;
    for (l, layer) in params.layers.iter().enumerate() {
        let (fan_in, fan_out) = layer.weight.dim();
        current = current
            .iter()
            .map(|row| {
                (0..fan_out)
                    .map(|o| {
                        let mut z = layer.bias[o];
                        for i in 0..fan_in {
                            z += row[i] * layer.weight[[i, o]];
                        }
                        if l < last && z < 0.0 {
                            0.0
                        } else {
                            z
                        }
                    })
                    .collect()
            })
            .collect();
    }
    let cols = params.output_dim();
    Array2::from_shape_fn((current.len(), cols), |(i, j)| current[i][j])
}

fn reference_xent(logits: &Array2<f64>, labels: &[usize]) -> Vec<f64> {
    logits
        .rows()
        .into_iter()
        .zip(labels)
        .map(|(row, &y)| {
            let m = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let lse = m + row.iter().map(|v| (v - m).exp()).sum::<f64>().ln();
            lse - row[y]
        })
        .collect()
}

fn sample_problem(
    n: usize,
    d: usize,
    k: usize,
    seed_value: u64,
) -> (Array2<f64>, Vec<usize>, Vec<f64>) {
    let mut rng = seed::rng(seed_value);
    let u = Uniform::new(-1.5, 1.5).expect("valid range");
    let x = Array2::from_shape_simple_fn((n, d), || u.sample(&mut rng));
    let labels = (0..n).map(|i| (i * 7 + 3) % k).collect();
    let w01 = Uniform::new(0.05, 1.0).expect("valid range");
    let weights = (0..n).map(|_| w01.sample(&mut rng)).collect();
    (x, labels, weights)
}

/// Compares `analytic` with central differences of `objective` over the flat
/// parameter vector of `params`.
fn compare_flat(
    params: &MlpParams,
    analytic: &[f64],
    objective: impl Fn(&MlpParams) -> f64,
) -> Result<(f64, usize)> {
    let base = params.flatten();
    let mut probe = params.clone();
    let mut worst: f64 = 0.0;
    for (j, &a) in analytic.iter().enumerate() {
        let mut v = base.clone();
        v[j] = base[j] + FD_STEP;
        probe.assign_flat(&v)?;
        let up = objective(&probe);
        v[j] = base[j] - FD_STEP;
        probe.assign_flat(&v)?;
        let down = objective(&probe);
        worst = worst.max(relative_error(a, (up - down) / (2.0 * FD_STEP)));
    }
    Ok((worst, analytic.len()))
}

fn report(name: &str, worst: f64, count: usize, tolerance: f64) -> GradCheckReport {
    GradCheckReport {
        name: name.to_string(),
        max_rel_error: worst,
        tolerance,
        params_checked: count,
        passed: worst.is_finite() && worst <= tolerance,
    }
}

/// Weighted cross-entropy through an MLP: every weight, bias and input partial.
pub fn check_network(
    sizes: &[usize],
    batch: usize,
    seed_value: u64,
) -> Result<Vec<GradCheckReport>> {
    let params = nn::init_mlp(sizes, seed_value)?;
    let k = *sizes.last().expect("non-empty sizes");
    let (x, labels, weights) = sample_problem(batch, sizes[0], k, seed::derive(seed_value, &[1]));
    let (logits, cache) = nn::mlp_forward(&params, x.view())?;
    let (_, dlogits) = nn::weighted_softmax_xent(logits.view(), &labels, &weights)?;
    let (grads, dinputs) = nn::mlp_backward(&params, &cache, dlogits.view())?;

    let objective = |p: &MlpParams, x: ArrayView2<f64>| {
        let ce = reference_xent(&reference_forward(p, x), &labels);
        ce.iter().zip(&weights).map(|(c, w)| c * w).sum::<f64>() / batch as f64
    };
    let label = format!("mlp {sizes:?}");
    let (worst_p, count_p) = compare_flat(&params, &grads.flatten(), |p| objective(p, x.view()))?;

    let mut worst_x: f64 = 0.0;
    for ((i, j), &a) in dinputs.indexed_iter() {
        let mut xp = x.clone();
        xp[[i, j]] += FD_STEP;
        let up = objective(&params, xp.view());
        xp[[i, j]] -= 2.0 * FD_STEP;
        let down = objective(&params, xp.view());
        worst_x = worst_x.max(relative_error(a, (up - down) / (2.0 * FD_STEP)));
    }
    Ok(vec![
        report(
            &format!("{label} parameters"),
            worst_p,
            count_p,
            NN_TOLERANCE,
        ),
        report(
            &format!("{label} inputs"),
            worst_x,
            dinputs.len(),
            NN_TOLERANCE,
        ),
    ])
}

/// Selector objective with frozen noise: weighted task loss plus sparsity and
/// entropy terms, evaluated from first principles.
#[allow(clippy::too_many_arguments)]
fn reference_selector_objective(
    selector: &MlpParams,
    task: &MlpParams,
    x: ArrayView2<f64>,
    labels: &[usize],
    noise: &[(f64, f64)],
    tau: f64,
    lambda: f64,
    beta: f64,
) -> f64 {
    let s = reference_forward(selector, x);
    let ce = reference_xent(&reference_forward(task, x), labels);
    let b = labels.len() as f64;
    let mut task_loss = 0.0;
    let mut mean_p = 0.0;
    let mut entropy = 0.0;
    for i in 0..labels.len() {
        let p = (1.0 / (1.0 + (-s[[i, 0]]).exp())).clamp(PROB_CLAMP, 1.0 - PROB_CLAMP);
        let (g, gp) = noise[i];
        let a = ((p.ln() + g) / tau).exp();
        let c = (((1.0 - p).ln() + gp) / tau).exp();
        task_loss += a / (a + c) * ce[i];
        mean_p += p;
        entropy -= p * p.ln() + (1.0 - p) * (1.0 - p).ln();
    }
    task_loss / b + lambda * mean_p / b - beta * entropy / b
}

/// End-to-end selector gradient with frozen Gumbel noise.
pub fn check_selector(
    lambda: f64,
    beta: f64,
    tau: f64,
    seed_value: u64,
) -> Result<GradCheckReport> {
    let (d, k, batch) = (4, 3, 12);
    let selector = nn::init_mlp(&[d, 6, 1], seed::derive(seed_value, &[2]))?;
    let task = nn::init_mlp(&[d, 5, k], seed::derive(seed_value, &[3]))?;
    let (x, labels, _) = sample_problem(batch, d, k, seed::derive(seed_value, &[4]));
    let mut rng = seed::rng(seed::derive(seed_value, &[5]));
    let noise: Vec<(f64, f64)> = (0..batch)
        .map(|_| {
            (
                gumbel::sample_gumbel(&mut rng),
                gumbel::sample_gumbel(&mut rng),
            )
        })
        .collect();
    let analytic = selector_gradient(
        &selector,
        &task,
        x.view(),
        &labels,
        &noise,
        tau,
        lambda,
        beta,
        0.0,
    )?;
    let (worst, count) = compare_flat(&selector, &analytic.grads.flatten(), |sel| {
        reference_selector_objective(sel, &task, x.view(), &labels, &noise, tau, lambda, beta)
    })?;
    Ok(report(
        &format!("selector objective (lambda={lambda}, beta={beta}, tau={tau})"),
        worst,
        count,
        SELECTOR_TOLERANCE,
    ))
}

/// The full suite run by the command-line `gradcheck`.
pub fn run_all() -> Result<Vec<GradCheckReport>> {
    let mut out = Vec::new();
    for (sizes, seed_value) in [
        (vec![3, 4, 2], 11u64),
        (vec![5, 7, 6, 3], 12),
        (vec![2, 9, 1], 13),
        (vec![4, 3], 14),
        (vec![6, 8, 8, 4], 15),
    ] {
        out.extend(check_network(&sizes, 7, seed_value)?);
    }
    for (tau, seed_value) in [(1.0, 21u64), (0.5, 22), (0.2, 23)] {
        out.push(check_selector(0.1, 0.01, tau, seed_value)?);
    }
    Ok(out)
}
