//! The adversarial soft-selection trainer.
//!
//! Each iteration draws a mini-batch and
//!
//! 1. relaxes the selector's probabilities into weights `z̃` with fresh Gumbel noise,
//! 2. takes an Adam step on the task network's `z̃`-weighted cross-entropy,
//! 3. redraws the noise and recomputes `z̃` against the updated task network,
//! 4. takes a clipped Adam step on the selector's composite loss
//!    `L_C + λ·mean(p) − β·H(p)`, back-propagating through `z̃` into the selector,
//! 5. updates the running-average baseline of `L_C` and anneals the temperature.
//!
//! After training, [`retrieve_subset`] scores every row and keeps the top `M`
//! (or everything above a threshold).

use ndarray::{s, Array2, ArrayView2, Axis};
use rand::seq::SliceRandom;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dataio::Dataset;
use crate::error::{Error, Result};
use crate::gumbel::{
    self, anneal_temperature, clamp_prob, relax_batch, sample_gumbel, TemperatureSchedule,
    PROB_CLAMP,
};
use crate::nn::{
    adam_step, clip_gradients, init_mlp, mlp_backward, mlp_forward, mlp_predict, per_sample_xent,
    weighted_softmax_xent, AdamState, ForwardCache, GradientSet, MlpParams,
};
use crate::seed;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AsssConfig {
    /// Weight of the mean-probability (sparsity) penalty.
    pub lambda_sparsity: f64,
    /// Weight of the mean binary entropy bonus.
    pub beta_entropy: f64,
    pub tau_init: f64,
    pub tau_final: f64,
    pub total_iters: usize,
    pub batch_size: usize,
    pub lr_task: f64,
    /// Must be strictly below `lr_task`.
    pub lr_selector: f64,
    /// Global-norm bound on the selector gradient.
    pub clip_norm: f64,
    /// Decay of the running task-loss baseline.
    pub baseline_decay: f64,
    pub selector_hidden: Vec<usize>,
    pub task_hidden: Vec<usize>,
    pub seed: u64,
    /// Trace every `log_every`-th iteration (the first and last are always traced).
    pub log_every: usize,
}

impl Default for AsssConfig {
    fn default() -> Self {
        AsssConfig {
            lambda_sparsity: 0.1,
            beta_entropy: 0.01,
            tau_init: 1.0,
            tau_final: 0.1,
            total_iters: 1000,
            batch_size: 256,
            lr_task: 1e-3,
            lr_selector: 1e-4,
            clip_norm: 5.0,
            baseline_decay: 0.99,
            selector_hidden: vec![64, 64],
            task_hidden: vec![128, 64],
            seed: 0,
            log_every: 10,
        }
    }
}

impl AsssConfig {
    pub fn validate(&self) -> Result<()> {
        let check = |ok: bool, msg: String| if ok { Ok(()) } else { Err(Error::invalid(msg)) };
        check(
            self.lambda_sparsity >= 0.0 && self.lambda_sparsity.is_finite(),
            format!("lambda_sparsity {} must be >= 0", self.lambda_sparsity),
        )?;
        check(
            self.beta_entropy >= 0.0 && self.beta_entropy.is_finite(),
            format!("beta_entropy {} must be >= 0", self.beta_entropy),
        )?;
        self.schedule()?;
        check(self.batch_size >= 1, "batch_size must be >= 1".into())?;
        check(
            self.lr_selector >= 0.0 && self.lr_selector < self.lr_task && self.lr_task.is_finite(),
            format!(
                "two-time-scale rule requires 0 <= lr_selector < lr_task, got {} and {}",
                self.lr_selector, self.lr_task
            ),
        )?;
        check(
            self.clip_norm > 0.0,
            format!("clip_norm {} must be > 0", self.clip_norm),
        )?;
        check(
            (0.0..1.0).contains(&self.baseline_decay),
            format!("baseline_decay {} not in [0, 1)", self.baseline_decay),
        )?;
        check(
            !self.selector_hidden.contains(&0) && !self.task_hidden.contains(&0),
            "hidden widths must be positive".into(),
        )?;
        check(self.log_every >= 1, "log_every must be >= 1".into())
    }

    /// Annealing schedule over the iterations: the first uses `tau_init`, the last `tau_final`.
    pub fn schedule(&self) -> Result<TemperatureSchedule> {
        TemperatureSchedule::new(
            self.tau_init,
            self.tau_final,
            self.total_iters.saturating_sub(1),
        )
    }
}

/// Number of iterations covering `epochs` passes over `rows` rows.
pub fn iters_for_epochs(rows: usize, batch_size: usize, epochs: usize) -> usize {
    epochs * rows.div_ceil(batch_size.max(1))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub iter: usize,
    pub task_loss: f64,
    pub selector_loss: f64,
    pub mean_p: f64,
    pub entropy: f64,
    pub tau: f64,
}

#[derive(Debug, Clone)]
pub struct TrainerState {
    pub selector: MlpParams,
    pub task: MlpParams,
    pub selector_adam: AdamState,
    pub task_adam: AdamState,
    pub loss_baseline: f64,
    pub iter: usize,
    pub rng: ChaCha8Rng,
}

impl TrainerState {
    /// Fresh networks for `input_dim` features and `class_count` classes.
    ///
    /// The selector's output layer starts at zero so every sample begins at p = 0.5.
    pub fn new(config: &AsssConfig, input_dim: usize, class_count: usize) -> Result<Self> {
        let mut sel_sizes = vec![input_dim];
        sel_sizes.extend(&config.selector_hidden);
        sel_sizes.push(1);
        let mut task_sizes = vec![input_dim];
        task_sizes.extend(&config.task_hidden);
        task_sizes.push(class_count);

        let mut selector = init_mlp(
            &sel_sizes,
            seed::derive(config.seed, &[seed::tag("selector")]),
        )?;
        if let Some(last) = selector.layers.last_mut() {
            last.weight.fill(0.0);
            last.bias.fill(0.0);
        }
        let task = init_mlp(&task_sizes, seed::derive(config.seed, &[seed::tag("task")]))?;
        Ok(TrainerState {
            selector_adam: AdamState::new(&selector),
            task_adam: AdamState::new(&task),
            selector,
            task,
            loss_baseline: 0.0,
            iter: 0,
            rng: seed::rng(seed::derive(config.seed, &[seed::tag("gumbel")])),
        })
    }
}

#[derive(Debug, Clone)]
pub struct SelectorOutput {
    pub logits: Vec<f64>,
    /// σ(logit), clamped to `[1e-7, 1 - 1e-7]`.
    pub p: Vec<f64>,
    pub cache: ForwardCache,
}

pub fn selector_forward(selector: &MlpParams, batch: ArrayView2<f64>) -> Result<SelectorOutput> {
    if selector.output_dim() != 1 {
        return Err(Error::dims(format!(
            "selector must emit one logit, has {} outputs",
            selector.output_dim()
        )));
    }
    let (out, cache) = mlp_forward(selector, batch)?;
    let logits: Vec<f64> = out.column(0).to_vec();
    let p = logits
        .iter()
        .map(|&s| clamp_prob(gumbel::sigmoid(s)))
        .collect();
    Ok(SelectorOutput { logits, p, cache })
}

/// Composite selector objective for one batch.
#[derive(Debug, Clone, PartialEq)]
pub struct SelectorLoss {
    /// `(task_loss − baseline) + λ·mean(p) − β·H(p)`.
    pub value: f64,
    /// Mean binary entropy of `p`.
    pub entropy: f64,
    /// ∂value/∂p_i through the sparsity and entropy terms.
    pub d_p: Vec<f64>,
    /// ∂value/∂task_loss.
    pub d_task_loss: f64,
}

fn binary_entropy(p: f64) -> f64 {
    let p = clamp_prob(p);
    -(p * p.ln() + (1.0 - p) * (1.0 - p).ln())
}

pub fn selector_loss(
    task_loss: f64,
    p: &[f64],
    lambda_sparsity: f64,
    beta_entropy: f64,
    baseline: f64,
) -> Result<SelectorLoss> {
    if p.is_empty() {
        return Err(Error::invalid("selector loss over an empty batch"));
    }
    if let Some(bad) = p.iter().find(|&&v| !(v > 0.0 && v < 1.0)) {
        return Err(Error::invalid(format!(
            "selection probability {bad} outside (0, 1)"
        )));
    }
    let b = p.len() as f64;
    let mean_p = p.iter().sum::<f64>() / b;
    let entropy = p.iter().map(|&v| binary_entropy(v)).sum::<f64>() / b;
    let d_p = p
        .iter()
        .map(|&v| {
            let v = clamp_prob(v);
            // dH/dp_i = (ln(1 − p_i) − ln p_i) / B
            lambda_sparsity / b - beta_entropy * ((1.0 - v).ln() - v.ln()) / b
        })
        .collect();
    Ok(SelectorLoss {
        value: (task_loss - baseline) + lambda_sparsity * mean_p - beta_entropy * entropy,
        entropy,
        d_p,
        d_task_loss: 1.0,
    })
}

/// Selector gradient for one batch with the Gumbel noise held fixed.
#[derive(Debug, Clone)]
pub struct SelectorGradient {
    pub loss: SelectorLoss,
    /// `L_C` evaluated with the recomputed weights.
    pub task_loss: f64,
    pub mean_p: f64,
    pub grads: GradientSet,
}

#[allow(clippy::too_many_arguments)]
pub fn selector_gradient(
    selector: &MlpParams,
    task: &MlpParams,
    batch: ArrayView2<f64>,
    labels: &[usize],
    noise: &[(f64, f64)],
    tau: f64,
    lambda_sparsity: f64,
    beta_entropy: f64,
    baseline: f64,
) -> Result<SelectorGradient> {
    let sel = selector_forward(selector, batch)?;
    let mask = gumbel::relax_with_noise(&sel.p, tau, noise)?;
    let logits = mlp_predict(task, batch)?;
    let xent = per_sample_xent(logits.view(), labels)?;
    let b = labels.len() as f64;
    let task_loss = mask
        .z_tilde
        .iter()
        .zip(&xent)
        .map(|(z, ce)| z * ce)
        .sum::<f64>()
        / b;
    let loss = selector_loss(task_loss, &sel.p, lambda_sparsity, beta_entropy, baseline)?;

    let mut dlogits = Array2::<f64>::zeros((labels.len(), 1));
    for i in 0..labels.len() {
        let raw = gumbel::sigmoid(sel.logits[i]);
        // clamped probabilities have zero derivative with respect to the logit
        let live = raw > PROB_CLAMP && raw < 1.0 - PROB_CLAMP;
        if !live {
            continue;
        }
        let p = sel.p[i];
        let via_task = loss.d_task_loss * xent[i] / b * mask.dz_dlogit[i];
        let via_p = loss.d_p[i] * p * (1.0 - p);
        dlogits[[i, 0]] = via_task + via_p;
    }
    let (grads, _) = mlp_backward(selector, &sel.cache, dlogits.view())?;
    Ok(SelectorGradient {
        mean_p: sel.p.iter().sum::<f64>() / b,
        loss,
        task_loss,
        grads,
    })
}

/// One alternating update of the task network and the selector.
pub fn train_step(
    state: &mut TrainerState,
    batch: ArrayView2<f64>,
    labels: &[usize],
    config: &AsssConfig,
) -> Result<TraceRecord> {
    if state.iter >= config.total_iters {
        return Err(Error::invalid(format!(
            "iteration {} beyond total_iters {}",
            state.iter, config.total_iters
        )));
    }
    if batch.nrows() != labels.len() || labels.is_empty() {
        return Err(Error::dims(format!(
            "batch of {} rows with {} labels",
            batch.nrows(),
            labels.len()
        )));
    }
    let tau = anneal_temperature(state.iter, &config.schedule()?)?;
    let diagnose = |what: &str, value: f64| {
        Error::NonFinite(format!(
            "{what} = {value} at iteration {} (tau {tau}, baseline {})",
            state.iter, state.loss_baseline
        ))
    };

    // task network on the relaxed weights
    let sel = selector_forward(&state.selector, batch)?;
    let mask = relax_batch(&sel.p, tau, &mut state.rng)?;
    let (logits, cache) = mlp_forward(&state.task, batch)?;
    let (task_loss, dlogits) = weighted_softmax_xent(logits.view(), labels, &mask.z_tilde)?;
    if !task_loss.is_finite() {
        return Err(diagnose("task loss", task_loss));
    }
    let (task_grads, _) = mlp_backward(&state.task, &cache, dlogits.view())?;
    adam_step(
        &mut state.task,
        &task_grads,
        &mut state.task_adam,
        config.lr_task,
    )?;

    // selector against the updated task network, with fresh noise
    let noise: Vec<(f64, f64)> = (0..labels.len())
        .map(|_| (sample_gumbel(&mut state.rng), sample_gumbel(&mut state.rng)))
        .collect();
    let mut sg = selector_gradient(
        &state.selector,
        &state.task,
        batch,
        labels,
        &noise,
        tau,
        config.lambda_sparsity,
        config.beta_entropy,
        state.loss_baseline,
    )?;
    if !sg.loss.value.is_finite() {
        return Err(diagnose("selector loss", sg.loss.value));
    }
    clip_gradients(&mut sg.grads, config.clip_norm);
    adam_step(
        &mut state.selector,
        &sg.grads,
        &mut state.selector_adam,
        config.lr_selector,
    )?;

    state.loss_baseline =
        config.baseline_decay * state.loss_baseline + (1.0 - config.baseline_decay) * sg.task_loss;
    let record = TraceRecord {
        iter: state.iter,
        task_loss,
        selector_loss: sg.loss.value,
        mean_p: sg.mean_p,
        entropy: sg.loss.entropy,
        tau,
    };
    state.iter += 1;
    Ok(record)
}

#[derive(Debug, Clone)]
pub struct AsssOutcome {
    pub selector: MlpParams,
    pub task: MlpParams,
    pub trace: Vec<TraceRecord>,
}

/// Runs `total_iters` alternating updates over epoch-shuffled mini-batches.
pub fn train_asss(dataset: &Dataset, config: &AsssConfig) -> Result<AsssOutcome> {
    config.validate()?;
    let n = dataset.len();
    if n == 0 {
        return Err(Error::invalid("cannot train on an empty dataset"));
    }
    let mut state = TrainerState::new(config, dataset.dim(), dataset.class_count)?;
    let mut order: Vec<usize> = (0..n).collect();
    let mut batch_rng = seed::rng(seed::derive(config.seed, &[seed::tag("batches")]));
    let batch = config.batch_size.min(n);
    let mut trace = Vec::new();
    let mut cursor = n;
    while state.iter < config.total_iters {
        if cursor >= n {
            order.shuffle(&mut batch_rng);
            cursor = 0;
        }
        let end = (cursor + batch).min(n);
        let rows = &order[cursor..end];
        cursor = end;
        let x = dataset.features.select(Axis(0), rows);
        let y: Vec<usize> = rows.iter().map(|&r| dataset.labels[r]).collect();
        let record = train_step(&mut state, x.view(), &y, config)?;
        let last = state.iter == config.total_iters;
        if record.iter % config.log_every == 0 || last {
            trace.push(record);
        }
    }
    Ok(AsssOutcome {
        selector: state.selector,
        task: state.task,
        trace,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SelectionMode {
    TopM(usize),
    Threshold(f64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionResult {
    pub scores: Vec<f64>,
    /// Sorted, distinct row indices.
    pub chosen: Vec<usize>,
    pub mode: SelectionMode,
}

const SCORE_CHUNK: usize = 4096;

/// Raw selector logits for every row.
pub fn selector_logits(selector: &MlpParams, features: ArrayView2<f64>) -> Result<Vec<f64>> {
    let mut logits = Vec::with_capacity(features.nrows());
    let mut start = 0;
    while start < features.nrows() {
        let end = (start + SCORE_CHUNK).min(features.nrows());
        let out = mlp_predict(selector, features.slice(s![start..end, ..]))?;
        logits.extend(out.column(0).iter().copied());
        start = end;
    }
    Ok(logits)
}

/// The `m` indices with the highest scores (ties to the lower index), sorted ascending.
pub fn top_m(scores: &[f64], m: usize) -> Result<Vec<usize>> {
    if m > scores.len() {
        return Err(Error::invalid(format!(
            "budget {m} exceeds {} candidates",
            scores.len()
        )));
    }
    let mut idx: Vec<usize> = (0..scores.len()).collect();
    idx.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
    idx.truncate(m);
    idx.sort_unstable();
    Ok(idx)
}

pub fn retrieve_subset(
    selector: &MlpParams,
    features: ArrayView2<f64>,
    mode: SelectionMode,
) -> Result<SelectionResult> {
    let scores: Vec<f64> = selector_logits(selector, features)?
        .into_iter()
        .map(|s| clamp_prob(gumbel::sigmoid(s)))
        .collect();
    let chosen = match mode {
        SelectionMode::TopM(m) => top_m(&scores, m)?,
        SelectionMode::Threshold(k) => {
            if !(k > 0.0 && k < 1.0) {
                return Err(Error::invalid(format!("threshold {k} not in (0, 1)")));
            }
            let chosen: Vec<usize> = (0..scores.len()).filter(|&i| scores[i] > k).collect();
            if chosen.is_empty() {
                return Err(Error::invalid(format!("no score exceeds threshold {k}")));
            }
            chosen
        }
    };
    Ok(SelectionResult {
        scores,
        chosen,
        mode,
    })
}

/// CSV rendering of a trace with columns `iter,task_loss,selector_loss,mean_p,entropy,tau`.
pub fn trace_to_csv(trace: &[TraceRecord]) -> String {
    let mut out = String::from("iter,task_loss,selector_loss,mean_p,entropy,tau\n");
    for r in trace {
        out.push_str(&format!(
            "{},{},{},{},{},{}\n",
            r.iter,
            crate::fmt_f64(r.task_loss),
            crate::fmt_f64(r.selector_loss),
            crate::fmt_f64(r.mean_p),
            crate::fmt_f64(r.entropy),
            crate::fmt_f64(r.tau)
        ));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gumbel::sigmoid;
    use ndarray::array;
    use rand::distr::{Distribution, Uniform};

    fn gaussian_blobs(n: usize, seed: u64) -> Dataset {
        let mut rng = seed::rng(seed);
        let u = Uniform::new(-1.0, 1.0).unwrap();
        let mut x = Array2::zeros((n, 2));
        let mut y = Vec::with_capacity(n);
        for i in 0..n {
            let c = i % 2;
            let centre = if c == 0 { -1.5 } else { 1.5 };
            x[[i, 0]] = centre + u.sample(&mut rng);
            x[[i, 1]] = u.sample(&mut rng);
            y.push(c);
        }
        let names = vec!["x0".into(), "x1".into()];
        Dataset::new(x, y, vec!["a".into(), "b".into()], names, "blobs").unwrap()
    }

    fn small_config() -> AsssConfig {
        AsssConfig {
            total_iters: 60,
            batch_size: 32,
            selector_hidden: vec![8, 8],
            task_hidden: vec![16, 8],
            lr_task: 1e-2,
            lr_selector: 1e-3,
            seed: 5,
            log_every: 5,
            ..AsssConfig::default()
        }
    }

    #[test]
    fn config_validation() {
        assert!(AsssConfig::default().validate().is_ok());
        let ttur = AsssConfig {
            lr_selector: 1e-3,
            lr_task: 1e-3,
            ..AsssConfig::default()
        };
        assert!(ttur
            .validate()
            .unwrap_err()
            .to_string()
            .contains("two-time-scale"));
        assert!(AsssConfig {
            batch_size: 0,
            ..AsssConfig::default()
        }
        .validate()
        .is_err());
        assert!(AsssConfig {
            baseline_decay: 1.0,
            ..AsssConfig::default()
        }
        .validate()
        .is_err());
        assert_eq!(iters_for_epochs(1000, 256, 20), 80);
    }

    #[test]
    fn selector_forward_examples() {
        let mut sel = init_mlp(&[3, 4, 1], 1).unwrap();
        sel.layers[1].weight.fill(0.0);
        let out = selector_forward(&sel, array![[1.0, 2.0, 3.0], [-1.0, 0.0, 4.0]].view()).unwrap();
        assert_eq!(out.p, vec![0.5, 0.5]);

        let mut lin = init_mlp(&[1, 1], 0).unwrap();
        lin.layers[0].weight[[0, 0]] = 1.0;
        let out = selector_forward(&lin, array![[2.0], [-0.5], [3.0]].view()).unwrap();
        assert!((out.p[0] - 0.880_797_077_977_882_3).abs() < 1e-15);
        assert!(out.p[2] > out.p[0] && out.p[0] > out.p[1]);

        let multi = init_mlp(&[1, 2], 0).unwrap();
        assert!(selector_forward(&multi, array![[1.0]].view()).is_err());
    }

    #[test]
    #[allow(clippy::approx_constant)]
    fn selector_loss_examples() {
        let l = selector_loss(0.6931, &[0.5, 0.5], 0.1, 0.01, 0.0).unwrap();
        // 0.6931 + 0.1·0.5 − 0.01·ln 2
        let expected = 0.6931 + 0.05 - 0.01 * std::f64::consts::LN_2;
        assert!((l.value - expected).abs() < 1e-15);
        assert!((l.value - 0.7362).abs() < 1e-4);

        let l = selector_loss(0.42, &[0.2, 0.9, 0.6], 0.0, 0.0, 0.0).unwrap();
        assert_eq!(l.value, 0.42);
        assert!(l.d_p.iter().all(|&d| d == 0.0));

        let l = selector_loss(0.0, &[1e-7, 1.0 - 1e-7], 0.0, 1.0, 0.0).unwrap();
        assert!(l.entropy < 1e-5);

        assert!(selector_loss(0.1, &[0.0, 0.5], 0.1, 0.0, 0.0).is_err());
        assert!(selector_loss(0.1, &[], 0.1, 0.0, 0.0).is_err());
    }

    #[test]
    fn selector_loss_gradient_matches_difference() {
        let p = [0.3, 0.7, 0.55];
        let (lam, beta) = (0.4, 0.2);
        let l = selector_loss(1.0, &p, lam, beta, 0.0).unwrap();
        let h = 1e-6;
        for i in 0..3 {
            let mut a = p;
            let mut b = p;
            a[i] += h;
            b[i] -= h;
            let fd = (selector_loss(1.0, &a, lam, beta, 0.0).unwrap().value
                - selector_loss(1.0, &b, lam, beta, 0.0).unwrap().value)
                / (2.0 * h);
            assert!((fd - l.d_p[i]).abs() < 1e-8);
        }
    }

    #[test]
    fn baseline_only_shifts_the_scalar() {
        let ds = gaussian_blobs(12, 4);
        let sel = init_mlp(&[2, 5, 1], 8).unwrap();
        let task = init_mlp(&[2, 6, 2], 9).unwrap();
        let mut rng = seed::rng(1);
        let noise: Vec<(f64, f64)> = (0..12)
            .map(|_| (sample_gumbel(&mut rng), sample_gumbel(&mut rng)))
            .collect();
        let base = selector_gradient(
            &sel,
            &task,
            ds.features.view(),
            &ds.labels,
            &noise,
            0.7,
            0.1,
            0.01,
            0.0,
        )
        .unwrap();
        for b in [-3.0, 0.25, 17.0] {
            let other = selector_gradient(
                &sel,
                &task,
                ds.features.view(),
                &ds.labels,
                &noise,
                0.7,
                0.1,
                0.01,
                b,
            )
            .unwrap();
            assert_eq!(other.grads, base.grads);
            assert!((other.loss.value - (base.loss.value - b)).abs() < 1e-12);
        }
    }

    #[test]
    fn zero_learning_rates_freeze_parameters() {
        let ds = gaussian_blobs(40, 2);
        let cfg = AsssConfig {
            lr_task: 0.0,
            lr_selector: 0.0,
            total_iters: 5,
            ..small_config()
        };
        let mut state = TrainerState::new(&cfg, 2, 2).unwrap();
        let (sel0, task0) = (state.selector.clone(), state.task.clone());
        let mut taus = Vec::new();
        for _ in 0..5 {
            let r = train_step(&mut state, ds.features.view(), &ds.labels, &cfg).unwrap();
            taus.push(r.tau);
        }
        assert_eq!(state.selector, sel0);
        assert_eq!(state.task, task0);
        assert_eq!(taus[0], 1.0);
        assert_eq!(taus[4], 0.1);
        assert!(taus.windows(2).all(|w| w[1] < w[0]));
        assert!(train_step(&mut state, ds.features.view(), &ds.labels, &cfg).is_err());
    }

    #[test]
    fn no_iterations_returns_initial_networks() {
        let ds = gaussian_blobs(30, 1);
        let cfg = AsssConfig {
            total_iters: 0,
            ..small_config()
        };
        let out = train_asss(&ds, &cfg).unwrap();
        assert!(out.trace.is_empty());
        let res =
            retrieve_subset(&out.selector, ds.features.view(), SelectionMode::TopM(10)).unwrap();
        assert!(res.scores.iter().all(|&s| s == 0.5));
    }

    #[test]
    fn training_is_deterministic() {
        let ds = gaussian_blobs(100, 3);
        let a = train_asss(&ds, &small_config()).unwrap();
        let b = train_asss(&ds, &small_config()).unwrap();
        assert_eq!(a.trace, b.trace);
        assert_eq!(a.selector, b.selector);
        assert_eq!(a.trace.first().unwrap().iter, 0);
        assert_eq!(a.trace.last().unwrap().iter, 59);
        let c = train_asss(
            &ds,
            &AsssConfig {
                seed: 6,
                ..small_config()
            },
        )
        .unwrap();
        assert_ne!(a.trace, c.trace);
    }

    #[test]
    fn trace_temperatures_span_schedule() {
        let ds = gaussian_blobs(100, 3);
        let out = train_asss(&ds, &small_config()).unwrap();
        let taus: Vec<f64> = out.trace.iter().map(|r| r.tau).collect();
        assert_eq!(taus[0], 1.0);
        assert_eq!(*taus.last().unwrap(), 0.1);
        assert!(taus.windows(2).all(|w| w[1] <= w[0]));
        assert!(out.trace.iter().all(|r| r.mean_p > 0.0 && r.mean_p < 1.0));
        let csv = trace_to_csv(&out.trace);
        assert!(csv.starts_with("iter,task_loss,selector_loss,mean_p,entropy,tau\n0,"));
        assert_eq!(csv.lines().count(), out.trace.len() + 1);
    }

    #[test]
    fn retrieval_examples() {
        assert_eq!(top_m(&[0.9, 0.2, 0.9, 0.5], 2).unwrap(), vec![0, 2]);
        assert_eq!(top_m(&[0.1, 0.1, 0.1], 3).unwrap(), vec![0, 1, 2]);
        assert_eq!(top_m(&[0.1, 0.3, 0.3, 0.3], 2).unwrap(), vec![1, 2]);
        assert!(top_m(&[0.1], 2).is_err());

        // Single-weight linear selector so that σ(x) reproduces the scores.
        let mut lin = init_mlp(&[1, 1], 0).unwrap();
        lin.layers[0].weight[[0, 0]] = 1.0;
        let logit = |p: f64| (p / (1.0 - p)).ln();
        let x = Array2::from_shape_vec((4, 1), [0.9, 0.2, 0.9, 0.5].map(logit).to_vec()).unwrap();
        let r = retrieve_subset(&lin, x.view(), SelectionMode::Threshold(0.5)).unwrap();
        assert_eq!(r.chosen, vec![0, 2]);
        let r = retrieve_subset(&lin, x.view(), SelectionMode::TopM(4)).unwrap();
        assert_eq!(r.chosen, vec![0, 1, 2, 3]);
        assert!(retrieve_subset(&lin, x.view(), SelectionMode::TopM(5)).is_err());
        assert!(retrieve_subset(&lin, x.view(), SelectionMode::Threshold(0.95)).is_err());
        assert!(retrieve_subset(&lin, x.view(), SelectionMode::Threshold(1.0)).is_err());
    }

    #[test]
    fn top_m_same_from_logits_and_probabilities() {
        let mut rng = seed::rng(12);
        let u = Uniform::new(-6.0, 6.0).unwrap();
        for _ in 0..50 {
            let logits: Vec<f64> = (0..40).map(|_| u.sample(&mut rng)).collect();
            let probs: Vec<f64> = logits.iter().map(|&s| sigmoid(s)).collect();
            assert_eq!(top_m(&logits, 13).unwrap(), top_m(&probs, 13).unwrap());
        }
    }

    #[test]
    fn large_lambda_drives_mean_p_down() {
        let ds = gaussian_blobs(400, 21);
        let cfg = AsssConfig {
            lambda_sparsity: 1e3,
            total_iters: 200,
            log_every: 20,
            ..small_config()
        };
        let out = train_asss(&ds, &cfg).unwrap();
        let ps: Vec<f64> = out.trace.iter().map(|r| r.mean_p).collect();
        assert!(ps.windows(2).all(|w| w[1] < w[0]), "{ps:?}");
    }
}
