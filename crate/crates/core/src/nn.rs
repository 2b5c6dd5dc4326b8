//! Small dense-network engine: MLP forward/backward, weighted softmax
//! cross-entropy, Adam and global-norm gradient clipping.
//!
//! Weights are stored `fan_in x fan_out` so a batch `X` (rows are samples)
//! maps to `X · W + b`. Hidden layers use the rectifier; the last layer is linear.

use ndarray::{Array1, Array2, ArrayView2, Axis, Zip};
use rand::distr::{Distribution, Uniform};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seed;

pub const ADAM_BETA1: f64 = 0.9;
pub const ADAM_BETA2: f64 = 0.999;
pub const ADAM_EPS: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Activation {
    Relu,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum OutputKind {
    /// One unnormalized score per class.
    Logits,
    /// A single raw logit (selector networks).
    SingleLogit,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Layer {
    pub weight: Array2<f64>,
    pub bias: Array1<f64>,
}

impl Layer {
    fn zeros_like(&self) -> Layer {
        Layer {
            weight: Array2::zeros(self.weight.raw_dim()),
            bias: Array1::zeros(self.bias.raw_dim()),
        }
    }

    fn same_shape(&self, other: &Layer) -> bool {
        self.weight.dim() == other.weight.dim() && self.bias.len() == other.bias.len()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MlpParams {
    pub layers: Vec<Layer>,
    pub hidden_activation: Activation,
    pub output: OutputKind,
}

/// Gradients of a loss with respect to every parameter of an [`MlpParams`].
#[derive(Debug, Clone, PartialEq)]
pub struct GradientSet {
    pub layers: Vec<Layer>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub m: Vec<Layer>,
    pub v: Vec<Layer>,
    pub step_count: u64,
}

/// Layer inputs recorded by [`mlp_forward`], enough for an exact backward pass.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    /// `inputs[l]` is the matrix fed into layer `l` (post-activation of layer `l-1`).
    inputs: Vec<Array2<f64>>,
    layer_dims: Vec<(usize, usize)>,
}

impl MlpParams {
    pub fn input_dim(&self) -> usize {
        self.layers[0].weight.nrows()
    }

    pub fn output_dim(&self) -> usize {
        self.layers[self.layers.len() - 1].weight.ncols()
    }

    pub fn layer_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![self.input_dim()];
        sizes.extend(self.layers.iter().map(|l| l.weight.ncols()));
        sizes
    }

    pub fn param_count(&self) -> usize {
        self.layers
            .iter()
            .map(|l| l.weight.len() + l.bias.len())
            .sum()
    }

    pub fn is_finite(&self) -> bool {
        self.layers
            .iter()
            .all(|l| l.weight.iter().chain(l.bias.iter()).all(|v| v.is_finite()))
    }

    /// All parameters flattened: per layer, weight (row-major) then bias.
    pub fn flatten(&self) -> Vec<f64> {
        flatten_layers(&self.layers)
    }

    /// Inverse of [`MlpParams::flatten`] for a network of the same shape.
    pub fn assign_flat(&mut self, values: &[f64]) -> Result<()> {
        if values.len() != self.param_count() {
            return Err(Error::dims(format!(
                "{} values for {} parameters",
                values.len(),
                self.param_count()
            )));
        }
        let mut it = values.iter().copied();
        for layer in &mut self.layers {
            for w in layer.weight.iter_mut().chain(layer.bias.iter_mut()) {
                *w = it.next().unwrap();
            }
        }
        Ok(())
    }

    pub fn zero_gradients(&self) -> GradientSet {
        GradientSet {
            layers: self.layers.iter().map(Layer::zeros_like).collect(),
        }
    }
}

impl GradientSet {
    pub fn flatten(&self) -> Vec<f64> {
        flatten_layers(&self.layers)
    }

    pub fn global_norm(&self) -> f64 {
        self.layers
            .iter()
            .flat_map(|l| l.weight.iter().chain(l.bias.iter()))
            .map(|v| v * v)
            .sum::<f64>()
            .sqrt()
    }

    fn is_finite(&self) -> bool {
        self.layers
            .iter()
            .all(|l| l.weight.iter().chain(l.bias.iter()).all(|v| v.is_finite()))
    }
}

impl AdamState {
    pub fn new(params: &MlpParams) -> Self {
        let zeros: Vec<Layer> = params.layers.iter().map(Layer::zeros_like).collect();
        AdamState {
            m: zeros.clone(),
            v: zeros,
            step_count: 0,
        }
    }
}

fn flatten_layers(layers: &[Layer]) -> Vec<f64> {
    layers
        .iter()
        .flat_map(|l| l.weight.iter().chain(l.bias.iter()).copied())
        .collect()
}

/// Glorot-uniform weights, zero biases.
pub fn init_mlp(layer_sizes: &[usize], seed: u64) -> Result<MlpParams> {
    if layer_sizes.len() < 2 {
        return Err(Error::invalid(format!(
            "an MLP needs at least 2 layer sizes, got {}",
            layer_sizes.len()
        )));
    }
    if layer_sizes.contains(&0) {
        return Err(Error::invalid(format!(
            "zero-width layer in {layer_sizes:?}"
        )));
    }
    let mut rng = seed::rng(seed);
    let layers = layer_sizes
        .windows(2)
        .map(|w| {
            let (fan_in, fan_out) = (w[0], w[1]);
            let scale = (6.0 / (fan_in + fan_out) as f64).sqrt();
            let dist = Uniform::new_inclusive(-scale, scale).expect("finite bounds");
            Layer {
                weight: Array2::from_shape_simple_fn((fan_in, fan_out), || dist.sample(&mut rng)),
                bias: Array1::zeros(fan_out),
            }
        })
        .collect();
    let output = if *layer_sizes.last().unwrap() == 1 {
        OutputKind::SingleLogit
    } else {
        OutputKind::Logits
    };
    Ok(MlpParams {
        layers,
        hidden_activation: Activation::Relu,
        output,
    })
}

pub fn mlp_forward(
    params: &MlpParams,
    inputs: ArrayView2<f64>,
) -> Result<(Array2<f64>, ForwardCache)> {
    if inputs.ncols() != params.input_dim() {
        return Err(Error::dims(format!(
            "input width {} but network expects {}",
            inputs.ncols(),
            params.input_dim()
        )));
    }
    let last = params.layers.len() - 1;
    let mut cached = Vec::with_capacity(params.layers.len());
    let mut current = inputs.to_owned();
    for (l, layer) in params.layers.iter().enumerate() {
        let mut out = current.dot(&layer.weight);
        out += &layer.bias;
        if l < last {
            out.mapv_inplace(|v| v.max(0.0));
        }
        cached.push(current);
        current = out;
    }
    Ok((
        current,
        ForwardCache {
            inputs: cached,
            layer_dims: params.layers.iter().map(|l| l.weight.dim()).collect(),
        },
    ))
}

/// Forward pass without keeping a cache, for inference over large matrices.
pub fn mlp_predict(params: &MlpParams, inputs: ArrayView2<f64>) -> Result<Array2<f64>> {
    if inputs.ncols() != params.input_dim() {
        return Err(Error::dims(format!(
            "input width {} but network expects {}",
            inputs.ncols(),
            params.input_dim()
        )));
    }
    let last = params.layers.len() - 1;
    let mut current = inputs.to_owned();
    for (l, layer) in params.layers.iter().enumerate() {
        let mut out = current.dot(&layer.weight);
        out += &layer.bias;
        if l < last {
            out.mapv_inplace(|v| v.max(0.0));
        }
        current = out;
    }
    Ok(current)
}

pub fn mlp_backward(
    params: &MlpParams,
    cache: &ForwardCache,
    doutputs: ArrayView2<f64>,
) -> Result<(GradientSet, Array2<f64>)> {
    let dims: Vec<(usize, usize)> = params.layers.iter().map(|l| l.weight.dim()).collect();
    if dims != cache.layer_dims {
        return Err(Error::dims(
            "forward cache was produced by a different network",
        ));
    }
    let batch = cache.inputs[0].nrows();
    if doutputs.dim() != (batch, params.output_dim()) {
        return Err(Error::dims(format!(
            "output gradient {:?}, expected {:?}",
            doutputs.dim(),
            (batch, params.output_dim())
        )));
    }
    let mut grads = Vec::with_capacity(params.layers.len());
    let mut delta = doutputs.to_owned();
    for l in (0..params.layers.len()).rev() {
        let input = &cache.inputs[l];
        let layer = &params.layers[l];
        let dweight = input.t().dot(&delta);
        let dbias = delta.sum_axis(Axis(0));
        let mut dinput = delta.dot(&layer.weight.t());
        if l > 0 {
            // rectifier derivative: zero where the activation was clipped
            Zip::from(&mut dinput).and(input).for_each(|d, &a| {
                if a <= 0.0 {
                    *d = 0.0;
                }
            });
        }
        grads.push(Layer {
            weight: dweight,
            bias: dbias,
        });
        delta = dinput;
    }
    grads.reverse();
    Ok((GradientSet { layers: grads }, delta))
}

/// Log-softmax of one row, stabilized by subtracting the row maximum.
pub fn log_softmax_row(row: &[f64]) -> Vec<f64> {
    let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = max + row.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
    row.iter().map(|v| v - lse).collect()
}

pub fn softmax_rows(logits: ArrayView2<f64>) -> Array2<f64> {
    let mut out = logits.to_owned();
    for mut row in out.rows_mut() {
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        row.mapv_inplace(|v| (v - max).exp());
        let sum = row.sum();
        row /= sum;
    }
    out
}

/// Per-row cross-entropy `-log softmax(logits)[label]`.
pub fn per_sample_xent(logits: ArrayView2<f64>, labels: &[usize]) -> Result<Vec<f64>> {
    check_logits(logits, labels)?;
    Ok(logits
        .rows()
        .into_iter()
        .zip(labels)
        .map(|(row, &y)| {
            let row = row.to_vec();
            -log_softmax_row(&row)[y]
        })
        .collect())
}

fn check_logits(logits: ArrayView2<f64>, labels: &[usize]) -> Result<()> {
    if logits.nrows() != labels.len() {
        return Err(Error::dims(format!(
            "{} logit rows, {} labels",
            logits.nrows(),
            labels.len()
        )));
    }
    if let Some(&bad) = labels.iter().find(|&&y| y >= logits.ncols()) {
        return Err(Error::invalid(format!(
            "label {bad} outside 0..{}",
            logits.ncols()
        )));
    }
    if logits.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("logits".into()));
    }
    Ok(())
}

/// Mean selection-weighted cross-entropy and its gradient with respect to the logits.
///
/// `loss = -(1/B) Σ w_i log softmax(logits_i)[y_i]` and
/// `dlogits_i = w_i / B · (softmax(logits_i) - onehot(y_i))`.
pub fn weighted_softmax_xent(
    logits: ArrayView2<f64>,
    labels: &[usize],
    weights: &[f64],
) -> Result<(f64, Array2<f64>)> {
    check_logits(logits, labels)?;
    if weights.len() != labels.len() {
        return Err(Error::dims(format!(
            "{} weights for {} rows",
            weights.len(),
            labels.len()
        )));
    }
    if let Some(w) = weights.iter().find(|w| !(0.0..=1.0).contains(*w)) {
        return Err(Error::invalid(format!("sample weight {w} outside [0, 1]")));
    }
    let batch = labels.len().max(1) as f64;
    let mut dlogits = Array2::zeros(logits.raw_dim());
    let mut loss = 0.0;
    for (i, (row, &y)) in logits.rows().into_iter().zip(labels).enumerate() {
        let w = weights[i];
        if w == 0.0 {
            continue;
        }
        let logp = log_softmax_row(&row.to_vec());
        loss -= w * logp[y];
        let mut drow = dlogits.row_mut(i);
        for (k, lp) in logp.iter().enumerate() {
            let target = if k == y { 1.0 } else { 0.0 };
            drow[k] = w / batch * (lp.exp() - target);
        }
    }
    Ok((loss / batch, dlogits))
}

/// One Adam update (β1 = 0.9, β2 = 0.999, ε = 1e-8, bias corrected).
pub fn adam_step(
    params: &mut MlpParams,
    grads: &GradientSet,
    state: &mut AdamState,
    lr: f64,
) -> Result<()> {
    if !(lr >= 0.0) || !lr.is_finite() {
        return Err(Error::invalid(format!(
            "learning rate {lr} must be finite and >= 0"
        )));
    }
    let congruent = params.layers.len() == grads.layers.len()
        && params.layers.len() == state.m.len()
        && params
            .layers
            .iter()
            .zip(&grads.layers)
            .zip(&state.m)
            .all(|((p, g), m)| p.same_shape(g) && p.same_shape(m));
    if !congruent {
        return Err(Error::dims(
            "parameters, gradients and optimizer state differ in shape",
        ));
    }
    if !grads.is_finite() {
        return Err(Error::NonFinite("gradient".into()));
    }
    state.step_count += 1;
    let t = state.step_count as i32;
    let c1 = 1.0 - ADAM_BETA1.powi(t);
    let c2 = 1.0 - ADAM_BETA2.powi(t);
    let update = |p: &mut f64, g: &f64, m: &mut f64, v: &mut f64| {
        *m = ADAM_BETA1 * *m + (1.0 - ADAM_BETA1) * g;
        *v = ADAM_BETA2 * *v + (1.0 - ADAM_BETA2) * g * g;
        let m_hat = *m / c1;
        let v_hat = *v / c2;
        *p -= lr * m_hat / (v_hat.sqrt() + ADAM_EPS);
    };
    for (((p, g), m), v) in params
        .layers
        .iter_mut()
        .zip(&grads.layers)
        .zip(&mut state.m)
        .zip(&mut state.v)
    {
        Zip::from(&mut p.weight)
            .and(&g.weight)
            .and(&mut m.weight)
            .and(&mut v.weight)
            .for_each(update);
        Zip::from(&mut p.bias)
            .and(&g.bias)
            .and(&mut m.bias)
            .and(&mut v.bias)
            .for_each(update);
    }
    Ok(())
}

/// Rescales `grads` in place so the global L2 norm is at most `max_norm`.
/// Returns the norm before clipping.
pub fn clip_gradients(grads: &mut GradientSet, max_norm: f64) -> f64 {
    let norm = grads.global_norm();
    if norm > max_norm && norm > 0.0 {
        let scale = max_norm / norm;
        for layer in &mut grads.layers {
            layer.weight *= scale;
            layer.bias *= scale;
        }
    }
    norm
}

// ---------------------------------------------------------------------------
// Snapshots

const SNAPSHOT_FORMAT: &str = "mlp-f64le";

#[derive(Debug, Serialize, Deserialize)]
struct SnapshotHeader {
    format: String,
    /// `[fan_in, fan_out]` per layer.
    layers: Vec<[usize; 2]>,
    hidden_activation: Activation,
    output: OutputKind,
}

/// Serializes the parameters as a one-line JSON shape header, a newline, and
/// then every parameter as a little-endian `f64` in [`MlpParams::flatten`] order.
pub fn to_snapshot(params: &MlpParams) -> Vec<u8> {
    let header = SnapshotHeader {
        format: SNAPSHOT_FORMAT.to_string(),
        layers: params
            .layers
            .iter()
            .map(|l| [l.weight.nrows(), l.weight.ncols()])
            .collect(),
        hidden_activation: params.hidden_activation,
        output: params.output,
    };
    let mut bytes = serde_json::to_vec(&header).expect("header serializes");
    bytes.push(b'\n');
    for v in params.flatten() {
        bytes.extend_from_slice(&v.to_le_bytes());
    }
    bytes
}

pub fn from_snapshot(bytes: &[u8]) -> Result<MlpParams> {
    let split = bytes
        .iter()
        .position(|&b| b == b'\n')
        .ok_or_else(|| Error::invalid("snapshot has no header line"))?;
    let header: SnapshotHeader = serde_json::from_slice(&bytes[..split])
        .map_err(|e| Error::invalid(format!("snapshot header: {e}")))?;
    if header.format != SNAPSHOT_FORMAT {
        return Err(Error::invalid(format!(
            "unknown snapshot format '{}'",
            header.format
        )));
    }
    if header.layers.is_empty() || header.layers.windows(2).any(|w| w[0][1] != w[1][0]) {
        return Err(Error::invalid("snapshot layer shapes do not chain"));
    }
    let body = &bytes[split + 1..];
    if body.len() % 8 != 0 {
        return Err(Error::invalid(
            "snapshot body is not a whole number of f64 values",
        ));
    }
    let values: Vec<f64> = body
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    let mut params = MlpParams {
        layers: header
            .layers
            .iter()
            .map(|&[i, o]| Layer {
                weight: Array2::zeros((i, o)),
                bias: Array1::zeros(o),
            })
            .collect(),
        hidden_activation: header.hidden_activation,
        output: header.output,
    };
    params.assign_flat(&values)?;
    Ok(params)
}
