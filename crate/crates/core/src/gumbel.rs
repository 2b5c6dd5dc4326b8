//! Binary Gumbel-Softmax (relaxed Bernoulli) sampling and temperature annealing.
//!
//! The two-way softmax over `(log p + g, log(1-p) + g')` is evaluated as the
//! sigmoid of the logit difference divided by the temperature, which is the same
//! quantity but does not overflow for small temperatures.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Uniform draws are kept inside `[UNIFORM_CLAMP, 1 - UNIFORM_CLAMP]`.
pub const UNIFORM_CLAMP: f64 = 1e-12;
/// Selection probabilities are kept inside `[PROB_CLAMP, 1 - PROB_CLAMP]`.
pub const PROB_CLAMP: f64 = 1e-7;

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

pub fn clamp_prob(p: f64) -> f64 {
    p.clamp(PROB_CLAMP, 1.0 - PROB_CLAMP)
}

/// Maps a uniform variate to a standard Gumbel sample, `-ln(-ln u)`.
pub fn gumbel_from_uniform(u: f64) -> f64 {
    let u = u.clamp(UNIFORM_CLAMP, 1.0 - UNIFORM_CLAMP);
    -(-u.ln()).ln()
}

pub fn sample_gumbel<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    gumbel_from_uniform(rng.random::<f64>())
}

/// Relaxed Bernoulli sample and its derivative with respect to the selector logit
/// `s` (where `p = σ(s)`), for fixed noise `g`, `g_prime`.
pub fn relaxed_bernoulli(p: f64, tau: f64, g: f64, g_prime: f64) -> Result<(f64, f64)> {
    if !(tau > 0.0) {
        return Err(Error::invalid(format!(
            "temperature must be positive, got {tau}"
        )));
    }
    let p = clamp_prob(p);
    let logit = p.ln() - (1.0 - p).ln();
    let z = sigmoid((logit + g - g_prime) / tau);
    Ok((z, z * (1.0 - z) / tau))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TemperatureSchedule {
    pub tau_init: f64,
    pub tau_final: f64,
    pub total_steps: usize,
}

impl TemperatureSchedule {
    pub fn new(tau_init: f64, tau_final: f64, total_steps: usize) -> Result<Self> {
        if !(tau_final > 0.0) || !(tau_init >= tau_final) || !tau_init.is_finite() {
            return Err(Error::invalid(format!(
                "temperature schedule needs tau_init >= tau_final > 0, got {tau_init} -> {tau_final}"
            )));
        }
        Ok(TemperatureSchedule {
            tau_init,
            tau_final,
            total_steps,
        })
    }
}

/// Geometric interpolation `tau_init · (tau_final / tau_init)^(step / total_steps)`.
pub fn anneal_temperature(step: usize, schedule: &TemperatureSchedule) -> Result<f64> {
    if step > schedule.total_steps {
        return Err(Error::invalid(format!(
            "annealing step {step} beyond schedule length {}",
            schedule.total_steps
        )));
    }
    if step == 0 {
        return Ok(schedule.tau_init);
    }
    if step == schedule.total_steps {
        return Ok(schedule.tau_final);
    }
    let frac = step as f64 / schedule.total_steps as f64;
    Ok(schedule.tau_init * (schedule.tau_final / schedule.tau_init).powf(frac))
}

/// Relaxed selection weights for one batch, with the noise that produced them.
#[derive(Debug, Clone, PartialEq)]
pub struct RelaxedMask {
    pub z_tilde: Vec<f64>,
    pub p: Vec<f64>,
    pub gumbel_pairs: Vec<(f64, f64)>,
    /// `dz̃_i / ds_i` for each sample.
    pub dz_dlogit: Vec<f64>,
}

/// Relaxes a batch of probabilities with the supplied noise pairs.
pub fn relax_with_noise(p: &[f64], tau: f64, noise: &[(f64, f64)]) -> Result<RelaxedMask> {
    if p.len() != noise.len() {
        return Err(Error::dims(format!(
            "{} probabilities, {} noise pairs",
            p.len(),
            noise.len()
        )));
    }
    let mut z_tilde = Vec::with_capacity(p.len());
    let mut dz = Vec::with_capacity(p.len());
    for (&pi, &(g, gp)) in p.iter().zip(noise) {
        let (z, d) = relaxed_bernoulli(pi, tau, g, gp)?;
        z_tilde.push(z);
        dz.push(d);
    }
    Ok(RelaxedMask {
        z_tilde,
        p: p.to_vec(),
        gumbel_pairs: noise.to_vec(),
        dz_dlogit: dz,
    })
}

/// Draws two independent Gumbel samples per entry of `p` and relaxes the batch.
pub fn relax_batch<R: Rng + ?Sized>(p: &[f64], tau: f64, rng: &mut R) -> Result<RelaxedMask> {
    let noise: Vec<(f64, f64)> = p
        .iter()
        .map(|_| (sample_gumbel(rng), sample_gumbel(rng)))
        .collect();
    relax_with_noise(p, tau, &noise)
}
