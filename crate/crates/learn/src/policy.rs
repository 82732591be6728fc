//! Tanh-squashed diagonal Gaussian policy head.
//!
//! The actor network emits `2A` numbers: `A` means followed by `A`
//! unconstrained log-std pre-activations, squashed smoothly into
//! `[LOG_STD_MIN, LOG_STD_MAX]` so the head stays differentiable everywhere.

use rand::Rng;
use rand_distr::StandardNormal;

pub const LOG_STD_MIN: f64 = -5.0;
pub const LOG_STD_MAX: f64 = 2.0;

const HALF_LN_2PI: f64 = 0.918_938_533_204_672_8;

/// Pre-squash bound keeping `tanh(u)` strictly inside `(−1, 1)` in f64.
pub const PRE_SQUASH_LIMIT: f64 = 15.0;

/// `ln(1 − tanh²u)` without cancellation for large `|u|`.
pub fn log_one_minus_tanh_sq(u: f64) -> f64 {
    let softplus = if -2.0 * u > 30.0 {
        -2.0 * u
    } else {
        (-2.0 * u).exp().ln_1p()
    };
    2.0 * (std::f64::consts::LN_2 - u - softplus)
}

pub fn log_std_from_raw(raw: f64) -> f64 {
    LOG_STD_MIN + 0.5 * (LOG_STD_MAX - LOG_STD_MIN) * (raw.tanh() + 1.0)
}

fn d_log_std_d_raw(raw: f64) -> f64 {
    let t = raw.tanh();
    0.5 * (LOG_STD_MAX - LOG_STD_MIN) * (1.0 - t * t)
}

/// One reparameterized draw `a = tanh(μ + σ ξ)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub action: Vec<f64>,
    pub log_prob: f64,
    pub noise: Vec<f64>,
    pub mean: Vec<f64>,
    pub log_std: Vec<f64>,
}

/// Squashed sample for explicit mean, log-std and standard-normal noise.
pub fn squashed_sample(mean: &[f64], log_std: &[f64], noise: &[f64]) -> Sample {
    assert_eq!(mean.len(), log_std.len());
    assert_eq!(mean.len(), noise.len());
    let mut action = Vec::with_capacity(mean.len());
    let mut log_prob = 0.0;
    for ((&mu, &ls), &xi) in mean.iter().zip(log_std).zip(noise) {
        let u = (mu + ls.exp() * xi).clamp(-PRE_SQUASH_LIMIT, PRE_SQUASH_LIMIT);
        action.push(u.tanh());
        log_prob += -0.5 * xi * xi - ls - HALF_LN_2PI - log_one_minus_tanh_sq(u);
    }
    Sample {
        action,
        log_prob,
        noise: noise.to_vec(),
        mean: mean.to_vec(),
        log_std: log_std.to_vec(),
    }
}

/// Density of a squashed Gaussian evaluated at an action in `(−1, 1)^A`.
pub fn squashed_log_prob(action: &[f64], mean: &[f64], log_std: &[f64]) -> f64 {
    action
        .iter()
        .zip(mean)
        .zip(log_std)
        .map(|((&a, &mu), &ls)| {
            let u = a.atanh();
            let z = (u - mu) / ls.exp();
            -0.5 * z * z - ls - HALF_LN_2PI - log_one_minus_tanh_sq(u)
        })
        .sum()
}

/// Splits a raw actor output into `(mean, log_std)`.
pub fn split_head(out: &[f64]) -> (&[f64], Vec<f64>) {
    assert!(out.len().is_multiple_of(2), "policy head must have even width");
    let (mean, raw) = out.split_at(out.len() / 2);
    (mean, raw.iter().map(|&r| log_std_from_raw(r)).collect())
}

/// Draws from the policy head; `deterministic` returns `tanh(μ)` with zero noise.
pub fn sample_head<R: Rng + ?Sized>(out: &[f64], rng: &mut R, deterministic: bool) -> Sample {
    let (mean, log_std) = split_head(out);
    let noise: Vec<f64> = if deterministic {
        vec![0.0; mean.len()]
    } else {
        (0..mean.len()).map(|_| rng.sample(StandardNormal)).collect()
    };
    squashed_sample(mean, &log_std, &noise)
}

/// Gradient with respect to the raw head outputs of a loss `L(a, log π)`
/// under the reparameterization with fixed noise.
///
/// `d_action` is `∂L/∂a`, `d_log_prob` is `∂L/∂log π`.
pub fn head_backward(out: &[f64], sample: &Sample, d_action: &[f64], d_log_prob: f64) -> Vec<f64> {
    let n = out.len() / 2;
    let mut grad = vec![0.0; 2 * n];
    for i in 0..n {
        let a = sample.action[i];
        let sigma = sample.log_std[i].exp();
        let xi = sample.noise[i];
        let u = sample.mean[i] + sigma * xi;
        if u.abs() > PRE_SQUASH_LIMIT {
            // Clamped draw: flat in μ and σ.
            grad[n + i] = -d_log_prob * d_log_std_d_raw(out[n + i]);
            continue;
        }
        let da_du = 1.0 - a * a;
        // ∂ log π / ∂u = 2a through the tanh correction.
        let d_u = d_action[i] * da_du + d_log_prob * 2.0 * a;
        grad[i] = d_u;
        let d_log_std = d_u * sigma * xi - d_log_prob;
        grad[n + i] = d_log_std * d_log_std_d_raw(out[n + i]);
    }
    grad
}
