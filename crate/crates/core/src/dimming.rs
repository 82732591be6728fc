//! Hybrid analog/spatial dimming: how many LEDs glow, at which DC bias, and
//! how much modulation headroom that leaves each LED.

use crate::error::{Error, Result};
use crate::geometry::Matrix;

/// Relative tolerance used when checking that the DC bias stays within `I_h`.
const BIAS_TOLERANCE: f64 = 1e-12;

/// Target dimming level and LED drive-current limits.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DimmingConfig {
    /// Target dimming level η ∈ (0, 1].
    pub eta: f64,
    /// Lowest admissible drive current, A.
    pub i_low: f64,
    /// Highest admissible drive current, A.
    pub i_high: f64,
    /// Total number of LEDs in the array.
    pub n_leds: usize,
}

impl DimmingConfig {
    pub fn new(eta: f64, i_low: f64, i_high: f64, n_leds: usize) -> Result<Self> {
        if !(eta > 0.0 && eta <= 1.0) {
            return Err(Error::range("eta", eta, "0 < η ≤ 1"));
        }
        if !(i_low >= 0.0 && i_high > i_low) {
            return Err(Error::range("i_high", i_high, "I_h > I_l ≥ 0"));
        }
        if n_leds == 0 {
            return Err(Error::range("n_leds", 0.0, "≥ 1"));
        }
        Ok(DimmingConfig {
            eta,
            i_low,
            i_high,
            n_leds,
        })
    }

    /// Bias at full brightness with every LED on: `(I_l + I_h) / 2`.
    pub fn i_orig(&self) -> f64 {
        0.5 * (self.i_low + self.i_high)
    }

    pub fn active_leds(&self) -> usize {
        active_led_count(self.eta, self.n_leds)
    }
}

/// Binary LED on/off pattern.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LedSelection {
    mask: Vec<bool>,
}

impl LedSelection {
    pub fn from_mask(mask: Vec<bool>) -> Self {
        LedSelection { mask }
    }

    pub fn all(n: usize) -> Self {
        LedSelection {
            mask: vec![true; n],
        }
    }

    pub fn mask(&self) -> &[bool] {
        &self.mask
    }

    pub fn len(&self) -> usize {
        self.mask.len()
    }

    pub fn is_empty(&self) -> bool {
        self.mask.is_empty()
    }

    pub fn is_active(&self, n: usize) -> bool {
        self.mask[n]
    }

    /// Number of glowing LEDs, `N_a`.
    pub fn active_count(&self) -> usize {
        self.mask.iter().filter(|&&a| a).count()
    }

    /// Indices of the glowing LEDs in ascending order.
    pub fn active_indices(&self) -> impl Iterator<Item = usize> + '_ {
        self.mask.iter().enumerate().filter(|(_, &a)| a).map(|(i, _)| i)
    }
}

/// Per-LED precoding weights, N×K amperes per unit symbol.
#[derive(Debug, Clone, PartialEq)]
pub struct Beamformer {
    pub w: Matrix,
}

impl Beamformer {
    pub fn zeros(n_leds: usize, n_users: usize) -> Self {
        Beamformer {
            w: Matrix::zeros(n_leds, n_users),
        }
    }

    /// `Σ_k |w_{n,k}|` for LED `n`.
    pub fn row_abs_sum(&self, n: usize) -> f64 {
        self.w.row(n).iter().map(|v| v.abs()).sum()
    }

    /// True if every row's absolute sum is within `bound` (plus a relative
    /// rounding allowance).
    pub fn satisfies_bound(&self, bound: f64) -> bool {
        let slack = bound * 1e-12;
        (0..self.w.rows()).all(|n| self.row_abs_sum(n) <= bound + slack)
    }
}

/// `N_a = [ηN]`, rounding half up and never below one LED.
pub fn active_led_count(eta: f64, n_leds: usize) -> usize {
    let raw = (eta * n_leds as f64 + 0.5).floor();
    (raw.max(1.0) as usize).min(n_leds.max(1))
}

/// Uniform DC bias `I_DC = ηN(I_0 − I_l)/N_a + I_l` that realizes the target
/// dimming level with `n_active` glowing LEDs.
pub fn dc_bias_for(cfg: &DimmingConfig, n_active: usize) -> Result<f64> {
    if n_active == 0 {
        return Err(Error::range("n_active", 0.0, "≥ 1"));
    }
    let bias =
        cfg.eta * cfg.n_leds as f64 * (cfg.i_orig() - cfg.i_low) / n_active as f64 + cfg.i_low;
    if bias > cfg.i_high * (1.0 + BIAS_TOLERANCE) {
        return Err(Error::range(
            "dc_bias",
            bias,
            format!("≤ I_h = {} (η and N_a inconsistent)", cfg.i_high),
        ));
    }
    Ok(bias)
}

/// Dimming level delivered by `n_active` LEDs biased at `i_dc`.
pub fn dimming_level_of(n_active: usize, i_dc: f64, cfg: &DimmingConfig) -> f64 {
    n_active as f64 * (i_dc - cfg.i_low) / (cfg.n_leds as f64 * (cfg.i_orig() - cfg.i_low))
}

/// Largest per-LED modulation amplitude that keeps the drive current inside
/// `[I_l, I_h]`.
pub fn beamforming_bound(i_dc: f64, i_low: f64, i_high: f64) -> f64 {
    (i_dc - i_low).min(i_high - i_dc).max(0.0)
}

/// Masks inactive LEDs and rescales any row whose absolute sum exceeds `bound`.
pub fn project_beamformer(w_raw: &Matrix, bound: f64, selection: &LedSelection) -> Beamformer {
    assert_eq!(w_raw.rows(), selection.len(), "beamformer rows vs LED count");
    let mut w = w_raw.clone();
    for n in 0..w.rows() {
        let row = w.row_mut(n);
        if !selection.is_active(n) {
            row.fill(0.0);
            continue;
        }
        let sum: f64 = row.iter().map(|v| v.abs()).sum();
        if sum > bound {
            let scale = if sum > 0.0 { bound / sum } else { 0.0 };
            row.iter_mut().for_each(|v| *v *= scale);
        }
    }
    Beamformer { w }
}

/// Turns on the `n_active` LEDs with the largest scores, lowest index first on ties.
pub fn select_leds(scores: &[f64], n_active: usize) -> LedSelection {
    let mut idx: Vec<usize> = (0..scores.len()).collect();
    idx.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
    let mut mask = vec![false; scores.len()];
    for &i in idx.iter().take(n_active) {
        mask[i] = true;
    }
    LedSelection { mask }
}
