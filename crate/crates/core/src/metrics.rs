//! NOMA decoding order, per-user rates, power accounting, energy efficiency,
//! and the constraint-by-constraint feasibility check of the power
//! minimization problem.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::channel::ChannelState;
use crate::dimming::{
    active_led_count, beamforming_bound, dimming_level_of, Beamformer, DimmingConfig, LedSelection,
};
use crate::error::{Error, Result};
use crate::flight::{
    check_flight, propulsion_power, FlightConfig, FlightViolation, RotorcraftParams, UavState,
};
use crate::geometry::{Matrix, Vec3};

/// Tolerance on the dimming-level identity (C8).
pub const DIMMING_TOLERANCE: f64 = 1e-9;

/// Power-model coefficients for the communication payload.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PowerParams {
    /// Amplifier efficiency factor applied to the modulation amplitudes.
    pub amplifier_efficiency: f64,
    /// Conversion factor applied to the DC-bias currents.
    pub conversion_factor: f64,
    /// Switch and control circuit power, W.
    pub circuit_power: f64,
}

impl Default for PowerParams {
    fn default() -> Self {
        PowerParams {
            amplifier_efficiency: 1.2,
            conversion_factor: 1.0,
            circuit_power: 1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct QosConfig {
    /// Minimum per-user rate, bits/s/Hz.
    pub r_min: f64,
    /// Communication power budget, W.
    pub p_max: f64,
}

impl Default for QosConfig {
    fn default() -> Self {
        QosConfig {
            r_min: 2.0,
            p_max: 20.0,
        }
    }
}

/// Terms of the total UAV power draw, W.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct PowerBreakdown {
    pub transmit: f64,
    pub bias: f64,
    pub circuit: f64,
    pub propulsion: f64,
    pub total: f64,
}

impl PowerBreakdown {
    /// Everything except propulsion: the share charged against `P_max`.
    pub fn communication(&self) -> f64 {
        self.transmit + self.bias + self.circuit
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RateReport {
    /// Rate of each user (indexed by user, not by decoding position), bits/s/Hz.
    pub rates: Vec<f64>,
    pub sum_rate: f64,
    /// Users in decoding order, weakest received signal first.
    pub order: Vec<usize>,
}

/// Resource allocation for one slot.
#[derive(Debug, Clone, PartialEq)]
pub struct AllocationAction {
    pub beamformer: Beamformer,
    pub selection: LedSelection,
    /// Uniform DC bias applied to the glowing LEDs, A.
    pub dc_bias: f64,
    /// Velocity flown during the slot, m/s.
    pub velocity: Vec3,
}

/// Everything the feasibility check needs besides the action.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProblemParams {
    pub dimming: DimmingConfig,
    pub qos: QosConfig,
    pub power: PowerParams,
    pub rotor: RotorcraftParams,
    pub flight: FlightConfig,
}

/// Pass/fail of each of the nine problem constraints, `C1` at index 0.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct FeasibilityReport {
    bits: [bool; 9],
}

impl FeasibilityReport {
    pub fn from_bits(bits: [bool; 9]) -> Self {
        FeasibilityReport { bits }
    }

    /// Status of constraint `C{index}`, 1-based.
    pub fn constraint(&self, index: usize) -> bool {
        assert!((1..=9).contains(&index), "constraints are C1..C9");
        self.bits[index - 1]
    }

    pub fn bits(&self) -> [bool; 9] {
        self.bits
    }

    pub fn all_met(&self) -> bool {
        self.bits.iter().all(|&b| b)
    }

    /// Number of violated constraints among `C{from}..=C9`.
    pub fn violations_from(&self, from: usize) -> usize {
        self.bits[from - 1..].iter().filter(|&&b| !b).count()
    }
}

impl fmt::Display for FeasibilityReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for b in self.bits {
            f.write_str(if b { "1" } else { "0" })?;
        }
        Ok(())
    }
}

/// Full evaluation of a slot on the true channels.
#[derive(Debug, Clone, PartialEq)]
pub struct SlotEvaluation {
    pub rates: RateReport,
    pub power: PowerBreakdown,
    pub energy_efficiency: f64,
    pub feasibility: FeasibilityReport,
    pub flight_violations: Vec<FlightViolation>,
    /// `Σ_k max(0, R_min − R_k)`, bits/s/Hz.
    pub qos_shortfall: f64,
}

/// Received amplitude `h_kᴴ A w_i` of stream `i` at user `k`.
pub fn received_amplitude(h: &Matrix, w: &Matrix, a: &LedSelection, user: usize, stream: usize) -> f64 {
    a.active_indices().map(|n| h[(n, user)] * w[(n, stream)]).sum()
}

/// Decoding order: ascending `|h_kᴴ A w_k|²`, ties by user index.
pub fn order_users(h: &Matrix, w: &Beamformer, a: &LedSelection) -> Vec<usize> {
    let strength: Vec<f64> = (0..h.cols())
        .map(|k| received_amplitude(h, &w.w, a, k, k).powi(2))
        .collect();
    let mut order: Vec<usize> = (0..h.cols()).collect();
    order.sort_by(|&a, &b| strength[a].total_cmp(&strength[b]).then(a.cmp(&b)));
    order
}

/// Per-user NOMA rates: each user is interfered by the users decoded after it.
pub fn per_user_rate(
    h: &Matrix,
    w: &Beamformer,
    a: &LedSelection,
    noise_var: &[f64],
    order: &[usize],
) -> RateReport {
    let k_users = h.cols();
    assert_eq!(noise_var.len(), k_users, "one noise variance per user");
    assert_eq!(order.len(), k_users, "order must be a permutation of users");
    let mut rates = vec![0.0; k_users];
    for (pos, &k) in order.iter().enumerate() {
        let signal = received_amplitude(h, &w.w, a, k, k).powi(2);
        let interference: f64 = order[pos + 1..]
            .iter()
            .map(|&i| received_amplitude(h, &w.w, a, k, i).powi(2))
            .sum();
        rates[k] = (1.0 + signal / (interference + noise_var[k])).log2();
    }
    let sum_rate = rates.iter().sum();
    RateReport {
        rates,
        sum_rate,
        order: order.to_vec(),
    }
}

/// Total power draw for one slot.
pub fn total_power(
    w: &Beamformer,
    a: &LedSelection,
    dc_bias: f64,
    propulsion: f64,
    params: &PowerParams,
) -> PowerBreakdown {
    let amplitude: f64 = a.active_indices().map(|n| w.row_abs_sum(n)).sum();
    let transmit = params.amplifier_efficiency * amplitude;
    let bias = params.conversion_factor * a.active_count() as f64 * dc_bias;
    let circuit = params.circuit_power;
    PowerBreakdown {
        transmit,
        bias,
        circuit,
        propulsion,
        total: transmit + bias + circuit + propulsion,
    }
}

/// Sum rate per watt.
pub fn energy_efficiency(rates: &RateReport, power: &PowerBreakdown) -> Result<f64> {
    if !(power.total > 0.0) {
        return Err(Error::range("P_Tot", power.total, "> 0"));
    }
    Ok(rates.sum_rate / power.total)
}

/// Evaluates rates, power, and every constraint of the problem for one slot.
pub fn evaluate_slot(
    action: &AllocationAction,
    uav: &UavState,
    channels: &ChannelState,
    params: &ProblemParams,
) -> SlotEvaluation {
    let h = &channels.true_gain;
    let order = order_users(h, &action.beamformer, &action.selection);
    let rates = per_user_rate(h, &action.beamformer, &action.selection, &channels.noise_var, &order);
    let p_prop = propulsion_power(action.velocity, &params.rotor);
    let power = total_power(
        &action.beamformer,
        &action.selection,
        action.dc_bias,
        p_prop,
        &params.power,
    );
    let energy_efficiency = energy_efficiency(&rates, &power).unwrap_or(0.0);

    let r_min = params.qos.r_min;
    let qos_shortfall: f64 = rates.rates.iter().map(|&r| (r_min - r).max(0.0)).sum();
    let c1 = rates.rates.iter().all(|&r| r >= r_min);
    let c2 = power.communication() <= params.qos.p_max;
    let bound = beamforming_bound(action.dc_bias, params.dimming.i_low, params.dimming.i_high);
    let c3 = action.beamformer.satisfies_bound(bound);

    let flight_violations = check_flight(uav, action.velocity, &params.flight);
    let has = |v: FlightViolation| flight_violations.contains(&v);
    let c4 = !has(FlightViolation::NotReturned);
    let c5 = !has(FlightViolation::OutOfBounds);
    let c6 = !has(FlightViolation::Acceleration);
    let c7 = !has(FlightViolation::Speed);

    let n_active = action.selection.active_count();
    let c8 = (dimming_level_of(n_active, action.dc_bias, &params.dimming) - params.dimming.eta).abs()
        <= DIMMING_TOLERANCE;
    let c9 = action.selection.len() == params.dimming.n_leds
        && n_active == active_led_count(params.dimming.eta, params.dimming.n_leds);

    SlotEvaluation {
        rates,
        power,
        energy_efficiency,
        feasibility: FeasibilityReport::from_bits([c1, c2, c3, c4, c5, c6, c7, c8, c9]),
        flight_violations,
        qos_shortfall,
    }
}

/// Per-constraint report for C1..C9 (C1 evaluated on the true channels).
pub fn check_p1_feasibility(
    action: &AllocationAction,
    uav: &UavState,
    channels: &ChannelState,
    params: &ProblemParams,
) -> FeasibilityReport {
    evaluate_slot(action, uav, channels, params).feasibility
}
