//! Per-slot episode records and their CSV form.

use std::io::Write;

use crate::error::Result;
use crate::flight::FlightViolation;
use crate::geometry::{Position, Vec3};
use crate::metrics::{FeasibilityReport, PowerBreakdown, SlotEvaluation};

#[derive(Debug, Clone, PartialEq)]
pub struct SlotRecord {
    pub slot: usize,
    pub reward: f64,
    pub power: PowerBreakdown,
    /// Per-user rates on the true channels, bits/s/Hz.
    pub rates: Vec<f64>,
    pub sum_rate: f64,
    pub energy_efficiency: f64,
    pub feasibility: FeasibilityReport,
    pub flight_violations: Vec<FlightViolation>,
    /// UAV position at the start of the slot.
    pub position: Position,
    pub velocity: Vec3,
}

impl SlotRecord {
    pub fn new(slot: usize, reward: f64, position: Position, velocity: Vec3, eval: &SlotEvaluation) -> Self {
        SlotRecord {
            slot,
            reward,
            power: eval.power,
            rates: eval.rates.rates.clone(),
            sum_rate: eval.rates.sum_rate,
            energy_efficiency: eval.energy_efficiency,
            feasibility: eval.feasibility,
            flight_violations: eval.flight_violations.clone(),
            position,
            velocity,
        }
    }
}

/// Episode-level averages.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct EpisodeSummary {
    pub mean_power: f64,
    pub mean_sum_rate: f64,
    pub mean_energy_efficiency: f64,
    /// Fraction of slots meeting every constraint.
    pub feasibility_fraction: f64,
    pub total_reward: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct EpisodeTrace {
    pub records: Vec<SlotRecord>,
}

impl EpisodeTrace {
    pub fn push(&mut self, record: SlotRecord) {
        self.records.push(record);
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn summary(&self) -> EpisodeSummary {
        let n = self.records.len();
        if n == 0 {
            return EpisodeSummary::default();
        }
        let mean = |f: &dyn Fn(&SlotRecord) -> f64| self.records.iter().map(f).sum::<f64>() / n as f64;
        EpisodeSummary {
            mean_power: mean(&|r| r.power.total),
            mean_sum_rate: mean(&|r| r.sum_rate),
            mean_energy_efficiency: mean(&|r| r.energy_efficiency),
            feasibility_fraction: mean(&|r| if r.feasibility.all_met() { 1.0 } else { 0.0 }),
            total_reward: self.records.iter().map(|r| r.reward).sum(),
        }
    }

    /// Writes one row per slot. Per-user rate columns follow the user count of
    /// the first record.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let k = self.records.first().map_or(0, |r| r.rates.len());
        let mut w = csv::Writer::from_writer(out);
        let mut header: Vec<String> = [
            "slot", "reward", "p_transmit", "p_bias", "p_circuit", "p_propulsion", "p_total", "sum_rate",
            "energy_efficiency",
        ]
        .iter()
        .map(|s| s.to_string())
        .collect();
        header.extend((0..k).map(|i| format!("rate_{i}")));
        header.extend((1..=9).map(|c| format!("c{c}")));
        header.extend(["x", "y", "z"].iter().map(|s| s.to_string()));
        w.write_record(&header)?;
        for r in &self.records {
            let mut row = vec![
                r.slot.to_string(),
                r.reward.to_string(),
                r.power.transmit.to_string(),
                r.power.bias.to_string(),
                r.power.circuit.to_string(),
                r.power.propulsion.to_string(),
                r.power.total.to_string(),
                r.sum_rate.to_string(),
                r.energy_efficiency.to_string(),
            ];
            row.extend(r.rates.iter().map(|v| v.to_string()));
            row.extend(r.feasibility.bits().iter().map(|&b| u8::from(b).to_string()));
            row.extend(r.position.to_array().iter().map(|v| v.to_string()));
            w.write_record(&row)?;
        }
        w.flush().map_err(|e| crate::error::Error::io("<trace>", e))?;
        Ok(())
    }
}
