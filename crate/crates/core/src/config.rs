//! System configuration: every physical, flight, reward, and learning
//! constant, loaded from TOML with the reference scenario as defaults.
//!
//! Unknown keys are rejected. [`SystemConfig::canonical`] renders the full
//! configuration (defaults included) in a stable form, and
//! [`SystemConfig::hash`] fingerprints that form for result provenance.

use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::channel::OpticsParams;
use crate::dimming::{active_led_count, beamforming_bound, dc_bias_for, DimmingConfig};
use crate::error::{Error, Result};
use crate::flight::{hover_power, propulsion_power, FlightConfig, RotorcraftParams};
use crate::geometry::{Position, Vec3};
use crate::metrics::{PowerParams, ProblemParams, QosConfig};

/// The reference scenario lists two maximum speeds (20 m/s and 10 m/s); the
/// later one is the default.
pub const V_MAX_NOTE: &str =
    "reference parameter list gives V_max as both 20 m/s and 10 m/s; using v_max from config (default 10 m/s)";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields, default)]
pub struct SystemConfig {
    pub scenario: ScenarioConfig,
    pub optics: OpticsConfig,
    pub channel: ChannelConfig,
    pub dimming: DimmingSettings,
    pub power: PowerParams,
    pub qos: QosConfig,
    pub flight: FlightSettings,
    pub rotor: RotorcraftParams,
    pub reward: RewardConfig,
    pub env: EnvOptions,
    pub sac: SacHyper,
    pub meta: MetaHyper,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScenarioConfig {
    /// Number of ground users K.
    pub users: usize,
    /// Slots per episode L.
    pub slots: usize,
    /// Training episodes for a plain SAC agent on one task.
    pub train_episodes: usize,
    /// Deterministic evaluation episodes per (scheme, seed) result.
    pub eval_episodes: usize,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        ScenarioConfig {
            users: 5,
            slots: 20,
            train_episodes: 25,
            eval_episodes: 3,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OpticsConfig {
    pub half_power_semiangle_deg: f64,
    pub fov_semiangle_deg: f64,
    /// Photodiode area, m².
    pub pd_area: f64,
    pub refractive_index: f64,
}

impl Default for OpticsConfig {
    fn default() -> Self {
        OpticsConfig {
            half_power_semiangle_deg: 60.0,
            fov_semiangle_deg: 60.0,
            pd_area: 1e-4,
            refractive_index: 1.5,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ChannelConfig {
    /// Receiver noise variance σ², shared by all users, A².
    pub noise_var: f64,
    /// Bound δ on the per-entry channel estimation error.
    pub csi_radius: f64,
}

impl Default for ChannelConfig {
    fn default() -> Self {
        ChannelConfig {
            noise_var: 1e-21,
            csi_radius: 1e-9,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DimmingSettings {
    pub eta: f64,
    pub n_leds: usize,
    /// Lowest LED drive current, A.
    pub i_low: f64,
    /// Highest LED drive current, A.
    pub i_high: f64,
}

impl Default for DimmingSettings {
    fn default() -> Self {
        DimmingSettings {
            eta: 0.8,
            n_leds: 10,
            i_low: 0.0,
            i_high: 10e-3,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FlightSettings {
    /// Slot duration τ, s.
    pub slot_duration: f64,
    pub v_max: f64,
    pub a_max: f64,
    pub q_min: Position,
    pub q_max: Position,
    pub return_tolerance: f64,
}

impl Default for FlightSettings {
    fn default() -> Self {
        FlightSettings {
            slot_duration: 1.0,
            v_max: 10.0,
            a_max: 6.0,
            q_min: Vec3::new(0.0, 0.0, 10.0),
            q_max: Vec3::new(150.0, 150.0, 100.0),
            return_tolerance: 0.5,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RewardMode {
    /// Infeasible slots receive a (shaped) penalty below every feasible reward.
    Amended,
    /// Infeasible slots receive reward 0.
    PaperLiteral,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RewardConfig {
    pub mode: RewardMode,
    /// Base reward of an infeasible slot; defaults to `-(P_max + P_Hov)`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub penalty: Option<f64>,
    /// Extra penalty per watt of `P_Tot` on infeasible slots.
    pub power_weight: f64,
    /// Extra penalty per bit/s/Hz of total QoS shortfall on infeasible slots.
    pub qos_weight: f64,
    /// Extra penalty per violated constraint among C2..C9.
    pub violation_weight: f64,
}

impl Default for RewardConfig {
    fn default() -> Self {
        RewardConfig {
            mode: RewardMode::Amended,
            penalty: None,
            power_weight: 1.0,
            qos_weight: 50.0,
            violation_weight: 200.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ObservationMode {
    /// Estimated channels, UAV position and velocity, slot fraction.
    Full,
    /// Estimated channels only.
    ChannelsOnly,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum VelocityMode {
    /// Commands are projected onto the C6/C7-feasible set.
    Clamped,
    /// Commands are scaled to `[-V_max, V_max]³` and flown as is.
    Report,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EnvOptions {
    pub observation: ObservationMode,
    pub velocity_mode: VelocityMode,
    /// Multiplier applied to channel gains in observations.
    pub gain_scale: f64,
}

impl Default for EnvOptions {
    fn default() -> Self {
        EnvOptions {
            observation: ObservationMode::Full,
            velocity_mode: VelocityMode::Clamped,
            gain_scale: 1e7,
        }
    }
}

/// Soft actor-critic hyperparameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SacHyper {
    /// Discount factor γ ∈ (0, 1].
    pub gamma: f64,
    /// Entropy weight λ ≥ 0.
    pub entropy_weight: f64,
    /// Polyak coefficient for target networks.
    pub polyak: f64,
    pub batch_size: usize,
    pub actor_lr: f64,
    pub critic1_lr: f64,
    pub critic2_lr: f64,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_eps: f64,
    pub hidden: Vec<usize>,
    pub replay_capacity: usize,
    /// Multiplier applied to environment rewards before they enter the learner.
    pub reward_scale: f64,
    /// Bootstrap next actions from the target actor instead of the online actor.
    pub target_actor_bootstrap: bool,
    /// Transitions collected before gradient updates start.
    pub warmup: usize,
    pub updates_per_step: usize,
}

impl Default for SacHyper {
    fn default() -> Self {
        SacHyper {
            gamma: 0.9,
            entropy_weight: 0.2,
            polyak: 0.005,
            batch_size: 64,
            actor_lr: 3e-4,
            critic1_lr: 3e-4,
            critic2_lr: 3e-4,
            adam_beta1: 0.9,
            adam_beta2: 0.999,
            adam_eps: 1e-8,
            hidden: vec![64, 64],
            replay_capacity: 100_000,
            reward_scale: 1e-3,
            target_actor_bootstrap: false,
            warmup: 64,
            updates_per_step: 1,
        }
    }
}

/// Meta-learning hyperparameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MetaHyper {
    pub iterations: usize,
    /// Tasks in the meta-training set.
    pub tasks: usize,
    pub episodes_per_task: usize,
    pub inner_steps: usize,
    pub inner_lr: f64,
    pub outer_lr: f64,
    /// Fraction of each task buffer used as support data.
    pub support_fraction: f64,
    /// Episodes collected on a new task during meta-adaptation.
    pub adapt_episodes: usize,
}

impl Default for MetaHyper {
    fn default() -> Self {
        MetaHyper {
            iterations: 200,
            tasks: 4,
            episodes_per_task: 1,
            inner_steps: 5,
            inner_lr: 1e-3,
            outer_lr: 1e-3,
            support_fraction: 0.8,
            adapt_episodes: 5,
        }
    }
}

fn check(name: &str, value: f64, ok: bool, expected: &str) -> Result<()> {
    if ok && value.is_finite() {
        Ok(())
    } else {
        Err(Error::range(name, value, expected))
    }
}

fn positive(name: &str, value: f64) -> Result<()> {
    check(name, value, value > 0.0, "> 0")
}

fn non_negative(name: &str, value: f64) -> Result<()> {
    check(name, value, value >= 0.0, ">= 0")
}

fn unit_open_closed(name: &str, value: f64) -> Result<()> {
    check(name, value, value > 0.0 && value <= 1.0, "in (0, 1]")
}

impl SystemConfig {
    /// Parses TOML text; missing keys take their defaults.
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: SystemConfig =
            toml::from_str(text).map_err(|e| Error::ConfigParse(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Canonical TOML rendering with every key present.
    pub fn canonical(&self) -> String {
        toml::to_string(self).expect("config is always serializable")
    }

    /// Short hex fingerprint of the canonical form.
    pub fn hash(&self) -> String {
        let digest = Sha256::digest(self.canonical().as_bytes());
        hex::encode(&digest[..8])
    }

    pub fn validate(&self) -> Result<()> {
        if self.scenario.users == 0 {
            return Err(Error::range("scenario.users", 0.0, ">= 1"));
        }
        if self.scenario.slots == 0 {
            return Err(Error::range("scenario.slots", 0.0, ">= 1"));
        }
        if self.scenario.eval_episodes == 0 {
            return Err(Error::range("scenario.eval_episodes", 0.0, ">= 1"));
        }
        OpticsParams::from_degrees(
            self.optics.half_power_semiangle_deg,
            self.optics.fov_semiangle_deg,
            self.optics.pd_area,
            self.optics.refractive_index,
        )?;
        positive("channel.noise_var", self.channel.noise_var)?;
        non_negative("channel.csi_radius", self.channel.csi_radius)?;
        let dim = self.dimming_config()?;
        dc_bias_for(&dim, dim.active_leds())?;
        non_negative("power.amplifier_efficiency", self.power.amplifier_efficiency)?;
        non_negative("power.conversion_factor", self.power.conversion_factor)?;
        non_negative("power.circuit_power", self.power.circuit_power)?;
        positive("qos.r_min", self.qos.r_min)?;
        positive("qos.p_max", self.qos.p_max)?;
        let f = &self.flight;
        positive("flight.slot_duration", f.slot_duration)?;
        positive("flight.v_max", f.v_max)?;
        positive("flight.a_max", f.a_max)?;
        non_negative("flight.return_tolerance", f.return_tolerance)?;
        for (axis, lo, hi) in [
            ("x", f.q_min.x, f.q_max.x),
            ("y", f.q_min.y, f.q_max.y),
            ("z", f.q_min.z, f.q_max.z),
        ] {
            check(&format!("flight.q_max.{axis}"), hi, hi > lo, "> q_min")?;
        }
        check("flight.q_min.z", f.q_min.z, f.q_min.z >= 0.0, ">= 0 (ground level)")?;
        for (name, v) in self.rotor.fields() {
            positive(name, v)?;
        }
        if let Some(p) = self.reward.penalty {
            check("reward.penalty", p, p <= 0.0, "<= 0")?;
        }
        non_negative("reward.power_weight", self.reward.power_weight)?;
        non_negative("reward.qos_weight", self.reward.qos_weight)?;
        non_negative("reward.violation_weight", self.reward.violation_weight)?;
        positive("env.gain_scale", self.env.gain_scale)?;

        let s = &self.sac;
        unit_open_closed("sac.gamma", s.gamma)?;
        non_negative("sac.entropy_weight", s.entropy_weight)?;
        unit_open_closed("sac.polyak", s.polyak)?;
        if s.batch_size == 0 {
            return Err(Error::range("sac.batch_size", 0.0, ">= 1"));
        }
        positive("sac.actor_lr", s.actor_lr)?;
        positive("sac.critic1_lr", s.critic1_lr)?;
        positive("sac.critic2_lr", s.critic2_lr)?;
        check("sac.adam_beta1", s.adam_beta1, (0.0..1.0).contains(&s.adam_beta1), "in [0, 1)")?;
        check("sac.adam_beta2", s.adam_beta2, (0.0..1.0).contains(&s.adam_beta2), "in [0, 1)")?;
        positive("sac.adam_eps", s.adam_eps)?;
        if s.hidden.contains(&0) {
            return Err(Error::range("sac.hidden", 0.0, "every layer >= 1 unit"));
        }
        if s.replay_capacity == 0 {
            return Err(Error::range("sac.replay_capacity", 0.0, ">= 1"));
        }
        positive("sac.reward_scale", s.reward_scale)?;

        let m = &self.meta;
        if m.tasks == 0 {
            return Err(Error::range("meta.tasks", 0.0, ">= 1"));
        }
        positive("meta.inner_lr", m.inner_lr)?;
        positive("meta.outer_lr", m.outer_lr)?;
        check(
            "meta.support_fraction",
            m.support_fraction,
            m.support_fraction > 0.0 && m.support_fraction < 1.0,
            "in (0, 1)",
        )?;
        Ok(())
    }

    pub fn optics_params(&self) -> OpticsParams {
        OpticsParams::from_degrees(
            self.optics.half_power_semiangle_deg,
            self.optics.fov_semiangle_deg,
            self.optics.pd_area,
            self.optics.refractive_index,
        )
        .expect("validated optics")
    }

    pub fn dimming_config(&self) -> Result<DimmingConfig> {
        DimmingConfig::new(
            self.dimming.eta,
            self.dimming.i_low,
            self.dimming.i_high,
            self.dimming.n_leds,
        )
    }

    pub fn flight_config(&self, initial: Position) -> FlightConfig {
        FlightConfig {
            slot_duration: self.flight.slot_duration,
            v_max: self.flight.v_max,
            a_max: self.flight.a_max,
            q_min: self.flight.q_min,
            q_max: self.flight.q_max,
            initial,
            slots: self.scenario.slots,
            return_tolerance: self.flight.return_tolerance,
        }
    }

    pub fn problem_params(&self, initial: Position) -> ProblemParams {
        ProblemParams {
            dimming: self.dimming_config().expect("validated dimming"),
            qos: self.qos,
            power: self.power,
            rotor: self.rotor,
            flight: self.flight_config(initial),
        }
    }

    /// Active LED count, DC bias, and C3 row bound implied by the dimming target.
    pub fn drive_point(&self) -> DrivePoint {
        let dim = self.dimming_config().expect("validated dimming");
        let n_active = active_led_count(dim.eta, dim.n_leds);
        let dc_bias = dc_bias_for(&dim, n_active).expect("validated dimming");
        DrivePoint {
            n_active,
            dc_bias,
            bound: beamforming_bound(dc_bias, dim.i_low, dim.i_high),
        }
    }

    /// Base reward of an infeasible slot.
    ///
    /// Defaults to `-(P_max + max(P_Hov, P_Prop(V_max)))`, which sits at or
    /// below the reward of any slot that meets C2 and C7.
    pub fn infeasible_penalty(&self) -> f64 {
        self.reward.penalty.unwrap_or_else(|| {
            let hover = hover_power(&self.rotor).total;
            let fast = propulsion_power(Vec3::new(self.flight.v_max, 0.0, 0.0), &self.rotor);
            -(self.qos.p_max + hover.max(fast))
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DrivePoint {
    pub n_active: usize,
    pub dc_bias: f64,
    pub bound: f64,
}

/// Reads and validates a TOML configuration file.
pub fn load_config(path: impl AsRef<Path>) -> Result<SystemConfig> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    SystemConfig::from_toml_str(&text).map_err(|e| match e {
        Error::ConfigParse(msg) => Error::ConfigParse(format!("{}: {msg}", path.display())),
        other => other,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_file_gives_reference_defaults() {
        let cfg = SystemConfig::from_toml_str("").unwrap();
        assert_eq!(cfg, SystemConfig::default());
        assert_eq!(cfg.optics.fov_semiangle_deg, 60.0);
        assert_eq!(cfg.optics.refractive_index, 1.5);
        assert_eq!(cfg.optics.half_power_semiangle_deg, 60.0);
        assert_eq!(cfg.optics.pd_area, 1e-4);
        assert_eq!(cfg.dimming.i_high, 10e-3);
        assert_eq!(cfg.dimming.i_low, 0.0);
        assert_eq!(cfg.dimming_config().unwrap().i_orig(), 5e-3);
        assert_eq!(cfg.power.amplifier_efficiency, 1.2);
        assert_eq!(cfg.power.conversion_factor, 1.0);
        assert_eq!(cfg.rotor.air_density, 1.225);
        assert_eq!(cfg.dimming.n_leds, 10);
        assert_eq!(cfg.qos.p_max, 20.0);
        assert_eq!(cfg.rotor.profile_drag, 0.012);
        assert_eq!(cfg.rotor.solidity, 0.05);
        assert_eq!(cfg.rotor.disk_area, 0.79);
        assert_eq!(cfg.rotor.blade_angular_velocity, 400.0);
        assert_eq!(cfg.rotor.rotor_radius, 0.05);
        assert_eq!(cfg.rotor.induced_correction, 1.0);
        assert_eq!(cfg.rotor.weight, 100.0);
        assert_eq!(cfg.rotor.hover_induced_velocity, 7.2);
        assert_eq!(cfg.rotor.fuselage_drag_ratio, 0.3);
        assert_eq!(cfg.qos.r_min, 2.0);
        assert_eq!(cfg.flight.a_max, 6.0);
        assert_eq!(cfg.flight.v_max, 10.0);
        assert_eq!(cfg.flight.q_max, Vec3::new(150.0, 150.0, 100.0));
        assert_eq!(cfg.flight.slot_duration, 1.0);
    }

    #[test]
    fn negative_budget_rejected() {
        let err = SystemConfig::from_toml_str("[qos]\np_max = -1\n").unwrap_err();
        assert!(matches!(err, Error::Range { ref name, .. } if name == "qos.p_max"), "{err}");
    }

    #[test]
    fn unknown_keys_rejected() {
        assert!(matches!(
            SystemConfig::from_toml_str("[qos]\nbogus = 1\n"),
            Err(Error::ConfigParse(_))
        ));
        assert!(SystemConfig::from_toml_str("[nonsense]\n").is_err());
    }

    #[test]
    fn parse_errors_carry_line_numbers() {
        let err = SystemConfig::from_toml_str("[qos]\nr_min = 2\np_max = = 3\n").unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("line 3"), "{msg}");
    }

    #[test]
    fn canonical_round_trip() {
        let text = "[dimming]\neta = 0.55\n[qos]\np_max = 30.0\n[reward]\npenalty = -5000.0\n";
        let cfg = SystemConfig::from_toml_str(text).unwrap();
        let canon = cfg.canonical();
        let again = SystemConfig::from_toml_str(&canon).unwrap();
        assert_eq!(again, cfg);
        assert_eq!(again.canonical(), canon);
        assert_eq!(again.hash(), cfg.hash());
        assert_ne!(cfg.hash(), SystemConfig::default().hash());
    }

    #[test]
    fn default_penalty_is_budget_plus_hover() {
        let cfg = SystemConfig::default();
        let hover = hover_power(&cfg.rotor).total;
        assert!((cfg.infeasible_penalty() + 20.0 + hover).abs() < 1e-9);
    }

    #[test]
    fn drive_point_defaults() {
        let d = SystemConfig::default().drive_point();
        assert_eq!(d.n_active, 8);
        assert!((d.dc_bias - 5e-3).abs() < 1e-15);
        assert!((d.bound - 5e-3).abs() < 1e-15);
    }

    #[test]
    fn inconsistent_dimming_rejected() {
        // One LED cannot deliver η = 1 of a 10-LED array.
        assert!(SystemConfig::from_toml_str("[dimming]\neta = 0.04\nn_leds = 10\n").is_ok());
        assert!(SystemConfig::from_toml_str("[dimming]\neta = 1.5\n").is_err());
    }

    #[test]
    fn load_reports_missing_path() {
        let err = load_config("/definitely/not/here.toml").unwrap_err();
        assert!(err.to_string().contains("/definitely/not/here.toml"));
    }
}
