//! Slot-based UAV kinematics, flight-constraint checks, and the rotary-wing
//! hover/propulsion power model.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::geometry::{Position, Vec3};

/// Absolute slack applied to the inclusive speed/acceleration limits so that
/// a command clamped exactly onto a limit is not flagged by rounding error.
const LIMIT_SLACK: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FlightConfig {
    /// Slot duration τ, s.
    pub slot_duration: f64,
    pub v_max: f64,
    pub a_max: f64,
    pub q_min: Position,
    pub q_max: Position,
    /// Start (and required end) position of the flight.
    pub initial: Position,
    /// Number of slots L in an episode.
    pub slots: usize,
    /// Distance from `initial` at slot L that still counts as returned, m.
    pub return_tolerance: f64,
}

impl FlightConfig {
    /// Total mission time `T = Lτ`.
    pub fn horizon(&self) -> f64 {
        self.slots as f64 * self.slot_duration
    }
}

/// Rotary-wing aerodynamic parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RotorcraftParams {
    /// Profile drag coefficient ρ.
    pub profile_drag: f64,
    /// Air density ζ, kg/m³.
    pub air_density: f64,
    /// Rotor solidity.
    pub solidity: f64,
    /// Rotor disk area, m².
    pub disk_area: f64,
    /// Blade angular velocity, rad/s.
    pub blade_angular_velocity: f64,
    /// Rotor radius, m.
    pub rotor_radius: f64,
    /// Incremental correction factor ι.
    pub induced_correction: f64,
    /// Aircraft weight, N.
    pub weight: f64,
    /// Mean rotor induced velocity in hover, m/s.
    pub hover_induced_velocity: f64,
    /// Fuselage drag ratio.
    pub fuselage_drag_ratio: f64,
}

impl Default for RotorcraftParams {
    fn default() -> Self {
        RotorcraftParams {
            profile_drag: 0.012,
            air_density: 1.225,
            solidity: 0.05,
            disk_area: 0.79,
            blade_angular_velocity: 400.0,
            rotor_radius: 0.05,
            induced_correction: 1.0,
            weight: 100.0,
            hover_induced_velocity: 7.2,
            fuselage_drag_ratio: 0.3,
        }
    }
}

impl RotorcraftParams {
    pub(crate) fn fields(&self) -> [(&'static str, f64); 10] {
        [
            ("rotor.profile_drag", self.profile_drag),
            ("rotor.air_density", self.air_density),
            ("rotor.solidity", self.solidity),
            ("rotor.disk_area", self.disk_area),
            ("rotor.blade_angular_velocity", self.blade_angular_velocity),
            ("rotor.rotor_radius", self.rotor_radius),
            ("rotor.induced_correction", self.induced_correction),
            ("rotor.weight", self.weight),
            ("rotor.hover_induced_velocity", self.hover_induced_velocity),
            ("rotor.fuselage_drag_ratio", self.fuselage_drag_ratio),
        ]
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UavState {
    pub position: Position,
    pub velocity: Vec3,
    pub slot: usize,
}

impl UavState {
    pub fn at_rest(position: Position) -> Self {
        UavState {
            position,
            velocity: Vec3::ZERO,
            slot: 0,
        }
    }
}

/// A flight restriction broken by a velocity command.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum FlightViolation {
    /// Next position not strictly inside the flight box (C5).
    OutOfBounds,
    /// Velocity change beyond `a_max τ` (C6).
    Acceleration,
    /// Speed beyond `V_max` (C7).
    Speed,
    /// Final position too far from the start (boundary condition of C4).
    NotReturned,
}

impl FlightViolation {
    pub fn constraint(self) -> &'static str {
        match self {
            FlightViolation::OutOfBounds => "C5",
            FlightViolation::Acceleration => "C6",
            FlightViolation::Speed => "C7",
            FlightViolation::NotReturned => "C4-return",
        }
    }
}

impl fmt::Display for FlightViolation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.constraint())
    }
}

/// First-order position update over one slot; the command becomes the new velocity.
pub fn step_kinematics(state: &UavState, v_next: Vec3, cfg: &FlightConfig) -> UavState {
    UavState {
        position: state.position + v_next * cfg.slot_duration,
        velocity: v_next,
        slot: state.slot + 1,
    }
}

/// Lists the flight restrictions that flying `v_next` during slot `state.slot` would break.
pub fn check_flight(state: &UavState, v_next: Vec3, cfg: &FlightConfig) -> Vec<FlightViolation> {
    let mut out = Vec::new();
    let next = step_kinematics(state, v_next, cfg);
    if !next.position.strictly_inside(cfg.q_min, cfg.q_max) {
        out.push(FlightViolation::OutOfBounds);
    }
    if (v_next - state.velocity).norm() > cfg.a_max * cfg.slot_duration + LIMIT_SLACK {
        out.push(FlightViolation::Acceleration);
    }
    if v_next.norm() > cfg.v_max + LIMIT_SLACK {
        out.push(FlightViolation::Speed);
    }
    if next.slot == cfg.slots && next.position.distance(cfg.initial) > cfg.return_tolerance {
        out.push(FlightViolation::NotReturned);
    }
    out
}

/// Projects a velocity command onto the set reachable under C6 and C7.
///
/// The acceleration ball around the current velocity is applied first, then
/// the speed ball; projection onto a ball containing the current velocity is
/// non-expansive, so the result satisfies both limits.
pub fn clamp_velocity(current: Vec3, command: Vec3, cfg: &FlightConfig) -> Vec3 {
    let dv = (command - current).clamp_norm(cfg.a_max * cfg.slot_duration);
    (current + dv).clamp_norm(cfg.v_max)
}

/// Hover power split into blade-profile and induced parts, W.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HoverPower {
    pub blade: f64,
    pub induced: f64,
    pub total: f64,
}

pub fn hover_power(p: &RotorcraftParams) -> HoverPower {
    let blade = p.profile_drag / 8.0
        * p.air_density
        * p.solidity
        * p.disk_area
        * p.blade_angular_velocity.powi(3)
        * p.rotor_radius.powi(3);
    let induced =
        (1.0 + p.induced_correction) * p.weight.powf(1.5) / (2.0 * p.air_density * p.disk_area).sqrt();
    HoverPower {
        blade,
        induced,
        total: blade + induced,
    }
}

/// The three propulsion-power terms at a given velocity, W.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PropulsionTerms {
    pub blade_profile: f64,
    pub induced: f64,
    pub parasite: f64,
}

impl PropulsionTerms {
    pub fn total(&self) -> f64 {
        self.blade_profile + self.induced + self.parasite
    }
}

pub fn propulsion_terms(v: Vec3, p: &RotorcraftParams) -> PropulsionTerms {
    let hover = hover_power(p);
    let speed = v.norm();
    let s2 = speed * speed;
    let tip2 = (p.blade_angular_velocity * p.rotor_radius).powi(2);
    let vi2 = p.hover_induced_velocity * p.hover_induced_velocity;
    let blade_profile = (1.0 + 3.0 * s2 / tip2) * hover.blade;
    // sqrt(1 + x²) − x with x = ‖v‖²/(2 v_i²), written without cancellation
    // so it stays strictly positive at any speed.
    let x = s2 / (2.0 * vi2);
    let inner = 1.0 / (x.hypot(1.0) + x);
    let induced = inner.sqrt() * hover.induced;
    // Parasite term as printed, including the rotor solidity factor.
    let parasite =
        0.5 * p.fuselage_drag_ratio * p.air_density * p.solidity * p.disk_area * speed.powi(3);
    PropulsionTerms {
        blade_profile,
        induced,
        parasite,
    }
}

/// Propulsion power at velocity `v`, W. Depends only on `‖v‖`.
pub fn propulsion_power(v: Vec3, p: &RotorcraftParams) -> f64 {
    propulsion_terms(v, p).total()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn flight() -> FlightConfig {
        FlightConfig {
            slot_duration: 1.0,
            v_max: 10.0,
            a_max: 6.0,
            q_min: Vec3::new(0.0, 0.0, 10.0),
            q_max: Vec3::new(150.0, 150.0, 100.0),
            initial: Vec3::new(50.0, 50.0, 50.0),
            slots: 4,
            return_tolerance: 0.5,
        }
    }

    #[test]
    fn kinematics_examples() {
        let cfg = flight();
        let s = UavState::at_rest(cfg.initial);
        assert_eq!(step_kinematics(&s, Vec3::ZERO, &cfg).position, cfg.initial);
        let moved = step_kinematics(&s, Vec3::new(10.0, 0.0, 0.0), &cfg);
        assert_eq!(moved.position.x, 60.0);
        assert_eq!(moved.slot, 1);

        let cmds = [
            Vec3::new(3.0, -2.0, 1.0),
            Vec3::new(4.0, 1.0, -2.0),
            Vec3::new(-2.0, 3.0, 0.5),
            Vec3::new(-5.0, -2.0, 0.5),
        ];
        let mut st = s;
        for c in cmds {
            st = step_kinematics(&st, c, &cfg);
        }
        assert!(st.position.distance(cfg.initial) < 1e-12);
    }

    #[test]
    fn acceleration_violation() {
        let cfg = flight();
        let s = UavState::at_rest(cfg.initial);
        let v = check_flight(&s, Vec3::new(7.0, 0.0, 0.0), &cfg);
        assert!(v.contains(&FlightViolation::Acceleration));
        assert!(!v.contains(&FlightViolation::Speed));
    }

    #[test]
    fn speed_limit_is_inclusive() {
        let mut cfg = flight();
        cfg.a_max = 100.0;
        let s = UavState::at_rest(cfg.initial);
        let dir = Vec3::new(1.0, 2.0, -0.5);
        let at_limit = dir * (cfg.v_max / dir.norm());
        assert!(check_flight(&s, at_limit, &cfg).is_empty());
        assert!(check_flight(&s, at_limit * 1.001, &cfg).contains(&FlightViolation::Speed));
    }

    #[test]
    fn boundary_position_is_out_of_bounds() {
        let cfg = flight();
        let s = UavState::at_rest(Vec3::new(145.0, 50.0, 50.0));
        let v = check_flight(&s, Vec3::new(5.0, 0.0, 0.0), &cfg);
        assert_eq!(v, vec![FlightViolation::OutOfBounds]);
    }

    #[test]
    fn return_to_start_checked_on_last_slot() {
        let cfg = flight();
        let mut s = UavState::at_rest(cfg.initial + Vec3::new(3.0, 0.0, 0.0));
        s.slot = cfg.slots - 1;
        s.velocity = Vec3::new(-3.0, 0.0, 0.0);
        assert!(check_flight(&s, Vec3::new(-2.8, 0.0, 0.0), &cfg).is_empty());
        assert_eq!(
            check_flight(&s, Vec3::new(-2.0, 0.0, 0.0), &cfg),
            vec![FlightViolation::NotReturned]
        );
        s.slot = 0;
        assert!(check_flight(&s, Vec3::new(-2.0, 0.0, 0.0), &cfg).is_empty());
    }

    #[test]
    fn clamped_commands_respect_limits() {
        let cfg = flight();
        let current = Vec3::new(8.0, -5.0, 1.0).clamp_norm(cfg.v_max);
        for cmd in [Vec3::new(100.0, 0.0, 0.0), Vec3::new(-30.0, 40.0, 2.0), Vec3::ZERO] {
            let v = clamp_velocity(current, cmd, &cfg);
            assert!(v.norm() <= cfg.v_max + LIMIT_SLACK);
            assert!((v - current).norm() <= cfg.a_max + LIMIT_SLACK);
        }
    }

    #[test]
    fn hover_power_values() {
        let h = hover_power(&RotorcraftParams::default());
        // ρ/8·ζ·δ·A·Ω³R³ = 0.0015·1.225·0.05·0.79·64e6·1.25e-4
        let blade = 0.0015 * 1.225 * 0.05 * 0.79 * 64.0e6 * 1.25e-4;
        assert!((h.blade - blade).abs() / blade < 1e-12);
        assert!((h.blade - 0.5806).abs() < 1e-4);
        let induced = 2.0 * 1000.0 / 1.9355f64.sqrt();
        assert!((h.induced - induced).abs() / induced < 1e-12);
        assert!((h.induced - 1437.6).abs() < 0.05);
        assert_eq!(h.total, h.blade + h.induced);
    }

    #[test]
    fn hover_scaling_laws() {
        let base = RotorcraftParams::default();
        let fast = RotorcraftParams {
            blade_angular_velocity: 2.0 * base.blade_angular_velocity,
            ..base
        };
        let (h0, h1) = (hover_power(&base), hover_power(&fast));
        assert!((h1.blade / h0.blade - 8.0).abs() < 1e-12);
        assert_eq!(h1.induced, h0.induced);
    }

    #[test]
    fn propulsion_at_rest_is_hover() {
        let p = RotorcraftParams::default();
        let hover = hover_power(&p).total;
        assert!((propulsion_power(Vec3::ZERO, &p) - hover).abs() / hover < 1e-12);
    }

    #[test]
    fn propulsion_at_ten_metres_per_second() {
        let p = RotorcraftParams::default();
        let t = propulsion_terms(Vec3::new(10.0, 0.0, 0.0), &p);
        assert!((t.blade_profile - 1.016).abs() < 1e-3);
        assert!((t.induced - 937.0).abs() < 0.05);
        assert!((t.parasite - 7.258125).abs() < 1e-9);
        assert!((t.total() - 945.3).abs() < 0.05);
    }

    #[test]
    fn propulsion_depends_on_speed_only() {
        let p = RotorcraftParams::default();
        let a = propulsion_power(Vec3::new(6.0, 8.0, 0.0), &p);
        let b = propulsion_power(Vec3::new(0.0, 0.0, -10.0), &p);
        assert!((a - b).abs() < 1e-9);
    }
}
