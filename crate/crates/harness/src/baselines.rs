//! Non-learned schedulers: uniform random actions and a greedy heuristic.
//!
//! The greedy scheduler is a construction of this crate, not a published
//! algorithm. Per slot it
//!
//! 1. lights the `N_a` LEDs with the largest aggregate estimated gain
//!    (or, in exhaustive mode, tries every `N_a`-subset and keeps the
//!    cheapest one),
//! 2. points each user's beam column along its estimated channel, with
//!    per-user amplitudes from the successive-interference recursion
//!    `s_k² = γ (Σ_{j after k} s_j² + σ_k² / ρ_k²)`, `γ = 2^{R_min} − 1`,
//! 3. bisects one common scale factor for the smallest transmit amplitude
//!    meeting the rate floor on the estimated channels, capped at the
//!    dynamic-range bound,
//! 4. flies toward the user centroid, at the lowest altitude that keeps every
//!    user inside the receivers' field of view, at the
//!    fastest speed it can still brake from, turning back once a simulated
//!    homing run would only just finish on the last slot.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use uavlc_core::dimming::{select_leds, Beamformer, LedSelection};
use uavlc_core::env::{RawAction, VlcEnv};
use uavlc_core::flight::{clamp_velocity, propulsion_power, step_kinematics, FlightConfig, UavState};
use uavlc_core::geometry::{Matrix, Vec3};
use uavlc_core::metrics::{order_users, per_user_rate, total_power, AllocationAction, PowerParams};
use uavlc_core::trace::EpisodeTrace;
use uavlc_core::Result;

/// LED-subset search used by the greedy scheduler.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GreedyMode {
    /// Highest aggregate estimated gain, ties to the lowest index.
    TopGain,
    /// Every `N_a`-subset; the cheapest certified one wins.
    Exhaustive,
}

/// Beamforming outcome for one LED subset.
#[derive(Debug, Clone, PartialEq)]
pub struct BeamPlan {
    pub selection: LedSelection,
    pub beamformer: Beamformer,
    /// Unit-bound profile; the beamformer is `scale · profile`.
    pub profile: Matrix,
    pub scale: f64,
    /// Largest scale allowed by the dynamic-range bound.
    pub max_scale: f64,
    /// The rate floor holds on the estimated channels at `scale`.
    pub certified: bool,
}

/// Inputs of the per-slot beamforming problem.
#[derive(Debug, Clone, Copy)]
pub struct SlotProblem<'a> {
    pub h_est: &'a Matrix,
    pub noise_var: &'a [f64],
    pub r_min: f64,
    pub bound: f64,
    pub dc_bias: f64,
    pub propulsion: f64,
    pub power: &'a PowerParams,
}

impl SlotProblem<'_> {
    /// Whether every user meets the rate floor on the estimated channels.
    pub fn meets_floor(&self, w: &Beamformer, sel: &LedSelection) -> bool {
        let order = order_users(self.h_est, w, sel);
        per_user_rate(self.h_est, w, sel, self.noise_var, &order)
            .rates
            .iter()
            .all(|&r| r >= self.r_min)
    }

    pub fn total_power(&self, w: &Beamformer, sel: &LedSelection) -> f64 {
        total_power(w, sel, self.dc_bias, self.propulsion, self.power).total
    }
}

/// Beam directions along the estimated channels with SIC-aware amplitudes,
/// normalized so the largest active row sum equals one.
pub fn noma_profile(h_est: &Matrix, sel: &LedSelection, noise_var: &[f64], r_min: f64) -> Matrix {
    let (n, k) = (h_est.rows(), h_est.cols());
    let gamma = 2f64.powf(r_min) - 1.0;
    let rho: Vec<f64> = (0..k)
        .map(|u| sel.active_indices().map(|r| h_est[(r, u)].powi(2)).sum::<f64>().sqrt())
        .collect();
    let mut order: Vec<usize> = (0..k).collect();
    order.sort_by(|&a, &b| rho[a].total_cmp(&rho[b]).then(a.cmp(&b)));
    let mut amp = vec![0.0; k];
    let mut later = 0.0;
    for &u in order.iter().rev() {
        if rho[u] > 0.0 {
            let s2 = gamma * (later + noise_var[u] / (rho[u] * rho[u]));
            amp[u] = s2.sqrt();
            later += s2;
        }
    }
    let mut w = Matrix::from_fn(n, k, |r, u| {
        if sel.is_active(r) && rho[u] > 0.0 {
            amp[u] * h_est[(r, u)] / rho[u]
        } else {
            0.0
        }
    });
    let peak = (0..n)
        .map(|r| w.row(r).iter().map(|x| x.abs()).sum::<f64>())
        .fold(0.0, f64::max);
    if peak > 0.0 {
        w = w.map(|x| x / peak);
    }
    w
}

fn scaled(profile: &Matrix, s: f64) -> Beamformer {
    Beamformer { w: profile.map(|x| x * s) }
}

/// Smallest common scale meeting the floor, by bisection on `[0, bound]`.
pub fn plan_for_selection(problem: &SlotProblem<'_>, sel: LedSelection) -> BeamPlan {
    let profile = noma_profile(problem.h_est, &sel, problem.noise_var, problem.r_min);
    let max_scale = problem.bound;
    let feasible = |s: f64| problem.meets_floor(&scaled(&profile, s), &sel);
    let (scale, certified) = if feasible(max_scale) {
        let (mut lo, mut hi) = (0.0, max_scale);
        for _ in 0..100 {
            let mid = 0.5 * (lo + hi);
            if mid <= lo || mid >= hi {
                break;
            }
            if feasible(mid) {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        (hi, true)
    } else {
        (max_scale, false)
    };
    BeamPlan {
        beamformer: scaled(&profile, scale),
        selection: sel,
        profile,
        scale,
        max_scale,
        certified,
    }
}

/// All `k`-subsets of `0..n` in lexicographic order, as masks.
pub fn subsets(n: usize, k: usize) -> Vec<LedSelection> {
    fn rec(start: usize, n: usize, k: usize, cur: &mut Vec<usize>, out: &mut Vec<LedSelection>) {
        if cur.len() == k {
            let mut mask = vec![false; n];
            cur.iter().for_each(|&i| mask[i] = true);
            out.push(LedSelection::from_mask(mask));
            return;
        }
        for i in start..n {
            if n - i < k - cur.len() {
                break;
            }
            cur.push(i);
            rec(i + 1, n, k, cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    rec(0, n, k, &mut Vec::with_capacity(k), &mut out);
    out
}

/// Greedy LED subset plus beamformer for one slot.
pub fn greedy_beams(problem: &SlotProblem<'_>, n_active: usize, mode: GreedyMode) -> BeamPlan {
    let h = problem.h_est;
    match mode {
        GreedyMode::TopGain => {
            let aggregate: Vec<f64> = (0..h.rows()).map(|r| h.row(r).iter().sum()).collect();
            plan_for_selection(problem, select_leds(&aggregate, n_active))
        }
        GreedyMode::Exhaustive => {
            let mut best: Option<(BeamPlan, f64)> = None;
            for sel in subsets(h.rows(), n_active) {
                let plan = plan_for_selection(problem, sel);
                let p = problem.total_power(&plan.beamformer, &plan.selection);
                let better = match &best {
                    None => true,
                    Some((b, bp)) => (plan.certified && !b.certified) || (plan.certified == b.certified && p < *bp),
                };
                if better {
                    best = Some((plan, p));
                }
            }
            best.expect("at least one LED subset").0
        }
    }
}

/// Velocity toward the user centroid, or home once the remaining slots
/// only just suffice to get back.
pub fn greedy_velocity(env: &VlcEnv) -> Vec3 {
    let cfg = env.config();
    let f = &env.problem().flight;
    let state = env.state();
    let k = env.task().users.len() as f64;
    let users = &env.task().users;
    let (sx, sy) = users.iter().fold((0.0, 0.0), |a, u| (a.0 + u.x, a.1 + u.y));
    let (cx, cy) = (sx / k, sy / k);
    // Lowest altitude keeping every user inside 90% of the field of view.
    let cone = (0.9 * cfg.optics.fov_semiangle_deg.to_radians()).tan();
    let cover = users
        .iter()
        .map(|u| u.z + (u.x - cx).hypot(u.y - cy) / cone)
        .fold(0.0, f64::max);
    let (lo, hi) = (cfg.flight.q_min.z + 1.0, cfg.flight.q_max.z - 1.0);
    let centroid = Vec3::new(cx, cy, cover.clamp(lo.min(hi), hi.max(lo)));

    let remaining = cfg.scenario.slots - state.slot;
    let home = f.initial;
    // Head home once one more outbound slot would leave too few to get back.
    let outbound = toward(state.velocity, state.position, centroid, f);
    let ahead = step_kinematics(state, outbound, f);
    let target = if slots_to(&ahead, home, f) + 1 >= remaining { home } else { centroid };
    toward(state.velocity, state.position, target, f)
}

fn toward(velocity: Vec3, position: Vec3, target: Vec3, f: &FlightConfig) -> Vec3 {
    let offset = target - position;
    let d = offset.norm();
    if d == 0.0 {
        return clamp_velocity(velocity, Vec3::ZERO, f);
    }
    let speed = stoppable_speed(d, f.a_max * f.slot_duration, f.slot_duration, f.v_max);
    clamp_velocity(velocity, offset * (speed / d), f)
}

/// Slots the homing law needs to bring `state` within tolerance of `home`.
fn slots_to(state: &UavState, home: Vec3, f: &FlightConfig) -> usize {
    let mut s = *state;
    let limit = f.slots + 1;
    for n in 0..limit {
        if s.position.distance(home) <= 0.5 * f.return_tolerance {
            return n;
        }
        let v = toward(s.velocity, s.position, home, f);
        s = step_kinematics(&s, v, f);
    }
    limit
}

/// Largest speed `v ≤ v_max` such that one slot at `v` followed by braking
/// at `dv` per slot stays within distance `d`.
fn stoppable_speed(d: f64, dv: f64, tau: f64, v_max: f64) -> f64 {
    let travel = |v: f64| {
        let mut total = v * tau;
        let mut u = v - dv;
        while u > 0.0 {
            total += u * tau;
            u -= dv;
        }
        total
    };
    if travel(v_max) <= d {
        return v_max;
    }
    let (mut lo, mut hi) = (0.0, v_max);
    for _ in 0..60 {
        let mid = 0.5 * (lo + hi);
        if travel(mid) <= d {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    lo
}

/// The beamforming problem of the environment's current slot when flying `velocity`.
pub fn slot_problem(env: &VlcEnv, velocity: Vec3) -> SlotProblem<'_> {
    let drive = env.drive();
    let problem = env.problem();
    let channels = env.channels();
    SlotProblem {
        h_est: &channels.est_gain,
        noise_var: &channels.noise_var,
        r_min: problem.qos.r_min,
        bound: drive.bound,
        dc_bias: drive.dc_bias,
        propulsion: propulsion_power(velocity, &problem.rotor),
        power: &problem.power,
    }
}

/// The greedy allocation for the environment's current slot.
pub fn greedy_action(env: &VlcEnv, mode: GreedyMode) -> AllocationAction {
    let velocity = greedy_velocity(env);
    let drive = env.drive();
    let plan = greedy_beams(&slot_problem(env, velocity), drive.n_active, mode);
    AllocationAction {
        beamformer: plan.beamformer,
        selection: plan.selection,
        dc_bias: drive.dc_bias,
        velocity,
    }
}

/// One greedy episode from a reset with `episode_seed`.
pub fn baseline_greedy(env: &mut VlcEnv, mode: GreedyMode, episode_seed: u64) -> Result<EpisodeTrace> {
    env.reset_with_seed(episode_seed)?;
    let mut trace = EpisodeTrace::default();
    while !env.is_done() {
        let action = greedy_action(env, mode);
        trace.push(env.step_allocation(&action)?);
    }
    Ok(trace)
}

/// One episode of uniform raw actions decoded through the standard pipeline.
///
/// Allocation and velocity draws use separate streams of the seed, so the
/// flight path does not depend on the LED or user count.
pub fn baseline_random(env: &mut VlcEnv, episode_seed: u64) -> Result<EpisodeTrace> {
    env.reset_with_seed(episode_seed)?;
    let mut alloc_rng = ChaCha8Rng::seed_from_u64(episode_seed);
    let mut vel_rng = ChaCha8Rng::seed_from_u64(episode_seed);
    vel_rng.set_stream(1);
    let (n, k) = (env.n_leds(), env.n_users());
    let mut trace = EpisodeTrace::default();
    while !env.is_done() {
        let mut raw = RawAction::zeros(n, k);
        raw.beam.iter_mut().for_each(|x| *x = alloc_rng.random_range(-1.0..=1.0));
        raw.scores.iter_mut().for_each(|x| *x = alloc_rng.random_range(-1.0..=1.0));
        raw.velocity = [0; 3].map(|_| vel_rng.random_range(-1.0..=1.0));
        trace.push(env.step(&raw)?.record);
    }
    Ok(trace)
}
