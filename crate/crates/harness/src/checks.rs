//! Quick invariant suite behind `uavlc check`.

use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use uavlc_core::config::{SystemConfig, VelocityMode};
use uavlc_core::env::{sample_task, RawAction, Transition, VlcEnv};
use uavlc_core::metrics::DIMMING_TOLERANCE;
use uavlc_learn::gradcheck::{max_relative_error, numeric_gradient, REL_TOL, STEP};
use uavlc_learn::sac::{actor_loss_grads, critic_loss_grads};
use uavlc_learn::SacNets;

use crate::error::Result;

#[derive(Debug, Clone, PartialEq)]
pub struct CheckOutcome {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
    pub seconds: f64,
}

impl std::fmt::Display for CheckOutcome {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let verdict = if self.passed { "PASS" } else { "FAIL" };
        write!(f, "{verdict} {} ({:.2} s): {}", self.name, self.seconds, self.detail)
    }
}

fn timed(name: &'static str, f: impl FnOnce() -> Result<(bool, String)>) -> Result<CheckOutcome> {
    let start = Instant::now();
    let (passed, detail) = f()?;
    Ok(CheckOutcome {
        name,
        passed,
        detail,
        seconds: start.elapsed().as_secs_f64(),
    })
}

/// Uniform raw action in `[-1, 1]` for every component.
pub fn uniform_raw<R: Rng + ?Sized>(env: &VlcEnv, rng: &mut R) -> RawAction {
    let mut raw = RawAction::zeros(env.n_leds(), env.n_users());
    raw.beam.iter_mut().for_each(|x| *x = rng.random_range(-1.0..=1.0));
    raw.scores.iter_mut().for_each(|x| *x = rng.random_range(-1.0..=1.0));
    raw.velocity = [0; 3].map(|_| rng.random_range(-1.0..=1.0));
    raw
}

/// Counts decoded actions that break the per-LED dynamic range or the
/// active-LED count, checked directly on the decoded matrices.
pub fn decoded_violations(cfg: &SystemConfig, samples: usize, seed: u64) -> Result<usize> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut env = VlcEnv::new(cfg, sample_task(cfg, &mut rng))?;
    env.reset_with_seed(rng.random())?;
    let drive = env.drive();
    let mut bad = 0;
    for _ in 0..samples {
        if env.is_done() {
            env.reset_with_seed(rng.random())?;
        }
        let raw = uniform_raw(&env, &mut rng);
        let a = env.decode_action(&raw);
        let w = &a.beamformer.w;
        let rows_ok = (0..w.rows()).all(|r| {
            let sum: f64 = w.row(r).iter().map(|x| x.abs()).sum();
            if a.selection.is_active(r) {
                sum <= drive.bound * (1.0 + DIMMING_TOLERANCE)
            } else {
                sum == 0.0
            }
        });
        let count_ok = a.selection.active_count() == drive.n_active && a.selection.len() == env.n_leds();
        let step = env.step(&raw)?;
        let reported = step.record.feasibility.constraint(3) && step.record.feasibility.constraint(9);
        if !(rows_ok && count_ok && reported) {
            bad += 1;
        }
    }
    Ok(bad)
}

/// Counts slots breaking the speed or acceleration limit over random
/// episodes flown in clamped-velocity mode.
pub fn clamped_flight_violations(cfg: &SystemConfig, episodes: usize, seed: u64) -> Result<usize> {
    let mut cfg = cfg.clone();
    cfg.env.velocity_mode = VelocityMode::Clamped;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut bad = 0;
    for _ in 0..episodes {
        let mut env = VlcEnv::new(&cfg, sample_task(&cfg, &mut rng))?;
        env.reset_with_seed(rng.random())?;
        while !env.is_done() {
            let raw = uniform_raw(&env, &mut rng);
            let rec = env.step(&raw)?.record;
            if !(rec.feasibility.constraint(6) && rec.feasibility.constraint(7)) {
                bad += 1;
            }
        }
    }
    Ok(bad)
}

fn random_batch<R: Rng>(n: usize, obs: usize, act: usize, rng: &mut R) -> Vec<Transition> {
    (0..n)
        .map(|i| Transition {
            obs: (0..obs).map(|_| rng.random_range(-1.0..1.0)).collect(),
            action: (0..act).map(|_| rng.random_range(-0.99..0.99)).collect(),
            reward: rng.random_range(-1.0..1.0),
            next_obs: (0..obs).map(|_| rng.random_range(-1.0..1.0)).collect(),
            done: i % 3 == 2,
        })
        .collect()
}

/// Worst relative error between analytic and central-difference gradients
/// of both critic losses and the actor loss, over `seeds` random nets with
/// `obs` inputs, `act` actions and one hidden layer of `hidden` units.
pub fn sac_gradient_error(seeds: u64, obs: usize, act: usize, hidden: usize) -> f64 {
    let mut worst = 0.0f64;
    for seed in 0..seeds {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let nets = SacNets::new(obs, act, &[hidden], &mut rng);
        let batch = random_batch(4, obs, act, &mut rng);
        let targets: Vec<f64> = (0..batch.len()).map(|_| rng.random_range(-1.0..1.0)).collect();
        let noise: Vec<Vec<f64>> = (0..batch.len())
            .map(|_| (0..act).map(|_| rng.random_range(-2.0..2.0)).collect())
            .collect();
        let lambda = rng.random_range(0.05..0.5);

        let (_, g1, g2) = critic_loss_grads(&batch, &nets, &targets);
        let n1 = numeric_gradient(nets.critic1.params(), STEP, |p| {
            let mut n = nets.clone();
            n.critic1.params_mut().copy_from_slice(p);
            critic_loss_grads(&batch, &n, &targets).0 .0
        });
        let n2 = numeric_gradient(nets.critic2.params(), STEP, |p| {
            let mut n = nets.clone();
            n.critic2.params_mut().copy_from_slice(p);
            critic_loss_grads(&batch, &n, &targets).0 .1
        });
        let (_, ga) = actor_loss_grads(&batch, &nets, lambda, &noise);
        let na = numeric_gradient(nets.actor.params(), STEP, |p| {
            let mut n = nets.clone();
            n.actor.params_mut().copy_from_slice(p);
            actor_loss_grads(&batch, &n, lambda, &noise).0
        });
        worst = worst
            .max(max_relative_error(&g1, &n1))
            .max(max_relative_error(&g2, &n2))
            .max(max_relative_error(&ga, &na));
    }
    worst
}

/// Runs the suite on `cfg` with reduced sample counts.
pub fn run_all(cfg: &SystemConfig, seed: u64) -> Result<Vec<CheckOutcome>> {
    Ok(vec![
        timed("config round trip", || {
            let back = SystemConfig::from_toml_str(&cfg.canonical())?;
            Ok((back == *cfg, format!("hash {}", cfg.hash())))
        })?,
        timed("decoded actions meet dynamic range and LED count", || {
            let n = 10_000;
            let bad = decoded_violations(cfg, n, seed)?;
            Ok((bad == 0, format!("{bad} of {n} violate")))
        })?,
        timed("clamped flight meets speed and acceleration limits", || {
            let n = 100;
            let bad = clamped_flight_violations(cfg, n, seed)?;
            Ok((bad == 0, format!("{bad} violating slots in {n} episodes")))
        })?,
        timed("SAC gradients match finite differences", || {
            let err = sac_gradient_error(5, 6, 2, 16);
            Ok((err < REL_TOL, format!("max relative error {err:.2e}")))
        })?,
    ])
}
