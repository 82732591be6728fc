//! Environment rollouts and the online SAC training loop.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use uavlc_core::config::SystemConfig;
use uavlc_core::env::{RawAction, Task, Transition, VlcEnv};
use uavlc_core::trace::{EpisodeSummary, EpisodeTrace};

use crate::error::Result;
use crate::replay::ReplayBuffer;
use crate::sac::SacAgent;

/// How actions are chosen during a rollout.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ActionMode {
    /// Uniform in the action box.
    Uniform,
    Stochastic,
    Deterministic,
}

/// One finished episode: the per-slot trace plus learner-ready transitions
/// with rewards already multiplied by `reward_scale`.
#[derive(Debug, Clone)]
pub struct Rollout {
    pub trace: EpisodeTrace,
    pub transitions: Vec<Transition>,
}

fn choose<R: Rng + ?Sized>(agent: &SacAgent, obs: &[f64], mode: ActionMode, rng: &mut R) -> Vec<f64> {
    match mode {
        ActionMode::Uniform => (0..agent.act_dim()).map(|_| rng.random_range(-1.0..1.0)).collect(),
        ActionMode::Stochastic => agent.act(obs, rng, false),
        ActionMode::Deterministic => agent.act(obs, rng, true),
    }
}

/// Plays one episode from a reset with `episode_seed` as the CSI-noise seed.
pub fn rollout<R: Rng + ?Sized>(
    env: &mut VlcEnv,
    agent: &SacAgent,
    mode: ActionMode,
    episode_seed: u64,
    rng: &mut R,
) -> Result<Rollout> {
    let mut obs = env.reset_with_seed(episode_seed)?;
    let (n, k) = (env.n_leds(), env.n_users());
    let scale = agent.hyper.reward_scale;
    let mut trace = EpisodeTrace::default();
    let mut transitions = Vec::with_capacity(env.config().scenario.slots);
    while !env.is_done() {
        let a = choose(agent, obs.as_slice(), mode, rng);
        let step = env.step(&RawAction::from_flat(&a, n, k)?)?;
        let mut t = step.transition;
        t.reward *= scale;
        obs = uavlc_core::env::Observation(t.next_obs.clone());
        transitions.push(t);
        trace.push(step.record);
    }
    Ok(Rollout { trace, transitions })
}

/// Schedule of the online training loop.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Schedule {
    pub episodes: usize,
    /// Transitions taken with uniform actions before the policy acts.
    pub random_steps: usize,
    /// Replay size at which gradient updates begin.
    pub learn_after: usize,
}

impl Schedule {
    pub fn from_config(cfg: &SystemConfig, episodes: usize) -> Self {
        Schedule {
            episodes,
            random_steps: cfg.sac.warmup,
            learn_after: cfg.sac.warmup.max(1),
        }
    }
}

/// Interleaves environment steps with SAC updates; returns per-episode summaries.
pub fn train_on_env<R: Rng + ?Sized>(
    agent: &mut SacAgent,
    env: &mut VlcEnv,
    replay: &mut ReplayBuffer,
    schedule: Schedule,
    rng: &mut R,
) -> Result<Vec<EpisodeSummary>> {
    let (n, k) = (env.n_leds(), env.n_users());
    let scale = agent.hyper.reward_scale;
    let mut summaries = Vec::with_capacity(schedule.episodes);
    let mut taken = 0usize;
    for _ in 0..schedule.episodes {
        let mut obs = env.reset_with_seed(rng.random())?.0;
        let mut trace = EpisodeTrace::default();
        while !env.is_done() {
            let mode = if taken < schedule.random_steps {
                ActionMode::Uniform
            } else {
                ActionMode::Stochastic
            };
            let a = choose(agent, &obs, mode, rng);
            let step = env.step(&RawAction::from_flat(&a, n, k)?)?;
            taken += 1;
            let mut t = step.transition;
            t.reward *= scale;
            obs = t.next_obs.clone();
            replay.push(t);
            trace.push(step.record);
            if replay.len() >= schedule.learn_after {
                for _ in 0..agent.hyper.updates_per_step {
                    let batch = replay.sample(agent.hyper.batch_size, rng);
                    agent.update(&batch, rng)?;
                }
            }
        }
        summaries.push(trace.summary());
    }
    Ok(summaries)
}

/// Trains a fresh agent on one task from `seed`.
pub fn train_sac(cfg: &SystemConfig, task: Task, episodes: usize, seed: u64) -> Result<(SacAgent, Vec<EpisodeSummary>)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut env = VlcEnv::new(cfg, task)?;
    let mut agent = SacAgent::new(env.obs_dim(), env.action_dim(), &cfg.sac, &mut rng);
    let mut replay = ReplayBuffer::new(cfg.sac.replay_capacity);
    let summaries = train_on_env(&mut agent, &mut env, &mut replay, Schedule::from_config(cfg, episodes), &mut rng)?;
    Ok((agent, summaries))
}

/// Deterministic-policy evaluation over `episodes` CSI-noise seeds derived from `seed`.
pub fn evaluate(agent: &SacAgent, env: &mut VlcEnv, episodes: usize, seed: u64) -> Result<Vec<EpisodeTrace>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..episodes)
        .map(|_| {
            let episode_seed = rng.random();
            rollout(env, agent, ActionMode::Deterministic, episode_seed, &mut rng).map(|r| r.trace)
        })
        .collect()
}
