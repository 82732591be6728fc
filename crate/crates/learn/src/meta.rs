//! First-order MAML over the SAC learner.
//!
//! Each meta-iteration collects rollouts per task with the global policy,
//! splits every task buffer into support and query parts, adapts a copy of
//! the global learner on the support data, and finally takes one ADAM step
//! on the global parameters with the sum of query-set gradients evaluated at
//! the adapted parameters (no second-order terms).

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use uavlc_core::config::{MetaHyper, SystemConfig};
use uavlc_core::env::{sample_task, sample_task_in, Footprint, Task, VlcEnv};
use uavlc_core::trace::EpisodeSummary;

use crate::adam::Adam;
use crate::checkpoint::MetaCheckpoint;
use crate::error::{Error, Result};
use crate::replay::{ReplayBuffer, TaskBuffer};
use crate::sac::{SacAgent, SacGrads, SacNets};
use crate::train::{rollout, train_on_env, ActionMode, Schedule};

/// Source of meta-training tasks.
pub trait TaskSampler {
    fn sample_task(&mut self, cfg: &SystemConfig) -> Task;
}

impl<F: FnMut(&SystemConfig) -> Task> TaskSampler for F {
    fn sample_task(&mut self, cfg: &SystemConfig) -> Task {
        self(cfg)
    }
}

/// Users uniform over the configured footprint.
pub struct UniformTasks(pub ChaCha8Rng);

impl TaskSampler for UniformTasks {
    fn sample_task(&mut self, cfg: &SystemConfig) -> Task {
        sample_task(cfg, &mut self.0)
    }
}

/// Users uniform over a sub-rectangle of the footprint.
pub struct RegionTasks {
    pub region: Footprint,
    pub rng: ChaCha8Rng,
}

impl TaskSampler for RegionTasks {
    fn sample_task(&mut self, cfg: &SystemConfig) -> Task {
        sample_task_in(cfg, self.region, &mut self.rng)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetaState {
    /// Global learner; its optimizers run at the outer learning rate.
    pub global: SacAgent,
    /// Adapted networks of the tasks visited in the latest iteration.
    pub adapted: BTreeMap<usize, SacNets>,
    pub tasks: Vec<Task>,
    pub iteration: usize,
    pub hyper: MetaHyper,
}

impl MetaState {
    pub fn new<R: Rng + ?Sized>(cfg: &SystemConfig, tasks: Vec<Task>, rng: &mut R) -> Self {
        let nets = SacNets::new(
            uavlc_core::env::observation_dim(cfg),
            uavlc_core::env::action_dim(cfg),
            &cfg.sac.hidden,
            rng,
        );
        let lr = cfg.meta.outer_lr;
        MetaState {
            global: SacAgent::with_rates(nets, &cfg.sac, lr, lr, lr),
            adapted: BTreeMap::new(),
            tasks,
            iteration: 0,
            hyper: cfg.meta,
        }
    }

    pub fn checkpoint(&self) -> MetaCheckpoint {
        MetaCheckpoint {
            global: self.global.clone(),
            hyper: self.hyper,
            iteration: self.iteration,
            tasks: self.tasks.clone(),
        }
    }

    pub fn from_checkpoint(ckpt: MetaCheckpoint) -> Self {
        MetaState {
            global: ckpt.global,
            adapted: BTreeMap::new(),
            tasks: ckpt.tasks,
            iteration: ckpt.iteration,
            hyper: ckpt.hyper,
        }
    }
}

/// Inner-loop optimizer for [`adapt_params`].
#[derive(Debug, Clone)]
pub enum InnerOptimizer {
    Sgd { lr: f64 },
    Adam(Adam),
}

impl InnerOptimizer {
    pub fn step(&mut self, params: &mut [f64], grads: &[f64]) -> Result<()> {
        match self {
            InnerOptimizer::Sgd { lr } => {
                if params.len() != grads.len() {
                    return Err(Error::Shape {
                        expected: format!("{} gradients", params.len()),
                        actual: grads.len().to_string(),
                    });
                }
                params.iter_mut().zip(grads).for_each(|(p, g)| *p -= *lr * g);
                Ok(())
            }
            InnerOptimizer::Adam(a) => a.step(params, grads),
        }
    }
}

/// `steps` optimizer steps on a copy of `params`; the input is never touched.
pub fn adapt_params(
    params: &[f64],
    steps: usize,
    opt: &mut InnerOptimizer,
    mut grad: impl FnMut(&[f64]) -> Vec<f64>,
) -> Result<Vec<f64>> {
    let mut p = params.to_vec();
    for _ in 0..steps {
        let g = grad(&p);
        opt.step(&mut p, &g)?;
    }
    Ok(p)
}

/// Adapts a copy of `global` with `steps` SAC updates on support batches.
///
/// The copy gets fresh ADAM moments at `inner_lr`.
pub fn inner_adapt<R: Rng + ?Sized>(
    global: &SacAgent,
    support: &ReplayBuffer,
    steps: usize,
    inner_lr: f64,
    rng: &mut R,
) -> Result<SacAgent> {
    let mut agent = SacAgent::with_rates(global.nets.clone(), &global.hyper, inner_lr, inner_lr, inner_lr);
    if steps > 0 && support.is_empty() {
        return Err(Error::Empty("support buffer"));
    }
    for _ in 0..steps {
        let batch = support.sample(agent.hyper.batch_size, rng);
        agent.update(&batch, rng)?;
    }
    Ok(agent)
}

/// One global step on the summed query gradients of the adapted learners.
///
/// Returns the accumulated gradients; their loss fields are sums over tasks.
pub fn outer_update<R: Rng + ?Sized>(
    global: &mut SacAgent,
    adapted: &[(&SacAgent, &ReplayBuffer)],
    rng: &mut R,
) -> Result<SacGrads> {
    if adapted.is_empty() {
        return Err(Error::Empty("adapted task set"));
    }
    let mut total = SacGrads::zeros_like(&global.nets);
    for (agent, query) in adapted {
        let batch = query.sample(global.hyper.batch_size, rng);
        total.add(&agent.gradients(&batch, rng)?);
    }
    global.apply(&total)?;
    Ok(total)
}

fn derive_seed(seed: u64, iteration: usize, task: usize) -> u64 {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    r.set_stream(((iteration as u64) << 20) | task as u64);
    r.random()
}

/// Loss diagnostics of one meta-iteration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IterationStats {
    pub iteration: usize,
    /// Mean over tasks of the query critic loss at adapted parameters.
    pub query_critic_loss: f64,
    pub query_actor_loss: f64,
    pub mean_episode_reward: f64,
}

/// Runs meta-training for `iterations` iterations on a task set drawn once
/// from `sampler`. Deterministic in `seed`.
pub fn meta_train(
    cfg: &SystemConfig,
    sampler: &mut dyn TaskSampler,
    iterations: usize,
    seed: u64,
) -> Result<(MetaState, Vec<IterationStats>)> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let tasks: Vec<Task> = (0..cfg.meta.tasks).map(|_| sampler.sample_task(cfg)).collect();
    let mut meta = MetaState::new(cfg, tasks, &mut rng);
    let stats = continue_meta_train(cfg, &mut meta, iterations, seed)?;
    Ok((meta, stats))
}

/// Adds `iterations` meta-iterations to an existing state.
pub fn continue_meta_train(
    cfg: &SystemConfig,
    meta: &mut MetaState,
    iterations: usize,
    seed: u64,
) -> Result<Vec<IterationStats>> {
    let mut buffers: Vec<TaskBuffer> = (0..meta.tasks.len())
        .map(|i| TaskBuffer::new(i, cfg.sac.replay_capacity))
        .collect();
    let mut envs = meta
        .tasks
        .iter()
        .map(|t| VlcEnv::new(cfg, t.clone()))
        .collect::<uavlc_core::Result<Vec<_>>>()?;
    let mut stats = Vec::with_capacity(iterations);
    let h = meta.hyper;
    for _ in 0..iterations {
        let it = meta.iteration;
        let global = &meta.global;
        let per_task = buffers
            .par_iter_mut()
            .zip(envs.par_iter_mut())
            .enumerate()
            .map(|(i, (buf, env))| -> Result<(SacAgent, ReplayBuffer, f64)> {
                let mut trng = ChaCha8Rng::seed_from_u64(derive_seed(seed, it, i));
                let mut reward = 0.0;
                for _ in 0..h.episodes_per_task {
                    let ep_seed = trng.random();
                    let r = rollout(env, global, ActionMode::Stochastic, ep_seed, &mut trng)?;
                    reward += r.trace.summary().total_reward;
                    for t in r.transitions {
                        buf.push(t);
                    }
                }
                let (support, mut query) = buf.split(h.support_fraction, &mut trng);
                if query.is_empty() {
                    query = support.clone();
                }
                let adapted = inner_adapt(global, &support, h.inner_steps, h.inner_lr, &mut trng)?;
                Ok((adapted, query, reward / h.episodes_per_task.max(1) as f64))
            })
            .collect::<Result<Vec<_>>>()?;

        let mut orng = ChaCha8Rng::seed_from_u64(derive_seed(seed, it, usize::MAX >> 44));
        let pairs: Vec<(&SacAgent, &ReplayBuffer)> = per_task.iter().map(|(a, q, _)| (a, q)).collect();
        let g = outer_update(&mut meta.global, &pairs, &mut orng)?;
        let n = per_task.len() as f64;
        stats.push(IterationStats {
            iteration: it,
            query_critic_loss: 0.5 * (g.critic_losses.0 + g.critic_losses.1) / n,
            query_actor_loss: g.actor_loss / n,
            mean_episode_reward: per_task.iter().map(|(_, _, r)| r).sum::<f64>() / n,
        });
        meta.adapted = per_task
            .into_iter()
            .enumerate()
            .map(|(i, (a, _, _))| (i, a.nets))
            .collect();
        meta.iteration += 1;
        log::debug!("meta iteration {it}: {:?}", stats.last());
    }
    Ok(stats)
}

/// Meta-adaptation on a new task: start from the global parameters, fresh
/// ADAM at the configured SAC rates, and train online for `episodes`
/// episodes on a fresh adaptation buffer.
pub fn meta_adapt(
    meta: &MetaState,
    cfg: &SystemConfig,
    task: Task,
    episodes: usize,
    seed: u64,
) -> Result<(SacAgent, Vec<EpisodeSummary>)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut agent = SacAgent::from_nets(meta.global.nets.clone(), &cfg.sac);
    let mut env = VlcEnv::new(cfg, task)?;
    let mut d_ada = ReplayBuffer::new(cfg.sac.replay_capacity);
    let schedule = Schedule {
        episodes,
        random_steps: 0,
        learn_after: 1,
    };
    let summaries = train_on_env(&mut agent, &mut env, &mut d_ada, schedule, &mut rng)?;
    Ok((agent, summaries))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::adam::AdamConfig;
    use uavlc_core::env::Transition;

    fn tiny_cfg() -> SystemConfig {
        let mut cfg = SystemConfig::default();
        cfg.scenario.users = 2;
        cfg.scenario.slots = 5;
        cfg.dimming.n_leds = 3;
        cfg.sac.hidden = vec![8];
        cfg.sac.batch_size = 8;
        cfg.meta.tasks = 2;
        cfg.meta.inner_steps = 2;
        cfg
    }

    fn random_buffer(n: usize, obs: usize, act: usize, rng: &mut ChaCha8Rng) -> ReplayBuffer {
        ReplayBuffer::from_transitions(
            1000,
            (0..n).map(|_| Transition {
                obs: (0..obs).map(|_| rng.random_range(-1.0..1.0)).collect(),
                action: (0..act).map(|_| rng.random_range(-0.9..0.9)).collect(),
                reward: rng.random_range(-1.0..0.0),
                next_obs: (0..obs).map(|_| rng.random_range(-1.0..1.0)).collect(),
                done: false,
            }),
        )
    }

    #[test]
    fn quadratic_plumbing() {
        let mut sgd = InnerOptimizer::Sgd { lr: 0.1 };
        let theta = [1.0];
        let adapted = adapt_params(&theta, 1, &mut sgd, |p| vec![2.0 * p[0]]).unwrap();
        assert!((adapted[0] - 0.8).abs() < 1e-15);
        assert_eq!(theta, [1.0]);
        let same = adapt_params(&theta, 0, &mut sgd, |p| vec![2.0 * p[0]]).unwrap();
        assert_eq!(same, vec![1.0]);
        let mut adam = InnerOptimizer::Adam(Adam::new(AdamConfig::new(0.1), 1));
        let a = adapt_params(&theta, 3, &mut adam, |p| vec![2.0 * p[0]]).unwrap();
        assert!(a[0] < 1.0);
    }

    #[test]
    fn zero_steps_is_identity_and_global_untouched() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let global = SacAgent::new(4, 2, &tiny_cfg().sac, &mut rng);
        let support = random_buffer(20, 4, 2, &mut rng);
        let before = global.nets.fingerprint();
        let same = inner_adapt(&global, &support, 0, 1e-3, &mut rng).unwrap();
        assert_eq!(same.nets, global.nets);
        let moved = inner_adapt(&global, &support, 5, 1e-2, &mut rng).unwrap();
        assert_ne!(moved.nets, global.nets);
        assert_eq!(global.nets.fingerprint(), before);
    }

    #[test]
    fn adaptation_lowers_support_loss() {
        for seed in 0..10 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let global = SacAgent::new(4, 2, &tiny_cfg().sac, &mut rng);
            let support = random_buffer(16, 4, 2, &mut rng);
            let batch: Vec<Transition> = support.iter().cloned().collect();
            let loss = |a: &SacAgent| {
                let mut r = ChaCha8Rng::seed_from_u64(1);
                let g = a.gradients(&batch, &mut r).unwrap();
                g.critic_losses.0 + g.critic_losses.1
            };
            let adapted = inner_adapt(&global, &support, 20, 1e-2, &mut rng).unwrap();
            assert!(loss(&adapted) <= loss(&global), "seed {seed}");
        }
    }

    #[test]
    fn outer_update_degenerates_to_plain_sac() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let agent = SacAgent::new(4, 2, &tiny_cfg().sac, &mut rng);
        let data = random_buffer(30, 4, 2, &mut rng);

        let mut plain = agent.clone();
        let mut r1 = ChaCha8Rng::seed_from_u64(77);
        let batch = data.sample(plain.hyper.batch_size, &mut r1);
        plain.update(&batch, &mut r1).unwrap();

        let mut global = agent.clone();
        let mut r2 = ChaCha8Rng::seed_from_u64(77);
        let mut r_inner = ChaCha8Rng::seed_from_u64(0);
        let adapted = inner_adapt(&global, &data, 0, 1e-3, &mut r_inner).unwrap();
        outer_update(&mut global, &[(&adapted, &data)], &mut r2).unwrap();
        assert_eq!(global, plain);
    }

    #[test]
    fn zero_query_gradient_leaves_global() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let cfg = tiny_cfg();
        let mut global = SacAgent::new(4, 2, &cfg.sac, &mut rng);
        global.hyper.polyak = 0.0;
        // Zero every weight so critics and actor outputs are constant zero;
        // with γ = 0, λ = 0 and zero rewards every gradient vanishes.
        for net in [&mut global.nets.actor, &mut global.nets.critic1, &mut global.nets.critic2] {
            net.params_mut().iter_mut().for_each(|p| *p = 0.0);
        }
        global.hyper.gamma = 0.0;
        global.hyper.entropy_weight = 0.0;
        let mut query = random_buffer(10, 4, 2, &mut rng);
        query = ReplayBuffer::from_transitions(
            100,
            query.iter().cloned().map(|t| Transition { reward: 0.0, ..t }),
        );
        let before = global.clone();
        let adapted = global.clone();
        outer_update(&mut global, &[(&adapted, &query)], &mut rng).unwrap();
        assert_eq!(global.nets, before.nets);
    }

    #[test]
    fn duplicate_tasks_match_single_task_under_adam() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut cfg = tiny_cfg();
        cfg.sac.adam_eps = 1e-16;
        let agent = SacAgent::new(4, 2, &cfg.sac, &mut rng);
        let data = random_buffer(8, 4, 2, &mut rng);
        // Full-batch queries and deterministic targets (γ = 0) make both
        // task gradients identical; ADAM's first step is scale-invariant.
        let mut a = agent.clone();
        a.hyper.gamma = 0.0;
        a.hyper.entropy_weight = 0.0;
        let mut b = a.clone();
        let clone_a = a.clone();
        outer_update(&mut a, &[(&clone_a, &data)], &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        // The actor noise differs between the two draws, so only the critics
        // are compared exactly.
        outer_update(&mut b, &[(&clone_a, &data), (&clone_a, &data)], &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        for (x, y) in a.nets.critic1.params().iter().zip(b.nets.critic1.params()) {
            assert!((x - y).abs() < 1e-9);
        }
    }

    #[test]
    fn outer_update_needs_a_task() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let mut global = SacAgent::new(4, 2, &tiny_cfg().sac, &mut rng);
        assert!(matches!(outer_update(&mut global, &[], &mut rng), Err(Error::Empty(_))));
    }

    #[test]
    fn meta_train_zero_iterations_and_determinism() {
        let cfg = tiny_cfg();
        let mut s1 = UniformTasks(ChaCha8Rng::seed_from_u64(1));
        let (m0, stats) = meta_train(&cfg, &mut s1, 0, 7).unwrap();
        assert!(stats.is_empty());
        assert_eq!(m0.iteration, 0);
        let fresh = MetaState::new(&cfg, m0.tasks.clone(), &mut ChaCha8Rng::seed_from_u64(7));
        assert_eq!(m0.global, fresh.global);

        let run = || {
            let mut s = UniformTasks(ChaCha8Rng::seed_from_u64(1));
            meta_train(&cfg, &mut s, 3, 7).unwrap()
        };
        let (a, sa) = run();
        let (b, sb) = run();
        assert_eq!(a.global, b.global);
        assert_eq!(sa, sb);
        assert_eq!(a.iteration, 3);
        assert_eq!(a.adapted.len(), 2);
    }

    #[test]
    fn zero_budget_adaptation_is_meta_initialization() {
        let cfg = tiny_cfg();
        let mut s = UniformTasks(ChaCha8Rng::seed_from_u64(2));
        let (meta, _) = meta_train(&cfg, &mut s, 1, 3).unwrap();
        let task = sample_task(&cfg, &mut ChaCha8Rng::seed_from_u64(9));
        let (agent, summaries) = meta_adapt(&meta, &cfg, task, 0, 1).unwrap();
        assert!(summaries.is_empty());
        assert_eq!(agent.nets, meta.global.nets);
    }
}
