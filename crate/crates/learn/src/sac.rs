//! Soft actor-critic with twin critics, Polyak-averaged targets and ADAM.
//!
//! All losses are written out with explicit gradients:
//!
//! * critic `j`: `L_Cj = mean (Q_j(s, a) − y)²`
//! * actor: `L_A = mean [λ log π(ã|s) − min_j Q_j(s, ã)]`, `ã` reparameterized
//! * target: `y = r + γ (1 − done) [min_j Q'_j(s', a') − λ log π(a'|s')]`
//!
//! [`SacAgent::gradients`] evaluates every gradient at the current
//! parameters before anything moves; [`SacAgent::apply`] then steps all three
//! optimizers and the targets. The meta-learner relies on that split.

use rand::Rng;
use rand_distr::StandardNormal;
use sha2::{Digest, Sha256};
use uavlc_core::config::SacHyper;
use uavlc_core::env::Transition;

use crate::adam::{Adam, AdamConfig};
use crate::error::{Error, Result};
use crate::mlp::Mlp;
use crate::policy::{head_backward, sample_head, split_head, squashed_sample, Sample};

/// Online and target networks.
#[derive(Debug, Clone, PartialEq)]
pub struct SacNets {
    pub actor: Mlp,
    pub critic1: Mlp,
    pub critic2: Mlp,
    pub target_actor: Mlp,
    pub target1: Mlp,
    pub target2: Mlp,
}

impl SacNets {
    pub fn new<R: Rng + ?Sized>(obs_dim: usize, act_dim: usize, hidden: &[usize], rng: &mut R) -> Self {
        let sizes = |input: usize, output: usize| {
            let mut s = vec![input];
            s.extend_from_slice(hidden);
            s.push(output);
            s
        };
        let actor = Mlp::new(&sizes(obs_dim, 2 * act_dim), rng);
        let critic1 = Mlp::new(&sizes(obs_dim + act_dim, 1), rng);
        let critic2 = Mlp::new(&sizes(obs_dim + act_dim, 1), rng);
        SacNets {
            target_actor: actor.clone(),
            target1: critic1.clone(),
            target2: critic2.clone(),
            actor,
            critic1,
            critic2,
        }
    }

    pub fn obs_dim(&self) -> usize {
        self.actor.input_dim()
    }

    pub fn act_dim(&self) -> usize {
        self.actor.output_dim() / 2
    }

    fn all(&self) -> [&Mlp; 6] {
        [
            &self.actor,
            &self.critic1,
            &self.critic2,
            &self.target_actor,
            &self.target1,
            &self.target2,
        ]
    }

    /// Concatenated parameters of all six networks.
    pub fn flat_params(&self) -> Vec<f64> {
        self.all().iter().flat_map(|n| n.params().iter().copied()).collect()
    }

    /// Hex SHA-256 over the bit patterns of every parameter.
    pub fn fingerprint(&self) -> String {
        let mut h = Sha256::new();
        for net in self.all() {
            for s in net.sizes() {
                h.update((*s as u64).to_le_bytes());
            }
            for p in net.params() {
                h.update(p.to_bits().to_le_bytes());
            }
        }
        hex::encode(h.finalize())
    }

    /// Polyak-averages every target toward its online network.
    pub fn soft_update_targets(&mut self, c: f64) -> Result<()> {
        soft_update(&mut self.target_actor, &self.actor, c)?;
        soft_update(&mut self.target1, &self.critic1, c)?;
        soft_update(&mut self.target2, &self.critic2, c)
    }
}

/// `target ← (1 − c)·target + c·online`.
pub fn soft_update(target: &mut Mlp, online: &Mlp, c: f64) -> Result<()> {
    target.blend_from(online, c)
}

fn critic_input(obs: &[f64], action: &[f64]) -> Vec<f64> {
    let mut x = Vec::with_capacity(obs.len() + action.len());
    x.extend_from_slice(obs);
    x.extend_from_slice(action);
    x
}

pub fn q_value(critic: &Mlp, obs: &[f64], action: &[f64]) -> f64 {
    critic.forward(&critic_input(obs, action))[0]
}

/// Bootstrap target for one transition.
///
/// `a'` comes from the online actor unless `target_actor_bootstrap` is set.
pub fn critic_target<R: Rng + ?Sized>(t: &Transition, nets: &SacNets, hyper: &SacHyper, rng: &mut R) -> f64 {
    if t.done {
        return t.reward;
    }
    let actor = if hyper.target_actor_bootstrap {
        &nets.target_actor
    } else {
        &nets.actor
    };
    let next = sample_head(&actor.forward(&t.next_obs), rng, false);
    let q1 = q_value(&nets.target1, &t.next_obs, &next.action);
    let q2 = q_value(&nets.target2, &t.next_obs, &next.action);
    t.reward + hyper.gamma * (q1.min(q2) - hyper.entropy_weight * next.log_prob)
}

/// Mean squared errors of both critics and their parameter gradients.
pub fn critic_loss_grads(batch: &[Transition], nets: &SacNets, targets: &[f64]) -> ((f64, f64), Vec<f64>, Vec<f64>) {
    assert_eq!(batch.len(), targets.len());
    let scale = 1.0 / batch.len() as f64;
    let mut g1 = nets.critic1.zero_grad();
    let mut g2 = nets.critic2.zero_grad();
    let (mut l1, mut l2) = (0.0, 0.0);
    for (t, &y) in batch.iter().zip(targets) {
        let x = critic_input(&t.obs, &t.action);
        for (net, grad, loss) in [(&nets.critic1, &mut g1, &mut l1), (&nets.critic2, &mut g2, &mut l2)] {
            let cache = net.forward_cached(&x);
            let err = cache.output()[0] - y;
            *loss += scale * err * err;
            net.backward(&cache, &[2.0 * scale * err], grad);
        }
    }
    ((l1, l2), g1, g2)
}

/// Actor loss and gradient for fixed reparameterization noise (one row per transition).
pub fn actor_loss_grads(batch: &[Transition], nets: &SacNets, entropy_weight: f64, noise: &[Vec<f64>]) -> (f64, Vec<f64>) {
    assert_eq!(batch.len(), noise.len());
    let scale = 1.0 / batch.len() as f64;
    let act_dim = nets.act_dim();
    let mut grad = nets.actor.zero_grad();
    let mut loss = 0.0;
    for (t, xi) in batch.iter().zip(noise) {
        let cache = nets.actor.forward_cached(&t.obs);
        let out = cache.output();
        let (mean, log_std) = split_head(out);
        let sample: Sample = squashed_sample(mean, &log_std, xi);
        let x = critic_input(&t.obs, &sample.action);
        let c1 = nets.critic1.forward_cached(&x);
        let c2 = nets.critic2.forward_cached(&x);
        let (q1, q2) = (c1.output()[0], c2.output()[0]);
        let (critic, cache_q, q) = if q1 <= q2 {
            (&nets.critic1, &c1, q1)
        } else {
            (&nets.critic2, &c2, q2)
        };
        loss += scale * (entropy_weight * sample.log_prob - q);
        let dq_dx = critic.input_gradient(cache_q, &[-scale]);
        let d_action = &dq_dx[dq_dx.len() - act_dim..];
        let d_head = head_backward(out, &sample, d_action, scale * entropy_weight);
        nets.actor.backward(&cache, &d_head, &mut grad);
    }
    (loss, grad)
}

/// Gradients of all three losses at the current parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct SacGrads {
    pub actor: Vec<f64>,
    pub critic1: Vec<f64>,
    pub critic2: Vec<f64>,
    pub actor_loss: f64,
    pub critic_losses: (f64, f64),
}

impl SacGrads {
    pub fn zeros_like(nets: &SacNets) -> Self {
        SacGrads {
            actor: nets.actor.zero_grad(),
            critic1: nets.critic1.zero_grad(),
            critic2: nets.critic2.zero_grad(),
            actor_loss: 0.0,
            critic_losses: (0.0, 0.0),
        }
    }

    /// Element-wise accumulation; losses add too.
    pub fn add(&mut self, other: &SacGrads) {
        for (a, b) in [
            (&mut self.actor, &other.actor),
            (&mut self.critic1, &other.critic1),
            (&mut self.critic2, &other.critic2),
        ] {
            a.iter_mut().zip(b).for_each(|(x, y)| *x += y);
        }
        self.actor_loss += other.actor_loss;
        self.critic_losses.0 += other.critic_losses.0;
        self.critic_losses.1 += other.critic_losses.1;
    }
}

/// Loss values reported by one update.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Losses {
    pub actor: f64,
    pub critic1: f64,
    pub critic2: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SacAgent {
    pub nets: SacNets,
    pub opt_actor: Adam,
    pub opt_critic1: Adam,
    pub opt_critic2: Adam,
    pub hyper: SacHyper,
}

fn adam_config(h: &SacHyper, lr: f64) -> AdamConfig {
    AdamConfig {
        lr,
        beta1: h.adam_beta1,
        beta2: h.adam_beta2,
        eps: h.adam_eps,
    }
}

fn noise_rows<R: Rng + ?Sized>(rows: usize, dim: usize, rng: &mut R) -> Vec<Vec<f64>> {
    (0..rows)
        .map(|_| (0..dim).map(|_| rng.sample(StandardNormal)).collect())
        .collect()
}

impl SacAgent {
    pub fn new<R: Rng + ?Sized>(obs_dim: usize, act_dim: usize, hyper: &SacHyper, rng: &mut R) -> Self {
        Self::from_nets(SacNets::new(obs_dim, act_dim, &hyper.hidden, rng), hyper)
    }

    /// Wraps existing networks with fresh optimizers at the configured rates.
    pub fn from_nets(nets: SacNets, hyper: &SacHyper) -> Self {
        let (a, c1, c2) = (hyper.actor_lr, hyper.critic1_lr, hyper.critic2_lr);
        Self::with_rates(nets, hyper, a, c1, c2)
    }

    pub fn with_rates(nets: SacNets, hyper: &SacHyper, actor_lr: f64, critic1_lr: f64, critic2_lr: f64) -> Self {
        SacAgent {
            opt_actor: Adam::new(adam_config(hyper, actor_lr), nets.actor.n_params()),
            opt_critic1: Adam::new(adam_config(hyper, critic1_lr), nets.critic1.n_params()),
            opt_critic2: Adam::new(adam_config(hyper, critic2_lr), nets.critic2.n_params()),
            nets,
            hyper: hyper.clone(),
        }
    }

    pub fn obs_dim(&self) -> usize {
        self.nets.obs_dim()
    }

    pub fn act_dim(&self) -> usize {
        self.nets.act_dim()
    }

    /// Action in `(−1, 1)^A`; `deterministic` uses the squashed mean.
    pub fn act<R: Rng + ?Sized>(&self, obs: &[f64], rng: &mut R, deterministic: bool) -> Vec<f64> {
        sample_head(&self.nets.actor.forward(obs), rng, deterministic).action
    }

    pub fn targets<R: Rng + ?Sized>(&self, batch: &[Transition], rng: &mut R) -> Vec<f64> {
        batch
            .iter()
            .map(|t| critic_target(t, &self.nets, &self.hyper, rng))
            .collect()
    }

    /// Every gradient at the current parameters. Consumes randomness for the
    /// bootstrap actions first, then for the actor's reparameterization noise.
    pub fn gradients<R: Rng + ?Sized>(&self, batch: &[Transition], rng: &mut R) -> Result<SacGrads> {
        if batch.is_empty() {
            return Err(Error::Empty("SAC batch"));
        }
        let targets = self.targets(batch, rng);
        let (critic_losses, critic1, critic2) = critic_loss_grads(batch, &self.nets, &targets);
        let noise = noise_rows(batch.len(), self.act_dim(), rng);
        let (actor_loss, actor) = actor_loss_grads(batch, &self.nets, self.hyper.entropy_weight, &noise);
        Ok(SacGrads {
            actor,
            critic1,
            critic2,
            actor_loss,
            critic_losses,
        })
    }

    /// Steps all three optimizers, then Polyak-updates the targets.
    pub fn apply(&mut self, grads: &SacGrads) -> Result<()> {
        self.opt_critic1.step(self.nets.critic1.params_mut(), &grads.critic1)?;
        self.opt_critic2.step(self.nets.critic2.params_mut(), &grads.critic2)?;
        self.opt_actor.step(self.nets.actor.params_mut(), &grads.actor)?;
        self.nets.soft_update_targets(self.hyper.polyak)
    }

    /// One simultaneous actor/critic update on `batch`.
    pub fn update<R: Rng + ?Sized>(&mut self, batch: &[Transition], rng: &mut R) -> Result<Losses> {
        let g = self.gradients(batch, rng)?;
        self.apply(&g)?;
        Ok(Losses {
            actor: g.actor_loss,
            critic1: g.critic_losses.0,
            critic2: g.critic_losses.1,
        })
    }

    /// One ADAM step on each critic followed by a Polyak step on the critic targets.
    pub fn update_critics<R: Rng + ?Sized>(&mut self, batch: &[Transition], rng: &mut R) -> Result<(f64, f64)> {
        if batch.is_empty() {
            return Err(Error::Empty("SAC batch"));
        }
        let targets = self.targets(batch, rng);
        let (losses, g1, g2) = critic_loss_grads(batch, &self.nets, &targets);
        self.opt_critic1.step(self.nets.critic1.params_mut(), &g1)?;
        self.opt_critic2.step(self.nets.critic2.params_mut(), &g2)?;
        let c = self.hyper.polyak;
        soft_update(&mut self.nets.target1, &self.nets.critic1, c)?;
        soft_update(&mut self.nets.target2, &self.nets.critic2, c)?;
        Ok(losses)
    }

    /// One ADAM step on the actor followed by a Polyak step on the target actor.
    pub fn update_actor<R: Rng + ?Sized>(&mut self, batch: &[Transition], rng: &mut R) -> Result<f64> {
        if batch.is_empty() {
            return Err(Error::Empty("SAC batch"));
        }
        let noise = noise_rows(batch.len(), self.act_dim(), rng);
        let (loss, g) = actor_loss_grads(batch, &self.nets, self.hyper.entropy_weight, &noise);
        self.opt_actor.step(self.nets.actor.params_mut(), &g)?;
        soft_update(&mut self.nets.target_actor, &self.nets.actor, self.hyper.polyak)?;
        Ok(loss)
    }
}
