//! Markov decision process wrapper around the slot model.
//!
//! One [`VlcEnv`] runs one task (fixed user placement and start point) for
//! `L` slots. Every slot the agent submits a [`RawAction`] in a bounded box;
//! it is decoded into an [`AllocationAction`] that satisfies the dynamic-range
//! and LED-selection constraints by construction, evaluated on the true
//! channels, and rewarded with the negative total power when every
//! constraint holds.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::channel::{channel_matrix, perturb_csi, ChannelState, OpticsParams};
use crate::config::{DrivePoint, ObservationMode, RewardMode, SystemConfig, VelocityMode};
use crate::dimming::{project_beamformer, select_leds};
use crate::error::{Error, Result};
use crate::flight::{clamp_velocity, step_kinematics, UavState};
use crate::geometry::{Matrix, Position, Vec3};
use crate::metrics::{evaluate_slot, AllocationAction, ProblemParams, SlotEvaluation};
use crate::trace::SlotRecord;

/// One problem instance: where the users stand and where the UAV starts.
#[derive(Debug, Clone, PartialEq)]
pub struct Task {
    pub users: Vec<Position>,
    pub initial: Position,
    /// Seeds the channel-estimation noise of the task's episodes.
    pub seed: u64,
}

/// Rectangle of the ground in which users are placed.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Footprint {
    pub x: (f64, f64),
    pub y: (f64, f64),
}

impl Footprint {
    /// The ground projection of the flight box.
    pub fn of(cfg: &SystemConfig) -> Self {
        Footprint {
            x: (cfg.flight.q_min.x, cfg.flight.q_max.x),
            y: (cfg.flight.q_min.y, cfg.flight.q_max.y),
        }
    }
}

fn open_uniform<R: Rng + ?Sized>(rng: &mut R, lo: f64, hi: f64) -> f64 {
    loop {
        let u: f64 = rng.random();
        if u > 0.0 {
            return lo + (hi - lo) * u;
        }
    }
}

/// Users uniform over the ground footprint; start point uniform inside the flight box.
pub fn sample_task<R: Rng + ?Sized>(cfg: &SystemConfig, rng: &mut R) -> Task {
    sample_task_in(cfg, Footprint::of(cfg), rng)
}

/// Like [`sample_task`] with users restricted to `footprint`.
pub fn sample_task_in<R: Rng + ?Sized>(cfg: &SystemConfig, footprint: Footprint, rng: &mut R) -> Task {
    let users = (0..cfg.scenario.users)
        .map(|_| {
            Vec3::new(
                open_uniform(rng, footprint.x.0, footprint.x.1),
                open_uniform(rng, footprint.y.0, footprint.y.1),
                0.0,
            )
        })
        .collect();
    let (lo, hi) = (cfg.flight.q_min, cfg.flight.q_max);
    let initial = Vec3::new(
        open_uniform(rng, lo.x, hi.x),
        open_uniform(rng, lo.y, hi.y),
        open_uniform(rng, lo.z, hi.z),
    );
    Task {
        users,
        initial,
        seed: rng.random(),
    }
}

/// Bounded action in the learner's coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct RawAction {
    /// N×K beamformer pre-image in `[-1, 1]`, row-major by LED.
    pub beam: Vec<f64>,
    /// One score per LED; the highest `N_a` glow.
    pub scores: Vec<f64>,
    /// Velocity pre-image in `[-1, 1]³`.
    pub velocity: [f64; 3],
}

impl RawAction {
    pub fn zeros(n_leds: usize, n_users: usize) -> Self {
        RawAction {
            beam: vec![0.0; n_leds * n_users],
            scores: vec![0.0; n_leds],
            velocity: [0.0; 3],
        }
    }

    pub fn dim(n_leds: usize, n_users: usize) -> usize {
        n_leds * n_users + n_leds + 3
    }

    /// Splits a flat learner output `[beam | scores | velocity]`.
    pub fn from_flat(flat: &[f64], n_leds: usize, n_users: usize) -> Result<Self> {
        let expected = Self::dim(n_leds, n_users);
        if flat.len() != expected {
            return Err(Error::Shape {
                expected: format!("{expected} action values"),
                actual: flat.len().to_string(),
            });
        }
        let nb = n_leds * n_users;
        Ok(RawAction {
            beam: flat[..nb].to_vec(),
            scores: flat[nb..nb + n_leds].to_vec(),
            velocity: [flat[nb + n_leds], flat[nb + n_leds + 1], flat[nb + n_leds + 2]],
        })
    }

    pub fn to_flat(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.beam.len() + self.scores.len() + 3);
        out.extend_from_slice(&self.beam);
        out.extend_from_slice(&self.scores);
        out.extend_from_slice(&self.velocity);
        out
    }

    /// Uniform sample from the action box.
    pub fn random<R: Rng + ?Sized>(n_leds: usize, n_users: usize, rng: &mut R) -> Self {
        let mut u = || rng.random_range(-1.0..=1.0);
        RawAction {
            beam: (0..n_leds * n_users).map(|_| u()).collect(),
            scores: (0..n_leds).map(|_| u()).collect(),
            velocity: [u(), u(), u()],
        }
    }
}

/// Encoded environment state handed to the agent.
#[derive(Debug, Clone, PartialEq)]
pub struct Observation(pub Vec<f64>);

impl Observation {
    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// One `(s, a, r, s', done)` tuple.
#[derive(Debug, Clone, PartialEq)]
pub struct Transition {
    pub obs: Vec<f64>,
    pub action: Vec<f64>,
    pub reward: f64,
    pub next_obs: Vec<f64>,
    pub done: bool,
}

/// Result of one environment step.
#[derive(Debug, Clone)]
pub struct Step {
    pub transition: Transition,
    pub record: SlotRecord,
}

pub struct VlcEnv {
    cfg: SystemConfig,
    task: Task,
    optics: OpticsParams,
    problem: ProblemParams,
    drive: DrivePoint,
    penalty: f64,
    state: UavState,
    channels: ChannelState,
    rng: ChaCha8Rng,
    done: bool,
}

impl VlcEnv {
    /// Builds the environment and resets it with the task's own seed.
    pub fn new(cfg: &SystemConfig, task: Task) -> Result<Self> {
        cfg.validate()?;
        if task.users.len() != cfg.scenario.users {
            return Err(Error::Shape {
                expected: format!("{} users", cfg.scenario.users),
                actual: task.users.len().to_string(),
            });
        }
        let optics = cfg.optics_params();
        let n = cfg.dimming.n_leds;
        let k = cfg.scenario.users;
        let mut env = VlcEnv {
            cfg: cfg.clone(),
            optics,
            problem: cfg.problem_params(task.initial),
            drive: cfg.drive_point(),
            penalty: cfg.infeasible_penalty(),
            state: UavState::at_rest(task.initial),
            channels: ChannelState {
                true_gain: Matrix::zeros(n, k),
                est_gain: Matrix::zeros(n, k),
                noise_var: vec![cfg.channel.noise_var; k],
                uncertainty_radius: cfg.channel.csi_radius,
            },
            rng: ChaCha8Rng::seed_from_u64(task.seed),
            task,
            done: false,
        };
        env.reset()?;
        Ok(env)
    }

    pub fn config(&self) -> &SystemConfig {
        &self.cfg
    }

    pub fn task(&self) -> &Task {
        &self.task
    }

    pub fn state(&self) -> &UavState {
        &self.state
    }

    pub fn channels(&self) -> &ChannelState {
        &self.channels
    }

    pub fn problem(&self) -> &ProblemParams {
        &self.problem
    }

    pub fn drive(&self) -> DrivePoint {
        self.drive
    }

    pub fn is_done(&self) -> bool {
        self.done
    }

    pub fn n_leds(&self) -> usize {
        self.cfg.dimming.n_leds
    }

    pub fn n_users(&self) -> usize {
        self.cfg.scenario.users
    }

    pub fn action_dim(&self) -> usize {
        RawAction::dim(self.n_leds(), self.n_users())
    }

    pub fn obs_dim(&self) -> usize {
        observation_dim(&self.cfg)
    }

    /// Starts a new episode, drawing CSI noise from the task's seed.
    pub fn reset(&mut self) -> Result<Observation> {
        self.reset_with_seed(self.task.seed)
    }

    /// Starts a new episode with an explicit CSI-noise seed.
    pub fn reset_with_seed(&mut self, seed: u64) -> Result<Observation> {
        self.rng = ChaCha8Rng::seed_from_u64(seed);
        self.state = UavState::at_rest(self.task.initial);
        self.done = false;
        self.refresh_channels()?;
        Ok(self.observation())
    }

    fn refresh_channels(&mut self) -> Result<()> {
        let h = channel_matrix(
            self.state.position,
            &self.task.users,
            &self.optics,
            self.n_leds(),
        )?;
        self.channels.est_gain = perturb_csi(&h, self.cfg.channel.csi_radius, &mut self.rng);
        self.channels.true_gain = h;
        Ok(())
    }

    pub fn observation(&self) -> Observation {
        let scale = self.cfg.env.gain_scale;
        let mut v: Vec<f64> = self.channels.est_gain.as_slice().iter().map(|g| g * scale).collect();
        if self.cfg.env.observation == ObservationMode::Full {
            let (lo, hi) = (self.cfg.flight.q_min, self.cfg.flight.q_max);
            let p = self.state.position;
            v.push(2.0 * (p.x - lo.x) / (hi.x - lo.x) - 1.0);
            v.push(2.0 * (p.y - lo.y) / (hi.y - lo.y) - 1.0);
            v.push(2.0 * (p.z - lo.z) / (hi.z - lo.z) - 1.0);
            let vm = self.cfg.flight.v_max;
            v.push(self.state.velocity.x / vm);
            v.push(self.state.velocity.y / vm);
            v.push(self.state.velocity.z / vm);
            v.push(self.state.slot as f64 / self.cfg.scenario.slots as f64);
        }
        Observation(v)
    }

    /// Maps a raw action onto the mixed allocation of the slot.
    pub fn decode_action(&self, raw: &RawAction) -> AllocationAction {
        let (n, k) = (self.n_leds(), self.n_users());
        assert_eq!(raw.beam.len(), n * k, "beam pre-image size");
        assert_eq!(raw.scores.len(), n, "LED score count");
        let bound = self.drive.bound;
        let selection = select_leds(&raw.scores, self.drive.n_active);
        let pre = Matrix::from_row_major(
            n,
            k,
            raw.beam.iter().map(|u| bound * u.clamp(-1.0, 1.0)).collect(),
        );
        let beamformer = project_beamformer(&pre, bound, &selection);

        let u = Vec3::from(raw.velocity.map(|c| c.clamp(-1.0, 1.0)));
        let f = &self.cfg.flight;
        let velocity = match self.cfg.env.velocity_mode {
            VelocityMode::Clamped => {
                let current = self.state.velocity;
                let reach = f.a_max * f.slot_duration;
                clamp_velocity(current, current + u.clamp_norm(1.0) * reach, &self.problem.flight)
            }
            VelocityMode::Report => u * f.v_max,
        };
        AllocationAction {
            beamformer,
            selection,
            dc_bias: self.drive.dc_bias,
            velocity,
        }
    }

    /// Reward for a slot outcome under the configured reward mode.
    pub fn reward_for(&self, eval: &SlotEvaluation) -> f64 {
        if eval.feasibility.all_met() {
            return -eval.power.total;
        }
        match self.cfg.reward.mode {
            RewardMode::PaperLiteral => 0.0,
            RewardMode::Amended => {
                let r = &self.cfg.reward;
                self.penalty
                    - r.power_weight * eval.power.total
                    - r.qos_weight * eval.qos_shortfall
                    - r.violation_weight * eval.feasibility.violations_from(2) as f64
            }
        }
    }

    /// Decodes and applies a raw action.
    pub fn step(&mut self, raw: &RawAction) -> Result<Step> {
        let obs = self.observation();
        let action = self.decode_action(raw);
        let (record, next) = self.apply(&action)?;
        Ok(Step {
            transition: Transition {
                obs: obs.0,
                action: raw.to_flat(),
                reward: record.reward,
                next_obs: next.0,
                done: self.done,
            },
            record,
        })
    }

    /// Applies an already-decoded allocation (used by non-learned schedulers).
    pub fn step_allocation(&mut self, action: &AllocationAction) -> Result<SlotRecord> {
        self.apply(action).map(|(record, _)| record)
    }

    fn apply(&mut self, action: &AllocationAction) -> Result<(SlotRecord, Observation)> {
        if self.done {
            return Err(Error::EpisodeFinished {
                slots: self.cfg.scenario.slots,
            });
        }
        let eval = evaluate_slot(action, &self.state, &self.channels, &self.problem);
        let reward = self.reward_for(&eval);
        let record = SlotRecord::new(self.state.slot, reward, self.state.position, action.velocity, &eval);
        self.state = step_kinematics(&self.state, action.velocity, &self.problem.flight);
        self.done = self.state.slot >= self.cfg.scenario.slots;
        self.refresh_channels()?;
        Ok((record, self.observation()))
    }
}

pub fn observation_dim(cfg: &SystemConfig) -> usize {
    let channels = cfg.dimming.n_leds * cfg.scenario.users;
    match cfg.env.observation {
        ObservationMode::Full => channels + 7,
        ObservationMode::ChannelsOnly => channels,
    }
}

pub fn action_dim(cfg: &SystemConfig) -> usize {
    RawAction::dim(cfg.dimming.n_leds, cfg.scenario.users)
}
