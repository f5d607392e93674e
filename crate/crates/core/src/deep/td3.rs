use ndarray::{concatenate, s, Array1, Array2, Axis};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::buffer::{Batch, ReplayBuffer};
use super::policy::ActorPolicy;
use crate::error::{Error, Result};
use crate::mdp::{Action, Agent, Decision, Mode, Observation, RngStream, StreamRng, Transition};
use crate::neural::{Activation, Adam, Head, Mlp};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Td3Config {
    pub hidden: Vec<usize>,
    pub lr: f64,
    pub gamma: f64,
    /// Target network update rate.
    pub rho: f64,
    pub batch_size: usize,
    /// Exploration noise std, as a fraction of the action bound.
    pub expl_noise: f64,
    /// Target policy smoothing noise std, fraction of the action bound.
    pub policy_noise: f64,
    /// Clip of the smoothing noise, fraction of the action bound.
    pub noise_clip: f64,
    pub policy_delay: u64,
    pub buffer_capacity: usize,
}

impl Default for Td3Config {
    fn default() -> Self {
        Td3Config {
            hidden: vec![256, 256],
            lr: 3e-4,
            gamma: 0.99,
            rho: 0.005,
            batch_size: 256,
            expl_noise: 0.1,
            policy_noise: 0.2,
            noise_clip: 0.5,
            policy_delay: 2,
            buffer_capacity: super::buffer::DEFAULT_CAPACITY,
        }
    }
}

impl Td3Config {
    pub fn validate(&self) -> Result<()> {
        if self.hidden.is_empty() || self.hidden.contains(&0) {
            return Err(Error::config("hidden layer sizes must be non-empty and positive"));
        }
        if !(0.0..=1.0).contains(&self.gamma) || !(0.0..=1.0).contains(&self.rho) {
            return Err(Error::config("gamma and rho must lie in [0, 1]"));
        }
        if self.batch_size == 0 || self.policy_delay == 0 || self.buffer_capacity == 0 {
            return Err(Error::config("batch size, policy delay and buffer capacity must be >= 1"));
        }
        if self.lr <= 0.0 || self.expl_noise < 0.0 || self.policy_noise < 0.0 || self.noise_clip < 0.0 {
            return Err(Error::config("learning rate must be > 0 and noise scales >= 0"));
        }
        Ok(())
    }

    pub(crate) fn dims(&self, input: usize, output: usize) -> Vec<usize> {
        let mut d = vec![input];
        d.extend(&self.hidden);
        d.push(output);
        d
    }
}

pub(crate) fn hcat(a: &Array2<f32>, b: &Array2<f32>) -> Array2<f32> {
    concatenate![Axis(1), *a, *b]
}

/// Uniform action inside the bounds.
pub fn random_action(a_max: &[f64], rng: &mut StreamRng) -> Vec<f64> {
    a_max.iter().map(|&m| rng.random_range(-m..=m)).collect()
}

/// Twin-critic deterministic actor-critic learner.
#[derive(Debug, Clone)]
pub struct Td3 {
    pub(crate) actor: Mlp<f32>,
    actor_target: Mlp<f32>,
    q1: Mlp<f32>,
    q2: Mlp<f32>,
    q1_target: Mlp<f32>,
    q2_target: Mlp<f32>,
    actor_opt: Adam<f32>,
    q1_opt: Adam<f32>,
    q2_opt: Adam<f32>,
    a_max: Vec<f64>,
    obs_dim: usize,
    cfg: Td3Config,
    train_steps: u64,
    /// Parameter init, then minibatches and smoothing noise.
    rng: StreamRng,
}

impl Td3 {
    pub fn new(obs_dim: usize, a_max: &[f64], cfg: &Td3Config, mut rng: StreamRng) -> Result<Self> {
        cfg.validate()?;
        let act_dim = a_max.len();
        let actor = Mlp::new(&cfg.dims(obs_dim, act_dim), Activation::Relu, Head::Tanh(a_max.to_vec()), &mut rng)?;
        let critic_dims = cfg.dims(obs_dim + act_dim, 1);
        let q1 = Mlp::new(&critic_dims, Activation::Relu, Head::Identity, &mut rng)?;
        let q2 = Mlp::new(&critic_dims, Activation::Relu, Head::Identity, &mut rng)?;
        Ok(Td3 {
            actor_opt: Adam::new(&actor, cfg.lr),
            q1_opt: Adam::new(&q1, cfg.lr),
            q2_opt: Adam::new(&q2, cfg.lr),
            actor_target: actor.clone(),
            q1_target: q1.clone(),
            q2_target: q2.clone(),
            actor,
            q1,
            q2,
            a_max: a_max.to_vec(),
            obs_dim,
            cfg: cfg.clone(),
            train_steps: 0,
            rng,
        })
    }

    pub fn actor(&self) -> &Mlp<f32> {
        &self.actor
    }

    pub fn critics(&self) -> (&Mlp<f32>, &Mlp<f32>) {
        (&self.q1, &self.q2)
    }

    pub fn critics_mut(&mut self) -> (&mut Mlp<f32>, &mut Mlp<f32>) {
        (&mut self.q1, &mut self.q2)
    }

    pub fn target_critics_mut(&mut self) -> (&mut Mlp<f32>, &mut Mlp<f32>) {
        (&mut self.q1_target, &mut self.q2_target)
    }

    pub fn config(&self) -> &Td3Config {
        &self.cfg
    }

    pub fn a_max(&self) -> &[f64] {
        &self.a_max
    }

    pub fn train_steps(&self) -> u64 {
        self.train_steps
    }

    pub fn act(&self, state: &[f64]) -> Result<Vec<f64>> {
        self.actor.forward_one(state)
    }

    /// Deterministic action plus Gaussian exploration noise, clipped.
    pub fn explore(&self, state: &[f64], rng: &mut StreamRng) -> Result<Vec<f64>> {
        let mut a = self.act(state)?;
        for (v, &m) in a.iter_mut().zip(&self.a_max) {
            let n: f64 = rng.sample(StandardNormal);
            *v = (*v + n * self.cfg.expl_noise * m).clamp(-m, m);
        }
        Ok(a)
    }

    /// `min(Q1', Q2')` at the given next states and actions.
    pub fn min_target_q(&self, next_state: &Array2<f32>, next_action: &Array2<f32>) -> Result<Array1<f32>> {
        let x = hcat(next_state, next_action);
        let a = self.q1_target.forward(x.view())?;
        let b = self.q2_target.forward(x.view())?;
        Ok(Array1::from_shape_fn(x.nrows(), |i| a[[i, 0]].min(b[[i, 0]])))
    }

    /// `min(Q1', Q2')(s', π'(s'))` without smoothing noise.
    pub fn target_value(&self, next_state: &Array2<f32>) -> Result<Array1<f32>> {
        let a = self.actor_target.forward(next_state.view())?;
        self.min_target_q(next_state, &a)
    }

    /// Critic regression targets for `batch` given standard-normal draws
    /// `noise` (one per action entry).
    pub fn td_targets(&self, batch: &Batch, noise: &Array2<f32>) -> Result<Array1<f32>> {
        let mut a = self.actor_target.forward(batch.next_state.view())?;
        for ((mut col, ncol), &m) in a.axis_iter_mut(Axis(1)).zip(noise.axis_iter(Axis(1))).zip(&self.a_max) {
            let m = m as f32;
            let clip = self.cfg.noise_clip as f32 * m;
            let scale = self.cfg.policy_noise as f32 * m;
            col.zip_mut_with(&ncol, |v, &n| {
                *v = (*v + (n * scale).clamp(-clip, clip)).clamp(-m, m);
            });
        }
        let q = self.min_target_q(&batch.next_state, &a)?;
        let gamma = self.cfg.gamma as f32;
        Ok(Array1::from_shape_fn(q.len(), |i| {
            batch.reward[i] + gamma * batch.not_done[i] * q[i]
        }))
    }

    /// One critic update, plus an actor and target update every
    /// `policy_delay` calls.
    pub fn train_step(&mut self, buffer: &ReplayBuffer) -> Result<()> {
        let n = self.cfg.batch_size;
        let batch = buffer.sample(n, &mut self.rng)?;
        let noise = Array2::from_shape_simple_fn((n, self.a_max.len()), || self.rng.sample::<f32, _>(StandardNormal));
        let y = self.td_targets(&batch, &noise)?;
        self.train_critics(&batch, &y)?;
        self.train_steps += 1;
        if self.train_steps.is_multiple_of(self.cfg.policy_delay) {
            self.train_actor(&batch.state)?;
            self.actor_target.soft_update(&self.actor, self.cfg.rho)?;
            self.q1_target.soft_update(&self.q1, self.cfg.rho)?;
            self.q2_target.soft_update(&self.q2, self.cfg.rho)?;
        }
        Ok(())
    }

    fn train_critics(&mut self, batch: &Batch, y: &Array1<f32>) -> Result<()> {
        let x = hcat(&batch.state, &batch.action);
        let scale = 2.0 / y.len() as f32;
        for (q, opt) in [(&mut self.q1, &mut self.q1_opt), (&mut self.q2, &mut self.q2_opt)] {
            let cache = q.forward_cached(x.view())?;
            let out = cache.output();
            let grad = Array2::from_shape_fn(out.dim(), |(i, _)| scale * (out[[i, 0]] - y[i]));
            let (g, _) = q.backward(&cache, grad.view())?;
            opt.step(q, &g)?;
        }
        Ok(())
    }

    fn train_actor(&mut self, state: &Array2<f32>) -> Result<()> {
        let n = state.nrows();
        let cache = self.actor.forward_cached(state.view())?;
        let x = hcat(state, cache.output());
        let qc = self.q1.forward_cached(x.view())?;
        let dq = Array2::from_elem((n, 1), -1.0 / n as f32);
        let dx = self.q1.input_grad(&qc, dq.view())?;
        let da = dx.slice(s![.., self.obs_dim..]).to_owned();
        let (g, _) = self.actor.backward(&cache, da.view())?;
        self.actor_opt.step(&mut self.actor, &g)?;
        Ok(())
    }
}

/// TD3 acting in the environment. With `repeat > 1` every chosen action is
/// held for `repeat` steps and learned from as one transition carrying the
/// summed reward (the extended-action variant).
#[derive(Debug, Clone)]
pub struct Td3Agent {
    td3: Td3,
    buffer: ReplayBuffer,
    repeat: usize,
    warmup: u64,
    explore_rng: StreamRng,
    mode: Mode,
    total_steps: u64,
    held: Vec<f64>,
    start: Vec<f64>,
    reward: f64,
    elapsed: usize,
    learn: bool,
}

impl Td3Agent {
    pub fn new(obs_dim: usize, a_max: &[f64], cfg: &Td3Config, repeat: usize, warmup: u64, streams: &RngStream) -> Result<Self> {
        if repeat == 0 {
            return Err(Error::config("repeat must be >= 1"));
        }
        Ok(Td3Agent {
            td3: Td3::new(obs_dim, a_max, cfg, streams.agent("policy"))?,
            buffer: ReplayBuffer::new(cfg.buffer_capacity, obs_dim, a_max.len(), obs_dim)?,
            repeat,
            warmup,
            explore_rng: streams.exploration("policy"),
            mode: Mode::Train,
            total_steps: 0,
            held: vec![0.0; a_max.len()],
            start: vec![0.0; obs_dim],
            reward: 0.0,
            elapsed: 0,
            learn: true,
        })
    }

    pub fn td3(&self) -> &Td3 {
        &self.td3
    }

    pub fn buffer(&self) -> &ReplayBuffer {
        &self.buffer
    }

    pub fn total_steps(&self) -> u64 {
        self.total_steps
    }

    /// Disables gradient updates (transitions are still stored).
    pub fn set_learning(&mut self, on: bool) {
        self.learn = on;
    }

    pub fn snapshot(&self) -> ActorPolicy {
        ActorPolicy::new(self.td3.actor.clone(), self.repeat)
    }
}

impl Agent for Td3Agent {
    fn begin_episode(&mut self, _: &Observation, mode: Mode) {
        self.mode = mode;
        self.elapsed = 0;
        self.reward = 0.0;
    }

    fn needs_decision(&self) -> bool {
        self.elapsed.is_multiple_of(self.repeat)
    }

    fn act(&mut self, obs: &Observation) -> Result<Decision> {
        let mut macs = 0;
        if self.elapsed.is_multiple_of(self.repeat) {
            let s = obs.values();
            self.held = match self.mode {
                Mode::Train if self.total_steps < self.warmup => random_action(&self.td3.a_max, &mut self.explore_rng),
                Mode::Train => {
                    macs = self.td3.actor.macs();
                    self.td3.explore(s, &mut self.explore_rng)?
                }
                Mode::Eval => {
                    macs = self.td3.actor.macs();
                    self.td3.act(s)?
                }
            };
            self.start.clear();
            self.start.extend_from_slice(s);
            self.reward = 0.0;
            self.elapsed = 0;
        }
        self.elapsed += 1;
        Ok(Decision {
            action: Action::Continuous(self.held.clone()),
            macs,
        })
    }

    fn observe(&mut self, t: &Transition) -> Result<()> {
        if self.mode == Mode::Eval {
            return Ok(());
        }
        self.total_steps += 1;
        self.reward += t.reward;
        if self.elapsed == self.repeat || t.ends_episode() {
            self.buffer.push(&self.start, &self.held, self.reward, t.next_state.values(), t.done, self.elapsed)?;
            self.elapsed = 0;
        }
        if self.learn && self.total_steps >= self.warmup && self.buffer.len() >= self.td3.cfg.batch_size {
            self.td3.train_step(&self.buffer)?;
        }
        Ok(())
    }
}
