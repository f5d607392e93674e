use ndarray::Array1;
use rand::Rng;

use super::buffer::ReplayBuffer;
use super::gate::DiscreteQ;
use super::policy::TempoRlPolicy;
use super::td3::{random_action, Td3, Td3Config};
use crate::error::{Error, Result};
use crate::mdp::{Action, Agent, Decision, Mode, Observation, RngStream, StreamRng, Transition};

/// `Σ_i γ^i r_i + γ^k next_value` over a `k`-step segment.
pub fn kstep_target(rewards: &[f64], gamma: f64, next_value: f64) -> f64 {
    let sum: f64 = rewards.iter().rev().fold(0.0, |acc, r| r + gamma * acc);
    sum + gamma.powi(rewards.len() as i32) * next_value
}

/// TD3 actor plus a skip-length Q-network over (state, action) choosing how
/// many steps, 1 to `max_skip`, to hold each action.
#[derive(Debug, Clone)]
pub struct TempoRlAgent {
    td3: Td3,
    buffer: ReplayBuffer,
    skip: DiscreteQ,
    skip_buf: ReplayBuffer,
    max_skip: usize,
    epsilon: f64,
    gamma: f64,
    batch_size: usize,
    warmup: u64,
    explore_rng: StreamRng,
    skip_rng: StreamRng,
    mode: Mode,
    total_steps: u64,
    learn: bool,
    // Segment in progress.
    held: Vec<f64>,
    chosen: usize,
    remaining: usize,
    start: Vec<f64>,
    discounted: f64,
    elapsed: usize,
}

impl TempoRlAgent {
    pub fn new(obs_dim: usize, a_max: &[f64], cfg: &Td3Config, max_skip: usize, warmup: u64, streams: &RngStream) -> Result<Self> {
        if max_skip == 0 {
            return Err(Error::config("max skip must be >= 1"));
        }
        let act_dim = a_max.len();
        Ok(TempoRlAgent {
            td3: Td3::new(obs_dim, a_max, cfg, streams.agent("policy"))?,
            buffer: ReplayBuffer::new(cfg.buffer_capacity, obs_dim, act_dim, obs_dim)?,
            skip: DiscreteQ::new(obs_dim + act_dim, max_skip, cfg, streams.agent("skip"))?,
            skip_buf: ReplayBuffer::new(cfg.buffer_capacity, obs_dim + act_dim, 1, obs_dim)?,
            max_skip,
            epsilon: 0.1,
            gamma: cfg.gamma,
            batch_size: cfg.batch_size,
            warmup,
            explore_rng: streams.exploration("policy"),
            skip_rng: streams.exploration("skip"),
            mode: Mode::Train,
            total_steps: 0,
            learn: true,
            held: vec![0.0; act_dim],
            chosen: 1,
            remaining: 0,
            start: Vec::new(),
            discounted: 0.0,
            elapsed: 0,
        })
    }

    pub fn td3(&self) -> &Td3 {
        &self.td3
    }

    pub fn skip_net(&self) -> &DiscreteQ {
        &self.skip
    }

    pub fn max_skip(&self) -> usize {
        self.max_skip
    }

    pub fn total_steps(&self) -> u64 {
        self.total_steps
    }

    pub fn set_learning(&mut self, on: bool) {
        self.learn = on;
    }

    pub fn snapshot(&self) -> TempoRlPolicy {
        TempoRlPolicy::new(self.td3.actor().clone(), self.skip.net().clone())
    }

    fn train(&mut self) -> Result<()> {
        if self.buffer.len() >= self.batch_size {
            self.td3.train_step(&self.buffer)?;
        }
        if self.skip_buf.len() >= self.batch_size {
            let b = self.skip_buf.sample(self.batch_size, self.skip.sample_rng())?;
            let next_value = self.td3.target_value(&b.next_state)?;
            let gamma = self.gamma as f32;
            let discount: Array1<f32> = b.steps.mapv(|k| gamma.powi(k as i32));
            self.skip.train_on(&b, next_value.view(), discount.view())?;
        }
        Ok(())
    }
}

impl Agent for TempoRlAgent {
    fn begin_episode(&mut self, _: &Observation, mode: Mode) {
        self.mode = mode;
        self.remaining = 0;
        self.elapsed = 0;
    }

    fn needs_decision(&self) -> bool {
        self.remaining == 0
    }

    fn act(&mut self, obs: &Observation) -> Result<Decision> {
        let mut macs = 0;
        if self.remaining == 0 {
            let s = obs.values();
            let warm = self.mode == Mode::Train && self.total_steps < self.warmup;
            self.held = match self.mode {
                Mode::Train if warm => random_action(self.td3.a_max(), &mut self.explore_rng),
                Mode::Train => self.td3.explore(s, &mut self.explore_rng)?,
                Mode::Eval => self.td3.act(s)?,
            };
            let mut x = s.to_vec();
            x.extend_from_slice(&self.held);
            let k_index = match self.mode {
                Mode::Train if warm => self.skip_rng.random_range(0..self.max_skip),
                Mode::Train => self.skip.epsilon_greedy(&x, self.epsilon, &mut self.skip_rng)?,
                Mode::Eval => self.skip.greedy(&x)?,
            };
            if !warm {
                macs = self.td3.actor().macs() + self.skip.net().macs();
            }
            self.chosen = k_index + 1;
            self.remaining = self.chosen;
            self.start = x;
            self.discounted = 0.0;
            self.elapsed = 0;
        }
        self.remaining -= 1;
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
        let next = t.next_state.values();
        self.buffer.push(t.state.values(), &t.action.values(), t.reward, next, t.done, 1)?;
        self.discounted += self.gamma.powi(self.elapsed as i32) * t.reward;
        self.elapsed += 1;
        if self.remaining == 0 || t.ends_episode() {
            let k = (self.chosen - 1) as f64;
            self.skip_buf.push(&self.start, &[k], self.discounted, next, t.done, self.elapsed)?;
            self.remaining = 0;
        }
        if self.learn && self.total_steps >= self.warmup {
            self.train()?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::deep::td3::Td3Agent;
    use crate::envs::classic::{MountainCar, Pendulum};
    use crate::mdp::run_episode;

    #[test]
    fn kstep_examples() {
        assert!((kstep_target(&[1.0, 1.0], 0.99, 0.0) - 1.99).abs() < 1e-12);
        assert!((kstep_target(&[1.0], 0.5, 4.0) - 3.0).abs() < 1e-12);
        assert_eq!(kstep_target(&[], 0.9, 2.0), 2.0);
    }

    fn cfg() -> Td3Config {
        Td3Config {
            hidden: vec![16, 16],
            batch_size: 32,
            ..Td3Config::default()
        }
    }

    #[test]
    fn single_step_skip_matches_td3() {
        let streams = RngStream::new(21);
        let mut a = Td3Agent::new(3, &[2.0], &cfg(), 1, 100, &streams).unwrap();
        let mut b = TempoRlAgent::new(3, &[2.0], &cfg(), 1, 100, &streams).unwrap();
        let mut env = Pendulum::new();
        for ep in 0..3 {
            let ta = run_episode(&mut env, &mut a, None, usize::MAX, &mut RngStream::new(ep).env(), Mode::Train).unwrap();
            let tb = run_episode(&mut env, &mut b, None, usize::MAX, &mut RngStream::new(ep).env(), Mode::Train).unwrap();
            let acts = |t: &crate::mdp::EpisodeTrace| t.steps.iter().map(|s| s.action.clone()).collect::<Vec<_>>();
            assert_eq!(acts(&ta), acts(&tb));
            assert_eq!(ta.rewards(), tb.rewards());
            assert_eq!(ta.decisions(), tb.decisions());
        }
        assert_eq!(a.td3().actor(), b.td3().actor());
    }

    #[test]
    fn longest_skip_decision_count() {
        let mut agent = TempoRlAgent::new(2, &[1.0], &cfg(), 11, 0, &RngStream::new(0)).unwrap();
        // Make the last skip index dominate for every input.
        let net = agent.skip.net_mut();
        let last = net.layers().len() - 1;
        net.layers_mut()[last].w.fill(0.0);
        net.layers_mut()[last].b.fill(0.0);
        net.layers_mut()[last].b[10] = 1.0;
        let mut env = MountainCar::new();
        let t = run_episode(&mut env, &mut agent, None, usize::MAX, &mut RngStream::new(0).env(), Mode::Eval).unwrap();
        assert_eq!(t.len(), 999);
        assert_eq!(t.decisions(), 91);
        let mut snap = agent.snapshot();
        let u = run_episode(&mut env, &mut snap, None, usize::MAX, &mut RngStream::new(0).env(), Mode::Eval).unwrap();
        assert_eq!(u, t);
    }

    #[test]
    fn skip_transitions_record_segment_length() {
        let mut agent = TempoRlAgent::new(3, &[2.0], &cfg(), 4, 1_000, &RngStream::new(3)).unwrap();
        let mut env = Pendulum::new();
        let t = run_episode(&mut env, &mut agent, None, usize::MAX, &mut RngStream::new(3).env(), Mode::Train).unwrap();
        assert_eq!(agent.buffer.len(), 200);
        assert_eq!(agent.skip_buf.len(), t.decisions());
        let b = agent.skip_buf.sample(64, &mut RngStream::new(0).stream("x")).unwrap();
        for i in 0..64 {
            assert!(b.steps[i] >= 1.0 && b.steps[i] <= b.action[[i, 0]] + 1.0);
        }
    }
}
