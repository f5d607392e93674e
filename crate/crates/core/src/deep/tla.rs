use ndarray::Array1;
use serde::{Deserialize, Serialize};

use super::buffer::ReplayBuffer;
use super::gate::DiscreteQ;
use super::policy::{GateMode, TlaPolicy};
use super::td3::{hcat, random_action, Td3, Td3Config};
use crate::error::{Error, Result};
use crate::mdp::{Action, Agent, Decision, Mode, Observation, RngStream, StreamRng, Transition};
use crate::tabular::GatePenalty;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TlaConfig {
    pub tau: usize,
    /// Energy penalty per fast step.
    pub p: f64,
    /// Consistency penalty scale.
    pub j: f64,
    /// Store a zero slow action for windows the fast layer acted in.
    pub zero_slow_on_fast: bool,
    pub gate_penalty: GatePenalty,
    pub gate_epsilon: f64,
    pub gate_mode: GateMode,
}

impl Default for TlaConfig {
    fn default() -> Self {
        TlaConfig {
            tau: 6,
            p: 1.0,
            j: 1.0,
            zero_slow_on_fast: false,
            gate_penalty: GatePenalty::Energy,
            gate_epsilon: 0.1,
            gate_mode: GateMode::Learned,
        }
    }
}

impl TlaConfig {
    pub fn validate(&self) -> Result<()> {
        if self.tau < 2 {
            return Err(Error::config(format!("tau must be >= 2, got {}", self.tau)));
        }
        if !(self.p >= 0.0 && self.j >= 0.0) {
            return Err(Error::config("p and j must be >= 0"));
        }
        if !(0.0..=1.0).contains(&self.gate_epsilon) {
            return Err(Error::config("gate epsilon must lie in [0, 1]"));
        }
        Ok(())
    }

    fn gate_coefficient(&self) -> f64 {
        match self.gate_penalty {
            GatePenalty::Energy => self.p,
            GatePenalty::Consistency => self.j,
        }
    }
}

/// Mean over action dimensions of `|a_s - a_f| / a_max`.
pub fn consistency_gap(slow: &[f64], fast: &[f64], a_max: &[f64]) -> f64 {
    let total: f64 = slow
        .iter()
        .zip(fast)
        .zip(a_max)
        .map(|((s, f), m)| (s - f).abs() / m)
        .sum();
    total / a_max.len() as f64
}

/// Fast-layer reward: `r - g * gap * j`.
pub fn fast_reward(r: f64, g: usize, gap: f64, j: f64) -> f64 {
    r - g as f64 * gap * j
}

/// Per-step slow-layer reward: `r - p * g - g * gap * j`.
pub fn slow_step_reward(r: f64, g: usize, gap: f64, p: f64, j: f64) -> f64 {
    let g = g as f64;
    r - p * g - g * gap * j
}

/// Gate reward for a window: `Σ r - coefficient * g * elapsed`.
pub fn gate_window_reward(window_reward: f64, g: usize, elapsed: usize, coefficient: f64) -> f64 {
    window_reward - coefficient * g as f64 * elapsed as f64
}

/// What the agent did on its most recent step.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct StepInfo {
    pub boundary: bool,
    pub g: usize,
    pub slow_action: Vec<f64>,
    pub fast_action: Option<Vec<f64>>,
    pub env_action: Vec<f64>,
}

/// Layered agent: a slow TD3 policy deciding every `tau` steps, a fast TD3
/// policy acting per step, and a DQN gate choosing between them for each
/// window.
#[derive(Debug, Clone)]
pub struct TlaAgent {
    slow: Td3,
    fast: Td3,
    gate: DiscreteQ,
    slow_buf: ReplayBuffer,
    fast_buf: ReplayBuffer,
    gate_buf: ReplayBuffer,
    cfg: TlaConfig,
    td3_cfg: Td3Config,
    warmup: u64,
    a_max: Vec<f64>,
    slow_rng: StreamRng,
    fast_rng: StreamRng,
    gate_rng: StreamRng,
    mode: Mode,
    total_steps: u64,
    windows: u64,
    learn: bool,
    // Window in progress.
    step: usize,
    g: usize,
    slow_action: Vec<f64>,
    start: Vec<f64>,
    window_reward: f64,
    window_slow_reward: f64,
    elapsed: usize,
    last: StepInfo,
}

impl TlaAgent {
    pub fn new(
        obs_dim: usize,
        a_max: &[f64],
        td3_cfg: &Td3Config,
        cfg: &TlaConfig,
        warmup: u64,
        streams: &RngStream,
    ) -> Result<Self> {
        cfg.validate()?;
        let act_dim = a_max.len();
        Ok(TlaAgent {
            // The fast layer shares the plain actor-critic's stream names so
            // that a permanently open gate with p = j = 0 acts identically.
            fast: Td3::new(obs_dim, a_max, td3_cfg, streams.agent("policy"))?,
            slow: Td3::new(obs_dim, a_max, td3_cfg, streams.agent("slow"))?,
            gate: DiscreteQ::new(obs_dim + act_dim, 2, td3_cfg, streams.agent("gate"))?,
            slow_buf: ReplayBuffer::new(td3_cfg.buffer_capacity, obs_dim, act_dim, obs_dim)?,
            fast_buf: ReplayBuffer::new(td3_cfg.buffer_capacity, obs_dim, act_dim, obs_dim)?,
            gate_buf: ReplayBuffer::new(td3_cfg.buffer_capacity, obs_dim + act_dim, 1, obs_dim)?,
            cfg: cfg.clone(),
            td3_cfg: td3_cfg.clone(),
            warmup,
            a_max: a_max.to_vec(),
            slow_rng: streams.exploration("slow"),
            fast_rng: streams.exploration("policy"),
            gate_rng: streams.exploration("gate"),
            mode: Mode::Train,
            total_steps: 0,
            windows: 0,
            learn: true,
            step: 0,
            g: 0,
            slow_action: vec![0.0; act_dim],
            start: vec![0.0; obs_dim],
            window_reward: 0.0,
            window_slow_reward: 0.0,
            elapsed: 0,
            last: StepInfo::default(),
        })
    }

    pub fn config(&self) -> &TlaConfig {
        &self.cfg
    }

    pub fn slow(&self) -> &Td3 {
        &self.slow
    }

    pub fn fast(&self) -> &Td3 {
        &self.fast
    }

    pub fn gate(&self) -> &DiscreteQ {
        &self.gate
    }

    pub fn buffers(&self) -> (&ReplayBuffer, &ReplayBuffer, &ReplayBuffer) {
        (&self.slow_buf, &self.fast_buf, &self.gate_buf)
    }

    pub fn total_steps(&self) -> u64 {
        self.total_steps
    }

    pub fn last_step(&self) -> &StepInfo {
        &self.last
    }

    pub fn set_learning(&mut self, on: bool) {
        self.learn = on;
    }

    pub fn snapshot(&self) -> TlaPolicy {
        TlaPolicy::new(
            self.slow.actor().clone(),
            self.fast.actor().clone(),
            self.gate.net().clone(),
            self.cfg.tau,
            self.cfg.gate_mode,
        )
    }

    fn warming_up(&self) -> bool {
        self.mode == Mode::Train && self.total_steps < self.warmup
    }

    fn choose_gate(&mut self, s: &[f64], macs: &mut u64) -> Result<usize> {
        match self.cfg.gate_mode {
            GateMode::ForceSlow => Ok(0),
            GateMode::ForceFast => Ok(1),
            GateMode::Learned if self.warming_up() => Ok((self.windows % 2) as usize),
            GateMode::Learned => {
                let mut x = s.to_vec();
                x.extend_from_slice(&self.slow_action);
                *macs += self.gate.net().macs();
                match self.mode {
                    Mode::Train => self.gate.epsilon_greedy(&x, self.cfg.gate_epsilon, &mut self.gate_rng),
                    Mode::Eval => self.gate.greedy(&x),
                }
            }
        }
    }

    fn train(&mut self) -> Result<()> {
        let batch = self.td3_cfg.batch_size;
        if self.fast_buf.len() >= batch {
            self.fast.train_step(&self.fast_buf)?;
        }
        if self.slow_buf.len() >= batch {
            self.slow.train_step(&self.slow_buf)?;
        }
        if self.cfg.gate_mode == GateMode::Learned && self.gate_buf.len() >= batch {
            let b = self.gate_buf.sample(batch, self.gate.sample_rng())?;
            let next_slow = self.slow.actor().forward(b.next_state.view())?;
            let next_value = self.gate.target_max(&hcat(&b.next_state, &next_slow))?;
            let discount = Array1::from_elem(batch, self.td3_cfg.gamma as f32);
            self.gate.train_on(&b, next_value.view(), discount.view())?;
        }
        Ok(())
    }
}

impl Agent for TlaAgent {
    fn begin_episode(&mut self, _: &Observation, mode: Mode) {
        self.mode = mode;
        self.step = 0;
        self.g = 0;
        self.elapsed = 0;
    }

    fn needs_decision(&self) -> bool {
        self.step.is_multiple_of(self.cfg.tau) || self.g == 1
    }

    fn act(&mut self, obs: &Observation) -> Result<Decision> {
        let s = obs.values();
        let mut macs = 0;
        let boundary = self.step.is_multiple_of(self.cfg.tau);
        if boundary {
            self.step = 0;
            self.slow_action = match self.mode {
                Mode::Train if self.warming_up() => random_action(&self.a_max, &mut self.slow_rng),
                Mode::Train => {
                    macs += self.slow.actor().macs();
                    self.slow.explore(s, &mut self.slow_rng)?
                }
                Mode::Eval => {
                    macs += self.slow.actor().macs();
                    self.slow.act(s)?
                }
            };
            self.g = self.choose_gate(s, &mut macs)?;
            self.windows += 1;
            self.start.clear();
            self.start.extend_from_slice(s);
            self.window_reward = 0.0;
            self.window_slow_reward = 0.0;
            self.elapsed = 0;
        }
        self.step += 1;
        let fast_action = if self.g == 1 {
            Some(match self.mode {
                Mode::Train if self.warming_up() => random_action(&self.a_max, &mut self.fast_rng),
                Mode::Train => {
                    macs += self.fast.actor().macs();
                    self.fast.explore(s, &mut self.fast_rng)?
                }
                Mode::Eval => {
                    macs += self.fast.actor().macs();
                    self.fast.act(s)?
                }
            })
        } else {
            None
        };
        let env_action = fast_action.clone().unwrap_or_else(|| self.slow_action.clone());
        self.last = StepInfo {
            boundary,
            g: self.g,
            slow_action: self.slow_action.clone(),
            fast_action,
            env_action: env_action.clone(),
        };
        Ok(Decision {
            action: Action::Continuous(env_action),
            macs,
        })
    }

    fn observe(&mut self, t: &Transition) -> Result<()> {
        if self.mode == Mode::Eval {
            return Ok(());
        }
        self.total_steps += 1;
        let a = t.action.values();
        let gap = if self.g == 1 {
            consistency_gap(&self.slow_action, &a, &self.a_max)
        } else {
            0.0
        };
        let rf = fast_reward(t.reward, self.g, gap, self.cfg.j);
        self.fast_buf.push(t.state.values(), &a, rf, t.next_state.values(), t.done, 1)?;

        self.window_reward += t.reward;
        self.window_slow_reward += slow_step_reward(t.reward, self.g, gap, self.cfg.p, self.cfg.j);
        self.elapsed += 1;
        if self.elapsed == self.cfg.tau || t.ends_episode() {
            let stored = if self.cfg.zero_slow_on_fast && self.g == 1 {
                vec![0.0; self.a_max.len()]
            } else {
                self.slow_action.clone()
            };
            let next = t.next_state.values();
            self.slow_buf.push(&self.start, &stored, self.window_slow_reward, next, t.done, self.elapsed)?;
            let mut gate_in = self.start.clone();
            gate_in.extend_from_slice(&self.slow_action);
            let rg = gate_window_reward(self.window_reward, self.g, self.elapsed, self.cfg.gate_coefficient());
            self.gate_buf.push(&gate_in, &[self.g as f64], rg, next, t.done, self.elapsed)?;
            self.elapsed = 0;
            self.step = self.cfg.tau;
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
    use crate::envs::classic::Pendulum;
    use crate::mdp::{run_episode, DecisionBudget, Environment, StepOutcome};
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};

    #[test]
    fn shaping_examples() {
        let gap = consistency_gap(&[0.5], &[-0.5], &[1.0]);
        assert_eq!(gap, 1.0);
        assert_eq!(fast_reward(-1.0, 1, gap, 1.0), -2.0);
        assert_eq!(slow_step_reward(-1.0, 1, gap, 1.0, 1.0), -3.0);
        assert_eq!(fast_reward(-1.0, 0, gap, 1.0), -1.0);
        assert_eq!(slow_step_reward(-1.0, 0, gap, 1.0, 1.0), -1.0);
        assert_eq!(gate_window_reward(-4.0, 0, 4, 1.0), -4.0);
        assert_eq!(gate_window_reward(-4.0, 1, 4, 1.0), -8.0);
        assert_eq!(consistency_gap(&[1.0, 0.0], &[0.0, 0.0], &[2.0, 1.0]), 0.25);
    }

    // Direct evaluation of the shaping formulas on random inputs.
    #[test]
    fn shaping_algebra_random_inputs() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(6);
        for _ in 0..1000 {
            let dim = rng.random_range(1..4);
            let a_max: Vec<f64> = (0..dim).map(|_| rng.random_range(0.1..5.0)).collect();
            let a_s: Vec<f64> = a_max.iter().map(|&m| rng.random_range(-m..=m)).collect();
            let a_f: Vec<f64> = a_max.iter().map(|&m| rng.random_range(-m..=m)).collect();
            let r = rng.random_range(-20.0..20.0);
            let (p, j) = (rng.random_range(0.0..6.0), rng.random_range(0.0..6.0));
            let g = rng.random_range(0..2usize);
            let mut d = 0.0;
            for k in 0..dim {
                d += (a_s[k] - a_f[k]).abs() / a_max[k];
            }
            d /= dim as f64;
            let gf = g as f64;
            let rf = fast_reward(r, g, consistency_gap(&a_s, &a_f, &a_max), j);
            let rs = slow_step_reward(r, g, consistency_gap(&a_s, &a_f, &a_max), p, j);
            assert!((rf - (r - gf * d * j)).abs() < 1e-12);
            assert!((rs - (r - p * gf - gf * d * j)).abs() < 1e-12);
            assert!(rf <= r && rs <= r);
        }
    }

    fn tiny() -> Td3Config {
        Td3Config {
            hidden: vec![16, 16],
            batch_size: 16,
            ..Td3Config::default()
        }
    }

    /// Fixed-length episodes with random rewards and random terminal steps.
    struct Toy {
        t: usize,
        len: usize,
        rng: StreamRng,
        spec: crate::mdp::ActionSpec,
    }

    impl Environment for Toy {
        fn observation_dim(&self) -> usize {
            2
        }
        fn action_spec(&self) -> &crate::mdp::ActionSpec {
            &self.spec
        }
        fn max_steps(&self) -> usize {
            1000
        }
        fn reset(&mut self, rng: &mut StreamRng) -> Observation {
            self.t = 0;
            self.len = rng.random_range(1..60);
            Observation(vec![0.0, 1.0])
        }
        fn step(&mut self, action: &Action) -> Result<StepOutcome> {
            self.t += 1;
            let a = action.values()[0];
            Ok(StepOutcome {
                observation: Observation(vec![self.t as f64 / 10.0, a]),
                reward: self.rng.random_range(-1.0..0.0),
                terminated: self.t >= self.len,
                truncated: false,
            })
        }
    }

    /// Wraps an agent and records its step info after every action.
    struct Recorder<'a> {
        inner: &'a mut TlaAgent,
        infos: Vec<StepInfo>,
        charged: Vec<bool>,
    }

    impl Agent for Recorder<'_> {
        fn begin_episode(&mut self, o: &Observation, m: Mode) {
            self.inner.begin_episode(o, m);
        }
        fn needs_decision(&self) -> bool {
            self.inner.needs_decision()
        }
        fn act(&mut self, o: &Observation) -> Result<Decision> {
            self.charged.push(self.inner.needs_decision());
            let d = self.inner.act(o)?;
            self.infos.push(self.inner.last_step().clone());
            Ok(d)
        }
        fn observe(&mut self, t: &Transition) -> Result<()> {
            self.inner.observe(t)
        }
    }

    #[test]
    fn gate_persistence_and_decision_accounting() {
        let cfg = TlaConfig {
            tau: 4,
            gate_epsilon: 0.5,
            ..TlaConfig::default()
        };
        let streams = RngStream::new(3);
        let mut agent = TlaAgent::new(2, &[1.0], &tiny(), &cfg, 20, &streams).unwrap();
        let mut env = Toy {
            t: 0,
            len: 0,
            rng: streams.stream("toy"),
            spec: crate::mdp::ActionSpec::Continuous { a_max: vec![1.0] },
        };
        let mut env_rng = streams.env();
        for episode in 0..1000 {
            let mode = if episode % 5 == 4 { Mode::Eval } else { Mode::Train };
            if episode == 200 {
                agent.set_learning(false);
            }
            let mut rec = Recorder {
                inner: &mut agent,
                infos: Vec::new(),
                charged: Vec::new(),
            };
            let trace = run_episode(&mut env, &mut rec, None, usize::MAX, &mut env_rng, mode).unwrap();
            let t = trace.len();
            for (k, info) in rec.infos.iter().enumerate() {
                assert_eq!(info.boundary, k % 4 == 0);
                if k % 4 != 0 {
                    assert_eq!(info.g, rec.infos[k - 1].g, "gate changed mid-window");
                    assert_eq!(info.slow_action, rec.infos[k - 1].slow_action);
                }
                match (&info.fast_action, info.g) {
                    (Some(f), 1) => assert_eq!(&info.env_action, f),
                    (None, 0) => assert_eq!(info.env_action, info.slow_action),
                    _ => panic!("fast action presence disagrees with gate"),
                }
                assert_eq!(rec.charged[k], k % 4 == 0 || info.g == 1);
            }
            let d = trace.decisions();
            assert!(d >= t.div_ceil(4) && d <= t, "decisions {d} for {t} steps");
        }
    }

    fn actions_of(agent: &mut dyn Agent, steps: usize, seed: u64) -> Vec<Vec<f64>> {
        let mut env = Pendulum::new();
        let mut rng = RngStream::new(seed).env();
        let mut out = Vec::new();
        while out.len() < steps {
            let t = run_episode(&mut env, agent, None::<DecisionBudget>, usize::MAX, &mut rng, Mode::Train).unwrap();
            out.extend(t.steps.iter().map(|s| s.action.clone()));
        }
        out.truncate(steps);
        out
    }

    #[test]
    fn open_gate_without_penalties_matches_td3() {
        let td3_cfg = Td3Config {
            hidden: vec![16, 16],
            batch_size: 32,
            ..Td3Config::default()
        };
        let cfg = TlaConfig {
            tau: 5,
            p: 0.0,
            j: 0.0,
            gate_mode: GateMode::ForceFast,
            ..TlaConfig::default()
        };
        let streams = RngStream::new(11);
        let mut td3 = Td3Agent::new(3, &[2.0], &td3_cfg, 1, 100, &streams).unwrap();
        let mut tla = TlaAgent::new(3, &[2.0], &td3_cfg, &cfg, 100, &streams).unwrap();
        let a = actions_of(&mut td3, 500, 1);
        let b = actions_of(&mut tla, 500, 1);
        assert_eq!(a, b);
        assert_eq!(td3.td3().actor(), tla.fast().actor());
    }

    #[test]
    fn closed_gate_holds_slow_action_for_tau_steps() {
        let cfg = TlaConfig {
            tau: 6,
            gate_mode: GateMode::ForceSlow,
            ..TlaConfig::default()
        };
        let mut agent = TlaAgent::new(3, &[2.0], &tiny(), &cfg, 0, &RngStream::new(2)).unwrap();
        let mut env = Pendulum::new();
        let t = run_episode(&mut env, &mut agent, None, usize::MAX, &mut RngStream::new(2).env(), Mode::Eval).unwrap();
        assert_eq!(t.len(), 200);
        assert_eq!(t.decisions(), 200usize.div_ceil(6));
        for w in t.steps.chunks(6) {
            assert!(w.iter().all(|s| s.action == w[0].action));
        }
        let slow_macs = agent.slow().actor().macs();
        assert_eq!(t.total_macs(), slow_macs * 34);
    }

    #[test]
    fn eval_is_deterministic_and_matches_snapshot() {
        let cfg = TlaConfig { tau: 3, ..TlaConfig::default() };
        let mut agent = TlaAgent::new(3, &[2.0], &tiny(), &cfg, 0, &RngStream::new(5)).unwrap();
        let mut env = Pendulum::new();
        let run = |a: &mut dyn Agent, env: &mut Pendulum| {
            run_episode(env, a, None, usize::MAX, &mut RngStream::new(9).eval_env(), Mode::Eval).unwrap()
        };
        let x = run(&mut agent, &mut env);
        let y = run(&mut agent, &mut env);
        assert_eq!(x, y);
        let mut snap = agent.snapshot();
        assert_eq!(run(&mut snap, &mut env), x);
    }

    #[test]
    fn window_transitions_carry_shaped_rewards() {
        let cfg = TlaConfig {
            tau: 2,
            p: 1.0,
            j: 0.0,
            gate_mode: GateMode::ForceFast,
            zero_slow_on_fast: true,
            ..TlaConfig::default()
        };
        let mut agent = TlaAgent::new(3, &[2.0], &tiny(), &cfg, 1_000, &RngStream::new(1)).unwrap();
        let mut env = Pendulum::new();
        let t = run_episode(&mut env, &mut agent, None, 4, &mut RngStream::new(1).env(), Mode::Train).unwrap();
        let (slow, fast, gate) = agent.buffers();
        assert_eq!(fast.len(), 4);
        assert_eq!(slow.len(), 2);
        assert_eq!(gate.len(), 2);
        let r = t.rewards();
        for w in 0..2 {
            let raw = r[2 * w] + r[2 * w + 1];
            assert!((slow.reward_at(w).unwrap() as f64 - (raw - 2.0)).abs() < 1e-4);
            assert!((gate.reward_at(w).unwrap() as f64 - (raw - 2.0)).abs() < 1e-4);
        }
        for k in 0..4 {
            assert!((fast.reward_at(k).unwrap() as f64 - r[k]).abs() < 1e-4);
        }
        let batch = slow.sample(8, &mut RngStream::new(0).stream("x")).unwrap();
        assert!(batch.action.iter().all(|&a| a == 0.0));
    }

    proptest! {
        #[test]
        fn shaped_rewards_bounded_by_raw(r in -50.0f64..50.0, g in 0usize..2, s in -1.0f64..1.0, f in -1.0f64..1.0, p in 0.0f64..6.0, j in 0.0f64..6.0) {
            let gap = consistency_gap(&[s], &[f], &[1.0]);
            prop_assert!(fast_reward(r, g, gap, j) <= r);
            prop_assert!(slow_step_reward(r, g, gap, p, j) <= r);
        }
    }

    #[test]
    fn rejects_small_tau() {
        let cfg = TlaConfig { tau: 1, ..TlaConfig::default() };
        assert!(TlaAgent::new(3, &[2.0], &tiny(), &cfg, 0, &RngStream::new(0)).is_err());
    }
}
