//! Tabular Q-learning, extended-action Q-learning and the tabular layered
//! agent for the gridworlds.

use std::sync::Arc;

use rand::Rng;

use crate::envs::grid::{GridEnv, GridWorld};
use crate::error::{Error, Result};
use crate::metrics::{action_repetition, jerk};
use crate::mdp::{
    run_episode, Action, Agent, Decision, DecisionBudget, Environment, EpisodeTrace, Mode,
    Observation, RngStream, StreamRng, Transition,
};

/// Dense action-value table; every entry starts at 0.
#[derive(Debug, Clone, PartialEq)]
pub struct QTable {
    n_states: usize,
    n_actions: usize,
    values: Vec<f64>,
    pub alpha: f64,
    pub gamma: f64,
}

impl QTable {
    pub fn new(n_states: usize, n_actions: usize, alpha: f64, gamma: f64) -> Self {
        QTable {
            n_states,
            n_actions,
            values: vec![0.0; n_states * n_actions],
            alpha,
            gamma,
        }
    }

    pub fn n_states(&self) -> usize {
        self.n_states
    }

    pub fn n_actions(&self) -> usize {
        self.n_actions
    }

    pub fn get(&self, s: usize, a: usize) -> f64 {
        self.values[s * self.n_actions + a]
    }

    pub fn set(&mut self, s: usize, a: usize, v: f64) {
        self.values[s * self.n_actions + a] = v;
    }

    pub fn row(&self, s: usize) -> &[f64] {
        &self.values[s * self.n_actions..(s + 1) * self.n_actions]
    }

    pub fn max(&self, s: usize) -> f64 {
        self.row(s).iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    /// Greedy action, lowest index on ties.
    pub fn argmax(&self, s: usize) -> usize {
        let row = self.row(s);
        let mut best = 0;
        for (a, &v) in row.iter().enumerate() {
            if v > row[best] {
                best = a;
            }
        }
        best
    }

    /// Greedy action with ties broken uniformly at random.
    pub fn argmax_random(&self, s: usize, rng: &mut StreamRng) -> usize {
        let m = self.max(s);
        let ties: Vec<usize> = (0..self.n_actions).filter(|&a| self.get(s, a) == m).collect();
        ties[rng.random_range(0..ties.len())]
    }

    pub fn epsilon_greedy(&self, s: usize, epsilon: f64, rng: &mut StreamRng) -> usize {
        if rng.random::<f64>() < epsilon {
            rng.random_range(0..self.n_actions)
        } else {
            self.argmax_random(s, rng)
        }
    }

    /// `Q(s,a) += α (r + γ max_a' Q(s',a') (1 - done) - Q(s,a))`.
    pub fn q_update(&mut self, s: usize, a: usize, r: f64, s_next: usize, done: bool) {
        let bootstrap = if done { 0.0 } else { self.max(s_next) };
        self.update_toward(s, a, r + self.gamma * bootstrap);
    }

    /// Moves `Q(s,a)` a step of size α toward `target`.
    pub fn update_toward(&mut self, s: usize, a: usize, target: f64) {
        let q = self.get(s, a);
        self.set(s, a, q + self.alpha * (target - q));
    }
}

/// Linear decay from `start` to `end` over `decay_episodes`, then flat.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpsilonSchedule {
    pub start: f64,
    pub end: f64,
    pub decay_episodes: usize,
}

impl EpsilonSchedule {
    pub fn value(&self, episode: usize) -> f64 {
        if self.decay_episodes == 0 || episode >= self.decay_episodes {
            return self.end;
        }
        let frac = episode as f64 / self.decay_episodes as f64;
        self.start + (self.end - self.start) * frac
    }
}

fn cell_of(obs: &Observation) -> usize {
    obs.values()[0] as usize
}

fn discrete(a: &Action) -> Result<usize> {
    match a {
        Action::Discrete(i) => Ok(*i),
        Action::Continuous(_) => Err(Error::contract("tabular agents take discrete actions")),
    }
}

/// Q-learning whose every decision repeats one action `repeat` times
/// (`repeat == 1` is plain per-step Q-learning). A macro ends early when
/// the episode does.
#[derive(Debug, Clone)]
pub struct QLearning {
    table: QTable,
    repeat: usize,
    epsilon: f64,
    mode: Mode,
    rng: StreamRng,
    // Macro in progress.
    start: usize,
    action: usize,
    reward: f64,
    elapsed: usize,
}

impl QLearning {
    pub fn new(n_states: usize, n_actions: usize, alpha: f64, gamma: f64, repeat: usize, rng: StreamRng) -> Result<Self> {
        if repeat == 0 {
            return Err(Error::config("repeat must be >= 1"));
        }
        Ok(QLearning {
            table: QTable::new(n_states, n_actions, alpha, gamma),
            repeat,
            epsilon: 1.0,
            mode: Mode::Train,
            rng,
            start: 0,
            action: 0,
            reward: 0.0,
            elapsed: 0,
        })
    }

    pub fn table(&self) -> &QTable {
        &self.table
    }

    pub fn set_epsilon(&mut self, epsilon: f64) {
        self.epsilon = epsilon;
    }
}

impl Agent for QLearning {
    fn begin_episode(&mut self, _: &Observation, mode: Mode) {
        self.mode = mode;
        self.elapsed = 0;
        self.reward = 0.0;
    }

    fn needs_decision(&self) -> bool {
        self.elapsed.is_multiple_of(self.repeat)
    }

    fn act(&mut self, obs: &Observation) -> Result<Decision> {
        if self.elapsed.is_multiple_of(self.repeat) {
            let s = cell_of(obs);
            self.start = s;
            self.reward = 0.0;
            self.elapsed = 0;
            self.action = match self.mode {
                Mode::Train => self.table.epsilon_greedy(s, self.epsilon, &mut self.rng),
                Mode::Eval => self.table.argmax(s),
            };
        }
        self.elapsed += 1;
        Ok(Decision::new(Action::Discrete(self.action)))
    }

    fn observe(&mut self, t: &Transition) -> Result<()> {
        if self.mode == Mode::Eval {
            return Ok(());
        }
        self.reward += self.table.gamma.powi(self.elapsed as i32 - 1) * t.reward;
        if self.elapsed == self.repeat || t.ends_episode() {
            let s_next = cell_of(&t.next_state);
            let bootstrap = if t.done { 0.0 } else { self.table.max(s_next) };
            let target = self.reward + self.table.gamma.powi(self.elapsed as i32) * bootstrap;
            self.table.update_toward(self.start, self.action, target);
            self.elapsed = 0;
        }
        Ok(())
    }
}

/// Which coefficient scales the gate's energy penalty.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GatePenalty {
    #[default]
    Energy,
    Consistency,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TlaParams {
    pub tau: usize,
    pub p: f64,
    pub j: f64,
    pub gate_penalty: GatePenalty,
}

impl Default for TlaParams {
    fn default() -> Self {
        TlaParams {
            tau: 4,
            p: 1.0,
            j: 0.0,
            gate_penalty: GatePenalty::Energy,
        }
    }
}

/// Layered tabular agent: a slow table over `tau`-step repeats, a fast
/// per-step table, and a gate table over {slow, fast} keyed by
/// (state, slow action).
#[derive(Debug, Clone)]
pub struct TabularTla {
    slow: QTable,
    fast: QTable,
    gate: QTable,
    params: TlaParams,
    epsilon: f64,
    mode: Mode,
    rng: StreamRng,
    // Window in progress.
    step: usize,
    start: usize,
    slow_action: usize,
    g: usize,
    reward: f64,
    deviation: f64,
}

impl TabularTla {
    pub fn new(n_states: usize, n_actions: usize, alpha: f64, gamma: f64, params: TlaParams, rng: StreamRng) -> Result<Self> {
        if params.tau == 0 {
            return Err(Error::config("tau must be >= 1"));
        }
        if params.p < 0.0 || params.j < 0.0 {
            return Err(Error::config("p and j must be >= 0"));
        }
        Ok(TabularTla {
            slow: QTable::new(n_states, n_actions, alpha, gamma),
            fast: QTable::new(n_states, n_actions, alpha, gamma),
            gate: QTable::new(n_states * n_actions, 2, alpha, gamma),
            params,
            epsilon: 1.0,
            mode: Mode::Train,
            rng,
            step: 0,
            start: 0,
            slow_action: 0,
            g: 0,
            reward: 0.0,
            deviation: 0.0,
        })
    }

    pub fn slow(&self) -> &QTable {
        &self.slow
    }

    pub fn fast(&self) -> &QTable {
        &self.fast
    }

    pub fn gate(&self) -> &QTable {
        &self.gate
    }

    pub fn set_epsilon(&mut self, epsilon: f64) {
        self.epsilon = epsilon;
    }

    /// Gate choice of the window in progress.
    pub fn gate_open(&self) -> bool {
        self.g == 1
    }

    fn gate_key(&self, s: usize, a_s: usize) -> usize {
        s * self.slow.n_actions() + a_s
    }

    fn pick(&mut self, which: Layer, s: usize) -> usize {
        let table = match which {
            Layer::Slow => &self.slow,
            Layer::Fast => &self.fast,
            Layer::Gate => &self.gate,
        };
        match self.mode {
            Mode::Train => table.epsilon_greedy(s, self.epsilon, &mut self.rng),
            Mode::Eval => table.argmax(s),
        }
    }
}

#[derive(Clone, Copy)]
enum Layer {
    Slow,
    Fast,
    Gate,
}

/// Fast-layer reward: raw reward minus the consistency penalty when the fast
/// layer acted and disagreed with the slow action.
pub fn tabular_fast_reward(r: f64, g: usize, disagree: bool, j: f64) -> f64 {
    r - (g as f64) * if disagree { j } else { 0.0 }
}

/// Slow-layer reward for a window: summed reward minus `p` per fast step and
/// `j` per disagreeing fast step.
pub fn tabular_slow_reward(window_reward: f64, g: usize, elapsed: usize, disagreements: f64, p: f64, j: f64) -> f64 {
    let g = g as f64;
    window_reward - p * g * elapsed as f64 - j * g * disagreements
}

/// Gate reward for a window: summed reward minus the chosen coefficient per
/// fast step.
pub fn tabular_gate_reward(window_reward: f64, g: usize, elapsed: usize, params: &TlaParams) -> f64 {
    let pen = match params.gate_penalty {
        GatePenalty::Energy => params.p,
        GatePenalty::Consistency => params.j,
    };
    window_reward - pen * g as f64 * elapsed as f64
}

impl Agent for TabularTla {
    fn begin_episode(&mut self, _: &Observation, mode: Mode) {
        self.mode = mode;
        self.step = 0;
        self.reward = 0.0;
        self.deviation = 0.0;
    }

    fn needs_decision(&self) -> bool {
        self.step.is_multiple_of(self.params.tau) || self.g == 1
    }

    fn act(&mut self, obs: &Observation) -> Result<Decision> {
        let s = cell_of(obs);
        if self.step.is_multiple_of(self.params.tau) {
            self.step = 0;
            self.start = s;
            self.reward = 0.0;
            self.deviation = 0.0;
            self.slow_action = self.pick(Layer::Slow, s);
            let key = self.gate_key(s, self.slow_action);
            self.g = self.pick(Layer::Gate, key);
        }
        self.step += 1;
        let a = if self.g == 1 {
            self.pick(Layer::Fast, s)
        } else {
            self.slow_action
        };
        Ok(Decision::new(Action::Discrete(a)))
    }

    fn observe(&mut self, t: &Transition) -> Result<()> {
        if self.mode == Mode::Eval {
            return Ok(());
        }
        let s = cell_of(&t.state);
        let a = discrete(&t.action)?;
        let s_next = cell_of(&t.next_state);
        let disagree = a != self.slow_action;
        let rf = tabular_fast_reward(t.reward, self.g, disagree, self.params.j);
        self.fast.q_update(s, a, rf, s_next, t.done);

        self.reward += t.reward;
        if self.g == 1 && disagree {
            self.deviation += 1.0;
        }
        let elapsed = self.step;
        if elapsed == self.params.tau || t.ends_episode() {
            let p = &self.params;
            let rs = tabular_slow_reward(self.reward, self.g, elapsed, self.deviation, p.p, p.j);
            self.slow.q_update(self.start, self.slow_action, rs, s_next, t.done);

            let rg = tabular_gate_reward(self.reward, self.g, elapsed, p);
            let bootstrap = if t.done {
                0.0
            } else {
                let next_key = self.gate_key(s_next, self.slow.argmax(s_next));
                self.gate.max(next_key)
            };
            let key = self.gate_key(self.start, self.slow_action);
            let target = rg + self.gate.gamma * bootstrap;
            self.gate.update_toward(key, self.g, target);
            self.step = self.params.tau;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TabularAlgo {
    QLearning,
    ExtendedQ { repeat: usize },
    Tla { tau: usize, p: f64, j: f64, gate_penalty: GatePenalty },
}

impl TabularAlgo {
    pub fn name(&self) -> &'static str {
        match self {
            TabularAlgo::QLearning => "q",
            TabularAlgo::ExtendedQ { .. } => "ea",
            TabularAlgo::Tla { .. } => "tla",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TabularConfig {
    pub alpha: f64,
    pub gamma: f64,
    pub episodes: usize,
    pub epsilon: EpsilonSchedule,
}

impl TabularConfig {
    /// α = 0.1, γ = 1, ε from 1.0 to 0.05 over the first half of training.
    pub fn with_episodes(episodes: usize) -> Self {
        TabularConfig {
            alpha: 0.1,
            gamma: 1.0,
            episodes,
            epsilon: EpsilonSchedule {
                start: 1.0,
                end: 0.05,
                decay_episodes: episodes / 2,
            },
        }
    }
}

/// One training episode plus the greedy evaluation run right after it.
#[derive(Debug, Clone, PartialEq)]
pub struct TabularEpisode {
    pub episode: usize,
    pub train_return: f64,
    pub train_decisions: usize,
    pub eval_return: f64,
    pub eval_decisions: usize,
    pub eval_reached_goal: bool,
    pub eval_repetition_pct: f64,
    pub eval_jerk: f64,
}

#[derive(Debug, Clone)]
pub struct TabularRun {
    pub curve: Vec<TabularEpisode>,
    pub final_eval: EpisodeTrace,
}

impl TabularRun {
    pub fn best_eval_return(&self) -> f64 {
        self.curve.iter().map(|e| e.eval_return).fold(f64::NEG_INFINITY, f64::max)
    }
}

enum AnyTabular {
    Q(QLearning),
    Tla(TabularTla),
}

impl AnyTabular {
    fn agent(&mut self) -> &mut dyn Agent {
        match self {
            AnyTabular::Q(a) => a,
            AnyTabular::Tla(a) => a,
        }
    }

    fn set_epsilon(&mut self, e: f64) {
        match self {
            AnyTabular::Q(a) => a.set_epsilon(e),
            AnyTabular::Tla(a) => a.set_epsilon(e),
        }
    }
}

/// Trains one tabular agent on a gridworld, evaluating greedily after every
/// training episode.
pub fn train_tabular(world: &GridWorld, algo: TabularAlgo, cfg: &TabularConfig, seed: u64) -> Result<TabularRun> {
    let streams = RngStream::new(seed);
    let n_states = world.n_cells();
    let rng = streams.exploration("tabular");
    let mut agent = match algo {
        TabularAlgo::QLearning => AnyTabular::Q(QLearning::new(n_states, 4, cfg.alpha, cfg.gamma, 1, rng)?),
        TabularAlgo::ExtendedQ { repeat } => {
            AnyTabular::Q(QLearning::new(n_states, 4, cfg.alpha, cfg.gamma, repeat, rng)?)
        }
        TabularAlgo::Tla { tau, p, j, gate_penalty } => AnyTabular::Tla(TabularTla::new(
            n_states,
            4,
            cfg.alpha,
            cfg.gamma,
            TlaParams { tau, p, j, gate_penalty },
            rng,
        )?),
    };
    let mut env = GridEnv::new(Arc::new(world.clone()));
    let mut env_rng = streams.env();
    let limit = env.decision_limit().map(DecisionBudget::new);
    let mut curve = Vec::with_capacity(cfg.episodes);
    let mut final_eval = EpisodeTrace::default();
    for episode in 0..cfg.episodes {
        agent.set_epsilon(cfg.epsilon.value(episode));
        let train = run_episode(&mut env, agent.agent(), limit, usize::MAX, &mut env_rng, Mode::Train)?;
        let eval = run_episode(&mut env, agent.agent(), limit, usize::MAX, &mut env_rng, Mode::Eval)?;
        curve.push(TabularEpisode {
            episode,
            train_return: train.total_return(),
            train_decisions: train.decisions(),
            eval_return: eval.total_return(),
            eval_decisions: eval.decisions(),
            eval_reached_goal: eval.terminated,
            eval_repetition_pct: action_repetition(&eval).value,
            eval_jerk: jerk(&eval).value,
        });
        final_eval = eval;
    }
    Ok(TabularRun { curve, final_eval })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::envs::grid::{oracle_solve, Direction, MacroSet};
    use proptest::prelude::*;

    #[test]
    fn q_update_examples() {
        let mut q = QTable::new(2, 2, 0.1, 1.0);
        q.q_update(0, 0, -1.0, 1, false);
        assert!((q.get(0, 0) + 0.1).abs() < 1e-15);
        let mut q = QTable::new(2, 2, 0.1, 1.0);
        q.q_update(0, 1, -50.0, 1, true);
        assert!((q.get(0, 1) + 5.0).abs() < 1e-15);
    }

    // Value iteration on the unbounded straight corridor, then synchronous
    // sweeps of q_update until the table settles.
    #[test]
    fn q_update_converges_to_value_iteration() {
        let w = GridWorld::straight();
        let n = w.n_cells();
        let mut v = vec![0.0; n];
        for _ in 0..200 {
            let mut next = v.clone();
            for id in 0..n {
                let c = w.cell_from_id(id);
                if w.is_wall(c) || c == w.goal() {
                    continue;
                }
                next[id] = Direction::ALL
                    .iter()
                    .map(|&d| {
                        let (c2, r, done) = w.step(c, d).unwrap();
                        r + if done { 0.0 } else { v[w.cell_id(c2)] }
                    })
                    .fold(f64::NEG_INFINITY, f64::max);
            }
            v = next;
        }
        let mut q = QTable::new(n, 4, 0.1, 1.0);
        for _ in 0..3000 {
            for id in 0..n {
                let c = w.cell_from_id(id);
                if w.is_wall(c) || c == w.goal() {
                    continue;
                }
                for d in Direction::ALL {
                    let (c2, r, done) = w.step(c, d).unwrap();
                    q.q_update(id, d.index(), r, w.cell_id(c2), done);
                }
            }
        }
        let start = w.cell_id(w.start());
        assert!((q.get(start, Direction::Right.index()) + 30.0).abs() < 1e-6);
        assert!((v[start] + 30.0).abs() < 1e-12);
    }

    #[test]
    fn epsilon_schedule() {
        let e = TabularConfig::with_episodes(2000).epsilon;
        assert_eq!(e.value(0), 1.0);
        assert!((e.value(500) - 0.525).abs() < 1e-12);
        assert_eq!(e.value(1000), 0.05);
        assert_eq!(e.value(1999), 0.05);
    }

    #[test]
    fn shaping_examples() {
        let p = TlaParams::default();
        assert_eq!(tabular_slow_reward(-4.0, 0, 4, 0.0, p.p, p.j), -4.0);
        assert_eq!(tabular_gate_reward(-4.0, 0, 4, &p), -4.0);
        assert_eq!(tabular_slow_reward(-4.0, 1, 4, 2.0, p.p, p.j), -8.0);
        assert_eq!(tabular_gate_reward(-4.0, 1, 4, &p), -8.0);
        assert_eq!(tabular_fast_reward(-1.0, 1, true, p.j), -1.0);
        let jp = TlaParams { gate_penalty: GatePenalty::Consistency, j: 0.5, ..p };
        assert_eq!(tabular_gate_reward(-4.0, 1, 4, &jp), -6.0);
    }

    proptest! {
        #[test]
        fn shaped_rewards_never_exceed_raw(
            r in -100.0f64..0.0, g in 0usize..2, elapsed in 1usize..5, dev in 0usize..5,
            p in 0.0f64..3.0, j in 0.0f64..3.0, disagree in any::<bool>(),
        ) {
            let params = TlaParams { tau: 4, p, j, gate_penalty: GatePenalty::Energy };
            prop_assert!(tabular_slow_reward(r, g, elapsed, dev.min(elapsed) as f64, p, j) <= r);
            prop_assert!(tabular_gate_reward(r, g, elapsed, &params) <= r);
            prop_assert!(tabular_fast_reward(r, g, disagree, j) <= r);
        }
    }

    struct Forced {
        g: usize,
        step: usize,
    }

    fn run_forced(gates: &[usize], steps: usize) -> usize {
        // Decisions charged by a TLA agent whose gate table forces the given
        // per-window choice, on an unbounded corridor.
        let w = GridWorld::straight();
        let mut env = GridEnv::unbounded(Arc::new(w.clone()), steps);
        let mut agent = TabularTla::new(w.n_cells(), 4, 0.1, 1.0, TlaParams::default(), RngStream::new(0).exploration("t")).unwrap();
        // Make "left" greedy for slow and fast so the agent never reaches the goal.
        for s in 0..w.n_cells() {
            agent.slow.set(s, Direction::Left.index(), 1.0);
            agent.fast.set(s, Direction::Left.index(), 1.0);
        }
        let mut forced = Forced { g: 0, step: 0 };
        let mut decisions = 0;
        let mut rng = RngStream::new(0).env();
        let mut obs = env.reset(&mut rng);
        agent.begin_episode(&obs, Mode::Eval);
        for _ in 0..steps {
            if forced.step.is_multiple_of(4) {
                forced.g = gates[(forced.step / 4) % gates.len()];
                let s = cell_of(&obs);
                let key = agent.gate_key(s, Direction::Left.index());
                agent.gate.set(key, forced.g, 1.0);
                agent.gate.set(key, 1 - forced.g, 0.0);
            }
            if agent.needs_decision() {
                decisions += 1;
            }
            let d = agent.act(&obs).unwrap();
            assert_eq!(agent.gate_open(), forced.g == 1);
            obs = env.step(&d.action).unwrap().observation;
            forced.step += 1;
        }
        decisions
    }

    #[test]
    fn decision_accounting_examples() {
        assert_eq!(run_forced(&[0], 4), 1);
        assert_eq!(run_forced(&[1], 4), 4);
        assert_eq!(run_forced(&[0], 8), 2);
    }

    proptest! {
        #[test]
        fn tla_decisions_between_bounds(gates in prop::collection::vec(0usize..2, 1..10), steps in 1usize..40) {
            let d = run_forced(&gates, steps);
            prop_assert!(d >= steps.div_ceil(4));
            prop_assert!(d <= steps);
            let expected: usize = (0..steps.div_ceil(4))
                .map(|w| if gates[w % gates.len()] == 1 { (steps - 4 * w).min(4) } else { 1 })
                .sum();
            prop_assert_eq!(d, expected);
        }
    }

    #[test]
    fn extended_q_charges_one_decision_per_repeat() {
        let w = GridWorld::straight();
        for steps in [1usize, 3, 4, 9, 17] {
            let mut env = GridEnv::unbounded(Arc::new(w.clone()), steps);
            let mut agent = QLearning::new(w.n_cells(), 4, 0.1, 1.0, 4, RngStream::new(1).exploration("q")).unwrap();
            agent.table.set(0, Direction::Left.index(), 1.0);
            let t = run_episode(&mut env, &mut agent, None, steps, &mut RngStream::new(0).env(), Mode::Eval).unwrap();
            assert_eq!(t.len(), steps);
            assert_eq!(t.decisions(), steps.div_ceil(4));
        }
    }

    #[test]
    fn trained_policies_never_beat_the_oracle() {
        let w = GridWorld::straight();
        let cfg = TabularConfig::with_episodes(300);
        for (algo, set) in [
            (TabularAlgo::QLearning, MacroSet::OneStep),
            (TabularAlgo::ExtendedQ { repeat: 4 }, MacroSet::Repeat(4)),
            (
                TabularAlgo::Tla { tau: 4, p: 1.0, j: 0.0, gate_penalty: GatePenalty::Energy },
                MacroSet::LayeredWindows(4),
            ),
        ] {
            let run = train_tabular(&w, algo, &cfg, 3).unwrap();
            let best = oracle_solve(&w, set).optimal_return;
            assert!(run.best_eval_return() <= best + 1e-9, "{algo:?}");
        }
    }
}
