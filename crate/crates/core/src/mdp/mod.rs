//! Environment and agent contracts for decision-bounded MDPs.
//!
//! A *decision* is one read of a state that yields one or more committed
//! actions. Environments optionally carry a decision limit; the episode loop
//! in [`episode`] charges at most one decision per environment step and ends
//! the episode when an agent needs a new decision but none remain.

mod budget;
mod episode;
mod rng;
mod trace;

pub use budget::{ChargeOutcome, DecisionBudget};
pub use episode::{run_episode, Episode};
pub use rng::{RngStream, StreamRng};
pub use trace::{EpisodeTrace, StepRecord};

use crate::error::{Error, Result};

/// Shape of an environment's action space.
#[derive(Debug, Clone, PartialEq)]
pub enum ActionSpec {
    Discrete { n: usize },
    /// Box `[-a_max[i], a_max[i]]` per dimension.
    Continuous { a_max: Vec<f64> },
}

impl ActionSpec {
    pub fn discrete(n: usize) -> Result<Self> {
        if n < 2 {
            return Err(Error::config(format!("discrete action space needs n >= 2, got {n}")));
        }
        Ok(ActionSpec::Discrete { n })
    }

    pub fn continuous(a_max: Vec<f64>) -> Result<Self> {
        if a_max.is_empty() {
            return Err(Error::config("continuous action space needs dim >= 1"));
        }
        if a_max.iter().any(|&m| !(m > 0.0) || !m.is_finite()) {
            return Err(Error::config("continuous action bounds must be finite and > 0"));
        }
        Ok(ActionSpec::Continuous { a_max })
    }

    /// Number of scalar columns an action occupies in a trace.
    pub fn width(&self) -> usize {
        match self {
            ActionSpec::Discrete { .. } => 1,
            ActionSpec::Continuous { a_max } => a_max.len(),
        }
    }

    pub fn a_max(&self) -> Option<&[f64]> {
        match self {
            ActionSpec::Continuous { a_max } => Some(a_max),
            ActionSpec::Discrete { .. } => None,
        }
    }

    /// Rejects actions that fall outside the space.
    pub fn validate(&self, action: &Action) -> Result<()> {
        match (self, action) {
            (ActionSpec::Discrete { n }, Action::Discrete(a)) => {
                if a < n {
                    Ok(())
                } else {
                    Err(Error::contract(format!("discrete action {a} outside 0..{n}")))
                }
            }
            (ActionSpec::Continuous { a_max }, Action::Continuous(a)) => {
                if a.len() != a_max.len() {
                    return Err(Error::Dimension {
                        expected: a_max.len(),
                        actual: a.len(),
                    });
                }
                for (i, (&v, &m)) in a.iter().zip(a_max).enumerate() {
                    if !v.is_finite() || v.abs() > m {
                        return Err(Error::contract(format!(
                            "action[{i}] = {v} outside [-{m}, {m}]"
                        )));
                    }
                }
                Ok(())
            }
            _ => Err(Error::contract("action kind does not match the action space")),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Action {
    Discrete(usize),
    Continuous(Vec<f64>),
}

impl Action {
    pub fn values(&self) -> Vec<f64> {
        match self {
            Action::Discrete(a) => vec![*a as f64],
            Action::Continuous(v) => v.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Observation(pub Vec<f64>);

impl Observation {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::contract("observation contains non-finite values"));
        }
        Ok(Observation(values))
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }
}

/// One environment transition as delivered to a learning agent.
///
/// `done` marks a true terminal state and is the only flag that stops
/// bootstrapping; `truncated` marks time-limit or budget cut-offs.
#[derive(Debug, Clone, PartialEq)]
pub struct Transition {
    pub state: Observation,
    pub action: Action,
    pub reward: f64,
    pub next_state: Observation,
    pub done: bool,
    pub truncated: bool,
}

impl Transition {
    pub fn ends_episode(&self) -> bool {
        self.done || self.truncated
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepOutcome {
    pub observation: Observation,
    pub reward: f64,
    pub terminated: bool,
    pub truncated: bool,
}

/// What happens when an agent needs a decision and the budget is empty.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExhaustionRule {
    /// Added to the reward of the last executed step.
    pub penalty: f64,
    /// Whether the cut-off is a terminal outcome (no bootstrapping).
    pub terminal: bool,
}

impl Default for ExhaustionRule {
    fn default() -> Self {
        ExhaustionRule {
            penalty: 0.0,
            terminal: false,
        }
    }
}

pub trait Environment {
    fn observation_dim(&self) -> usize;
    fn action_spec(&self) -> &ActionSpec;
    /// Built-in episode length; the episode is truncated after this many steps.
    fn max_steps(&self) -> usize;
    fn decision_limit(&self) -> Option<usize> {
        None
    }
    fn exhaustion_rule(&self) -> ExhaustionRule {
        ExhaustionRule::default()
    }
    fn reset(&mut self, rng: &mut StreamRng) -> Observation;
    fn step(&mut self, action: &Action) -> Result<StepOutcome>;
}

impl<E: Environment + ?Sized> Environment for Box<E> {
    fn observation_dim(&self) -> usize {
        (**self).observation_dim()
    }
    fn action_spec(&self) -> &ActionSpec {
        (**self).action_spec()
    }
    fn max_steps(&self) -> usize {
        (**self).max_steps()
    }
    fn decision_limit(&self) -> Option<usize> {
        (**self).decision_limit()
    }
    fn exhaustion_rule(&self) -> ExhaustionRule {
        (**self).exhaustion_rule()
    }
    fn reset(&mut self, rng: &mut StreamRng) -> Observation {
        (**self).reset(rng)
    }
    fn step(&mut self, action: &Action) -> Result<StepOutcome> {
        (**self).step(action)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    /// Exploration on, learning on.
    Train,
    /// Deterministic action selection, no learning.
    Eval,
}

/// Output of one call to [`Agent::act`].
#[derive(Debug, Clone, PartialEq)]
pub struct Decision {
    pub action: Action,
    /// Multiply-accumulates spent by network forwards for this step.
    pub macs: u64,
}

impl Decision {
    pub fn new(action: Action) -> Self {
        Decision { action, macs: 0 }
    }
}

/// Agent side of the episode loop.
///
/// `needs_decision` must answer for the *next* call to `act`; it is queried
/// before each step and again right after `act` so the loop can detect budget
/// exhaustion before the transition is handed to `observe`.
pub trait Agent {
    fn begin_episode(&mut self, observation: &Observation, mode: Mode);
    fn needs_decision(&self) -> bool;
    fn act(&mut self, observation: &Observation) -> Result<Decision>;
    fn observe(&mut self, transition: &Transition) -> Result<()>;
}

impl<A: Agent + ?Sized> Agent for Box<A> {
    fn begin_episode(&mut self, observation: &Observation, mode: Mode) {
        (**self).begin_episode(observation, mode)
    }
    fn needs_decision(&self) -> bool {
        (**self).needs_decision()
    }
    fn act(&mut self, observation: &Observation) -> Result<Decision> {
        (**self).act(observation)
    }
    fn observe(&mut self, transition: &Transition) -> Result<()> {
        (**self).observe(transition)
    }
}

/// `sum_t gamma^t * r_t`; an empty sequence returns 0.
pub fn discounted_return(rewards: &[f64], gamma: f64) -> f64 {
    debug_assert!((0.0..=1.0).contains(&gamma));
    rewards
        .iter()
        .rev()
        .fold(0.0, |acc, &r| r + gamma * acc)
}
