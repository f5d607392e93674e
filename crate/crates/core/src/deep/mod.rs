//! Replay-based deep agents: TD3 and its extended-action variant, the
//! layered slow/fast/gate agent, and a skip-length baseline.

pub mod buffer;
pub mod gate;
pub mod policy;
pub mod td3;
pub mod temporl;
pub mod tla;

#[cfg(test)]
use ndarray::Array2;

pub use buffer::{Batch, ReplayBuffer};
pub use gate::DiscreteQ;
pub use policy::{ActorPolicy, GateMode, TempoRlPolicy, TlaPolicy};
pub use td3::{Td3, Td3Agent, Td3Config};
pub use temporl::TempoRlAgent;
pub use tla::{TlaAgent, TlaConfig};

use crate::mdp::Agent;
use crate::neural::Mlp;

#[cfg(test)]
pub(crate) fn row(values: &[f64]) -> Array2<f32> {
    Array2::from_shape_fn((1, values.len()), |(_, j)| values[j] as f32)
}

/// A training agent that can hand out a frozen copy of its current greedy
/// policy for evaluation.
pub trait Learner: Agent + Send {
    fn snapshot(&self) -> Box<dyn Agent + Send>;
    fn total_steps(&self) -> u64;
    /// Named copies of the networks the frozen policy is built from.
    fn networks(&self) -> Vec<(&'static str, Mlp<f32>)>;
}

impl Learner for Td3Agent {
    fn snapshot(&self) -> Box<dyn Agent + Send> {
        Box::new(Td3Agent::snapshot(self))
    }
    fn total_steps(&self) -> u64 {
        Td3Agent::total_steps(self)
    }
    fn networks(&self) -> Vec<(&'static str, Mlp<f32>)> {
        vec![("actor", self.td3().actor().clone())]
    }
}

impl Learner for TlaAgent {
    fn snapshot(&self) -> Box<dyn Agent + Send> {
        Box::new(TlaAgent::snapshot(self))
    }
    fn total_steps(&self) -> u64 {
        TlaAgent::total_steps(self)
    }
    fn networks(&self) -> Vec<(&'static str, Mlp<f32>)> {
        vec![
            ("slow", self.slow().actor().clone()),
            ("fast", self.fast().actor().clone()),
            ("gate", self.gate().net().clone()),
        ]
    }
}

impl Learner for TempoRlAgent {
    fn snapshot(&self) -> Box<dyn Agent + Send> {
        Box::new(TempoRlAgent::snapshot(self))
    }
    fn total_steps(&self) -> u64 {
        TempoRlAgent::total_steps(self)
    }
    fn networks(&self) -> Vec<(&'static str, Mlp<f32>)> {
        vec![("actor", self.td3().actor().clone()), ("skip", self.skip_net().net().clone())]
    }
}
