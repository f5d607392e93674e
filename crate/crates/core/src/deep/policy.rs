//! Frozen deterministic policies, used to evaluate a training run without
//! disturbing the learner's episode in progress.

use super::gate::argmax;
use crate::error::Result;
use crate::mdp::{Action, Agent, Decision, Mode, Observation, Transition};
use crate::neural::Mlp;

/// Deterministic actor holding each action for `repeat` steps.
#[derive(Debug, Clone)]
pub struct ActorPolicy {
    actor: Mlp<f32>,
    repeat: usize,
    held: Vec<f64>,
    elapsed: usize,
}

impl ActorPolicy {
    pub fn new(actor: Mlp<f32>, repeat: usize) -> Self {
        let width = actor.output_dim();
        ActorPolicy {
            actor,
            repeat: repeat.max(1),
            held: vec![0.0; width],
            elapsed: 0,
        }
    }

    pub fn actor(&self) -> &Mlp<f32> {
        &self.actor
    }
}

impl Agent for ActorPolicy {
    fn begin_episode(&mut self, _: &Observation, _: Mode) {
        self.elapsed = 0;
    }

    fn needs_decision(&self) -> bool {
        self.elapsed.is_multiple_of(self.repeat)
    }

    fn act(&mut self, obs: &Observation) -> Result<Decision> {
        let mut macs = 0;
        if self.elapsed.is_multiple_of(self.repeat) {
            self.held = self.actor.forward_one(obs.values())?;
            macs = self.actor.macs();
            self.elapsed = 0;
        }
        self.elapsed += 1;
        Ok(Decision {
            action: Action::Continuous(self.held.clone()),
            macs,
        })
    }

    fn observe(&mut self, _: &Transition) -> Result<()> {
        Ok(())
    }
}

/// Gate behaviour of a layered policy.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GateMode {
    #[default]
    Learned,
    ForceSlow,
    ForceFast,
}

/// Frozen layered policy: slow actor and gate read the state every `tau`
/// steps; the fast actor runs every step of windows the gate opens.
#[derive(Debug, Clone)]
pub struct TlaPolicy {
    slow: Mlp<f32>,
    fast: Mlp<f32>,
    gate: Mlp<f32>,
    tau: usize,
    gate_mode: GateMode,
    step: usize,
    g: usize,
    slow_action: Vec<f64>,
}

impl TlaPolicy {
    pub fn new(slow: Mlp<f32>, fast: Mlp<f32>, gate: Mlp<f32>, tau: usize, gate_mode: GateMode) -> Self {
        let width = slow.output_dim();
        TlaPolicy {
            slow,
            fast,
            gate,
            tau: tau.max(1),
            gate_mode,
            step: 0,
            g: 0,
            slow_action: vec![0.0; width],
        }
    }
}

impl Agent for TlaPolicy {
    fn begin_episode(&mut self, _: &Observation, _: Mode) {
        self.step = 0;
        self.g = 0;
    }

    fn needs_decision(&self) -> bool {
        self.step.is_multiple_of(self.tau) || self.g == 1
    }

    fn act(&mut self, obs: &Observation) -> Result<Decision> {
        let s = obs.values();
        let mut macs = 0;
        if self.step.is_multiple_of(self.tau) {
            self.step = 0;
            self.slow_action = self.slow.forward_one(s)?;
            macs += self.slow.macs();
            self.g = match self.gate_mode {
                GateMode::ForceSlow => 0,
                GateMode::ForceFast => 1,
                GateMode::Learned => {
                    let mut x = s.to_vec();
                    x.extend_from_slice(&self.slow_action);
                    macs += self.gate.macs();
                    argmax(&self.gate.forward_one(&x)?)
                }
            };
        }
        self.step += 1;
        let action = if self.g == 1 {
            macs += self.fast.macs();
            self.fast.forward_one(s)?
        } else {
            self.slow_action.clone()
        };
        Ok(Decision {
            action: Action::Continuous(action),
            macs,
        })
    }

    fn observe(&mut self, _: &Transition) -> Result<()> {
        Ok(())
    }
}

/// Frozen actor plus skip-length network: each decision picks an action and
/// holds it for the greedy skip length.
#[derive(Debug, Clone)]
pub struct TempoRlPolicy {
    actor: Mlp<f32>,
    skip: Mlp<f32>,
    held: Vec<f64>,
    remaining: usize,
}

impl TempoRlPolicy {
    pub fn new(actor: Mlp<f32>, skip: Mlp<f32>) -> Self {
        let width = actor.output_dim();
        TempoRlPolicy {
            actor,
            skip,
            held: vec![0.0; width],
            remaining: 0,
        }
    }
}

impl Agent for TempoRlPolicy {
    fn begin_episode(&mut self, _: &Observation, _: Mode) {
        self.remaining = 0;
    }

    fn needs_decision(&self) -> bool {
        self.remaining == 0
    }

    fn act(&mut self, obs: &Observation) -> Result<Decision> {
        let mut macs = 0;
        if self.remaining == 0 {
            let s = obs.values();
            self.held = self.actor.forward_one(s)?;
            let mut x = s.to_vec();
            x.extend_from_slice(&self.held);
            self.remaining = argmax(&self.skip.forward_one(&x)?) + 1;
            macs = self.actor.macs() + self.skip.macs();
        }
        self.remaining -= 1;
        Ok(Decision {
            action: Action::Continuous(self.held.clone()),
            macs,
        })
    }

    fn observe(&mut self, _: &Transition) -> Result<()> {
        Ok(())
    }
}
