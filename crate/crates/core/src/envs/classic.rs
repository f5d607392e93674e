//! Pendulum swing-up and continuous Mountain Car.
//!
//! Constants follow the Pendulum-v1 and MountainCarContinuous-v0 reference
//! definitions:
//!
//! | Pendulum        |        | Mountain Car    |          |
//! |-----------------|--------|-----------------|----------|
//! | g               | 10     | power           | 0.0015   |
//! | m, l            | 1, 1   | gravity term    | 0.0025   |
//! | dt              | 0.05   | position        | [-1.2, 0.6] |
//! | max speed       | 8      | max speed       | 0.07     |
//! | max torque      | 2      | max force       | 1        |
//! | episode length  | 200    | episode length  | 999      |
//!
//! Initial states: pendulum θ ~ U[-π, π], θ̇ ~ U[-1, 1]; car position
//! ~ U[-0.6, -0.4] at rest.

use std::f64::consts::PI;

use rand::Rng;

use crate::error::{Error, Result};
use crate::mdp::{Action, ActionSpec, Environment, Observation, StepOutcome, StreamRng};

pub const PENDULUM_G: f64 = 10.0;
pub const PENDULUM_M: f64 = 1.0;
pub const PENDULUM_L: f64 = 1.0;
pub const PENDULUM_DT: f64 = 0.05;
pub const PENDULUM_MAX_SPEED: f64 = 8.0;
pub const PENDULUM_MAX_TORQUE: f64 = 2.0;
pub const PENDULUM_STEPS: usize = 200;

pub const CAR_MIN_POSITION: f64 = -1.2;
pub const CAR_MAX_POSITION: f64 = 0.6;
pub const CAR_MAX_SPEED: f64 = 0.07;
pub const CAR_GOAL_POSITION: f64 = 0.45;
pub const CAR_POWER: f64 = 0.0015;
pub const CAR_MAX_FORCE: f64 = 1.0;
pub const CAR_STEPS: usize = 999;

/// Maps an angle to `[-π, π)`.
pub fn angle_norm(x: f64) -> f64 {
    (x + PI).rem_euclid(2.0 * PI) - PI
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PendulumState {
    /// Unwrapped angle, 0 is upright.
    pub theta: f64,
    pub theta_dot: f64,
}

impl PendulumState {
    pub fn observation(&self) -> Observation {
        Observation(vec![self.theta.cos(), self.theta.sin(), self.theta_dot])
    }
}

/// One pendulum step; the torque is clipped to the action bound. Returns the
/// next state and the reward, which is computed on the pre-step state.
pub fn pendulum_step(state: PendulumState, torque: f64) -> Result<(PendulumState, f64)> {
    if !state.theta.is_finite() || !state.theta_dot.is_finite() || !torque.is_finite() {
        return Err(Error::contract("pendulum step on non-finite input"));
    }
    let u = torque.clamp(-PENDULUM_MAX_TORQUE, PENDULUM_MAX_TORQUE);
    let th = state.theta;
    let cost = angle_norm(th).powi(2) + 0.1 * state.theta_dot.powi(2) + 0.001 * u * u;
    let accel = 3.0 * PENDULUM_G / (2.0 * PENDULUM_L) * th.sin()
        + 3.0 / (PENDULUM_M * PENDULUM_L * PENDULUM_L) * u;
    let theta_dot =
        (state.theta_dot + accel * PENDULUM_DT).clamp(-PENDULUM_MAX_SPEED, PENDULUM_MAX_SPEED);
    let theta = th + theta_dot * PENDULUM_DT;
    Ok((PendulumState { theta, theta_dot }, -cost))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MountainCarState {
    pub position: f64,
    pub velocity: f64,
}

impl MountainCarState {
    pub fn observation(&self) -> Observation {
        Observation(vec![self.position, self.velocity])
    }
}

/// One Mountain Car step; the force is clipped to the action bound. Returns
/// the next state, the reward and whether the goal was reached.
pub fn mountain_car_step(state: MountainCarState, force: f64) -> Result<(MountainCarState, f64, bool)> {
    if !state.position.is_finite() || !state.velocity.is_finite() || !force.is_finite() {
        return Err(Error::contract("mountain car step on non-finite input"));
    }
    let f = force.clamp(-CAR_MAX_FORCE, CAR_MAX_FORCE);
    let mut velocity = state.velocity + f * CAR_POWER - 0.0025 * (3.0 * state.position).cos();
    velocity = velocity.clamp(-CAR_MAX_SPEED, CAR_MAX_SPEED);
    let position = (state.position + velocity).clamp(CAR_MIN_POSITION, CAR_MAX_POSITION);
    if position == CAR_MIN_POSITION && velocity < 0.0 {
        velocity = 0.0;
    }
    let done = position >= CAR_GOAL_POSITION && velocity >= 0.0;
    let mut reward = -0.1 * f * f;
    if done {
        reward += 100.0;
    }
    Ok((MountainCarState { position, velocity }, reward, done))
}

fn scalar_action(action: &Action) -> Result<f64> {
    match action {
        Action::Continuous(v) if v.len() == 1 => Ok(v[0]),
        Action::Continuous(v) => Err(Error::Dimension {
            expected: 1,
            actual: v.len(),
        }),
        Action::Discrete(_) => Err(Error::contract("continuous environment takes continuous actions")),
    }
}

#[derive(Debug, Clone)]
pub struct Pendulum {
    state: PendulumState,
    steps: usize,
    spec: ActionSpec,
}

impl Default for Pendulum {
    fn default() -> Self {
        Self::new()
    }
}

impl Pendulum {
    pub fn new() -> Self {
        Pendulum {
            state: PendulumState {
                theta: 0.0,
                theta_dot: 0.0,
            },
            steps: 0,
            spec: ActionSpec::Continuous {
                a_max: vec![PENDULUM_MAX_TORQUE],
            },
        }
    }

    pub fn state(&self) -> PendulumState {
        self.state
    }

    pub fn set_state(&mut self, state: PendulumState) {
        self.state = state;
    }
}

impl Environment for Pendulum {
    fn observation_dim(&self) -> usize {
        3
    }

    fn action_spec(&self) -> &ActionSpec {
        &self.spec
    }

    fn max_steps(&self) -> usize {
        PENDULUM_STEPS
    }

    fn reset(&mut self, rng: &mut StreamRng) -> Observation {
        self.state = PendulumState {
            theta: rng.random_range(-PI..=PI),
            theta_dot: rng.random_range(-1.0..=1.0),
        };
        self.steps = 0;
        self.state.observation()
    }

    fn step(&mut self, action: &Action) -> Result<StepOutcome> {
        let (next, reward) = pendulum_step(self.state, scalar_action(action)?)?;
        self.state = next;
        self.steps += 1;
        Ok(StepOutcome {
            observation: next.observation(),
            reward,
            terminated: false,
            truncated: self.steps >= PENDULUM_STEPS,
        })
    }
}

#[derive(Debug, Clone)]
pub struct MountainCar {
    state: MountainCarState,
    steps: usize,
    spec: ActionSpec,
}

impl Default for MountainCar {
    fn default() -> Self {
        Self::new()
    }
}

impl MountainCar {
    pub fn new() -> Self {
        MountainCar {
            state: MountainCarState {
                position: -0.5,
                velocity: 0.0,
            },
            steps: 0,
            spec: ActionSpec::Continuous {
                a_max: vec![CAR_MAX_FORCE],
            },
        }
    }

    pub fn state(&self) -> MountainCarState {
        self.state
    }

    pub fn set_state(&mut self, state: MountainCarState) {
        self.state = state;
    }
}

impl Environment for MountainCar {
    fn observation_dim(&self) -> usize {
        2
    }

    fn action_spec(&self) -> &ActionSpec {
        &self.spec
    }

    fn max_steps(&self) -> usize {
        CAR_STEPS
    }

    fn reset(&mut self, rng: &mut StreamRng) -> Observation {
        self.state = MountainCarState {
            position: rng.random_range(-0.6..=-0.4),
            velocity: 0.0,
        };
        self.steps = 0;
        self.state.observation()
    }

    fn step(&mut self, action: &Action) -> Result<StepOutcome> {
        let (next, reward, done) = mountain_car_step(self.state, scalar_action(action)?)?;
        self.state = next;
        self.steps += 1;
        Ok(StepOutcome {
            observation: next.observation(),
            reward,
            terminated: done,
            truncated: !done && self.steps >= CAR_STEPS,
        })
    }
}

/// Adds a decision limit to an environment. Exhaustion truncates the episode
/// without a penalty.
#[derive(Debug, Clone)]
pub struct DecisionBound<E> {
    inner: E,
    limit: Option<usize>,
}

impl<E: Environment> DecisionBound<E> {
    pub fn new(inner: E, limit: usize) -> Result<Self> {
        if limit == 0 {
            return Err(Error::config("decision limit must be >= 1"));
        }
        Ok(DecisionBound {
            inner,
            limit: Some(limit),
        })
    }

    pub fn unbounded(inner: E) -> Self {
        DecisionBound { inner, limit: None }
    }

    pub fn inner(&self) -> &E {
        &self.inner
    }
}

impl<E: Environment> Environment for DecisionBound<E> {
    fn observation_dim(&self) -> usize {
        self.inner.observation_dim()
    }

    fn action_spec(&self) -> &ActionSpec {
        self.inner.action_spec()
    }

    fn max_steps(&self) -> usize {
        self.inner.max_steps()
    }

    fn decision_limit(&self) -> Option<usize> {
        self.limit
    }

    fn reset(&mut self, rng: &mut StreamRng) -> Observation {
        self.inner.reset(rng)
    }

    fn step(&mut self, action: &Action) -> Result<StepOutcome> {
        self.inner.step(action)
    }
}
