use ndarray::{Array1, Array2};
use rand::Rng;

use crate::error::{Error, Result};
use crate::mdp::StreamRng;

/// Minibatch drawn from a [`ReplayBuffer`], one row per sample.
#[derive(Debug, Clone)]
pub struct Batch {
    pub state: Array2<f32>,
    pub action: Array2<f32>,
    pub reward: Array1<f32>,
    pub next_state: Array2<f32>,
    /// 0 for terminal transitions, 1 otherwise.
    pub not_done: Array1<f32>,
    /// Number of environment steps the transition spans.
    pub steps: Array1<f32>,
}

/// Fixed-capacity ring buffer with FIFO eviction and uniform sampling (with
/// replacement). State and next-state widths may differ.
#[derive(Debug, Clone)]
pub struct ReplayBuffer {
    capacity: usize,
    state_dim: usize,
    action_dim: usize,
    next_dim: usize,
    state: Vec<f32>,
    action: Vec<f32>,
    reward: Vec<f32>,
    next_state: Vec<f32>,
    not_done: Vec<f32>,
    steps: Vec<f32>,
    len: usize,
    head: usize,
    pushed: u64,
}

pub const DEFAULT_CAPACITY: usize = 1_000_000;

impl ReplayBuffer {
    pub fn new(capacity: usize, state_dim: usize, action_dim: usize, next_dim: usize) -> Result<Self> {
        if capacity == 0 {
            return Err(Error::config("replay capacity must be >= 1"));
        }
        Ok(ReplayBuffer {
            capacity,
            state_dim,
            action_dim,
            next_dim,
            state: Vec::new(),
            action: Vec::new(),
            reward: Vec::new(),
            next_state: Vec::new(),
            not_done: Vec::new(),
            steps: Vec::new(),
            len: 0,
            head: 0,
            pushed: 0,
        })
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    /// Transitions ever pushed, including evicted ones.
    pub fn pushed(&self) -> u64 {
        self.pushed
    }

    pub fn push(&mut self, state: &[f64], action: &[f64], reward: f64, next_state: &[f64], done: bool, steps: usize) -> Result<()> {
        for (got, want) in [
            (state.len(), self.state_dim),
            (action.len(), self.action_dim),
            (next_state.len(), self.next_dim),
        ] {
            if got != want {
                return Err(Error::Dimension {
                    expected: want,
                    actual: got,
                });
            }
        }
        if self.len < self.capacity {
            self.state.extend(state.iter().map(|&v| v as f32));
            self.action.extend(action.iter().map(|&v| v as f32));
            self.next_state.extend(next_state.iter().map(|&v| v as f32));
            self.reward.push(reward as f32);
            self.not_done.push(if done { 0.0 } else { 1.0 });
            self.steps.push(steps as f32);
            self.len += 1;
        } else {
            let i = self.head;
            let put = |dst: &mut [f32], src: &[f64], w: usize| {
                for (d, &s) in dst[i * w..(i + 1) * w].iter_mut().zip(src) {
                    *d = s as f32;
                }
            };
            put(&mut self.state, state, self.state_dim);
            put(&mut self.action, action, self.action_dim);
            put(&mut self.next_state, next_state, self.next_dim);
            self.reward[i] = reward as f32;
            self.not_done[i] = if done { 0.0 } else { 1.0 };
            self.steps[i] = steps as f32;
        }
        self.head = (self.head + 1) % self.capacity;
        self.pushed += 1;
        Ok(())
    }

    /// Storage slot of the `k`-th oldest transition still held.
    fn slot(&self, k: usize) -> usize {
        if self.len < self.capacity {
            k
        } else {
            (self.head + k) % self.capacity
        }
    }

    /// Reward of the `k`-th oldest transition still held.
    pub fn reward_at(&self, k: usize) -> Option<f32> {
        (k < self.len).then(|| self.reward[self.slot(k)])
    }

    pub fn sample_indices(&self, n: usize, rng: &mut StreamRng) -> Vec<usize> {
        (0..n).map(|_| rng.random_range(0..self.len)).collect()
    }

    pub fn sample(&self, n: usize, rng: &mut StreamRng) -> Result<Batch> {
        if self.len == 0 {
            return Err(Error::contract("sampling from an empty replay buffer"));
        }
        let idx = self.sample_indices(n, rng);
        let gather = |src: &[f32], w: usize| {
            Array2::from_shape_fn((n, w), |(r, c)| src[idx[r] * w + c])
        };
        let gather1 = |src: &[f32]| Array1::from_shape_fn(n, |r| src[idx[r]]);
        Ok(Batch {
            state: gather(&self.state, self.state_dim),
            action: gather(&self.action, self.action_dim),
            reward: gather1(&self.reward),
            next_state: gather(&self.next_state, self.next_dim),
            not_done: gather1(&self.not_done),
            steps: gather1(&self.steps),
        })
    }
}
