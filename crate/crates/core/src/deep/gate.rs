use ndarray::{Array1, Array2, ArrayView1};
use rand::Rng;

use super::buffer::Batch;
use super::td3::Td3Config;
use crate::error::{Error, Result};
use crate::mdp::StreamRng;
use crate::neural::{Activation, Adam, Head, Mlp};

/// Q-network over a small discrete action set, trained by one-step
/// regression toward caller-supplied bootstrap values. Used for the
/// slow/fast gate and for the skip-length policy.
#[derive(Debug, Clone)]
pub struct DiscreteQ {
    q: Mlp<f32>,
    target: Mlp<f32>,
    opt: Adam<f32>,
    rho: f64,
    batch_size: usize,
    rng: StreamRng,
}

impl DiscreteQ {
    /// Same hidden sizes, learning rate, batch size and target rate as the
    /// actor-critic configuration.
    pub fn new(input_dim: usize, n_actions: usize, cfg: &Td3Config, mut rng: StreamRng) -> Result<Self> {
        cfg.validate()?;
        if n_actions == 0 {
            return Err(Error::config("discrete Q-network needs at least one action"));
        }
        let q = Mlp::new(&cfg.dims(input_dim, n_actions), Activation::Relu, Head::Identity, &mut rng)?;
        Ok(DiscreteQ {
            opt: Adam::new(&q, cfg.lr),
            target: q.clone(),
            q,
            rho: cfg.rho,
            batch_size: cfg.batch_size,
            rng,
        })
    }

    pub fn net(&self) -> &Mlp<f32> {
        &self.q
    }

    pub fn net_mut(&mut self) -> &mut Mlp<f32> {
        &mut self.q
    }

    pub fn batch_size(&self) -> usize {
        self.batch_size
    }

    pub fn n_actions(&self) -> usize {
        self.q.output_dim()
    }

    pub fn values(&self, input: &[f64]) -> Result<Vec<f64>> {
        self.q.forward_one(input)
    }

    pub fn greedy(&self, input: &[f64]) -> Result<usize> {
        Ok(argmax(&self.values(input)?))
    }

    pub fn epsilon_greedy(&self, input: &[f64], epsilon: f64, rng: &mut StreamRng) -> Result<usize> {
        if rng.random::<f64>() < epsilon {
            Ok(rng.random_range(0..self.n_actions()))
        } else {
            self.greedy(input)
        }
    }

    /// Row-wise `max_a Q_target(x, a)`.
    pub fn target_max(&self, inputs: &Array2<f32>) -> Result<Array1<f32>> {
        let q = self.target.forward(inputs.view())?;
        Ok(q.rows().into_iter().map(|r| r.iter().copied().fold(f32::NEG_INFINITY, f32::max)).collect())
    }

    pub fn sample_rng(&mut self) -> &mut StreamRng {
        &mut self.rng
    }

    /// Regresses `Q(state, action)` toward
    /// `reward + discount * not_done * next_value`, then soft-updates the
    /// target network. Actions are stored as indices in column 0.
    pub fn train_on(&mut self, batch: &Batch, next_value: ArrayView1<f32>, discount: ArrayView1<f32>) -> Result<()> {
        let n = batch.reward.len();
        if next_value.len() != n || discount.len() != n {
            return Err(Error::Dimension {
                expected: n,
                actual: next_value.len().min(discount.len()),
            });
        }
        let cache = self.q.forward_cached(batch.state.view())?;
        let out = cache.output();
        let scale = 2.0 / n as f32;
        let mut grad = Array2::zeros(out.dim());
        for i in 0..n {
            let a = batch.action[[i, 0]] as usize;
            let y = batch.reward[i] + discount[i] * batch.not_done[i] * next_value[i];
            grad[[i, a]] = scale * (out[[i, a]] - y);
        }
        let (g, _) = self.q.backward(&cache, grad.view())?;
        self.opt.step(&mut self.q, &g)?;
        self.target.soft_update(&self.q, self.rho)?;
        Ok(())
    }
}

/// Index of the largest value, lowest index on ties.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate() {
        if v > values[best] {
            best = i;
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mdp::RngStream;

    #[test]
    fn regression_moves_chosen_action_only() {
        let cfg = Td3Config {
            hidden: vec![8],
            batch_size: 2,
            lr: 1e-2,
            ..Td3Config::default()
        };
        let mut q = DiscreteQ::new(2, 2, &cfg, RngStream::new(0).agent("gate")).unwrap();
        let batch = Batch {
            state: Array2::from_shape_vec((2, 2), vec![0.5, -0.5, 0.5, -0.5]).unwrap(),
            action: Array2::from_elem((2, 1), 1.0),
            reward: Array1::from_elem(2, 5.0),
            next_state: Array2::zeros((2, 2)),
            not_done: Array1::zeros(2),
            steps: Array1::ones(2),
        };
        let before = q.values(&[0.5, -0.5]).unwrap();
        for _ in 0..200 {
            q.train_on(&batch, Array1::zeros(2).view(), Array1::ones(2).view()).unwrap();
        }
        let after = q.values(&[0.5, -0.5]).unwrap();
        assert!((after[1] - 5.0).abs() < 0.05, "{after:?}");
        assert!((after[1] - before[1]).abs() > 1.0);
        assert_eq!(q.greedy(&[0.5, -0.5]).unwrap(), usize::from(after[1] > after[0]));
    }

    #[test]
    fn argmax_ties_first() {
        assert_eq!(argmax(&[1.0, 3.0, 3.0]), 1);
        assert_eq!(argmax(&[0.0, 0.0]), 0);
    }
}
