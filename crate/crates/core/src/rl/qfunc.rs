use crate::env::{batch_tensor, Observation};
use crate::nn::{adam_step, backward, clip_gradients, forward, predict, AdamState, NetworkParams, Tensor};

use super::RlError;

/// A trainable action-value function. The DQN loop only needs batched
/// evaluation and one regression step toward fixed targets.
pub trait QFunction: Clone {
    type Obs: Clone;

    fn n_actions(&self) -> usize;

    /// Row-major `[batch, n_actions]` values.
    fn q_batch(&self, obs: &[&Self::Obs]) -> Result<Vec<f32>, RlError>;

    /// One optimizer step on `mean_b (targets[b] - Q(obs[b], actions[b]))^2`.
    /// Returns the loss before the step.
    fn fit(&mut self, obs: &[&Self::Obs], actions: &[usize], targets: &[f64]) -> Result<f64, RlError>;
}

/// Conv Q-network trained with clipped Adam.
#[derive(Clone, Debug)]
pub struct NetworkQ {
    pub params: NetworkParams,
    pub adam: AdamState,
    pub grad_clip: f64,
}

impl NetworkQ {
    pub fn new(params: NetworkParams, lr: f32, grad_clip: f64) -> Self {
        let adam = AdamState::new(&params, lr);
        Self { params, adam, grad_clip }
    }
}

impl QFunction for NetworkQ {
    type Obs = Observation;

    fn n_actions(&self) -> usize {
        self.params.n_actions()
    }

    fn q_batch(&self, obs: &[&Observation]) -> Result<Vec<f32>, RlError> {
        Ok(predict(&self.params, &batch_tensor(obs))?.into_data())
    }

    fn fit(&mut self, obs: &[&Observation], actions: &[usize], targets: &[f64]) -> Result<f64, RlError> {
        let n = self.n_actions();
        let b = obs.len();
        let (q, tape) = forward(&self.params, &batch_tensor(obs))?;
        let mut grad = vec![0f32; b * n];
        let mut loss = 0.0;
        for i in 0..b {
            let err = q.data()[i * n + actions[i]] as f64 - targets[i];
            loss += err * err;
            grad[i * n + actions[i]] = (2.0 * err / b as f64) as f32;
        }
        let mut grads = backward(&tape, &Tensor::new(vec![b, n], grad)?)?;
        clip_gradients(&mut grads, self.grad_clip);
        adam_step(&mut self.params, &grads, &mut self.adam)?;
        Ok(loss / b as f64)
    }
}

/// Lookup table over integer states, updated by `q += lr * (target - q)`.
#[derive(Clone, Debug, PartialEq)]
pub struct TableQ {
    pub n_states: usize,
    pub n_actions: usize,
    pub values: Vec<f64>,
    pub lr: f64,
}

impl TableQ {
    pub fn new(n_states: usize, n_actions: usize, lr: f64) -> Self {
        Self {
            n_states,
            n_actions,
            values: vec![0.0; n_states * n_actions],
            lr,
        }
    }

    pub fn get(&self, s: usize, a: usize) -> f64 {
        self.values[s * self.n_actions + a]
    }

    pub fn set(&mut self, s: usize, a: usize, v: f64) {
        self.values[s * self.n_actions + a] = v;
    }
}

impl QFunction for TableQ {
    type Obs = usize;

    fn n_actions(&self) -> usize {
        self.n_actions
    }

    fn q_batch(&self, obs: &[&usize]) -> Result<Vec<f32>, RlError> {
        Ok(obs
            .iter()
            .flat_map(|&&s| (0..self.n_actions).map(move |a| self.get(s, a) as f32))
            .collect())
    }

    fn fit(&mut self, obs: &[&usize], actions: &[usize], targets: &[f64]) -> Result<f64, RlError> {
        let mut loss = 0.0;
        for ((&&s, &a), &t) in obs.iter().zip(actions).zip(targets) {
            let err = self.get(s, a) - t;
            loss += err * err;
        }
        for ((&&s, &a), &t) in obs.iter().zip(actions).zip(targets) {
            let q = self.get(s, a);
            self.set(s, a, q + self.lr * (t - q));
        }
        Ok(loss / obs.len() as f64)
    }
}
