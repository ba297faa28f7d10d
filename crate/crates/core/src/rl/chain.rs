//! A small deterministic chain MDP with an exact value-iteration solution,
//! used to check the DQN loop with a tabular backend.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::learner::{Decision, DecisionProcess};
use super::RlError;

/// States `0..n` on a line; action 0 moves left (clamped at 0), action 1
/// moves right. Entering the last state pays `goal_reward` and ends the
/// episode; every other move pays `step_reward`.
#[derive(Clone, Debug)]
pub struct ChainMdp {
    pub n_states: usize,
    pub step_reward: f64,
    pub goal_reward: f64,
}

impl Default for ChainMdp {
    fn default() -> Self {
        Self {
            n_states: 5,
            step_reward: -1.0,
            goal_reward: 10.0,
        }
    }
}

impl ChainMdp {
    /// `(next_state, reward, terminal)`.
    pub fn transition(&self, s: usize, a: usize) -> (usize, f64, bool) {
        let next = if a == 0 { s.saturating_sub(1) } else { s + 1 };
        if next == self.n_states - 1 {
            (next, self.goal_reward, true)
        } else {
            (next, self.step_reward, false)
        }
    }

    /// Q* over non-terminal states, row-major `[state][action]`.
    pub fn value_iteration(&self, gamma: f64, tol: f64) -> Vec<f64> {
        let n = self.n_states;
        let mut q = vec![0.0f64; n * 2];
        loop {
            let mut delta: f64 = 0.0;
            let mut next = q.clone();
            for s in 0..n - 1 {
                for a in 0..2 {
                    let (s2, r, done) = self.transition(s, a);
                    let v = if done { 0.0 } else { q[s2 * 2].max(q[s2 * 2 + 1]) };
                    next[s * 2 + a] = r + gamma * v;
                    delta = delta.max((next[s * 2 + a] - q[s * 2 + a]).abs());
                }
            }
            q = next;
            if delta < tol {
                return q;
            }
        }
    }
}

impl DecisionProcess for ChainMdp {
    type Obs = usize;
    type State = usize;

    fn n_actions(&self) -> usize {
        2
    }

    /// Uniform over the non-terminal states.
    fn reset(&self, seed: u64) -> usize {
        ChaCha8Rng::seed_from_u64(seed).gen_range(0..self.n_states - 1)
    }

    fn observe(&self, state: &usize) -> usize {
        *state
    }

    fn decide(&self, state: &mut usize, action: usize) -> Result<Decision, RlError> {
        let (next, r, done) = self.transition(*state, action);
        *state = next;
        Ok(Decision {
            reward: r,
            steps: 1,
            terminal: done,
            rewards: vec![r],
        })
    }
}
