use crate::env::{derive_seed, Environment, Observation, StepEvent};
use crate::nn::{argmax, predict, NetworkParams};

use super::RlError;

/// Maps an observation to one primitive action.
pub trait Policy {
    fn act(&self, obs: &Observation) -> Result<usize, RlError>;
}

/// Argmax of a Q-network's output, lowest index on ties.
#[derive(Clone, Debug)]
pub struct GreedyPolicy {
    pub params: NetworkParams,
}

impl GreedyPolicy {
    pub fn new(params: NetworkParams) -> Self {
        Self { params }
    }

    pub fn q_values(&self, obs: &Observation) -> Result<Vec<f32>, RlError> {
        Ok(predict(&self.params, &obs.to_tensor())?.into_data())
    }
}

impl Policy for GreedyPolicy {
    fn act(&self, obs: &Observation) -> Result<usize, RlError> {
        Ok(argmax(&self.q_values(obs)?))
    }
}

/// Always the same action.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ConstantPolicy(pub usize);

impl Policy for ConstantPolicy {
    fn act(&self, _obs: &Observation) -> Result<usize, RlError> {
        Ok(self.0)
    }
}

/// Pose before a step, and the option that produced the step (`-1` for flat policies).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TrajectoryPoint {
    pub x: f64,
    pub y: f64,
    pub heading: f64,
    pub option: i32,
}

#[derive(Clone, Debug, PartialEq)]
pub struct EpisodeStats {
    pub total_return: f64,
    pub steps: usize,
    pub success: bool,
    pub final_event: StepEvent,
    pub trajectory: Vec<TrajectoryPoint>,
}

/// Seed of evaluation episode `i`.
pub fn episode_seed(seed: u64, i: usize) -> u64 {
    derive_seed(seed, i as u64)
}

/// Greedy rollouts, one per episode, seeded per episode index.
pub fn evaluate<E: Environment>(
    policy: &dyn Policy,
    env: &E,
    n_episodes: usize,
    seed: u64,
) -> Result<Vec<EpisodeStats>, RlError> {
    if n_episodes == 0 {
        return Err(RlError::Config("n_episodes must be at least 1".into()));
    }
    (0..n_episodes)
        .map(|i| {
            let mut state = env.reset(episode_seed(seed, i));
            let mut stats = EpisodeStats {
                total_return: 0.0,
                steps: 0,
                success: false,
                final_event: StepEvent::None,
                trajectory: Vec::new(),
            };
            loop {
                let (x, y, heading) = env.pose(&state);
                stats.trajectory.push(TrajectoryPoint { x, y, heading, option: -1 });
                let action = policy.act(&env.observe(&state))?;
                let o = env.step(&mut state, action);
                stats.total_return += o.reward;
                stats.steps += 1;
                if o.terminal {
                    stats.final_event = o.event;
                    stats.success = o.event == StepEvent::GoalReached;
                    return Ok(stats);
                }
            }
        })
        .collect()
}
