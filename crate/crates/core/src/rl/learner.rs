use std::fmt::Write as _;
use std::io;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::env::{derive_seed, Environment, Observation};
use crate::nn::argmax;

use super::config::{epsilon_at, TrainConfig};
use super::qfunc::QFunction;
use super::replay::ReplayBuffer;
use super::RlError;

/// Stream ids for [`derive_seed`].
pub const SEED_STREAM_EXPLORE: u64 = 0xE0;
pub const SEED_STREAM_INIT: u64 = 0x1A;
pub const SEED_STREAM_EPISODE_BASE: u64 = 1 << 32;

/// One replayed decision. `steps` is the number of primitive steps the
/// decision consumed, so the bootstrap discount is `gamma^steps`.
#[derive(Clone, Debug, PartialEq)]
pub struct Transition<O = Observation> {
    pub obs: O,
    pub action: usize,
    pub reward: f64,
    pub next_obs: O,
    pub terminal: bool,
    pub steps: usize,
}

/// Double-DQN targets: `r` for terminal transitions, otherwise
/// `r + gamma^k * Q_target(s', argmax_a Q_online(s', a))`.
pub fn td_targets<Q: QFunction>(
    batch: &[&Transition<Q::Obs>],
    online: &Q,
    target: &Q,
    gamma: f64,
) -> Result<Vec<f64>, RlError> {
    if batch.is_empty() {
        return Err(RlError::Config("empty batch".into()));
    }
    let next: Vec<&Q::Obs> = batch.iter().map(|t| &t.next_obs).collect();
    let n = online.n_actions();
    let q_on = online.q_batch(&next)?;
    let q_tg = target.q_batch(&next)?;
    Ok(batch
        .iter()
        .enumerate()
        .map(|(i, t)| {
            if t.terminal {
                t.reward
            } else {
                let a = argmax(&q_on[i * n..(i + 1) * n]);
                t.reward + gamma.powi(t.steps as i32) * q_tg[i * n + a] as f64
            }
        })
        .collect())
}

/// Samples a batch, regresses the online function toward double-DQN targets.
/// The target function is only read.
pub fn train_step<Q: QFunction, R: Rng>(
    online: &mut Q,
    target: &Q,
    buffer: &ReplayBuffer<Transition<Q::Obs>>,
    config: &TrainConfig,
    rng: &mut R,
) -> Result<f64, RlError> {
    let batch = buffer.sample(config.batch_size, rng)?;
    let targets = td_targets(&batch, online, target, config.gamma)?;
    let obs: Vec<&Q::Obs> = batch.iter().map(|t| &t.obs).collect();
    let actions: Vec<usize> = batch.iter().map(|t| t.action).collect();
    online.fit(&obs, &actions, &targets)
}

/// Result of one decision: a primitive step, or a whole option.
#[derive(Clone, Debug, PartialEq)]
pub struct Decision {
    /// Discounted return within the decision.
    pub reward: f64,
    pub steps: usize,
    pub terminal: bool,
    /// Raw primitive rewards, in order.
    pub rewards: Vec<f64>,
}

/// What the DQN loop acts on: anything that can be reset, observed, and
/// advanced by one decision.
pub trait DecisionProcess {
    type Obs: Clone;
    type State: Clone;

    fn n_actions(&self) -> usize;
    fn reset(&self, seed: u64) -> Self::State;
    fn observe(&self, state: &Self::State) -> Self::Obs;
    fn decide(&self, state: &mut Self::State, action: usize) -> Result<Decision, RlError>;
}

/// Primitive-action view of an environment.
pub struct Primitive<'a, E>(pub &'a E);

impl<E: Environment> DecisionProcess for Primitive<'_, E> {
    type Obs = Observation;
    type State = E::State;

    fn n_actions(&self) -> usize {
        self.0.n_actions()
    }

    fn reset(&self, seed: u64) -> E::State {
        self.0.reset(seed)
    }

    fn observe(&self, state: &E::State) -> Observation {
        self.0.observe(state)
    }

    fn decide(&self, state: &mut E::State, action: usize) -> Result<Decision, RlError> {
        let o = self.0.step(state, action);
        Ok(Decision {
            reward: o.reward,
            steps: 1,
            terminal: o.terminal,
            rewards: vec![o.reward],
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct EpisodeLog {
    pub episode: usize,
    /// Primitive steps.
    pub steps: usize,
    /// Undiscounted sum of primitive rewards.
    pub total_return: f64,
    /// `None` when no gradient step happened during the episode.
    pub mean_loss: Option<f64>,
    pub epsilon_end: f64,
    pub decisions: usize,
    pub rewards: Vec<f64>,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct TrainingLog {
    pub episodes: Vec<EpisodeLog>,
}

impl TrainingLog {
    pub fn to_csv(&self) -> String {
        let mut s = String::from("episode,steps,return,mean_loss,epsilon_end_of_episode\n");
        for e in &self.episodes {
            let loss = e.mean_loss.map(|l| l.to_string()).unwrap_or_default();
            let _ = writeln!(s, "{},{},{},{},{}", e.episode, e.steps, e.total_return, loss, e.epsilon_end);
        }
        s
    }

    pub fn write_csv(&self, path: &Path) -> io::Result<()> {
        std::fs::write(path, self.to_csv())
    }

    pub fn is_empty(&self) -> bool {
        self.episodes.is_empty()
    }
}

struct Running<S, O> {
    state: S,
    obs: O,
    steps: usize,
    decisions: usize,
    rewards: Vec<f64>,
    loss_sum: f64,
    updates: usize,
}

/// The epsilon-greedy double-DQN loop, advanced one decision at a time.
pub struct Learner<'p, P: DecisionProcess, Q: QFunction<Obs = P::Obs>> {
    process: &'p P,
    config: TrainConfig,
    online: Q,
    target: Q,
    buffer: ReplayBuffer<Transition<P::Obs>>,
    rng: ChaCha8Rng,
    running: Option<Running<P::State, P::Obs>>,
    episode: usize,
    decisions: u64,
    env_steps: u64,
    log: TrainingLog,
}

impl<'p, P: DecisionProcess, Q: QFunction<Obs = P::Obs>> Learner<'p, P, Q> {
    pub fn new(process: &'p P, online: Q, config: TrainConfig) -> Result<Self, RlError> {
        config.validate()?;
        if online.n_actions() != process.n_actions() {
            return Err(RlError::Config(format!(
                "Q-function has {} actions, process has {}",
                online.n_actions(),
                process.n_actions()
            )));
        }
        Ok(Self {
            process,
            target: online.clone(),
            online,
            buffer: ReplayBuffer::new(config.replay_capacity),
            rng: ChaCha8Rng::seed_from_u64(derive_seed(config.seed, SEED_STREAM_EXPLORE)),
            config,
            running: None,
            episode: 0,
            decisions: 0,
            env_steps: 0,
            log: TrainingLog::default(),
        })
    }

    pub fn online(&self) -> &Q {
        &self.online
    }

    pub fn target(&self) -> &Q {
        &self.target
    }

    pub fn buffer(&self) -> &ReplayBuffer<Transition<P::Obs>> {
        &self.buffer
    }

    pub fn decisions(&self) -> u64 {
        self.decisions
    }

    pub fn env_steps(&self) -> u64 {
        self.env_steps
    }

    pub fn log(&self) -> &TrainingLog {
        &self.log
    }

    pub fn finished(&self) -> bool {
        self.env_steps >= self.config.max_env_steps as u64
    }

    /// Runs until the primitive-step budget is spent.
    pub fn run(mut self) -> Result<(Q, TrainingLog), RlError> {
        while !self.finished() {
            self.step()?;
        }
        Ok((self.online, self.log))
    }

    fn select(&mut self, obs: &P::Obs) -> Result<usize, RlError> {
        let eps = epsilon_at(&self.config, self.decisions);
        if self.rng.gen::<f64>() < eps {
            Ok(self.rng.gen_range(0..self.process.n_actions()))
        } else {
            Ok(argmax(&self.online.q_batch(&[obs])?))
        }
    }

    /// One decision, plus a gradient step and target sync when due.
    /// Returns the loss if a gradient step was taken.
    pub fn step(&mut self) -> Result<Option<f64>, RlError> {
        let mut run = match self.running.take() {
            Some(r) => r,
            None => {
                let seed = derive_seed(self.config.seed, SEED_STREAM_EPISODE_BASE + self.episode as u64);
                let state = self.process.reset(seed);
                let obs = self.process.observe(&state);
                Running {
                    state,
                    obs,
                    steps: 0,
                    decisions: 0,
                    rewards: Vec::new(),
                    loss_sum: 0.0,
                    updates: 0,
                }
            }
        };
        let action = self.select(&run.obs)?;
        let d = self.process.decide(&mut run.state, action)?;
        let next_obs = self.process.observe(&run.state);
        self.buffer.push(Transition {
            obs: std::mem::replace(&mut run.obs, next_obs.clone()),
            action,
            reward: d.reward,
            next_obs,
            terminal: d.terminal,
            steps: d.steps,
        });
        run.steps += d.steps;
        run.decisions += 1;
        run.rewards.extend_from_slice(&d.rewards);
        self.env_steps += d.steps as u64;
        self.decisions += 1;

        let mut loss = None;
        if self.decisions >= self.config.burn_in as u64
            && self.buffer.len() >= self.config.batch_size
            && self.decisions % self.config.train_every as u64 == 0
        {
            let l = train_step(&mut self.online, &self.target, &self.buffer, &self.config, &mut self.rng)?;
            run.loss_sum += l;
            run.updates += 1;
            loss = Some(l);
        }
        if self.decisions % self.config.target_sync_every as u64 == 0 {
            self.target = self.online.clone();
        }

        if d.terminal {
            self.log.episodes.push(EpisodeLog {
                episode: self.episode,
                steps: run.steps,
                total_return: run.rewards.iter().sum(),
                mean_loss: (run.updates > 0).then(|| run.loss_sum / run.updates as f64),
                epsilon_end: epsilon_at(&self.config, self.decisions),
                decisions: run.decisions,
                rewards: run.rewards,
            });
            self.episode += 1;
        } else {
            self.running = Some(run);
        }
        Ok(loss)
    }
}

/// Greedy action of a Q-function.
pub fn greedy_action<Q: QFunction>(q: &Q, obs: &Q::Obs) -> Result<usize, RlError> {
    Ok(argmax(&q.q_batch(&[obs])?))
}
