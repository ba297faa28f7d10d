//! Options over N-step windows and the meta-level DQN that sequences them.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use thiserror::Error;

use crate::env::{Environment, Observation, PoseRecord, StepEvent, Theme};
use crate::nn::{
    argmax, init_network, read_checkpoint, record_text, text_record, Checkpoint, NetworkParams, NetworkSpec, NnError,
    Tensor,
};
use crate::rl::{
    episode_seed, td_targets, Decision, DecisionProcess, EpisodeStats, GreedyPolicy, Learner, NetworkQ, Policy,
    QFunction, RlError, TrainConfig, TrainingLog, TrajectoryPoint, Transition, SEED_STREAM_INIT,
};

pub const DEFAULT_HORIZON: usize = 10;
pub const RECORD_OPTIONS: &str = "meta.options";
pub const RECORD_HORIZON: &str = "meta.N";

#[derive(Debug, Error)]
pub enum MetaError {
    #[error("invalid meta configuration: {0}")]
    Config(String),
    #[error("no option is mapped to theme {0:?}")]
    UnmappedTheme(Theme),
    #[error("environment reports no theme under the agent")]
    NoTheme,
    #[error("checkpoint lacks meta record {0:?}")]
    MissingRecord(&'static str),
    #[error(transparent)]
    Rl(#[from] RlError),
    #[error(transparent)]
    Nn(#[from] NnError),
}

/// Built-in open-loop behaviors.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum ScriptedOption {
    AlwaysForward,
    SpinLeft,
    SpinRight,
    GaitFastLow,
    GaitSlowHigh,
}

impl ScriptedOption {
    pub const ALL: [ScriptedOption; 5] = [
        ScriptedOption::AlwaysForward,
        ScriptedOption::SpinLeft,
        ScriptedOption::SpinRight,
        ScriptedOption::GaitFastLow,
        ScriptedOption::GaitSlowHigh,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ScriptedOption::AlwaysForward => "AlwaysForward",
            ScriptedOption::SpinLeft => "SpinLeft",
            ScriptedOption::SpinRight => "SpinRight",
            ScriptedOption::GaitFastLow => "GaitFastLow",
            ScriptedOption::GaitSlowHigh => "GaitSlowHigh",
        }
    }

    /// Primitive action index in the environment the option is meant for.
    pub fn action(self) -> usize {
        match self {
            ScriptedOption::AlwaysForward | ScriptedOption::GaitFastLow => 0,
            ScriptedOption::SpinLeft | ScriptedOption::GaitSlowHigh => 1,
            ScriptedOption::SpinRight => 2,
        }
    }
}

impl FromStr for ScriptedOption {
    type Err = MetaError;

    fn from_str(s: &str) -> Result<Self, MetaError> {
        Self::ALL
            .into_iter()
            .find(|o| o.name() == s)
            .ok_or_else(|| MetaError::Config(format!("unknown scripted option {s:?}")))
    }
}

impl fmt::Display for ScriptedOption {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// A low-level behavior the meta-policy can invoke.
#[derive(Clone, Debug)]
pub enum OptionPolicy {
    /// A trained greedy policy; `id` is how it is referred to in configs and
    /// meta checkpoints (normally its checkpoint path).
    Learned { id: String, policy: GreedyPolicy },
    Scripted(ScriptedOption),
}

impl OptionPolicy {
    pub fn id(&self) -> String {
        match self {
            OptionPolicy::Learned { id, .. } => id.clone(),
            OptionPolicy::Scripted(s) => s.name().to_string(),
        }
    }

    /// A scripted name, or otherwise a checkpoint path resolved against `base`.
    pub fn resolve(id: &str, base: &Path) -> Result<Self, MetaError> {
        if let Ok(s) = id.parse::<ScriptedOption>() {
            return Ok(OptionPolicy::Scripted(s));
        }
        let ckpt = read_checkpoint(&base.join(id))?;
        Ok(OptionPolicy::Learned {
            id: id.to_string(),
            policy: GreedyPolicy::new(ckpt.params),
        })
    }
}

impl Policy for OptionPolicy {
    fn act(&self, obs: &Observation) -> Result<usize, RlError> {
        match self {
            OptionPolicy::Learned { policy, .. } => policy.act(obs),
            OptionPolicy::Scripted(s) => Ok(s.action()),
        }
    }
}

#[derive(Clone, Debug)]
pub struct MetaConfig {
    pub train: TrainConfig,
    /// Option horizon N.
    pub horizon: usize,
    /// Order defines the meta-action indices.
    pub options: Vec<OptionPolicy>,
}

impl MetaConfig {
    pub fn validate(&self) -> Result<(), MetaError> {
        if self.options.len() < 2 {
            return Err(MetaError::Config(format!(
                "at least 2 options required, got {}",
                self.options.len()
            )));
        }
        if self.horizon == 0 {
            return Err(MetaError::Config("option horizon N must be at least 1".into()));
        }
        self.train.validate()?;
        Ok(())
    }
}

/// One option execution as seen by the meta learner.
#[derive(Clone, Debug, PartialEq)]
pub struct MetaTransition {
    pub obs: Observation,
    pub option: usize,
    /// `sum_j gamma^j r_j` over the executed steps.
    pub cum_reward: f64,
    pub next_obs: Observation,
    pub steps_used: usize,
    pub terminal: bool,
}

impl From<&MetaTransition> for Transition {
    fn from(m: &MetaTransition) -> Self {
        Transition {
            obs: m.obs.clone(),
            action: m.option,
            reward: m.cum_reward,
            next_obs: m.next_obs.clone(),
            terminal: m.terminal,
            steps: m.steps_used,
        }
    }
}

/// Everything that happened while an option ran.
#[derive(Clone, Debug, PartialEq)]
pub struct OptionRun {
    pub transition: MetaTransition,
    pub rewards: Vec<f64>,
    /// Pose before each executed step.
    pub poses: Vec<PoseRecord>,
    pub final_event: StepEvent,
}

/// Runs `option` for up to `n` primitive steps, stopping early on a terminal event.
pub fn execute_option<E: Environment>(
    env: &E,
    state: &mut E::State,
    option: usize,
    policy: &dyn Policy,
    n: usize,
    gamma: f64,
) -> Result<OptionRun, RlError> {
    let start = env.observe(state);
    let mut obs = start.clone();
    let mut rewards = Vec::with_capacity(n);
    let mut poses = Vec::with_capacity(n);
    let mut cum = 0.0;
    let mut discount = 1.0;
    let mut event = StepEvent::None;
    let mut terminal = false;
    for j in 0..n {
        poses.push(env.pose(state));
        let o = env.step(state, policy.act(&obs)?);
        cum += discount * o.reward;
        discount *= gamma;
        rewards.push(o.reward);
        event = o.event;
        terminal = o.terminal;
        if terminal || j + 1 == n {
            break;
        }
        obs = env.observe(state);
    }
    let next_obs = env.observe(state);
    Ok(OptionRun {
        transition: MetaTransition {
            obs: start,
            option,
            cum_reward: cum,
            next_obs,
            steps_used: rewards.len(),
            terminal,
        },
        rewards,
        poses,
        final_event: event,
    })
}

/// Option-timescale double-DQN targets with bootstrap discount `gamma^k`.
pub fn meta_td_targets<Q: QFunction<Obs = Observation>>(
    batch: &[&MetaTransition],
    online: &Q,
    target: &Q,
    gamma: f64,
) -> Result<Vec<f64>, RlError> {
    let converted: Vec<Transition> = batch.iter().map(|m| Transition::from(*m)).collect();
    let refs: Vec<&Transition> = converted.iter().collect();
    td_targets(&refs, online, target, gamma)
}

/// The environment seen at the option timescale: each action runs one option.
pub struct OptionProcess<'a, E> {
    pub env: &'a E,
    pub options: &'a [OptionPolicy],
    pub horizon: usize,
    pub gamma: f64,
}

impl<E: Environment> DecisionProcess for OptionProcess<'_, E> {
    type Obs = Observation;
    type State = E::State;

    fn n_actions(&self) -> usize {
        self.options.len()
    }

    fn reset(&self, seed: u64) -> E::State {
        self.env.reset(seed)
    }

    fn observe(&self, state: &E::State) -> Observation {
        self.env.observe(state)
    }

    fn decide(&self, state: &mut E::State, action: usize) -> Result<Decision, RlError> {
        let run = execute_option(self.env, state, action, &self.options[action], self.horizon, self.gamma)?;
        Ok(Decision {
            reward: run.transition.cum_reward,
            steps: run.transition.steps_used,
            terminal: run.transition.terminal,
            rewards: run.rewards,
        })
    }
}

/// Linear-head Q-network over option indices.
pub fn meta_network_spec(obs_shape: [usize; 3], n_options: usize) -> NetworkSpec {
    NetworkSpec::q_network(obs_shape, n_options, false)
}

/// Trains the meta-policy with the low-level options frozen.
pub fn train_meta<E: Environment>(env: &E, config: &MetaConfig) -> Result<(Checkpoint, TrainingLog), MetaError> {
    config.validate()?;
    let spec = meta_network_spec(env.obs_shape(), config.options.len());
    let params = init_network(&spec, crate::env::derive_seed(config.train.seed, SEED_STREAM_INIT))?;
    let process = OptionProcess {
        env,
        options: &config.options,
        horizon: config.horizon,
        gamma: config.train.gamma,
    };
    let q = NetworkQ::new(params, config.train.lr, config.train.grad_clip);
    let (q, log) = Learner::new(&process, q, config.train.clone())?.run()?;
    let ids: Vec<String> = config.options.iter().map(OptionPolicy::id).collect();
    Ok((
        Checkpoint {
            params: q.params,
            adam: q.adam,
            extra: meta_records(&ids, config.horizon),
        },
        log,
    ))
}

pub fn meta_records(option_ids: &[String], horizon: usize) -> Vec<(String, Tensor)> {
    vec![
        text_record(RECORD_OPTIONS, &option_ids.join("\n")),
        (RECORD_HORIZON.to_string(), Tensor::scalar(horizon as f32)),
    ]
}

/// Option ids and N stored alongside a meta checkpoint.
pub fn meta_metadata(ckpt: &Checkpoint) -> Result<(Vec<String>, usize), MetaError> {
    let ids = ckpt
        .extra(RECORD_OPTIONS)
        .ok_or(MetaError::MissingRecord(RECORD_OPTIONS))?;
    let n = ckpt.extra(RECORD_HORIZON).ok_or(MetaError::MissingRecord(RECORD_HORIZON))?;
    let ids = record_text(ids)?.split('\n').map(str::to_string).collect();
    let n = n.data().first().copied().unwrap_or(0.0) as usize;
    Ok((ids, n))
}

/// Chooses which option runs next.
pub trait OptionSelector {
    fn select(&self, obs: &Observation, theme: Option<Theme>) -> Result<usize, MetaError>;
}

/// Greedy meta-policy.
#[derive(Clone, Debug)]
pub struct MetaPolicy {
    pub params: NetworkParams,
}

impl MetaPolicy {
    pub fn q_values(&self, obs: &Observation) -> Result<Vec<f32>, MetaError> {
        Ok(crate::nn::predict(&self.params, &obs.to_tensor())?.into_data())
    }
}

impl OptionSelector for MetaPolicy {
    fn select(&self, obs: &Observation, _theme: Option<Theme>) -> Result<usize, MetaError> {
        Ok(argmax(&self.q_values(obs)?))
    }
}

/// Ground-truth baseline: the option is fixed by the theme under the agent.
#[derive(Clone, Debug, PartialEq)]
pub struct HandcraftedSelector {
    rule: BTreeMap<Theme, usize>,
}

pub fn handcrafted_selector(rule: BTreeMap<Theme, usize>) -> Result<HandcraftedSelector, MetaError> {
    for theme in [Theme::Theme1, Theme::Theme2] {
        if !rule.contains_key(&theme) {
            return Err(MetaError::UnmappedTheme(theme));
        }
    }
    Ok(HandcraftedSelector { rule })
}

impl OptionSelector for HandcraftedSelector {
    fn select(&self, _obs: &Observation, theme: Option<Theme>) -> Result<usize, MetaError> {
        let theme = theme.ok_or(MetaError::NoTheme)?;
        self.rule.get(&theme).copied().ok_or(MetaError::UnmappedTheme(theme))
    }
}

/// Always the same option.
#[derive(Clone, Copy, Debug)]
pub struct FixedSelector(pub usize);

impl OptionSelector for FixedSelector {
    fn select(&self, _obs: &Observation, _theme: Option<Theme>) -> Result<usize, MetaError> {
        Ok(self.0)
    }
}

/// Greedy hierarchical rollouts. Every trajectory point carries the option
/// that produced that primitive step.
pub fn run_hierarchical<E: Environment>(
    env: &E,
    selector: &dyn OptionSelector,
    options: &[OptionPolicy],
    horizon: usize,
    n_episodes: usize,
    seed: u64,
) -> Result<Vec<EpisodeStats>, MetaError> {
    if n_episodes == 0 || horizon == 0 {
        return Err(MetaError::Config("n_episodes and N must be at least 1".into()));
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
                let k = selector.select(&env.observe(&state), env.theme(&state))?;
                let option = options
                    .get(k)
                    .ok_or_else(|| MetaError::Config(format!("selector chose option {k} of {}", options.len())))?;
                // gamma only affects the discounted sum, which is not reported here
                let run = execute_option(env, &mut state, k, option, horizon, 1.0)?;
                for &(x, y, heading) in &run.poses {
                    stats.trajectory.push(TrajectoryPoint {
                        x,
                        y,
                        heading,
                        option: k as i32,
                    });
                }
                for r in &run.rewards {
                    stats.total_return += r;
                }
                stats.steps += run.rewards.len();
                if run.transition.terminal {
                    stats.final_event = run.final_event;
                    stats.success = run.final_event == StepEvent::GoalReached;
                    return Ok(stats);
                }
            }
        })
        .collect()
}

/// Loads a meta checkpoint and resolves its options relative to `base`.
pub fn load_meta(path: &Path, base: &Path) -> Result<(MetaPolicy, Vec<OptionPolicy>, usize), MetaError> {
    let ckpt = read_checkpoint(path)?;
    let (ids, n) = meta_metadata(&ckpt)?;
    let options = ids
        .iter()
        .map(|id| OptionPolicy::resolve(id, base))
        .collect::<Result<Vec<_>, _>>()?;
    Ok((MetaPolicy { params: ckpt.params }, options, n))
}
