use crate::env::{derive_seed, Environment};
use crate::nn::{init_network, Checkpoint, NetworkSpec};

use super::config::TrainConfig;
use super::learner::{Learner, Primitive, TrainingLog, SEED_STREAM_INIT};
use super::qfunc::NetworkQ;
use super::RlError;

/// Trains a dueling double-DQN low-level policy on primitive actions.
pub fn train_low_level<E: Environment>(env: &E, config: &TrainConfig) -> Result<(Checkpoint, TrainingLog), RlError> {
    let spec = NetworkSpec::q_network(env.obs_shape(), env.n_actions(), true);
    train_network(env, spec, config)
}

/// Same loop with an explicit architecture.
pub fn train_network<E: Environment>(
    env: &E,
    spec: NetworkSpec,
    config: &TrainConfig,
) -> Result<(Checkpoint, TrainingLog), RlError> {
    let params = init_network(&spec, derive_seed(config.seed, SEED_STREAM_INIT))?;
    let process = Primitive(env);
    let q = NetworkQ::new(params, config.lr, config.grad_clip);
    let (q, log) = Learner::new(&process, q, config.clone())?.run()?;
    Ok((
        Checkpoint {
            params: q.params,
            adam: q.adam,
            extra: Vec::new(),
        },
        log,
    ))
}
