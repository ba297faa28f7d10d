use super::RlError;

/// Hyperparameters of the DQN loop. Counters (`burn_in`, `target_sync_every`,
/// `epsilon_decay_steps`, `train_every`) are in decisions: primitive steps
/// for low-level training, option choices for meta training.
#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub gamma: f64,
    pub lr: f32,
    pub replay_capacity: usize,
    pub burn_in: usize,
    pub target_sync_every: usize,
    pub batch_size: usize,
    pub grad_clip: f64,
    pub epsilon_start: f64,
    pub epsilon_end: f64,
    pub epsilon_decay_steps: usize,
    /// Budget in primitive environment steps.
    pub max_env_steps: usize,
    pub train_every: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            gamma: 0.99,
            lr: 0.00025,
            replay_capacity: 50_000,
            burn_in: 2_000,
            target_sync_every: 1_000,
            batch_size: 32,
            grad_clip: 1.0,
            epsilon_start: 1.0,
            epsilon_end: 0.05,
            epsilon_decay_steps: 50_000,
            max_env_steps: 100_000,
            train_every: 1,
            seed: 0,
        }
    }
}

impl TrainConfig {
    /// Full-scale settings (large replay, long epsilon schedule).
    pub fn full_scale() -> Self {
        Self {
            replay_capacity: 1_000_000,
            burn_in: 50_000,
            target_sync_every: 10_000,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<(), RlError> {
        let bad = |m: &str| Err(RlError::Config(m.to_string()));
        if !(self.gamma > 0.0 && self.gamma < 1.0) {
            return bad("gamma must lie in (0, 1)");
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return bad("lr must be positive");
        }
        if self.replay_capacity == 0 || self.batch_size == 0 {
            return bad("replay_capacity and batch_size must be positive");
        }
        if self.burn_in > self.replay_capacity {
            return bad("burn_in exceeds replay_capacity");
        }
        if self.target_sync_every == 0 || self.train_every == 0 {
            return bad("target_sync_every and train_every must be positive");
        }
        if !(self.grad_clip > 0.0) {
            return bad("grad_clip must be positive");
        }
        let unit = 0.0..=1.0;
        if !unit.contains(&self.epsilon_start) || !unit.contains(&self.epsilon_end) {
            return bad("epsilon values must lie in [0, 1]");
        }
        if self.epsilon_end > self.epsilon_start {
            return bad("epsilon_end exceeds epsilon_start");
        }
        Ok(())
    }
}

/// Linear decay from `epsilon_start` to `epsilon_end` over
/// `epsilon_decay_steps`, flat afterwards.
pub fn epsilon_at(config: &TrainConfig, t: u64) -> f64 {
    if config.epsilon_decay_steps == 0 || t >= config.epsilon_decay_steps as u64 {
        return config.epsilon_end;
    }
    let f = t as f64 / config.epsilon_decay_steps as f64;
    config.epsilon_start + f * (config.epsilon_end - config.epsilon_start)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn schedule_endpoints() {
        let c = TrainConfig {
            epsilon_decay_steps: 1000,
            ..TrainConfig::default()
        };
        assert_eq!(epsilon_at(&c, 0), 1.0);
        assert!((epsilon_at(&c, 500) - 0.525).abs() < 1e-12);
        assert_eq!(epsilon_at(&c, 2000), 0.05);
    }

    #[test]
    fn defaults_validate() {
        TrainConfig::default().validate().unwrap();
        TrainConfig::full_scale().validate().unwrap();
        let c = TrainConfig {
            burn_in: 10,
            replay_capacity: 5,
            ..TrainConfig::default()
        };
        assert!(c.validate().is_err());
        let c = TrainConfig {
            gamma: 1.0,
            ..TrainConfig::default()
        };
        assert!(c.validate().is_err());
    }
}
