//! Policy-facing environments: the learned-model rollout environment and the
//! shared observation and reward definitions.

pub mod obs;
pub mod rollout;
pub mod target;

pub use obs::{raw_observation, ActionLimits, ObsNormalizer};
pub use rollout::{EnvConfig, EnvMode, EpisodeLog, RolloutEnv, StepInfo, StepRecord, TaskEnv, TestDynamics};
pub use target::{reward, sample_training_target, TargetSchedule, TargetSpec};

use crate::error::Result;

#[derive(Clone, Debug, PartialEq)]
pub struct Step {
    pub obs: Vec<f64>,
    pub reward: f64,
    pub done: bool,
}

/// Episodic environment with continuous, bounded actions.
pub trait Env {
    fn obs_dim(&self) -> usize;
    /// `(low, high)` per action dimension.
    fn action_bounds(&self) -> (Vec<f64>, Vec<f64>);
    fn reset(&mut self, seed: u64) -> Result<Vec<f64>>;
    fn step(&mut self, action: &[f64]) -> Result<Step>;
}
