//! Phase-1 training: episode rollouts, KL-modified returns and an
//! advantage actor-critic update whose loss carries the direct KL gradient.

mod metrics;
mod rollout;
mod run;
mod task;
mod update;

use serde::{Deserialize, Serialize};

use crate::envs::EnvError;
use crate::numerics::NumericsError;
use crate::policy::PolicyError;

pub use metrics::{MetricsRow, MetricsWriter, TransferColumns, METRICS_HEADER, TRANSFER_HEADER};
pub use rollout::{collect_rollout, run_episode, NoHook, Step, StepHook, Trajectory};
pub use run::{episode_rng, train_bottleneck_policy, train_with_hook, TrainOutcome};
pub use task::{Bandit, Episode, GridTask, Task, Transition, EVAL_SEEDS, TRAIN_SEEDS};
pub use update::{batch_loss, Learner, UpdateStats};

#[derive(Debug, thiserror::Error)]
pub enum TrainError {
    #[error(transparent)]
    Env(#[from] EnvError),
    #[error(transparent)]
    Policy(#[from] PolicyError),
    #[error(transparent)]
    Numerics(#[from] NumericsError),
    #[error("action index {0} out of range")]
    Action(usize),
    #[error("empty trajectory")]
    EmptyTrajectory,
    #[error("empty batch")]
    EmptyBatch,
    #[error("invalid train config: {0}")]
    Config(String),
    #[error("metrics output: {0}")]
    Io(#[from] std::io::Error),
}

/// Sign of the KL term inside the per-step modified reward.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KlSignMode {
    /// `r - beta * kl`: the penalty the objective asks for.
    #[default]
    Consistent,
    /// `r + beta * kl`, as literally printed in the update rule.
    PaperLiteral,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub beta: f64,
    pub gamma: f64,
    pub learning_rate: f64,
    pub rms_decay: f64,
    pub rms_eps: f64,
    /// Episodes collected (in parallel) before each update.
    pub workers: usize,
    /// Environment-step budget.
    pub total_steps: u64,
    /// Optional episode budget; training stops at whichever comes first.
    pub max_episodes: Option<u64>,
    pub entropy_coef: f64,
    pub value_coef: f64,
    /// Global gradient-norm clip; 0 disables clipping.
    pub max_grad_norm: f64,
    /// When false the value head is ignored and advantages are raw returns.
    pub baseline: bool,
    pub kl_sign_mode: KlSignMode,
    pub seed: u64,
    /// Environment steps between metrics rows.
    pub log_interval: u64,
    /// Record elapsed seconds in metrics (otherwise 0, for reproducible files).
    pub wall_clock: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            beta: 0.01,
            gamma: 0.99,
            learning_rate: 7e-4,
            rms_decay: 0.99,
            rms_eps: 1e-5,
            workers: 8,
            total_steps: 200_000,
            max_episodes: None,
            entropy_coef: 0.01,
            value_coef: 0.5,
            max_grad_norm: 0.5,
            baseline: true,
            kl_sign_mode: KlSignMode::Consistent,
            seed: 0,
            log_interval: 10_000,
            wall_clock: false,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), TrainError> {
        let bad = |m: &str| Err(TrainError::Config(m.to_owned()));
        if !(self.beta >= 0.0) || !self.beta.is_finite() {
            return bad("beta must be a finite nonnegative number");
        }
        if !(self.gamma > 0.0 && self.gamma <= 1.0) {
            return bad("gamma must lie in (0, 1]");
        }
        if !(self.learning_rate > 0.0) {
            return bad("learning_rate must be positive");
        }
        if self.workers == 0 {
            return bad("workers must be at least 1");
        }
        if self.log_interval == 0 {
            return bad("log_interval must be at least 1");
        }
        if self.entropy_coef < 0.0 || self.value_coef < 0.0 || self.max_grad_norm < 0.0 {
            return bad("coefficients must be nonnegative");
        }
        Ok(())
    }
}

/// Discounted returns of the modified reward `r_t -/+ beta * kl_t`, where
/// `r_t` is the environment reward plus any exploration bonus.
pub fn modified_returns(traj: &Trajectory, beta: f64, gamma: f64, mode: KlSignMode) -> Result<Vec<f64>, TrainError> {
    if traj.steps.is_empty() {
        return Err(TrainError::EmptyTrajectory);
    }
    let sign = match mode {
        KlSignMode::Consistent => -1.0,
        KlSignMode::PaperLiteral => 1.0,
    };
    let mut out = vec![0.0; traj.steps.len()];
    let mut acc = 0.0;
    for (t, s) in traj.steps.iter().enumerate().rev() {
        let r = s.reward + s.bonus + sign * beta * s.kl;
        acc = r + gamma * acc;
        out[t] = acc;
    }
    Ok(out)
}

#[cfg(test)]
mod tests;
