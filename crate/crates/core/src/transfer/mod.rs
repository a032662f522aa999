//! Phase-2 transfer: a fresh policy trained on harder levels with an
//! exploration bonus from a frozen phase-1 encoder, decayed by visit counts.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::envs::StateKey;
use crate::numerics::gaussian_kl;
use crate::policy::{Checkpoint, Policy, PolicyConfig, PolicyError, RecurrentState};
use crate::train::{train_with_hook, Learner, MetricsWriter, StepHook, Task, TrainConfig, TrainError, TrainOutcome};

/// Source of the per-state exploration bonus.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BonusMode {
    /// `beta / sqrt(c) * KL(encoder || prior)` from the frozen encoder.
    #[default]
    InfobotKl,
    /// `beta / sqrt(c)`.
    CountOnly,
    None,
}

impl std::str::FromStr for BonusMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "infobot_kl" => Ok(BonusMode::InfobotKl),
            "count_only" => Ok(BonusMode::CountOnly),
            "none" => Ok(BonusMode::None),
            other => Err(format!("unknown bonus mode {other:?} (expected infobot_kl, count_only or none)")),
        }
    }
}

/// Visit counts per state. Every key implicitly starts at 1.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct VisitationTable {
    visits: HashMap<StateKey, u64>,
}

impl VisitationTable {
    pub fn new() -> Self {
        Self::default()
    }

    /// Current count, `1 + visits`.
    pub fn count(&self, key: &StateKey) -> u64 {
        1 + self.visits.get(key).copied().unwrap_or(0)
    }

    /// Records a visit and returns the count after the increment.
    pub fn visit(&mut self, key: &StateKey) -> u64 {
        let v = self.visits.entry(key.clone()).or_insert(0);
        *v += 1;
        1 + *v
    }

    /// Adds another table's visits.
    pub fn merge(&mut self, other: HashMap<StateKey, u64>) {
        for (k, v) in other {
            *self.visits.entry(k).or_insert(0) += v;
        }
    }

    /// Number of states visited at least once.
    pub fn distinct(&self) -> usize {
        self.visits.len()
    }

    pub fn total_visits(&self) -> u64 {
        self.visits.values().sum()
    }

    /// Raw visit numbers (count minus one), sorted by key.
    pub fn visits_sorted(&self) -> std::collections::BTreeMap<StateKey, u64> {
        self.visits.iter().map(|(k, &v)| (k.clone(), v)).collect()
    }

    pub fn from_visits(visits: impl IntoIterator<Item = (StateKey, u64)>) -> Self {
        Self {
            visits: visits.into_iter().filter(|&(_, v)| v > 0).collect(),
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = (&StateKey, u64)> {
        self.visits.iter().map(|(k, &v)| (k, 1 + v))
    }
}

/// Phase-1 encoder (and prior) frozen for bonus computation. Only the
/// trunk and encoder parameters are ever evaluated.
#[derive(Clone, Debug)]
pub struct FrozenBonusModel {
    policy: Policy<f64>,
}

impl FrozenBonusModel {
    pub fn new(policy: Policy<f64>) -> Self {
        Self { policy }
    }

    pub fn from_checkpoint(ck: &Checkpoint) -> Result<Self, PolicyError> {
        Ok(Self::new(ck.to_policy()?))
    }

    pub fn config(&self) -> &PolicyConfig {
        self.policy.config()
    }

    pub fn policy(&self) -> &Policy<f64> {
        &self.policy
    }

    pub fn initial_memory(&self) -> RecurrentState<f64> {
        self.policy.initial_memory()
    }

    /// KL of the frozen encoder against the prior, and the advanced memory.
    pub fn kl(&self, obs: &[f64], goal: &[f64], memory: &RecurrentState<f64>) -> Result<(f64, RecurrentState<f64>), PolicyError> {
        let (enc, next) = self.policy.encode_step(obs, goal, memory)?;
        Ok((gaussian_kl(&enc, &self.policy.prior())?, next))
    }
}

/// `beta / sqrt(count) * kl`.
pub fn bonus(beta: f64, kl: f64, count: u64) -> f64 {
    debug_assert!(count >= 1);
    beta / (count as f64).sqrt() * kl
}

/// `beta / sqrt(count)`.
pub fn count_bonus(beta: f64, count: u64) -> f64 {
    beta / (count as f64).sqrt()
}

pub fn combined_reward(env_reward: f64, bonus: f64) -> f64 {
    env_reward + bonus
}

/// Per-episode scratch: local visit shard, frozen-encoder memory and the
/// running sanity bound.
pub struct EpisodeBonusState {
    visits: HashMap<StateKey, u64>,
    memory: RecurrentState<f64>,
    total: f64,
    bound_sum: f64,
    max_kl: f64,
}

/// Bonus hook used by the phase-2 trainer.
pub struct TransferHook<'a> {
    pub mode: BonusMode,
    pub beta: f64,
    frozen: Option<&'a FrozenBonusModel>,
    table: VisitationTable,
}

impl<'a> TransferHook<'a> {
    pub fn new(mode: BonusMode, beta: f64, frozen: Option<&'a FrozenBonusModel>) -> Result<Self, TrainError> {
        if mode == BonusMode::InfobotKl && frozen.is_none() {
            return Err(TrainError::Config("infobot_kl bonus needs a frozen phase-1 model".into()));
        }
        if !(beta >= 0.0) {
            return Err(TrainError::Config("transfer beta must be nonnegative".into()));
        }
        Ok(Self {
            mode,
            beta,
            frozen,
            table: VisitationTable::new(),
        })
    }

    pub fn table(&self) -> &VisitationTable {
        &self.table
    }

    pub fn into_table(self) -> VisitationTable {
        self.table
    }
}

impl StepHook for TransferHook<'_> {
    type Local = EpisodeBonusState;

    fn begin_episode(&self) -> EpisodeBonusState {
        EpisodeBonusState {
            visits: HashMap::new(),
            memory: self.frozen.map(FrozenBonusModel::initial_memory).unwrap_or(RecurrentState { h: Vec::new() }),
            total: 0.0,
            bound_sum: 0.0,
            max_kl: 0.0,
        }
    }

    fn bonus(&self, local: &mut EpisodeBonusState, key: Option<&StateKey>, obs: &[f64], goal: &[f64]) -> Result<f64, TrainError> {
        // Counts are tracked in every mode so visitation metrics are comparable.
        let count = match key {
            Some(k) => {
                let seen = local.visits.entry(k.clone()).or_insert(0);
                let c = self.table.count(k) + *seen;
                *seen += 1;
                c
            }
            None => 1,
        };
        let b = match self.mode {
            BonusMode::None => 0.0,
            BonusMode::CountOnly => count_bonus(self.beta, count),
            BonusMode::InfobotKl => {
                let frozen = self.frozen.expect("checked in new");
                let (kl, next) = frozen.kl(obs, goal, &local.memory)?;
                local.memory = next;
                local.max_kl = local.max_kl.max(kl);
                bonus(self.beta, kl, count)
            }
        };
        local.total += b;
        local.bound_sum += count_bonus(self.beta, count);
        Ok(b)
    }

    fn end_batch(&mut self, locals: Vec<EpisodeBonusState>) {
        for l in locals {
            let bound = match self.mode {
                BonusMode::InfobotKl => l.bound_sum * l.max_kl,
                BonusMode::CountOnly => l.bound_sum,
                BonusMode::None => 0.0,
            };
            if !l.total.is_finite() || l.total > bound * (1.0 + 1e-9) + 1e-12 {
                log::warn!("episode bonus {} exceeds its bound {}", l.total, bound);
            }
            self.table.merge(l.visits);
        }
    }

    fn distinct_states(&self) -> Option<u64> {
        Some(self.table.distinct() as u64)
    }
}

/// Outcome of a phase-2 run.
#[derive(Debug)]
pub struct TransferOutcome {
    pub train: TrainOutcome,
    pub table: VisitationTable,
}

/// Trains a fresh policy on `task` with the requested exploration bonus.
/// The frozen model is only read.
pub fn train_transfer_policy(
    task: &dyn Task,
    policy_config: PolicyConfig,
    config: TrainConfig,
    mode: BonusMode,
    transfer_beta: f64,
    frozen: Option<&FrozenBonusModel>,
    writer: Option<&mut MetricsWriter>,
) -> Result<TransferOutcome, TrainError> {
    if let (BonusMode::InfobotKl, Some(f)) = (mode, frozen) {
        if f.config().obs_width != task.obs_width() || f.config().goal_width != task.goal_width() {
            return Err(TrainError::Config("frozen encoder input widths do not match the transfer task".into()));
        }
    }
    let mut hook = TransferHook::new(mode, transfer_beta, frozen)?;
    let policy = Policy::new(policy_config, config.seed)?;
    let train = train_with_hook(task, Learner::new(policy, config)?, &mut hook, writer, true)?;
    Ok(TransferOutcome {
        train,
        table: hook.into_table(),
    })
}
