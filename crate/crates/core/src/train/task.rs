use std::sync::Arc;

use super::TrainError;
use crate::envs::{generate, Action, EnvState, Family, Observation, StateKey, GOAL_WIDTH};

/// Outcome of one environment transition.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Transition {
    pub reward: f64,
    pub done: bool,
    pub success: bool,
}

/// A single running episode, seen through flattened policy inputs.
pub trait Episode: Send {
    /// Writes the current observation features and goal vector.
    fn observe(&self, obs: &mut Vec<f64>, goal: &mut Vec<f64>);
    fn step(&mut self, action: usize) -> Result<Transition, TrainError>;
    /// Visitation key of the current state, when the task defines one.
    fn state_key(&self) -> Option<StateKey>;
}

/// A distribution over episodes indexed by a generation seed.
pub trait Task: Sync {
    fn obs_width(&self) -> usize;
    fn goal_width(&self) -> usize;
    fn action_count(&self) -> usize;
    /// Seed range that training episodes are drawn from.
    fn train_seeds(&self) -> std::ops::Range<u64>;
    fn episode(&self, seed: u64) -> Result<Box<dyn Episode>, TrainError>;
}

/// Training seeds `[0, 10^6)`.
pub const TRAIN_SEEDS: std::ops::Range<u64> = 0..1_000_000;
/// Held-out evaluation seeds `[10^6, 10^6 + 10^4)`.
pub const EVAL_SEEDS: std::ops::Range<u64> = 1_000_000..1_010_000;

/// Procedurally generated gridworld levels of one family.
#[derive(Clone, Debug, PartialEq)]
pub struct GridTask {
    pub family: Family,
    pub max_steps: Option<usize>,
    pub discounted_reward: bool,
}

impl GridTask {
    pub fn new(family: Family) -> Self {
        Self {
            family,
            max_steps: None,
            discounted_reward: false,
        }
    }

    pub fn env(&self, seed: u64) -> Result<EnvState, TrainError> {
        let level = generate(self.family, seed)?;
        let max_steps = self.max_steps.unwrap_or_else(|| self.family.default_max_steps());
        Ok(EnvState::new(Arc::new(level), max_steps).with_discounted_reward(self.discounted_reward))
    }
}

struct GridEpisode {
    env: EnvState,
}

impl Episode for GridEpisode {
    fn observe(&self, obs: &mut Vec<f64>, goal: &mut Vec<f64>) {
        self.env.observe().features(obs);
        self.env.goal().to_vector(goal);
    }

    fn step(&mut self, action: usize) -> Result<Transition, TrainError> {
        let action = Action::from_index(action).ok_or(TrainError::Action(action))?;
        let r = self.env.step(action)?;
        Ok(Transition {
            reward: r.reward,
            done: r.done,
            success: r.success,
        })
    }

    fn state_key(&self) -> Option<StateKey> {
        Some(self.env.state_key())
    }
}

impl Task for GridTask {
    fn obs_width(&self) -> usize {
        Observation::feature_width(self.family.view_size())
    }

    fn goal_width(&self) -> usize {
        GOAL_WIDTH
    }

    fn action_count(&self) -> usize {
        Action::COUNT
    }

    fn train_seeds(&self) -> std::ops::Range<u64> {
        TRAIN_SEEDS
    }

    fn episode(&self, seed: u64) -> Result<Box<dyn Episode>, TrainError> {
        Ok(Box::new(GridEpisode { env: self.env(seed)? }))
    }
}

/// One-state contextual bandit: the goal is a one-hot over `goals` arms and
/// pulling the matching arm pays 1. Every episode lasts a single step.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Bandit {
    pub goals: usize,
}

impl Bandit {
    pub fn goal_of(&self, seed: u64) -> usize {
        (seed % self.goals as u64) as usize
    }
}

struct BanditEpisode {
    goal: usize,
    goals: usize,
    done: bool,
}

impl Episode for BanditEpisode {
    fn observe(&self, obs: &mut Vec<f64>, goal: &mut Vec<f64>) {
        obs.clear();
        obs.push(1.0);
        goal.clear();
        goal.resize(self.goals, 0.0);
        goal[self.goal] = 1.0;
    }

    fn step(&mut self, action: usize) -> Result<Transition, TrainError> {
        if self.done {
            return Err(TrainError::Env(crate::envs::EnvError::EpisodeOver));
        }
        if action >= self.goals {
            return Err(TrainError::Action(action));
        }
        self.done = true;
        let success = action == self.goal;
        Ok(Transition {
            reward: if success { 1.0 } else { 0.0 },
            done: true,
            success,
        })
    }

    fn state_key(&self) -> Option<StateKey> {
        Some(StateKey("bandit@0".into()))
    }
}

impl Task for Bandit {
    fn obs_width(&self) -> usize {
        1
    }

    fn goal_width(&self) -> usize {
        self.goals
    }

    fn action_count(&self) -> usize {
        self.goals
    }

    fn train_seeds(&self) -> std::ops::Range<u64> {
        TRAIN_SEEDS
    }

    fn episode(&self, seed: u64) -> Result<Box<dyn Episode>, TrainError> {
        Ok(Box::new(BanditEpisode {
            goal: self.goal_of(seed),
            goals: self.goals,
            done: false,
        }))
    }
}
