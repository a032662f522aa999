use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::{collect_rollout, Learner, MetricsRow, MetricsWriter, NoHook, StepHook, Task, TrainConfig, TrainError, TransferColumns, Trajectory};
use crate::policy::{Policy, PolicyConfig};

/// Result of a training run.
#[derive(Debug)]
pub struct TrainOutcome {
    pub learner: Learner,
    pub metrics: Vec<MetricsRow>,
    pub env_steps: u64,
    pub episodes: u64,
    /// Source of all episode seeds; its final position goes into checkpoints.
    pub rng: ChaCha8Rng,
}

/// Rng for one episode, derived from a seed drawn off the run's master stream.
pub fn episode_rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

#[derive(Default)]
struct Window {
    episodes: u64,
    successes: u64,
    env_return: f64,
    steps: u64,
    kl: f64,
    entropy: f64,
    bonus: f64,
}

impl Window {
    fn add(&mut self, t: &Trajectory) {
        self.episodes += 1;
        self.successes += t.success as u64;
        self.env_return += t.env_return();
        for s in &t.steps {
            self.steps += 1;
            self.kl += s.kl;
            self.entropy += s.entropy;
            self.bonus += s.bonus;
        }
    }
}

/// Trains a fresh bottleneck policy on `task` without any exploration bonus.
pub fn train_bottleneck_policy(
    task: &dyn Task,
    policy_config: PolicyConfig,
    config: TrainConfig,
    writer: Option<&mut MetricsWriter>,
) -> Result<TrainOutcome, TrainError> {
    let policy = Policy::new(policy_config, config.seed)?;
    train_with_hook(task, Learner::new(policy, config)?, &mut NoHook, writer, false)
}

/// Synchronous batched actor-critic loop. Each batch runs `workers` episodes
/// in parallel on the current parameters, then applies one update.
/// Results depend only on the seed and worker count.
pub fn train_with_hook<H: StepHook>(
    task: &dyn Task,
    mut learner: Learner,
    hook: &mut H,
    mut writer: Option<&mut MetricsWriter>,
    transfer_columns: bool,
) -> Result<TrainOutcome, TrainError> {
    let cfg = learner.config.clone();
    cfg.validate()?;
    let pc = learner.policy.config();
    if pc.obs_width != task.obs_width() || pc.goal_width != task.goal_width() || pc.action_count != task.action_count() {
        return Err(TrainError::Config(format!(
            "policy widths (obs {}, goal {}, actions {}) do not match the task ({}, {}, {})",
            pc.obs_width,
            pc.goal_width,
            pc.action_count,
            task.obs_width(),
            task.goal_width(),
            task.action_count()
        )));
    }
    let mut master = ChaCha8Rng::seed_from_u64(cfg.seed);
    let seeds = task.train_seeds();
    let max_episodes = cfg.max_episodes.unwrap_or(u64::MAX);
    let started = Instant::now();
    let (mut env_steps, mut episodes) = (0u64, 0u64);
    let mut window = Window::default();
    let mut next_log = cfg.log_interval;
    let mut metrics = Vec::new();

    while env_steps < cfg.total_steps && episodes < max_episodes {
        let n = (cfg.workers as u64).min(max_episodes - episodes) as usize;
        let jobs: Vec<(u64, u64)> = (0..n)
            .map(|_| (master.random_range(seeds.clone()), master.random::<u64>()))
            .collect();
        let policy = &learner.policy;
        let shared: &H = hook;
        let results = jobs
            .par_iter()
            .map(|&(level_seed, rng_seed)| {
                let mut rng = episode_rng(rng_seed);
                let mut local = shared.begin_episode();
                let traj = collect_rollout(task, policy, level_seed, &mut rng, shared, &mut local)?;
                Ok((traj, local))
            })
            .collect::<Result<Vec<_>, TrainError>>()?;
        let (batch, locals): (Vec<_>, Vec<_>) = results.into_iter().unzip();
        hook.end_batch(locals);
        learner.update(&batch)?;

        for t in &batch {
            window.add(t);
            env_steps += t.len() as u64;
        }
        episodes += n as u64;
        let finished = env_steps >= cfg.total_steps || episodes >= max_episodes;
        if env_steps >= next_log || (finished && window.episodes > 0) {
            let steps = window.steps.max(1) as f64;
            let row = MetricsRow {
                step: env_steps,
                episodes,
                success_rate: window.successes as f64 / window.episodes as f64,
                mean_return: window.env_return / window.episodes as f64,
                mean_kl: window.kl / steps,
                mean_entropy: window.entropy / steps,
                wall_clock_s: if cfg.wall_clock { started.elapsed().as_secs_f64() } else { 0.0 },
                transfer: transfer_columns.then(|| TransferColumns {
                    mean_bonus: window.bonus / steps,
                    distinct_states: hook.distinct_states().unwrap_or(0),
                }),
            };
            log::info!(
                "step {} episodes {} success {:.3} kl {:.4}",
                row.step,
                row.episodes,
                row.success_rate,
                row.mean_kl
            );
            if let Some(w) = writer.as_deref_mut() {
                w.write_row(&row)?;
            }
            metrics.push(row);
            window = Window::default();
            next_log = (env_steps / cfg.log_interval + 1) * cfg.log_interval;
        }
    }
    Ok(TrainOutcome {
        learner,
        metrics,
        env_steps,
        episodes,
        rng: master,
    })
}
