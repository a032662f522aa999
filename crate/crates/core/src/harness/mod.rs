//! Config-driven experiment runs, evaluation and map exports.

mod config;
mod maps;

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::envs::{generate, EnvError, StateKey};
use crate::oracle::{random_task, verify_bound_chain, BoundReport, LinearSoftmaxPolicy, OracleError};
use crate::policy::{Checkpoint, Policy, PolicyError};
use crate::train::{run_episode, train_bottleneck_policy, MetricsWriter, Task, TrainError, EVAL_SEEDS};
use crate::transfer::{train_transfer_policy, BonusMode, FrozenBonusModel, VisitationTable};

pub use config::{
    seeded_path, ConfigError, EnvSpec, EvalSettings, ExperimentConfig, MapSettings, OracleSettings, Phase, PolicyOverrides,
    TransferSettings, KEYS,
};
pub use maps::{doorway_split, export_kl_heatmap, export_visitation_map, Grid, BLOCKED};

/// Version recorded in run manifests.
pub const VERSION: &str = concat!("bottleneck-core ", env!("CARGO_PKG_VERSION"));

#[derive(Debug, thiserror::Error)]
pub enum HarnessError {
    #[error("invalid config: {0}")]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Train(#[from] TrainError),
    #[error(transparent)]
    Policy(#[from] PolicyError),
    #[error(transparent)]
    Oracle(#[from] OracleError),
    #[error(transparent)]
    Env(#[from] EnvError),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{0}")]
    Runtime(String),
}

impl HarnessError {
    /// 2 for config problems, 1 for everything else.
    pub fn exit_code(&self) -> i32 {
        match self {
            HarnessError::Config(_) => 2,
            _ => 1,
        }
    }
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> HarnessError + '_ {
    move |source| HarnessError::Io {
        path: path.to_owned(),
        source,
    }
}

/// Evaluation on one run seed.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SeedEval {
    pub seed: u64,
    pub success_rate: f64,
    pub successes: usize,
    pub episodes: usize,
    pub mean_length: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalResult {
    pub success_rate: f64,
    pub episodes: usize,
    pub mean_length: f64,
    pub per_seed: Vec<SeedEval>,
}

impl EvalResult {
    pub fn from_seeds(per_seed: Vec<SeedEval>) -> Self {
        let episodes: usize = per_seed.iter().map(|s| s.episodes).sum();
        let successes: usize = per_seed.iter().map(|s| s.successes).sum();
        let length: f64 = per_seed.iter().map(|s| s.mean_length * s.episodes as f64).sum();
        let n = episodes.max(1) as f64;
        Self {
            success_rate: successes as f64 / n,
            episodes,
            mean_length: length / n,
            per_seed,
        }
    }
}

/// `n` distinct held-out level seeds chosen by `seed`.
pub fn eval_level_seeds(seed: u64, n: usize) -> Vec<u64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let span = (EVAL_SEEDS.end - EVAL_SEEDS.start) as usize;
    sample(&mut rng, span, n.min(span))
        .into_iter()
        .map(|i| EVAL_SEEDS.start + i as u64)
        .collect()
}

/// Greedy-action evaluation on `n_episodes` held-out levels picked by `seed`.
pub fn evaluate(policy: &Policy<f64>, task: &dyn Task, n_episodes: usize, seed: u64) -> Result<SeedEval, HarnessError> {
    let pc = policy.config();
    if pc.obs_width != task.obs_width() || pc.goal_width != task.goal_width() || pc.action_count != task.action_count() {
        return Err(HarnessError::Runtime(format!(
            "checkpoint architecture (obs {}, goal {}, actions {}) does not match the environment ({}, {}, {})",
            pc.obs_width,
            pc.goal_width,
            pc.action_count,
            task.obs_width(),
            task.goal_width(),
            task.action_count()
        )));
    }
    let levels = eval_level_seeds(seed, n_episodes);
    let results = levels
        .par_iter()
        .map(|&level| {
            let mut rng = ChaCha8Rng::seed_from_u64(level ^ seed.rotate_left(32));
            run_episode(task, policy, level, &mut rng, false)
        })
        .collect::<Result<Vec<_>, _>>()?;
    let successes = results.iter().filter(|r| r.0).count();
    let total_len: usize = results.iter().map(|r| r.1).sum();
    let n = results.len().max(1) as f64;
    Ok(SeedEval {
        seed,
        success_rate: successes as f64 / n,
        successes,
        episodes: results.len(),
        mean_length: total_len as f64 / n,
    })
}

/// Pass counts of an oracle run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OracleSummary {
    pub tasks: usize,
    pub passed: usize,
    pub all_pass: bool,
}

/// Summary of a finished [`run_experiment`] call.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub version: String,
    pub phase: String,
    pub config_hash: String,
    pub seeds: Vec<u64>,
    pub files: Vec<String>,
    pub eval: Option<EvalResult>,
    pub oracle: Option<OracleSummary>,
}

struct Out {
    dir: PathBuf,
    files: Vec<String>,
}

impl Out {
    fn path(&mut self, name: &str) -> PathBuf {
        if !self.files.iter().any(|f| f == name) {
            self.files.push(name.to_owned());
        }
        self.dir.join(name)
    }

    fn write(&mut self, name: &str, bytes: impl AsRef<[u8]>) -> Result<(), HarnessError> {
        let p = self.path(name);
        fs::write(&p, bytes).map_err(io_err(&p))
    }

    fn metrics(&mut self, name: &str, transfer: bool) -> Result<MetricsWriter, HarnessError> {
        let p = self.path(name);
        let f = fs::File::create(&p).map_err(io_err(&p))?;
        MetricsWriter::new(Box::new(std::io::BufWriter::new(f)), transfer).map_err(io_err(&p))
    }
}

fn read_checkpoint(path: &Path) -> Result<Checkpoint, HarnessError> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    Ok(Checkpoint::from_json(&text)?)
}

fn require_file(key: &str, path: &Option<PathBuf>, seed: u64) -> Result<PathBuf, ConfigError> {
    let template = path.as_ref().ok_or_else(|| ConfigError::new(key, "required for this phase"))?;
    let p = seeded_path(template, seed);
    if !p.is_file() {
        return Err(ConfigError::new(key, format!("{} does not exist", p.display())));
    }
    Ok(p)
}

/// Checks that every file the phase reads exists.
pub fn check_inputs(phase: Phase, cfg: &ExperimentConfig) -> Result<(), ConfigError> {
    for &seed in &cfg.seeds {
        match phase {
            Phase::Transfer if cfg.transfer.bonus == BonusMode::InfobotKl => {
                require_file("transfer.checkpoint", &cfg.transfer.checkpoint, seed)?;
            }
            Phase::Evaluate => {
                require_file("eval.checkpoint", &cfg.eval.checkpoint, seed)?;
            }
            Phase::Heatmap => {
                require_file("map.checkpoint", &cfg.map.checkpoint, seed)?;
            }
            Phase::Visitmap => {
                require_file("map.table", &cfg.map.table, seed)?;
            }
            _ => {}
        }
    }
    if matches!(phase, Phase::Heatmap | Phase::Visitmap) && cfg.test_env().family().is_none() {
        return Err(ConfigError::new("env.family", "maps need a gridworld family"));
    }
    Ok(())
}

/// Visit counts as a sorted JSON object.
pub fn visits_to_json(table: &VisitationTable) -> String {
    let sorted: BTreeMap<String, u64> = table.visits_sorted().into_iter().map(|(k, v)| (k.0, v)).collect();
    serde_json::to_string(&sorted).expect("visits serialize")
}

pub fn visits_from_json(text: &str) -> Result<VisitationTable, HarnessError> {
    let map: BTreeMap<String, u64> = serde_json::from_str(text).map_err(|e| HarnessError::Runtime(format!("visitation table: {e}")))?;
    Ok(VisitationTable::from_visits(map.into_iter().map(|(k, v)| (StateKey(k), v))))
}

/// Runs `phase` for every seed of `cfg`, writing artifacts and a manifest
/// into `out_dir`. Identical configs produce identical files.
pub fn run_experiment(phase: Phase, cfg: &ExperimentConfig, out_dir: &Path) -> Result<Manifest, HarnessError> {
    check_inputs(phase, cfg)?;
    fs::create_dir_all(out_dir).map_err(io_err(out_dir))?;
    let mut out = Out {
        dir: out_dir.to_owned(),
        files: Vec::new(),
    };
    out.write("config.txt", cfg.canonical())?;
    let mut per_seed = Vec::new();
    let mut oracle = None;

    match phase {
        Phase::Train => {
            for &seed in &cfg.seeds {
                let train = crate::train::TrainConfig { seed, ..cfg.train.clone() };
                let mut writer = out.metrics(&format!("metrics_seed{seed}.csv"), false)?;
                let outcome = train_bottleneck_policy(cfg.env.task(), cfg.policy.build(&cfg.env), train, Some(&mut writer))?;
                let ck = Checkpoint::from_policy(&outcome.learner.policy, Some(&outcome.rng), outcome.learner.updates);
                out.write(&format!("checkpoint_seed{seed}.json"), ck.to_json())?;
                if cfg.eval.episodes > 0 {
                    per_seed.push(evaluate(&outcome.learner.policy, cfg.test_env().task(), cfg.eval.episodes, seed)?);
                }
            }
        }
        Phase::Transfer => {
            for &seed in &cfg.seeds {
                let frozen = match cfg.transfer.bonus {
                    BonusMode::InfobotKl => {
                        let p = seeded_path(cfg.transfer.checkpoint.as_ref().expect("checked"), seed);
                        Some(FrozenBonusModel::from_checkpoint(&read_checkpoint(&p)?)?)
                    }
                    _ => None,
                };
                // The transferred policy itself is trained without the KL penalty.
                let train = crate::train::TrainConfig {
                    seed,
                    beta: 0.0,
                    ..cfg.train.clone()
                };
                let env = cfg.test_env();
                let mut writer = out.metrics(&format!("metrics_seed{seed}.csv"), true)?;
                let res = train_transfer_policy(
                    env.task(),
                    cfg.policy.build(env),
                    train,
                    cfg.transfer.bonus,
                    cfg.transfer.beta,
                    frozen.as_ref(),
                    Some(&mut writer),
                )?;
                let ck = Checkpoint::from_policy(&res.train.learner.policy, Some(&res.train.rng), res.train.learner.updates);
                out.write(&format!("checkpoint_seed{seed}.json"), ck.to_json())?;
                out.write(&format!("visits_seed{seed}.json"), visits_to_json(&res.table))?;
                if cfg.eval.episodes > 0 {
                    per_seed.push(evaluate(&res.train.learner.policy, env.task(), cfg.eval.episodes, seed)?);
                }
            }
        }
        Phase::Evaluate => {
            let n = if cfg.eval.episodes == 0 { 100 } else { cfg.eval.episodes };
            for &seed in &cfg.seeds {
                let p = seeded_path(cfg.eval.checkpoint.as_ref().expect("checked"), seed);
                let policy: Policy<f64> = read_checkpoint(&p)?.to_policy()?;
                per_seed.push(evaluate(&policy, cfg.test_env().task(), n, seed)?);
            }
        }
        Phase::Oracle => {
            let o = &cfg.oracle;
            let (mut tasks, mut passed) = (0, 0);
            for &seed in &cfg.seeds {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let mut lines = String::new();
                for _ in 0..o.tasks {
                    let task = random_task::<f64, _>(&mut rng, o.max_states, o.max_goals, o.max_actions);
                    let policy = LinearSoftmaxPolicy::random(&task, &mut rng);
                    let report: BoundReport = verify_bound_chain(&task, &policy)?;
                    tasks += 1;
                    passed += report.pass as usize;
                    lines.push_str(&report.to_json());
                    lines.push('\n');
                }
                out.write(&format!("bound_reports_seed{seed}.jsonl"), lines)?;
            }
            let summary = OracleSummary {
                tasks,
                passed,
                all_pass: tasks == passed,
            };
            out.write("oracle_summary.json", serde_json::to_string_pretty(&summary).expect("serializes"))?;
            oracle = Some(summary);
        }
        Phase::Heatmap | Phase::Visitmap => {
            let family = cfg.test_env().family().expect("checked");
            let level = generate(family, cfg.map.level_seed)?;
            out.write("level.txt", level.to_text())?;
            out.write("level.jsonl", format!("{}\n", level.meta_json()))?;
            let seed = cfg.seeds[0];
            let (grid, name) = if phase == Phase::Heatmap {
                let p = seeded_path(cfg.map.checkpoint.as_ref().expect("checked"), seed);
                let model = FrozenBonusModel::from_checkpoint(&read_checkpoint(&p)?)?;
                (export_kl_heatmap(&model, &level)?, "heatmap")
            } else {
                let p = seeded_path(cfg.map.table.as_ref().expect("checked"), seed);
                let table = visits_from_json(&fs::read_to_string(&p).map_err(io_err(&p))?)?;
                (export_visitation_map(&table, &level), "visitmap")
            };
            out.write(&format!("{name}.csv"), grid.to_csv())?;
            if cfg.map.image {
                out.write(&format!("{name}.pgm"), grid.to_pgm())?;
            }
        }
    }

    let eval = (!per_seed.is_empty()).then(|| EvalResult::from_seeds(per_seed));
    if let Some(e) = &eval {
        out.write("eval.json", serde_json::to_string_pretty(e).expect("serializes"))?;
    }
    out.files.push("manifest.json".into());
    let manifest = Manifest {
        version: VERSION.to_owned(),
        phase: phase.name().to_owned(),
        config_hash: cfg.hash(),
        seeds: cfg.seeds.clone(),
        files: out.files.clone(),
        eval,
        oracle,
    };
    out.write("manifest.json", serde_json::to_string_pretty(&manifest).expect("serializes"))?;
    Ok(manifest)
}

/// Loads a config file, applies a seed override and runs the phase.
pub fn run_config_file(phase: Phase, config: &Path, out_dir: &Path, seed: Option<u64>) -> Result<Manifest, HarnessError> {
    let mut cfg = ExperimentConfig::load(config)?;
    if let Some(p) = cfg.phase {
        if p != phase {
            return Err(ConfigError::new("phase", format!("config is for {}, not {}", p.name(), phase.name())).into());
        }
    }
    if let Some(s) = seed {
        cfg = cfg.with_seed(s);
    }
    run_experiment(phase, &cfg, out_dir)
}
