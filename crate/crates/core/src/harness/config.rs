//! Flat `key = value` experiment configs with dotted sections.
//!
//! ```text
//! # phase-1 on two rooms
//! seeds = 0, 1, 2
//! env.family = multiroom
//! env.n = 2
//! env.s = 4
//! train.beta = 0.01
//! ```
//!
//! Values are unquoted; `#` starts a comment. Unknown keys are rejected.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use sha2::{Digest, Sha256};

use crate::envs::Family;
use crate::policy::PolicyConfig;
use crate::train::{Bandit, GridTask, KlSignMode, Task, TrainConfig};
use crate::transfer::BonusMode;

/// A config problem tied to one key.
#[derive(Clone, Debug, PartialEq, Eq, thiserror::Error)]
#[error("{key}: {message}")]
pub struct ConfigError {
    pub key: String,
    pub message: String,
}

impl ConfigError {
    pub fn new(key: impl Into<String>, message: impl Into<String>) -> Self {
        Self {
            key: key.into(),
            message: message.into(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Phase {
    Train,
    Transfer,
    Evaluate,
    Oracle,
    Heatmap,
    Visitmap,
}

impl FromStr for Phase {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        Ok(match s {
            "train" => Phase::Train,
            "transfer" => Phase::Transfer,
            "evaluate" => Phase::Evaluate,
            "oracle" => Phase::Oracle,
            "heatmap" => Phase::Heatmap,
            "visitmap" => Phase::Visitmap,
            other => return Err(format!("unknown phase {other:?}")),
        })
    }
}

impl Phase {
    pub fn name(self) -> &'static str {
        match self {
            Phase::Train => "train",
            Phase::Transfer => "transfer",
            Phase::Evaluate => "evaluate",
            Phase::Oracle => "oracle",
            Phase::Heatmap => "heatmap",
            Phase::Visitmap => "visitmap",
        }
    }
}

/// Which episode distribution a section describes.
#[derive(Clone, Debug, PartialEq)]
pub enum EnvSpec {
    Grid(GridTask),
    Bandit(Bandit),
}

impl EnvSpec {
    pub fn task(&self) -> &dyn Task {
        match self {
            EnvSpec::Grid(t) => t,
            EnvSpec::Bandit(b) => b,
        }
    }

    pub fn family(&self) -> Option<Family> {
        match self {
            EnvSpec::Grid(t) => Some(t.family),
            EnvSpec::Bandit(_) => None,
        }
    }
}

/// Optional architecture overrides; unset fields keep per-family defaults.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct PolicyOverrides {
    pub latent_dim: Option<usize>,
    pub state_dim: Option<usize>,
    pub encoder_hidden: Option<Vec<usize>>,
    pub decoder_hidden: Option<Vec<usize>>,
    pub value_hidden: Option<Vec<usize>>,
    pub recurrent: Option<bool>,
}

impl PolicyOverrides {
    /// Architecture for `env`: 64-wide layers, recurrent only for the
    /// chained-rooms family, then the overrides.
    pub fn build(&self, env: &EnvSpec) -> PolicyConfig {
        let task = env.task();
        let recurrent = matches!(env.family(), Some(Family::MultiRoom { .. }));
        let mut pc = PolicyConfig {
            latent_dim: 64,
            state_dim: 64,
            encoder_hidden: vec![64],
            decoder_hidden: vec![64],
            value_hidden: vec![64],
            recurrent,
            obs_width: task.obs_width(),
            goal_width: task.goal_width(),
            action_count: task.action_count(),
        };
        if let Some(v) = self.latent_dim {
            pc.latent_dim = v;
        }
        if let Some(v) = self.state_dim {
            pc.state_dim = v;
        }
        if let Some(v) = &self.encoder_hidden {
            pc.encoder_hidden = v.clone();
        }
        if let Some(v) = &self.decoder_hidden {
            pc.decoder_hidden = v.clone();
        }
        if let Some(v) = &self.value_hidden {
            pc.value_hidden = v.clone();
        }
        if let Some(v) = self.recurrent {
            pc.recurrent = v;
        }
        pc
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TransferSettings {
    pub bonus: BonusMode,
    pub beta: f64,
    /// Phase-1 checkpoint; `{seed}` is replaced by the run seed.
    pub checkpoint: Option<PathBuf>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct EvalSettings {
    /// Episodes per seed; 0 skips evaluation after training.
    pub episodes: usize,
    pub checkpoint: Option<PathBuf>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct OracleSettings {
    pub tasks: usize,
    pub max_states: usize,
    pub max_goals: usize,
    pub max_actions: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct MapSettings {
    pub checkpoint: Option<PathBuf>,
    pub table: Option<PathBuf>,
    pub level_seed: u64,
    pub image: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentConfig {
    pub phase: Option<Phase>,
    pub seeds: Vec<u64>,
    pub env: EnvSpec,
    /// Evaluation / transfer distribution; defaults to `env`.
    pub test_env: Option<EnvSpec>,
    pub policy: PolicyOverrides,
    pub train: TrainConfig,
    pub transfer: TransferSettings,
    pub eval: EvalSettings,
    pub oracle: OracleSettings,
    pub map: MapSettings,
    /// Normalised key/value pairs, used for the config hash.
    pub entries: BTreeMap<String, String>,
}

/// Every accepted key.
pub const KEYS: &[&str] = &[
    "phase",
    "seeds",
    "env.family",
    "env.n",
    "env.s",
    "env.width",
    "env.height",
    "env.goals",
    "env.max_steps",
    "env.discounted_reward",
    "test_env.family",
    "test_env.n",
    "test_env.s",
    "test_env.width",
    "test_env.height",
    "test_env.goals",
    "test_env.max_steps",
    "test_env.discounted_reward",
    "policy.latent_dim",
    "policy.state_dim",
    "policy.hidden",
    "policy.encoder_hidden",
    "policy.decoder_hidden",
    "policy.value_hidden",
    "policy.recurrent",
    "train.beta",
    "train.gamma",
    "train.lr",
    "train.rms_decay",
    "train.rms_eps",
    "train.workers",
    "train.steps",
    "train.episodes",
    "train.entropy_coef",
    "train.value_coef",
    "train.max_grad_norm",
    "train.baseline",
    "train.kl_sign_mode",
    "train.log_interval",
    "transfer.bonus",
    "transfer.beta",
    "transfer.checkpoint",
    "eval.episodes",
    "eval.checkpoint",
    "oracle.tasks",
    "oracle.max_states",
    "oracle.max_goals",
    "oracle.max_actions",
    "map.checkpoint",
    "map.table",
    "map.level_seed",
    "map.image",
    "output.wall_clock",
];

struct Entries<'a> {
    map: &'a BTreeMap<String, String>,
}

impl Entries<'_> {
    fn raw(&self, key: &str) -> Option<&str> {
        self.map.get(key).map(String::as_str)
    }

    fn parse<T: FromStr>(&self, key: &str, what: &str) -> Result<Option<T>, ConfigError> {
        match self.raw(key) {
            None => Ok(None),
            Some(v) => v
                .parse()
                .map(Some)
                .map_err(|_| ConfigError::new(key, format!("expected {what}, got {v:?}"))),
        }
    }

    fn num(&self, key: &str) -> Result<Option<f64>, ConfigError> {
        let v = self.parse::<f64>(key, "a number")?;
        match v {
            Some(x) if !x.is_finite() => Err(ConfigError::new(key, "must be finite")),
            _ => Ok(v),
        }
    }

    fn int(&self, key: &str) -> Result<Option<u64>, ConfigError> {
        self.parse::<u64>(key, "a nonnegative integer")
    }

    fn size(&self, key: &str) -> Result<Option<usize>, ConfigError> {
        self.parse::<usize>(key, "a nonnegative integer")
    }

    fn flag(&self, key: &str) -> Result<Option<bool>, ConfigError> {
        self.parse::<bool>(key, "true or false")
    }

    fn list<T: FromStr>(&self, key: &str, what: &str) -> Result<Option<Vec<T>>, ConfigError> {
        match self.raw(key) {
            None => Ok(None),
            Some(v) => v
                .split(',')
                .map(|p| p.trim().parse::<T>())
                .collect::<Result<Vec<_>, _>>()
                .map(Some)
                .map_err(|_| ConfigError::new(key, format!("expected a comma-separated list of {what}, got {v:?}"))),
        }
    }

    fn path(&self, key: &str, base: &Path) -> Option<PathBuf> {
        self.raw(key).map(|p| {
            let p = PathBuf::from(p);
            if p.is_absolute() {
                p
            } else {
                base.join(p)
            }
        })
    }
}

fn env_section(e: &Entries<'_>, prefix: &str) -> Result<Option<EnvSpec>, ConfigError> {
    let key = |k: &str| format!("{prefix}.{k}");
    let Some(family) = e.raw(&key("family")) else {
        if let Some(k) = e.map.keys().find(|k| k.starts_with(&format!("{prefix}."))) {
            return Err(ConfigError::new(k.clone(), format!("needs {prefix}.family")));
        }
        return Ok(None);
    };
    let require = |k: &str| -> Result<usize, ConfigError> {
        e.size(&key(k))?
            .ok_or_else(|| ConfigError::new(key(k), format!("required for family {family}")))
    };
    let family = match family {
        "multiroom" => Family::MultiRoom {
            rooms: require("n")?,
            max_room_size: require("s")?,
        },
        "findobj" => Family::FindObj { room_size: require("s")? },
        "minipacman" => Family::MiniPacMan {
            width: require("width")?,
            height: require("height")?,
        },
        "bandit" => {
            let goals = e.size(&key("goals"))?.unwrap_or(2);
            if goals < 2 {
                return Err(ConfigError::new(key("goals"), "needs at least 2 goals"));
            }
            return Ok(Some(EnvSpec::Bandit(Bandit { goals })));
        }
        other => {
            return Err(ConfigError::new(
                key("family"),
                format!("unknown family {other:?} (expected multiroom, findobj, minipacman or bandit)"),
            ))
        }
    };
    // Validate the size parameters by generating one level.
    crate::envs::generate(family, 0).map_err(|err| ConfigError::new(key("family"), err.to_string()))?;
    let max_steps = e.size(&key("max_steps"))?;
    if max_steps == Some(0) {
        return Err(ConfigError::new(key("max_steps"), "must be positive"));
    }
    Ok(Some(EnvSpec::Grid(GridTask {
        family,
        max_steps,
        discounted_reward: e.flag(&key("discounted_reward"))?.unwrap_or(false),
    })))
}

fn hidden_list(e: &Entries<'_>, key: &str, shared: &Option<Vec<usize>>) -> Result<Option<Vec<usize>>, ConfigError> {
    let v = e.list::<usize>(key, "layer sizes")?.or_else(|| shared.clone());
    if let Some(l) = &v {
        if l.contains(&0) {
            return Err(ConfigError::new(key, "layer sizes must be positive"));
        }
    }
    Ok(v)
}

impl ExperimentConfig {
    /// Parses config text; relative paths resolve against `base`.
    pub fn parse(text: &str, base: &Path) -> Result<Self, ConfigError> {
        let mut map = BTreeMap::new();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let Some((k, v)) = line.split_once('=') else {
                return Err(ConfigError::new(format!("line {}", lineno + 1), "expected `key = value`"));
            };
            let (k, v) = (k.trim(), v.trim());
            if !KEYS.contains(&k) {
                return Err(ConfigError::new(k, "unknown key"));
            }
            if v.is_empty() {
                return Err(ConfigError::new(k, "missing value"));
            }
            if map.insert(k.to_owned(), v.to_owned()).is_some() {
                return Err(ConfigError::new(k, "given more than once"));
            }
        }
        Self::from_entries(map, base)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|e| ConfigError::new("config", format!("{}: {e}", path.display())))?;
        Self::parse(&text, path.parent().unwrap_or(Path::new(".")))
    }

    fn from_entries(map: BTreeMap<String, String>, base: &Path) -> Result<Self, ConfigError> {
        let e = Entries { map: &map };
        let phase = match e.raw("phase") {
            None => None,
            Some(p) => Some(p.parse::<Phase>().map_err(|m| ConfigError::new("phase", m))?),
        };
        let seeds = e.list::<u64>("seeds", "integers")?.unwrap_or_else(|| vec![0]);
        if seeds.is_empty() {
            return Err(ConfigError::new("seeds", "seed list must be nonempty"));
        }
        let env = env_section(&e, "env")?.ok_or_else(|| ConfigError::new("env.family", "required"))?;
        let test_env = env_section(&e, "test_env")?;

        let shared = e.list::<usize>("policy.hidden", "layer sizes")?;
        let policy = PolicyOverrides {
            latent_dim: e.size("policy.latent_dim")?,
            state_dim: e.size("policy.state_dim")?,
            encoder_hidden: hidden_list(&e, "policy.encoder_hidden", &shared)?,
            decoder_hidden: hidden_list(&e, "policy.decoder_hidden", &shared)?,
            value_hidden: hidden_list(&e, "policy.value_hidden", &shared)?,
            recurrent: e.flag("policy.recurrent")?,
        };
        for k in ["policy.latent_dim", "policy.state_dim"] {
            if e.size(k)? == Some(0) {
                return Err(ConfigError::new(k, "must be positive"));
            }
        }

        let d = TrainConfig::default();
        let train = TrainConfig {
            beta: e.num("train.beta")?.unwrap_or(d.beta),
            gamma: e.num("train.gamma")?.unwrap_or(d.gamma),
            learning_rate: e.num("train.lr")?.unwrap_or(d.learning_rate),
            rms_decay: e.num("train.rms_decay")?.unwrap_or(d.rms_decay),
            rms_eps: e.num("train.rms_eps")?.unwrap_or(d.rms_eps),
            workers: e.size("train.workers")?.unwrap_or(d.workers),
            total_steps: e.int("train.steps")?.unwrap_or(d.total_steps),
            max_episodes: e.int("train.episodes")?,
            entropy_coef: e.num("train.entropy_coef")?.unwrap_or(d.entropy_coef),
            value_coef: e.num("train.value_coef")?.unwrap_or(d.value_coef),
            max_grad_norm: e.num("train.max_grad_norm")?.unwrap_or(d.max_grad_norm),
            baseline: e.flag("train.baseline")?.unwrap_or(d.baseline),
            kl_sign_mode: match e.raw("train.kl_sign_mode") {
                None | Some("consistent") => KlSignMode::Consistent,
                Some("paper_literal") => KlSignMode::PaperLiteral,
                Some(other) => {
                    return Err(ConfigError::new(
                        "train.kl_sign_mode",
                        format!("expected consistent or paper_literal, got {other:?}"),
                    ))
                }
            },
            seed: seeds[0],
            log_interval: e.int("train.log_interval")?.unwrap_or(d.log_interval),
            wall_clock: e.flag("output.wall_clock")?.unwrap_or(false),
        };
        let checks: [(&str, bool, &str); 8] = [
            ("train.beta", train.beta >= 0.0, "must be nonnegative"),
            ("train.gamma", train.gamma > 0.0 && train.gamma <= 1.0, "must lie in (0, 1]"),
            ("train.lr", train.learning_rate > 0.0, "must be positive"),
            ("train.workers", train.workers >= 1, "must be at least 1"),
            ("train.log_interval", train.log_interval >= 1, "must be at least 1"),
            ("train.entropy_coef", train.entropy_coef >= 0.0, "must be nonnegative"),
            ("train.value_coef", train.value_coef >= 0.0, "must be nonnegative"),
            ("train.max_grad_norm", train.max_grad_norm >= 0.0, "must be nonnegative"),
        ];
        if let Some((k, _, m)) = checks.iter().find(|c| !c.1) {
            return Err(ConfigError::new(*k, *m));
        }
        if !(train.rms_decay > 0.0 && train.rms_decay < 1.0) {
            return Err(ConfigError::new("train.rms_decay", "must lie in (0, 1)"));
        }
        if !(train.rms_eps > 0.0) {
            return Err(ConfigError::new("train.rms_eps", "must be positive"));
        }

        let transfer = TransferSettings {
            bonus: match e.raw("transfer.bonus") {
                None => BonusMode::InfobotKl,
                Some(v) => v.parse().map_err(|m| ConfigError::new("transfer.bonus", m))?,
            },
            beta: e.num("transfer.beta")?.unwrap_or(0.1),
            checkpoint: e.path("transfer.checkpoint", base),
        };
        if transfer.beta < 0.0 {
            return Err(ConfigError::new("transfer.beta", "must be nonnegative"));
        }
        let eval = EvalSettings {
            episodes: e.size("eval.episodes")?.unwrap_or(0),
            checkpoint: e.path("eval.checkpoint", base),
        };
        let oracle = OracleSettings {
            tasks: e.size("oracle.tasks")?.unwrap_or(100),
            max_states: e.size("oracle.max_states")?.unwrap_or(8),
            max_goals: e.size("oracle.max_goals")?.unwrap_or(4),
            max_actions: e.size("oracle.max_actions")?.unwrap_or(4),
        };
        if oracle.max_states == 0 || oracle.max_goals < 2 || oracle.max_actions < 2 {
            return Err(ConfigError::new("oracle", "need at least 1 state, 2 goals and 2 actions"));
        }
        if oracle.max_states * oracle.max_goals > crate::oracle::MAX_PAIRS {
            return Err(ConfigError::new("oracle.max_states", "states times goals exceeds 64"));
        }
        let map_settings = MapSettings {
            checkpoint: e.path("map.checkpoint", base),
            table: e.path("map.table", base),
            level_seed: e.int("map.level_seed")?.unwrap_or(crate::train::EVAL_SEEDS.start),
            image: e.flag("map.image")?.unwrap_or(false),
        };
        Ok(Self {
            phase,
            seeds,
            env,
            test_env,
            policy,
            train,
            transfer,
            eval,
            oracle,
            map: map_settings,
            entries: map,
        })
    }

    /// Replaces the seed list (command-line override).
    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seeds = vec![seed];
        self.train.seed = seed;
        self.entries.insert("seeds".into(), seed.to_string());
        self
    }

    /// Canonical `key = value` text, sorted by key.
    pub fn canonical(&self) -> String {
        self.entries.iter().map(|(k, v)| format!("{k} = {v}\n")).collect()
    }

    /// SHA-256 of [`ExperimentConfig::canonical`], hex encoded.
    pub fn hash(&self) -> String {
        let digest = Sha256::digest(self.canonical().as_bytes());
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn test_env(&self) -> &EnvSpec {
        self.test_env.as_ref().unwrap_or(&self.env)
    }
}

/// Replaces `{seed}` in a path template.
pub fn seeded_path(template: &Path, seed: u64) -> PathBuf {
    PathBuf::from(template.to_string_lossy().replace("{seed}", &seed.to_string()))
}
