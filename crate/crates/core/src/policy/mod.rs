//! Goal-conditioned bottleneck policy.
//!
//! The observation (and, when recurrent, the previous memory) is summarised
//! into a state feature `s`. The encoder maps `[s, goal]` to a diagonal
//! Gaussian over the latent `z`; the decoder maps `[s, z]` to action
//! logits, so goal information reaches the action only through `z`. The
//! prior over `z` is a fixed unit Gaussian, and the per-step penalty is
//! `KL(encoder || prior)`. A value head reads `[s, goal]`.

mod checkpoint;
mod layers;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand::SeedableRng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::envs::{GoalSpec, Observation};
use crate::numerics::{
    argmax, categorical_sample, entropy, softmax, GaussianParams, LatentSample, NumericsError, ParamSet, Tape, Tensor, Var,
};
use crate::scalar::Scalar;

pub use checkpoint::{Checkpoint, NamedTensor, RngState, CHECKPOINT_VERSION};
use layers::{GatedCell, Linear, Mlp};

#[derive(Debug, thiserror::Error)]
pub enum PolicyError {
    #[error(transparent)]
    Numerics(#[from] NumericsError),
    #[error("invalid policy config: {0}")]
    Config(String),
    #[error("input width mismatch: {what} expected {expected}, got {got}")]
    Input { what: &'static str, expected: usize, got: usize },
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error("tape was not created over this policy's parameters")]
    ForeignTape,
}

/// Architecture of a [`Policy`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PolicyConfig {
    /// Latent dimension `K`.
    pub latent_dim: usize,
    /// Width of the state feature (recurrent memory size when recurrent).
    pub state_dim: usize,
    pub encoder_hidden: Vec<usize>,
    pub decoder_hidden: Vec<usize>,
    pub value_hidden: Vec<usize>,
    pub recurrent: bool,
    /// Length of the flattened observation features.
    pub obs_width: usize,
    pub goal_width: usize,
    pub action_count: usize,
}

impl PolicyConfig {
    /// Defaults for a gridworld with a `view x view` egocentric window.
    pub fn for_view(view: usize, recurrent: bool) -> Self {
        Self {
            latent_dim: 64,
            state_dim: 64,
            encoder_hidden: vec![64],
            decoder_hidden: vec![64],
            value_hidden: vec![64],
            recurrent,
            obs_width: Observation::feature_width(view),
            goal_width: crate::envs::GOAL_WIDTH,
            action_count: crate::envs::Action::COUNT,
        }
    }

    pub fn validate(&self) -> Result<(), PolicyError> {
        let sizes = [self.latent_dim, self.state_dim, self.obs_width, self.goal_width, self.action_count];
        if sizes.contains(&0)
            || self.encoder_hidden.contains(&0)
            || self.decoder_hidden.contains(&0)
            || self.value_hidden.contains(&0)
        {
            return Err(PolicyError::Config("all sizes must be positive".into()));
        }
        Ok(())
    }
}

/// Recurrent memory carried between steps; empty for feed-forward policies.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RecurrentState<F> {
    pub h: Vec<F>,
}

impl<F: Scalar> RecurrentState<F> {
    pub fn zeros(config: &PolicyConfig) -> Self {
        Self {
            h: if config.recurrent {
                vec![F::zero(); config.state_dim]
            } else {
                Vec::new()
            },
        }
    }
}

/// Per-step quantities produced by [`Policy::act`].
#[derive(Clone, Debug, PartialEq)]
pub struct PolicyOutput<F> {
    pub action: usize,
    pub log_prob: F,
    pub kl: F,
    pub value: F,
    pub entropy: F,
    pub posterior: GaussianParams<F>,
    pub latent: LatentSample<F>,
    /// Standard-normal draw behind `latent`, kept so the step can be replayed.
    pub noise: Vec<F>,
    pub next_memory: RecurrentState<F>,
}

/// Tape handles for a batched forward pass.
#[derive(Clone, Copy, Debug)]
pub struct ForwardVars {
    pub mean: Var,
    pub log_std: Var,
    /// Per-row `KL(encoder || prior)`.
    pub kl: Var,
    pub z: Var,
    pub logits: Var,
    /// `[rows, 1]`.
    pub value: Var,
    pub memory: Option<Var>,
}

#[derive(Clone, Debug)]
enum Trunk {
    FeedForward(Linear),
    Recurrent(GatedCell),
}

#[derive(Clone, Debug)]
struct Network {
    trunk: Trunk,
    encoder: Mlp,
    decoder: Mlp,
    value: Mlp,
}

/// The encoder/decoder policy with its parameters.
#[derive(Clone, Debug)]
pub struct Policy<F> {
    config: PolicyConfig,
    params: ParamSet<F>,
    net: Network,
}

impl<F: Scalar> Policy<F> {
    pub fn new(config: PolicyConfig, seed: u64) -> Result<Self, PolicyError> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = ParamSet::new();
        let trunk = if config.recurrent {
            Trunk::Recurrent(GatedCell::new(&mut params, "trunk", config.obs_width, config.state_dim, &mut rng)?)
        } else {
            Trunk::FeedForward(Linear::new(&mut params, "trunk", config.obs_width, config.state_dim, 1.0, &mut rng)?)
        };
        let encoder = Mlp::new(
            &mut params,
            "encoder",
            config.state_dim + config.goal_width,
            &config.encoder_hidden,
            2 * config.latent_dim,
            1.0,
            &mut rng,
        )?;
        let decoder = Mlp::new(
            &mut params,
            "decoder",
            config.state_dim + config.latent_dim,
            &config.decoder_hidden,
            config.action_count,
            0.1,
            &mut rng,
        )?;
        let value = Mlp::new(
            &mut params,
            "value",
            config.state_dim + config.goal_width,
            &config.value_hidden,
            1,
            1.0,
            &mut rng,
        )?;
        Ok(Self {
            config,
            params,
            net: Network {
                trunk,
                encoder,
                decoder,
                value,
            },
        })
    }

    pub fn config(&self) -> &PolicyConfig {
        &self.config
    }

    pub fn params(&self) -> &ParamSet<F> {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamSet<F> {
        &mut self.params
    }

    /// Names of the parameters belonging to the encoder path (trunk + encoder).
    pub fn encoder_param_names(&self) -> Vec<String> {
        self.params
            .iter()
            .map(|(n, _)| n)
            .filter(|n| n.starts_with("trunk.") || n.starts_with("encoder."))
            .map(str::to_owned)
            .collect()
    }

    pub fn initial_memory(&self) -> RecurrentState<F> {
        RecurrentState::zeros(&self.config)
    }

    /// Fixed unit-Gaussian prior `q(z|s)`; independent of the observation.
    pub fn prior(&self) -> GaussianParams<F> {
        GaussianParams::unit(self.config.latent_dim)
    }

    fn check_tape(&self, tape: &Tape<'_, F>) -> Result<(), PolicyError> {
        if std::ptr::eq(tape.params(), &self.params) {
            Ok(())
        } else {
            Err(PolicyError::ForeignTape)
        }
    }

    fn check_width(&self, what: &'static str, expected: usize, got: usize) -> Result<(), PolicyError> {
        if expected != got {
            return Err(PolicyError::Input { what, expected, got });
        }
        Ok(())
    }

    /// State feature and next memory for a batch of observations.
    pub fn state_features(&self, tape: &mut Tape<'_, F>, obs: Var, memory: Option<Var>) -> Result<(Var, Option<Var>), PolicyError> {
        self.check_tape(tape)?;
        self.check_width("observation", self.config.obs_width, tape.value(obs).cols())?;
        match &self.net.trunk {
            Trunk::FeedForward(layer) => {
                let pre = layer.forward(tape, obs)?;
                Ok((tape.tanh(pre)?, None))
            }
            Trunk::Recurrent(cell) => {
                let rows = tape.value(obs).rows();
                let h = match memory {
                    Some(h) => h,
                    None => tape.input(Tensor::zeros(&[rows, self.config.state_dim])),
                };
                self.check_width("memory", self.config.state_dim, tape.value(h).cols())?;
                let next = cell.forward(tape, obs, h)?;
                Ok((next, Some(next)))
            }
        }
    }

    /// Encoder head: clamped `(mean, log_std)` from state features and goal.
    pub fn encoder_head(&self, tape: &mut Tape<'_, F>, state: Var, goal: Var) -> Result<(Var, Var), PolicyError> {
        self.check_width("goal", self.config.goal_width, tape.value(goal).cols())?;
        let x = tape.concat(&[state, goal])?;
        let out = self.net.encoder.forward(tape, x)?;
        let k = self.config.latent_dim;
        let mean = tape.columns(out, 0, k)?;
        let raw = tape.columns(out, k, k)?;
        let log_std = tape.clamp_log_std(raw)?;
        Ok((mean, log_std))
    }

    pub fn decoder_head(&self, tape: &mut Tape<'_, F>, state: Var, z: Var) -> Result<Var, PolicyError> {
        self.check_width("latent", self.config.latent_dim, tape.value(z).cols())?;
        let x = tape.concat(&[state, z])?;
        Ok(self.net.decoder.forward(tape, x)?)
    }

    pub fn value_head(&self, tape: &mut Tape<'_, F>, state: Var, goal: Var) -> Result<Var, PolicyError> {
        let x = tape.concat(&[state, goal])?;
        Ok(self.net.value.forward(tape, x)?)
    }

    /// Row-wise KL of the encoder against the fixed prior.
    pub fn kl_to_prior(&self, tape: &mut Tape<'_, F>, mean: Var, log_std: Var) -> Result<Var, PolicyError> {
        let prior = self.prior();
        Ok(tape.gaussian_kl(mean, log_std, prior.mean().to_vec(), prior.log_std().to_vec())?)
    }

    /// Full batched pass with externally supplied standard-normal `noise`
    /// (`rows * latent_dim` values).
    pub fn forward(&self, tape: &mut Tape<'_, F>, obs: Var, goal: Var, memory: Option<Var>, noise: Vec<F>) -> Result<ForwardVars, PolicyError> {
        let (state, next) = self.state_features(tape, obs, memory)?;
        let (mean, log_std) = self.encoder_head(tape, state, goal)?;
        let kl = self.kl_to_prior(tape, mean, log_std)?;
        let z = tape.reparam(mean, log_std, noise)?;
        let logits = self.decoder_head(tape, state, z)?;
        let value = self.value_head(tape, state, goal)?;
        Ok(ForwardVars {
            mean,
            log_std,
            kl,
            z,
            logits,
            value,
            memory: next,
        })
    }

    fn row_inputs(&self, tape: &mut Tape<'_, F>, obs: &[F], goal: Option<&[F]>, memory: &RecurrentState<F>) -> Result<(Var, Option<Var>, Option<Var>), PolicyError> {
        self.check_width("observation", self.config.obs_width, obs.len())?;
        let o = tape.input(Tensor::matrix(1, obs.len(), obs.to_vec())?);
        let g = match goal {
            Some(g) => {
                self.check_width("goal", self.config.goal_width, g.len())?;
                Some(tape.input(Tensor::matrix(1, g.len(), g.to_vec())?))
            }
            None => None,
        };
        let m = if self.config.recurrent {
            self.check_width("memory", self.config.state_dim, memory.h.len())?;
            Some(tape.input(Tensor::matrix(1, memory.h.len(), memory.h.clone())?))
        } else {
            None
        };
        Ok((o, g, m))
    }

    fn memory_out(&self, tape: &Tape<'_, F>, next: Option<Var>) -> RecurrentState<F> {
        RecurrentState {
            h: next.map(|v| tape.value(v).data().to_vec()).unwrap_or_default(),
        }
    }

    /// Encoder distribution `p(z | s, g)` for a single step.
    pub fn encode(&self, obs: &[F], goal: &[F], memory: &RecurrentState<F>) -> Result<GaussianParams<F>, PolicyError> {
        let mut tape = Tape::new(&self.params);
        let (o, g, m) = self.row_inputs(&mut tape, obs, Some(goal), memory)?;
        let (state, _) = self.state_features(&mut tape, o, m)?;
        let (mean, log_std) = self.encoder_head(&mut tape, state, g.expect("goal given"))?;
        Ok(GaussianParams::new(tape.value(mean).data().to_vec(), tape.value(log_std).data().to_vec())?)
    }

    /// Encoder distribution together with the advanced memory.
    pub fn encode_step(&self, obs: &[F], goal: &[F], memory: &RecurrentState<F>) -> Result<(GaussianParams<F>, RecurrentState<F>), PolicyError> {
        let mut tape = Tape::new(&self.params);
        let (o, g, m) = self.row_inputs(&mut tape, obs, Some(goal), memory)?;
        let (state, next) = self.state_features(&mut tape, o, m)?;
        let (mean, log_std) = self.encoder_head(&mut tape, state, g.expect("goal given"))?;
        let params = GaussianParams::new(tape.value(mean).data().to_vec(), tape.value(log_std).data().to_vec())?;
        Ok((params, self.memory_out(&tape, next)))
    }

    /// Action logits for a given latent, plus the advanced memory.
    pub fn decode(&self, obs: &[F], z: &LatentSample<F>, memory: &RecurrentState<F>) -> Result<(Vec<F>, RecurrentState<F>), PolicyError> {
        let mut tape = Tape::new(&self.params);
        let (o, _, m) = self.row_inputs(&mut tape, obs, None, memory)?;
        self.check_width("latent", self.config.latent_dim, z.0.len())?;
        let (state, next) = self.state_features(&mut tape, o, m)?;
        let zv = tape.input(Tensor::matrix(1, z.0.len(), z.0.clone())?);
        let logits = self.decoder_head(&mut tape, state, zv)?;
        Ok((tape.value(logits).data().to_vec(), self.memory_out(&tape, next)))
    }

    /// State-value estimate.
    pub fn value(&self, obs: &[F], goal: &[F], memory: &RecurrentState<F>) -> Result<F, PolicyError> {
        let mut tape = Tape::new(&self.params);
        let (o, g, m) = self.row_inputs(&mut tape, obs, Some(goal), memory)?;
        let (state, _) = self.state_features(&mut tape, o, m)?;
        let v = self.value_head(&mut tape, state, g.expect("goal given"))?;
        Ok(tape.scalar(v))
    }

    /// One decision: sample `z` from the encoder, then an action from the
    /// decoder (or its argmax when `stochastic` is false).
    pub fn act<R: Rng + ?Sized>(
        &self,
        obs: &[F],
        goal: &[F],
        memory: &RecurrentState<F>,
        rng: &mut R,
        stochastic: bool,
    ) -> Result<PolicyOutput<F>, PolicyError> {
        let noise: Vec<F> = (0..self.config.latent_dim)
            .map(|_| F::lit(rng.sample::<f64, _>(StandardNormal)))
            .collect();
        let mut tape = Tape::new(&self.params);
        let (o, g, m) = self.row_inputs(&mut tape, obs, Some(goal), memory)?;
        let fw = self.forward(&mut tape, o, g.expect("goal given"), m, noise.clone())?;
        let logits = tape.value(fw.logits).data();
        let (action, log_prob) = if stochastic {
            categorical_sample(logits, rng)?
        } else {
            let a = argmax(logits);
            (a, crate::numerics::log_softmax(logits)[a])
        };
        let posterior = GaussianParams::new(tape.value(fw.mean).data().to_vec(), tape.value(fw.log_std).data().to_vec())?;
        Ok(PolicyOutput {
            action,
            log_prob,
            kl: tape.scalar(fw.kl),
            value: tape.scalar(fw.value),
            entropy: entropy(logits),
            posterior,
            latent: LatentSample(tape.value(fw.z).data().to_vec()),
            noise,
            next_memory: self.memory_out(&tape, fw.memory),
        })
    }

    /// Monte-Carlo estimate of the goal-marginalised default policy: the
    /// average of `softmax(decode(s, z))` over `z` drawn from the prior.
    pub fn marginal_action_dist<R: Rng + ?Sized>(
        &self,
        obs: &[F],
        memory: &RecurrentState<F>,
        rng: &mut R,
        n_samples: usize,
    ) -> Result<Vec<F>, PolicyError> {
        let n = n_samples.max(1);
        let mut tape = Tape::new(&self.params);
        let (o, _, m) = self.row_inputs(&mut tape, obs, None, memory)?;
        let (state, _) = self.state_features(&mut tape, o, m)?;
        let state_row = tape.value(state).data().to_vec();
        let k = self.config.latent_dim;
        let mut acc = vec![F::zero(); self.config.action_count];
        // Decode all samples as one batch.
        let z: Vec<F> = (0..n * k).map(|_| F::lit(rng.sample::<f64, _>(StandardNormal))).collect();
        let mut states = Vec::with_capacity(n * state_row.len());
        for _ in 0..n {
            states.extend_from_slice(&state_row);
        }
        let s = tape.input(Tensor::matrix(n, state_row.len(), states)?);
        let zv = tape.input(Tensor::matrix(n, k, z)?);
        let logits = self.decoder_head(&mut tape, s, zv)?;
        let lv = tape.value(logits);
        for r in 0..n {
            for (a, p) in acc.iter_mut().zip(softmax(lv.row(r))) {
                *a = *a + p;
            }
        }
        let inv = F::one() / F::from_usize(n).unwrap();
        Ok(acc.into_iter().map(|p| p * inv).collect())
    }
}

/// Converts an environment observation and goal into policy inputs.
pub fn encode_inputs<F: Scalar>(obs: &Observation, goal: &GoalSpec) -> (Vec<F>, Vec<F>) {
    let mut o = Vec::new();
    obs.features(&mut o);
    let mut g = Vec::new();
    goal.to_vector(&mut g);
    (o.into_iter().map(F::lit).collect(), g.into_iter().map(F::lit).collect())
}

#[cfg(test)]
mod tests;
