use super::{modified_returns, TrainConfig, TrainError, Trajectory};
use crate::numerics::{RmsProp, Tape, Tensor, Var};
use crate::policy::Policy;

/// Scalars reported by one update.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct UpdateStats {
    pub loss: f64,
    pub grad_norm: f64,
    pub steps: usize,
    /// False when the step was skipped for a non-finite gradient.
    pub applied: bool,
}

/// Builds the averaged actor-critic loss for a batch on `tape`.
///
/// Per step: `-A * log pi(a) + beta * kl + c_v * (R - V)^2 - c_e * H`, where
/// the advantage `A = R - V_old` uses the value recorded during the rollout,
/// so it is a constant of the loss rather than a stopped gradient. Recurrent policies are replayed
/// time-major from zero memory with episodes sorted longest first, so the
/// rows still alive at step `t` are always a prefix.
pub fn batch_loss(policy: &Policy<f64>, tape: &mut Tape<'_, f64>, batch: &[Trajectory], cfg: &TrainConfig) -> Result<Var, TrainError> {
    if batch.is_empty() {
        return Err(TrainError::EmptyBatch);
    }
    let returns = batch
        .iter()
        .map(|t| modified_returns(t, cfg.beta, cfg.gamma, cfg.kl_sign_mode))
        .collect::<Result<Vec<_>, _>>()?;
    let total: usize = batch.iter().map(Trajectory::len).sum();
    let inv_n = 1.0 / total as f64;
    let pc = policy.config();

    // (episode, time) rows of each chunk.
    let mut chunks: Vec<Vec<(usize, usize)>> = Vec::new();
    if pc.recurrent {
        let mut order: Vec<usize> = (0..batch.len()).collect();
        order.sort_by_key(|&i| std::cmp::Reverse(batch[i].len()));
        let max_len = batch[order[0]].len();
        for t in 0..max_len {
            chunks.push(order.iter().take_while(|&&i| batch[i].len() > t).map(|&i| (i, t)).collect());
        }
    } else {
        chunks.push(batch.iter().enumerate().flat_map(|(i, tr)| (0..tr.len()).map(move |t| (i, t))).collect());
    }

    let mut terms = Vec::with_capacity(chunks.len() * 4);
    let mut memory: Option<Var> = None;
    let (mut obs, mut goal, mut noise) = (Vec::new(), Vec::new(), Vec::new());
    for rows in &chunks {
        let n = rows.len();
        obs.clear();
        goal.clear();
        noise.clear();
        for &(i, t) in rows {
            let s = &batch[i].steps[t];
            obs.extend_from_slice(&s.obs);
            goal.extend_from_slice(&s.goal);
            noise.extend_from_slice(&s.noise);
        }
        let o = tape.input(Tensor::matrix(n, pc.obs_width, obs.clone())?);
        let g = tape.input(Tensor::matrix(n, pc.goal_width, goal.clone())?);
        if let Some(m) = memory {
            if tape.value(m).rows() > n {
                memory = Some(tape.take_rows(m, n)?);
            }
        }
        let fw = policy.forward(tape, o, g, memory, noise.clone())?;
        memory = fw.memory;

        let targets: Vec<f64> = rows.iter().map(|&(i, t)| returns[i][t]).collect();
        let adv_weights: Vec<f64> = rows
            .iter()
            .zip(&targets)
            .map(|(&(i, t), &r)| {
                let adv = if cfg.baseline { r - batch[i].steps[t].value } else { r };
                -adv * inv_n
            })
            .collect();
        let actions = rows.iter().map(|&(i, t)| batch[i].steps[t].action).collect();
        let lp = tape.log_prob(fw.logits, actions)?;
        terms.push(tape.weighted_sum(lp, adv_weights)?);
        if cfg.beta != 0.0 {
            terms.push(tape.weighted_sum(fw.kl, vec![cfg.beta * inv_n; n])?);
        }
        if cfg.baseline && cfg.value_coef != 0.0 {
            terms.push(tape.squared_error(fw.value, targets, vec![cfg.value_coef * inv_n; n])?);
        }
        if cfg.entropy_coef != 0.0 {
            let h = tape.entropy(fw.logits)?;
            terms.push(tape.weighted_sum(h, vec![-cfg.entropy_coef * inv_n; n])?);
        }
    }
    Ok(tape.add_scalars(&terms)?)
}

/// A policy together with its optimizer.
#[derive(Clone, Debug)]
pub struct Learner {
    pub policy: Policy<f64>,
    pub optimizer: RmsProp<f64>,
    pub config: TrainConfig,
    pub updates: u64,
}

impl Learner {
    pub fn new(policy: Policy<f64>, config: TrainConfig) -> Result<Self, TrainError> {
        config.validate()?;
        Ok(Self {
            optimizer: RmsProp::new(config.learning_rate, config.rms_decay, config.rms_eps),
            policy,
            config,
            updates: 0,
        })
    }

    /// One clipped RMSProp step on the batch loss. A non-finite loss or
    /// gradient leaves the parameters untouched.
    pub fn update(&mut self, batch: &[Trajectory]) -> Result<UpdateStats, TrainError> {
        let mut grads = self.policy.params().zero_grads();
        let loss = {
            let mut tape = Tape::new(self.policy.params());
            let loss = batch_loss(&self.policy, &mut tape, batch, &self.config)?;
            tape.backward(loss, &mut grads)?;
            tape.scalar(loss)
        };
        let steps = batch.iter().map(Trajectory::len).sum();
        let grad_norm = grads.global_norm();
        if !loss.is_finite() {
            log::warn!("non-finite loss, update skipped");
            return Ok(UpdateStats {
                loss,
                grad_norm,
                steps,
                applied: false,
            });
        }
        if self.config.max_grad_norm > 0.0 && grad_norm.is_finite() && grad_norm > self.config.max_grad_norm {
            grads.scale(self.config.max_grad_norm / grad_norm);
        }
        let applied = self.optimizer.step(self.policy.params_mut(), &grads);
        if applied {
            self.updates += 1;
        }
        Ok(UpdateStats {
            loss,
            grad_norm,
            steps,
            applied,
        })
    }
}
