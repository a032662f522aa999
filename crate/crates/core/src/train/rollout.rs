use rand_chacha::ChaCha8Rng;

use super::{Task, TrainError};
use crate::envs::StateKey;
use crate::policy::Policy;

/// One recorded decision.
#[derive(Clone, Debug, PartialEq)]
pub struct Step {
    pub obs: Vec<f64>,
    pub goal: Vec<f64>,
    pub action: usize,
    pub log_prob: f64,
    /// Environment reward.
    pub reward: f64,
    /// Exploration bonus added on top of `reward` (0 in phase 1).
    pub bonus: f64,
    pub kl: f64,
    pub value: f64,
    pub entropy: f64,
    pub done: bool,
    /// Frozen standard-normal draw behind the latent sample.
    pub noise: Vec<f64>,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Trajectory {
    pub steps: Vec<Step>,
    pub success: bool,
    /// Generation seed of the level.
    pub seed: u64,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    pub fn env_return(&self) -> f64 {
        self.steps.iter().map(|s| s.reward).sum()
    }
}

/// Per-step reward shaping with per-episode scratch state.
///
/// Rollouts of one batch run concurrently; each gets its own `Local` and
/// the hook only sees them all again in [`StepHook::end_batch`].
pub trait StepHook: Sync {
    type Local: Send;

    fn begin_episode(&self) -> Self::Local;

    /// Bonus for the state the agent is in, called once on entering it.
    fn bonus(&self, local: &mut Self::Local, key: Option<&StateKey>, obs: &[f64], goal: &[f64]) -> Result<f64, TrainError>;

    fn end_batch(&mut self, locals: Vec<Self::Local>);

    /// Number of distinct states counted so far, for the transfer metrics.
    fn distinct_states(&self) -> Option<u64> {
        None
    }
}

/// Phase-1 hook: no bonus.
#[derive(Clone, Copy, Debug, Default)]
pub struct NoHook;

impl StepHook for NoHook {
    type Local = ();

    fn begin_episode(&self) {}

    fn bonus(&self, _: &mut (), _: Option<&StateKey>, _: &[f64], _: &[f64]) -> Result<f64, TrainError> {
        Ok(0.0)
    }

    fn end_batch(&mut self, _: Vec<()>) {}
}

/// Runs one stochastic episode on the level generated from `seed`.
pub fn collect_rollout<H: StepHook>(
    task: &dyn Task,
    policy: &Policy<f64>,
    seed: u64,
    rng: &mut ChaCha8Rng,
    hook: &H,
    local: &mut H::Local,
) -> Result<Trajectory, TrainError> {
    let mut episode = task.episode(seed)?;
    let mut memory = policy.initial_memory();
    let mut traj = Trajectory {
        seed,
        ..Default::default()
    };
    let (mut obs, mut goal) = (Vec::new(), Vec::new());
    loop {
        episode.observe(&mut obs, &mut goal);
        let key = episode.state_key();
        let bonus = hook.bonus(local, key.as_ref(), &obs, &goal)?;
        let out = policy.act(&obs, &goal, &memory, rng, true)?;
        let tr = episode.step(out.action)?;
        traj.success |= tr.success;
        traj.steps.push(Step {
            obs: obs.clone(),
            goal: goal.clone(),
            action: out.action,
            log_prob: out.log_prob,
            reward: tr.reward,
            bonus,
            kl: out.kl,
            value: out.value,
            entropy: out.entropy,
            done: tr.done,
            noise: out.noise,
        });
        memory = out.next_memory;
        if tr.done {
            return Ok(traj);
        }
    }
}

/// Plays one episode and reports `(success, length)`. Greedy when
/// `stochastic` is false.
pub fn run_episode(
    task: &dyn Task,
    policy: &Policy<f64>,
    seed: u64,
    rng: &mut ChaCha8Rng,
    stochastic: bool,
) -> Result<(bool, usize), TrainError> {
    let mut episode = task.episode(seed)?;
    let mut memory = policy.initial_memory();
    let (mut obs, mut goal) = (Vec::new(), Vec::new());
    let mut len = 0;
    loop {
        episode.observe(&mut obs, &mut goal);
        let out = policy.act(&obs, &goal, &memory, rng, stochastic)?;
        let tr = episode.step(out.action)?;
        len += 1;
        if tr.done {
            return Ok((tr.success, len));
        }
        memory = out.next_memory;
    }
}
