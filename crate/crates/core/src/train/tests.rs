use approx::assert_abs_diff_eq;

use super::*;
use crate::envs::Family;
use crate::numerics::{finite_difference, max_relative_error, Tape};
use crate::policy::{Policy, PolicyConfig};

fn traj(rewards: &[f64], kls: &[f64]) -> Trajectory {
    Trajectory {
        steps: rewards
            .iter()
            .zip(kls)
            .map(|(&reward, &kl)| Step {
                obs: vec![],
                goal: vec![],
                action: 0,
                log_prob: 0.0,
                reward,
                bonus: 0.0,
                kl,
                value: 0.0,
                entropy: 0.0,
                done: false,
                noise: vec![],
            })
            .collect(),
        success: false,
        seed: 0,
    }
}

#[test]
fn plain_return_when_beta_zero() {
    let t = traj(&[0.0, 0.0, 1.0], &[0.3, 0.2, 0.1]);
    assert_eq!(modified_returns(&t, 0.0, 1.0, KlSignMode::Consistent).unwrap(), vec![1.0, 1.0, 1.0]);
    let r = modified_returns(&t, 0.0, 0.9, KlSignMode::Consistent).unwrap();
    assert_abs_diff_eq!(r[0], 0.81, epsilon = 1e-12);
    assert_abs_diff_eq!(r[1], 0.9, epsilon = 1e-12);
    assert_abs_diff_eq!(r[2], 1.0, epsilon = 1e-12);
}

#[test]
fn kl_penalised_return() {
    let t = traj(&[0.0, 1.0], &[0.5, 0.0]);
    let r = modified_returns(&t, 0.1, 1.0, KlSignMode::Consistent).unwrap();
    assert_abs_diff_eq!(r[0], 0.95, epsilon = 1e-12);
    assert_abs_diff_eq!(r[1], 1.0, epsilon = 1e-12);
    let lit = modified_returns(&t, 0.1, 1.0, KlSignMode::PaperLiteral).unwrap();
    assert_abs_diff_eq!(lit[0], 1.05, epsilon = 1e-12);
}

#[test]
fn empty_trajectory_rejected() {
    assert!(matches!(
        modified_returns(&Trajectory::default(), 0.0, 1.0, KlSignMode::Consistent),
        Err(TrainError::EmptyTrajectory)
    ));
}

#[test]
fn config_validation() {
    let mut c = TrainConfig::default();
    assert!(c.validate().is_ok());
    c.gamma = 0.0;
    assert!(c.validate().is_err());
    c = TrainConfig {
        beta: -1.0,
        ..Default::default()
    };
    assert!(c.validate().is_err());
}

fn bandit_policy(seed: u64) -> Policy<f64> {
    Policy::new(
        PolicyConfig {
            latent_dim: 1,
            state_dim: 4,
            encoder_hidden: vec![8],
            decoder_hidden: vec![8],
            value_hidden: vec![8],
            recurrent: false,
            obs_width: 1,
            goal_width: 2,
            action_count: 2,
        },
        seed,
    )
    .unwrap()
}

fn grid_batch(policy: &Policy<f64>, n: u64) -> Vec<Trajectory> {
    let task = GridTask {
        max_steps: Some(12),
        ..GridTask::new(Family::MultiRoom {
            rooms: 2,
            max_room_size: 4,
        })
    };
    (0..n)
        .map(|i| {
            let mut rng = episode_rng(i);
            collect_rollout(&task, policy, i, &mut rng, &NoHook, &mut ()).unwrap()
        })
        .collect()
}

fn check_fd(policy: &Policy<f64>, batch: &[Trajectory], cfg: &TrainConfig) {
    let mut grads = policy.params().zero_grads();
    let mut tape = Tape::new(policy.params());
    let loss = batch_loss(policy, &mut tape, batch, cfg).unwrap();
    tape.backward(loss, &mut grads).unwrap();
    let fd = finite_difference(
        |ps| {
            let mut probe = policy.clone();
            *probe.params_mut() = ps.clone();
            let mut t = Tape::new(probe.params());
            let l = batch_loss(&probe, &mut t, batch, cfg).unwrap();
            t.scalar(l)
        },
        policy.params(),
        1e-6,
    );
    let err = max_relative_error(&grads, &fd, 1e-6);
    assert!(err < 1e-4, "relative error {err}");
}

#[test]
fn recurrent_update_gradient_matches_finite_difference() {
    let mut pc = PolicyConfig::for_view(3, true);
    pc.latent_dim = 3;
    pc.state_dim = 4;
    pc.encoder_hidden = vec![5];
    pc.decoder_hidden = vec![5];
    pc.value_hidden = vec![3];
    let policy = Policy::new(pc, 3).unwrap();
    let batch = grid_batch(&policy, 3);
    let cfg = TrainConfig {
        beta: 0.2,
        ..Default::default()
    };
    check_fd(&policy, &batch, &cfg);
}

#[test]
fn feedforward_update_gradient_matches_finite_difference() {
    let policy = bandit_policy(4);
    let task = Bandit { goals: 2 };
    let batch: Vec<_> = (0..6)
        .map(|i| collect_rollout(&task, &policy, i, &mut episode_rng(i), &NoHook, &mut ()).unwrap())
        .collect();
    let cfg = TrainConfig {
        beta: 0.5,
        baseline: false,
        ..Default::default()
    };
    check_fd(&policy, &batch, &cfg);
}

#[test]
fn degenerate_config_is_score_function() {
    let policy = bandit_policy(5);
    let task = Bandit { goals: 2 };
    let batch: Vec<_> = (0..4)
        .map(|i| collect_rollout(&task, &policy, i, &mut episode_rng(i), &NoHook, &mut ()).unwrap())
        .collect();
    let cfg = TrainConfig {
        beta: 0.0,
        baseline: false,
        entropy_coef: 0.0,
        ..Default::default()
    };
    let mut tape = Tape::new(policy.params());
    let loss = batch_loss(&policy, &mut tape, &batch, &cfg).unwrap();
    let expected: f64 = -batch.iter().map(|t| t.steps[0].reward * t.steps[0].log_prob).sum::<f64>() / 4.0;
    assert_abs_diff_eq!(tape.scalar(loss), expected, epsilon = 1e-12);
}

#[test]
fn rollout_replays_and_respects_step_limit() {
    let mut pc = PolicyConfig::for_view(3, true);
    pc.latent_dim = 4;
    pc.state_dim = 8;
    let policy = Policy::new(pc, 1).unwrap();
    let task = GridTask::new(Family::MultiRoom {
        rooms: 2,
        max_room_size: 4,
    });
    let a = collect_rollout(&task, &policy, 7, &mut episode_rng(1), &NoHook, &mut ()).unwrap();
    let b = collect_rollout(&task, &policy, 7, &mut episode_rng(1), &NoHook, &mut ()).unwrap();
    assert_eq!(a, b);
    assert!(a.len() <= 160);
    assert_eq!(a.steps.iter().filter(|s| s.done).count(), 1);
    assert!(a.steps.last().unwrap().done);
    if a.success {
        assert_eq!(a.steps.last().unwrap().reward, 1.0);
    }
}

fn bandit_run(beta: f64, seed: u64, episodes: u64) -> TrainOutcome {
    let cfg = TrainConfig {
        beta,
        learning_rate: 0.01,
        workers: 16,
        total_steps: episodes,
        log_interval: 400,
        seed,
        ..Default::default()
    };
    let learner = Learner::new(bandit_policy(seed), cfg).unwrap();
    train_with_hook(&Bandit { goals: 2 }, learner, &mut NoHook, None, false).unwrap()
}

#[test]
fn bandit_learns_with_small_beta() {
    let out = bandit_run(0.001, 1, 6000);
    let last = out.metrics.last().unwrap();
    assert!(last.success_rate > 0.95, "{last:?}");
    assert!(out.metrics.windows(2).all(|w| w[0].step < w[1].step));
}

#[test]
fn large_beta_shrinks_kl() {
    let out = bandit_run(10.0, 2, 8000);
    let first = out.metrics.first().unwrap().mean_kl;
    let last = out.metrics.last().unwrap().mean_kl;
    assert!(last < 0.1 * first, "kl {first} -> {last}");
}

#[test]
fn training_is_deterministic() {
    let a = bandit_run(0.01, 3, 800);
    let b = bandit_run(0.01, 3, 800);
    assert_eq!(a.metrics, b.metrics);
    assert_eq!(a.learner.policy.params(), b.learner.policy.params());
}
