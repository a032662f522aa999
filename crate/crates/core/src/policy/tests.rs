use approx::assert_abs_diff_eq;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::*;
use crate::numerics::{finite_difference, gaussian_kl, max_relative_error, RmsProp};

fn small(recurrent: bool) -> PolicyConfig {
    PolicyConfig {
        latent_dim: 3,
        state_dim: 5,
        encoder_hidden: vec![6],
        decoder_hidden: vec![6],
        value_hidden: vec![4],
        recurrent,
        obs_width: 4,
        goal_width: 2,
        action_count: 7,
    }
}

fn zero_weights(policy: &mut Policy<f64>) {
    let ids: Vec<_> = policy.params().ids().collect();
    for id in ids {
        policy.params_mut().get_mut(id).fill(0.0);
    }
}

const OBS: [f64; 4] = [0.1, 0.5, 0.0, 1.0];

#[test]
fn zero_weight_encoder_returns_bias() {
    let mut p = Policy::<f64>::new(small(false), 1).unwrap();
    zero_weights(&mut p);
    let id = p.params().id("encoder.out.b").unwrap();
    p.params_mut().get_mut(id).data_mut().copy_from_slice(&[0.1, 0.2, 0.3, -0.5, 0.0, 0.4]);
    let enc = p.encode(&OBS, &[1.0, 0.0], &p.initial_memory()).unwrap();
    assert_eq!(enc.mean(), &[0.1, 0.2, 0.3]);
    assert_eq!(enc.log_std(), &[-0.5, 0.0, 0.4]);
}

#[test]
fn encode_is_deterministic_and_goal_sensitive() {
    let p = Policy::<f64>::new(small(true), 2).unwrap();
    let m = p.initial_memory();
    let a = p.encode(&OBS, &[1.0, 0.0], &m).unwrap();
    assert_eq!(a, p.encode(&OBS, &[1.0, 0.0], &m).unwrap());
    let b = p.encode(&OBS, &[0.0, 1.0], &m).unwrap();
    assert_ne!(a.mean(), b.mean());
}

#[test]
fn width_mismatch_is_an_error() {
    let p = Policy::<f64>::new(small(false), 2).unwrap();
    let m = p.initial_memory();
    assert!(matches!(p.encode(&OBS[..3], &[1.0, 0.0], &m), Err(PolicyError::Input { .. })));
    assert!(matches!(p.encode(&OBS, &[1.0], &m), Err(PolicyError::Input { .. })));
    let z = LatentSample(vec![0.0; 2]);
    assert!(p.decode(&OBS, &z, &m).is_err());
}

#[test]
fn invalid_config_rejected() {
    let mut c = small(false);
    c.latent_dim = 0;
    assert!(matches!(Policy::<f64>::new(c, 0), Err(PolicyError::Config(_))));
}

#[test]
fn prior_is_unit_and_kl_zero_for_unit_encoder() {
    let mut p = Policy::<f64>::new(small(false), 3).unwrap();
    assert!(p.prior().is_unit());
    zero_weights(&mut p);
    let enc = p.encode(&OBS, &[0.3, 0.3], &p.initial_memory()).unwrap();
    assert_eq!(gaussian_kl(&enc, &p.prior()).unwrap(), 0.0);
}

#[test]
fn zero_weight_decoder_is_uniform() {
    let mut p = Policy::<f64>::new(small(false), 4).unwrap();
    zero_weights(&mut p);
    let (logits, _) = p.decode(&OBS, &LatentSample(vec![0.3, -1.0, 2.0]), &p.initial_memory()).unwrap();
    assert!(logits.iter().all(|&l| l == 0.0));
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let dist = p.marginal_action_dist(&OBS, &p.initial_memory(), &mut rng, 1).unwrap();
    for q in dist {
        assert_abs_diff_eq!(q, 1.0 / 7.0, epsilon = 1e-12);
    }
}

#[test]
fn latent_changes_logits() {
    let p = Policy::<f64>::new(small(true), 5).unwrap();
    let m = p.initial_memory();
    let (a, _) = p.decode(&OBS, &LatentSample(vec![0.0, 0.0, 0.0]), &m).unwrap();
    let (b, _) = p.decode(&OBS, &LatentSample(vec![1.0, 0.0, 0.0]), &m).unwrap();
    assert!(a.iter().all(|l| l.is_finite()));
    assert_ne!(a, b);
}

#[test]
fn act_kl_matches_encode() {
    let p = Policy::<f64>::new(small(true), 6).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let mut m = p.initial_memory();
    for _ in 0..5 {
        let out = p.act(&OBS, &[0.5, -0.5], &m, &mut rng, true).unwrap();
        let enc = p.encode(&OBS, &[0.5, -0.5], &m).unwrap();
        assert_eq!(out.posterior, enc);
        assert_eq!(out.kl, gaussian_kl(&enc, &p.prior()).unwrap());
        assert!(out.kl >= 0.0 && out.log_prob <= 0.0);
        m = out.next_memory;
    }
}

#[test]
fn greedy_act_picks_saturated_action() {
    let mut p = Policy::<f64>::new(small(false), 7).unwrap();
    zero_weights(&mut p);
    let id = p.params().id("decoder.out.b").unwrap();
    p.params_mut().get_mut(id).data_mut()[4] = 50.0;
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let out = p.act(&OBS, &[0.0, 0.0], &p.initial_memory(), &mut rng, false).unwrap();
    assert_eq!(out.action, 4);
}

#[test]
fn act_replays_under_fixed_seed() {
    let p = Policy::<f64>::new(small(true), 8).unwrap();
    let run = || {
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        let mut m = p.initial_memory();
        let mut outs = Vec::new();
        for _ in 0..10 {
            let o = p.act(&OBS, &[1.0, 1.0], &m, &mut rng, true).unwrap();
            m = o.next_memory.clone();
            outs.push(o);
        }
        outs
    };
    assert_eq!(run(), run());
}

#[test]
fn memory_reset_gives_same_first_step() {
    let p = Policy::<f64>::new(small(true), 9).unwrap();
    let mut m = p.initial_memory();
    let first = p.encode(&OBS, &[1.0, 0.0], &m).unwrap();
    for _ in 0..4 {
        m = p.encode_step(&[1.0, 1.0, 1.0, 1.0], &[1.0, 0.0], &m).unwrap().1;
    }
    assert_ne!(p.encode(&OBS, &[1.0, 0.0], &m).unwrap(), first);
    assert_eq!(p.encode(&OBS, &[1.0, 0.0], &p.initial_memory()).unwrap(), first);
}

fn batch_kl(policy: &Policy<f64>, tape: &mut Tape<'_, f64>) -> Var {
    let obs = tape.input(Tensor::matrix(2, 4, vec![0.1, 0.5, 0.0, 1.0, 0.9, 0.2, 0.3, 0.0]).unwrap());
    let goal = tape.input(Tensor::matrix(2, 2, vec![1.0, 0.0, 0.0, 1.0]).unwrap());
    let (s, _) = policy.state_features(tape, obs, None).unwrap();
    let (mean, log_std) = policy.encoder_head(tape, s, goal).unwrap();
    let kl = policy.kl_to_prior(tape, mean, log_std).unwrap();
    tape.weighted_sum(kl, vec![0.5, 0.5]).unwrap()
}

#[test]
fn batch_kl_gradient_matches_finite_difference() {
    let policy = Policy::<f64>::new(small(true), 10).unwrap();
    let mut tape = Tape::new(policy.params());
    let loss = batch_kl(&policy, &mut tape);
    let mut grads = policy.params().zero_grads();
    tape.backward(loss, &mut grads).unwrap();
    let fd = finite_difference(
        |ps| {
            let mut probe = policy.clone();
            *probe.params_mut() = ps.clone();
            let mut t = Tape::new(probe.params());
            let l = batch_kl(&probe, &mut t);
            t.scalar(l)
        },
        policy.params(),
        1e-6,
    );
    assert!(max_relative_error(&grads, &fd, 1e-6) < 1e-4);
}

#[test]
fn kl_only_training_collapses_to_prior() {
    let mut policy = Policy::<f64>::new(small(false), 11).unwrap();
    let mut opt = RmsProp::new(0.01, 0.99, 1e-5);
    let mut last = f64::INFINITY;
    for _ in 0..2000 {
        let mut grads = policy.params().zero_grads();
        {
            let mut tape = Tape::new(policy.params());
            let loss = batch_kl(&policy, &mut tape);
            last = tape.scalar(loss);
            tape.backward(loss, &mut grads).unwrap();
        }
        opt.step(policy.params_mut(), &grads);
    }
    assert!(last < 1e-3, "mean KL {last}");
}

#[test]
fn checkpoint_roundtrip_is_bit_exact() {
    let policy = Policy::<f64>::new(small(true), 12).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let _ = rand::Rng::random::<u64>(&mut rng);
    let ck = Checkpoint::from_policy(&policy, Some(&rng), 3);
    let back = Checkpoint::from_json(&ck.to_json()).unwrap();
    assert_eq!(back, ck);
    let restored: Policy<f64> = back.to_policy().unwrap();
    for ((_, a), (_, b)) in policy.params().iter().zip(restored.params().iter()) {
        let bits = |t: &Tensor<f64>| t.data().iter().map(|x| x.to_bits()).collect::<Vec<_>>();
        assert_eq!(bits(a), bits(b));
    }
    let mut r2 = back.rng.unwrap().restore().unwrap();
    assert_eq!(rand::Rng::random::<u64>(&mut rng), rand::Rng::random::<u64>(&mut r2));
}

#[test]
fn f32_policy_runs() {
    let p = Policy::<f32>::new(small(true), 13).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let out = p.act(&[0.1, 0.2, 0.3, 0.4], &[1.0, 0.0], &p.initial_memory(), &mut rng, true).unwrap();
    assert!(out.kl >= 0.0);
}
