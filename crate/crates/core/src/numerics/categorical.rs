use rand::Rng;

use super::NumericsError;
use crate::scalar::Scalar;

/// Numerically stable `log softmax`.
pub fn log_softmax<F: Scalar>(logits: &[F]) -> Vec<F> {
    let max = logits.iter().copied().fold(F::neg_infinity(), F::max);
    let lse = logits.iter().map(|&l| (l - max).exp()).sum::<F>().ln() + max;
    logits.iter().map(|&l| l - lse).collect()
}

pub fn softmax<F: Scalar>(logits: &[F]) -> Vec<F> {
    log_softmax(logits).into_iter().map(F::exp).collect()
}

/// Index of the largest logit; ties resolve to the lowest index.
pub fn argmax<F: Scalar>(values: &[F]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate() {
        if v > values[best] {
            best = i;
        }
    }
    best
}

/// Draws an action from `softmax(logits)`, returning it with its log-probability.
pub fn categorical_sample<F: Scalar, R: Rng + ?Sized>(logits: &[F], rng: &mut R) -> Result<(usize, F), NumericsError> {
    if logits.is_empty() || logits.iter().any(|l| !l.is_finite()) {
        return Err(NumericsError::NonFinite("categorical logits"));
    }
    let log_probs = log_softmax(logits);
    let u = F::lit(rng.random::<f64>());
    let mut acc = F::zero();
    let mut chosen = logits.len() - 1;
    for (i, lp) in log_probs.iter().enumerate() {
        acc = acc + lp.exp();
        if u < acc {
            chosen = i;
            break;
        }
    }
    Ok((chosen, log_probs[chosen]))
}

/// Shannon entropy of `softmax(logits)` in nats.
pub fn entropy<F: Scalar>(logits: &[F]) -> F {
    log_softmax(logits).iter().map(|&lp| -lp.exp() * lp).sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn equal_logits_are_uniform() {
        let p = softmax(&[0.3f64; 7]);
        for v in p {
            assert_abs_diff_eq!(v, 1.0 / 7.0, epsilon = 1e-15);
        }
    }

    #[test]
    fn saturated_logits() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        for _ in 0..100 {
            let (a, lp) = categorical_sample(&[20.0f64, -20.0], &mut rng).unwrap();
            assert_eq!(a, 0);
            assert_abs_diff_eq!(lp, 0.0, epsilon = 1e-15);
        }
    }

    #[test]
    fn hand_softmax() {
        let p = softmax(&[1f64.ln(), 3f64.ln()]);
        assert_abs_diff_eq!(p[0], 0.25, epsilon = 1e-15);
        assert_abs_diff_eq!(p[1], 0.75, epsilon = 1e-15);
    }

    #[test]
    fn empirical_frequencies_follow_softmax() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let logits = [1f64.ln(), 3f64.ln()];
        let n = 200_000;
        let ones = (0..n)
            .filter(|_| categorical_sample(&logits, &mut rng).unwrap().0 == 1)
            .count();
        assert_abs_diff_eq!(ones as f64 / n as f64, 0.75, epsilon = 0.005);
    }

    #[test]
    fn sampling_is_deterministic_per_seed() {
        let logits = [0.1f64, 0.5, -0.3, 1.2];
        let draw = |seed| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            (0..50)
                .map(|_| categorical_sample(&logits, &mut rng).unwrap().0)
                .collect::<Vec<_>>()
        };
        assert_eq!(draw(5), draw(5));
    }

    #[test]
    fn rejects_non_finite() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(categorical_sample(&[f64::NAN, 0.0], &mut rng).is_err());
        assert!(categorical_sample(&[f64::INFINITY, 0.0], &mut rng).is_err());
    }
}
