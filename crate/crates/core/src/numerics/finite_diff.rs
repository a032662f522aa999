use super::{Gradients, ParamSet};
use crate::scalar::Scalar;

/// Central-difference gradient of `loss_fn` with respect to every parameter
/// component. `loss_fn` must be deterministic.
pub fn finite_difference<F: Scalar>(mut loss_fn: impl FnMut(&ParamSet<F>) -> F, params: &ParamSet<F>, epsilon: F) -> Gradients<F> {
    let mut probe = params.clone();
    let mut grads = params.zero_grads();
    let ids: Vec<_> = params.ids().collect();
    let two_eps = epsilon + epsilon;
    for id in ids {
        for j in 0..params.get(id).len() {
            let original = params.get(id).data()[j];
            probe.get_mut(id).data_mut()[j] = original + epsilon;
            let up = loss_fn(&probe);
            probe.get_mut(id).data_mut()[j] = original - epsilon;
            let down = loss_fn(&probe);
            probe.get_mut(id).data_mut()[j] = original;
            grads.get_mut(id).data_mut()[j] = (up - down) / two_eps;
        }
    }
    grads
}

/// Largest component-wise relative error `|a - b| / max(|a|, |b|, floor)`.
pub fn max_relative_error<F: Scalar>(a: &Gradients<F>, b: &Gradients<F>, floor: F) -> F {
    a.flatten()
        .into_iter()
        .zip(b.flatten())
        .map(|(x, y)| (x - y).abs() / x.abs().max(y.abs()).max(floor))
        .fold(F::zero(), F::max)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::Tensor;
    use approx::assert_abs_diff_eq;

    #[test]
    fn quadratic_is_exact() {
        let mut p = ParamSet::new();
        let id = p.insert("w", Tensor::vector(vec![1.0, -2.0])).unwrap();
        let g = finite_difference(
            |p: &ParamSet<f64>| p.get(id).data().iter().map(|w| 3.0 * w * w + w).sum(),
            &p,
            1e-4,
        );
        assert_abs_diff_eq!(g.get(id).data()[0], 7.0, epsilon = 1e-8);
        assert_abs_diff_eq!(g.get(id).data()[1], -11.0, epsilon = 1e-8);
    }
}
