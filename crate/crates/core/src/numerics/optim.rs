use log::warn;

use super::{Gradients, ParamSet};
use crate::scalar::Scalar;

/// RMSProp with the accumulator stored alongside each parameter:
/// `v = decay * v + (1 - decay) * g^2`, `p -= lr * g / (sqrt(v) + eps)`.
#[derive(Clone, Debug, PartialEq)]
pub struct RmsProp<F> {
    pub lr: F,
    pub decay: F,
    pub eps: F,
    diverged: usize,
}

impl<F: Scalar> RmsProp<F> {
    pub fn new(lr: F, decay: F, eps: F) -> Self {
        assert!(lr > F::zero(), "learning rate must be positive");
        Self {
            lr,
            decay,
            eps,
            diverged: 0,
        }
    }

    /// Number of skipped steps caused by non-finite gradients.
    pub fn divergence_count(&self) -> usize {
        self.diverged
    }

    /// Applies one update; returns `false` (and leaves everything untouched)
    /// when any gradient component is NaN or infinite.
    pub fn step(&mut self, params: &mut ParamSet<F>, grads: &Gradients<F>) -> bool {
        if !grads.is_finite() {
            self.diverged += 1;
            warn!("non-finite gradient, skipping update ({} so far)", self.diverged);
            return false;
        }
        let one = F::one();
        let ids: Vec<_> = params.ids().collect();
        for id in ids {
            let (value, acc) = params.value_and_accumulator_mut(id);
            let g = grads.get(id).data();
            for ((p, v), &gj) in value.data_mut().iter_mut().zip(acc.data_mut()).zip(g) {
                *v = self.decay * *v + (one - self.decay) * gj * gj;
                *p = *p - self.lr * gj / (v.sqrt() + self.eps);
            }
        }
        true
    }

    /// Zeroes every accumulator.
    pub fn reset(params: &mut ParamSet<F>) {
        let ids: Vec<_> = params.ids().collect();
        for id in ids {
            params.accumulator_mut(id).fill(F::zero());
        }
    }
}

/// Functional form of [`RmsProp::step`].
pub fn rmsprop_step<F: Scalar>(params: &mut ParamSet<F>, grads: &Gradients<F>, lr: F, decay: F, eps: F) -> bool {
    RmsProp::new(lr, decay, eps).step(params, grads)
}
