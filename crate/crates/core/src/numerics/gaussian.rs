use serde::{Deserialize, Serialize};

use super::NumericsError;
use crate::scalar::Scalar;

/// Lower bound applied to encoder log standard deviations.
pub const LOG_STD_MIN: f64 = -5.0;
/// Upper bound applied to encoder log standard deviations.
pub const LOG_STD_MAX: f64 = 2.0;

/// Diagonal Gaussian over a `K`-dimensional latent.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GaussianParams<F> {
    mean: Vec<F>,
    log_std: Vec<F>,
}

impl<F: Scalar> GaussianParams<F> {
    /// Builds the distribution, clamping `log_std` into `[LOG_STD_MIN, LOG_STD_MAX]`.
    pub fn new(mean: Vec<F>, log_std: Vec<F>) -> Result<Self, NumericsError> {
        if mean.is_empty() || mean.len() != log_std.len() {
            return Err(NumericsError::DimMismatch {
                op: "gaussian",
                expected: mean.len(),
                got: log_std.len(),
            });
        }
        let log_std = log_std.into_iter().map(clamp_log_std).collect();
        Ok(Self { mean, log_std })
    }

    /// Zero-mean, unit-variance Gaussian of dimension `k`.
    pub fn unit(k: usize) -> Self {
        Self {
            mean: vec![F::zero(); k],
            log_std: vec![F::zero(); k],
        }
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn mean(&self) -> &[F] {
        &self.mean
    }

    pub fn log_std(&self) -> &[F] {
        &self.log_std
    }

    pub fn is_unit(&self) -> bool {
        self.mean.iter().all(|m| m.is_zero()) && self.log_std.iter().all(|s| s.is_zero())
    }
}

#[inline]
pub fn clamp_log_std<F: Scalar>(v: F) -> F {
    v.max(F::lit(LOG_STD_MIN)).min(F::lit(LOG_STD_MAX))
}

/// One coordinate of `KL(N(mu, e^ls) || N(prior_mu, e^prior_ls))`.
///
/// Shared by the plain evaluation and the taped op so both report
/// bit-identical values.
#[inline]
pub fn kl_component<F: Scalar>(mu: F, ls: F, prior_mu: F, prior_ls: F) -> F {
    let half = F::lit(0.5);
    let d = mu - prior_mu;
    (prior_ls - ls) + ((ls + ls).exp() + d * d) * half * (-(prior_ls + prior_ls)).exp() - half
}

/// Closed-form KL divergence between diagonal Gaussians.
pub fn gaussian_kl<F: Scalar>(post: &GaussianParams<F>, prior: &GaussianParams<F>) -> Result<F, NumericsError> {
    if post.dim() != prior.dim() {
        return Err(NumericsError::DimMismatch {
            op: "gaussian_kl",
            expected: prior.dim(),
            got: post.dim(),
        });
    }
    let kl = (0..post.dim())
        .map(|k| kl_component(post.mean[k], post.log_std[k], prior.mean[k], prior.log_std[k]))
        .sum::<F>();
    Ok(kl.max(F::zero()))
}

/// A latent draw `z`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LatentSample<F>(pub Vec<F>);

impl<F> LatentSample<F> {
    pub fn values(&self) -> &[F] {
        &self.0
    }
}

/// `z_k = mu_k + exp(log_std_k) * noise_k`.
pub fn reparam_sample<F: Scalar>(params: &GaussianParams<F>, noise: &[F]) -> Result<LatentSample<F>, NumericsError> {
    if noise.len() != params.dim() {
        return Err(NumericsError::DimMismatch {
            op: "reparam_sample",
            expected: params.dim(),
            got: noise.len(),
        });
    }
    Ok(LatentSample(
        params
            .mean
            .iter()
            .zip(&params.log_std)
            .zip(noise)
            .map(|((&m, &s), &e)| m + s.exp() * e)
            .collect(),
    ))
}

/// Log density of a diagonal Gaussian.
pub fn log_density<F: Scalar>(params: &GaussianParams<F>, z: &[F]) -> F {
    let half_ln_two_pi = F::lit(0.5) * (F::TAU()).ln();
    params
        .mean
        .iter()
        .zip(&params.log_std)
        .zip(z)
        .map(|((&m, &s), &x)| {
            let u = (x - m) / s.exp();
            -F::lit(0.5) * u * u - s - half_ln_two_pi
        })
        .sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn identical_distributions_have_zero_kl() {
        let p = GaussianParams::<f64>::unit(3);
        assert_eq!(gaussian_kl(&p, &GaussianParams::unit(3)).unwrap(), 0.0);
    }

    #[test]
    fn unit_prior_mean_shift() {
        let p = GaussianParams::new(vec![1.0], vec![0.0]).unwrap();
        assert_abs_diff_eq!(gaussian_kl(&p, &GaussianParams::unit(1)).unwrap(), 0.5, epsilon = 1e-15);
    }

    #[test]
    fn unit_prior_sigma_two() {
        let p = GaussianParams::new(vec![0.0], vec![2f64.ln()]).unwrap();
        let kl = gaussian_kl(&p, &GaussianParams::unit(1)).unwrap();
        assert_abs_diff_eq!(kl, 1.5 - 2f64.ln(), epsilon = 1e-12);
        assert_abs_diff_eq!(kl, 0.80685, epsilon = 1e-5);
    }

    #[test]
    fn general_prior_matches_swapped_unit_case() {
        // KL(N(0,1) || N(1,1)) = 0.5
        let p = GaussianParams::<f64>::unit(1);
        let q = GaussianParams::new(vec![1.0], vec![0.0]).unwrap();
        assert_abs_diff_eq!(gaussian_kl(&p, &q).unwrap(), 0.5, epsilon = 1e-15);
    }

    #[test]
    fn kl_dimension_mismatch() {
        let p = GaussianParams::<f64>::unit(2);
        assert!(matches!(
            gaussian_kl(&p, &GaussianParams::unit(3)),
            Err(NumericsError::DimMismatch { .. })
        ));
    }

    #[test]
    fn log_std_is_clamped() {
        let p = GaussianParams::new(vec![0.0, 0.0], vec![-40.0, 9.0]).unwrap();
        assert_eq!(p.log_std(), &[LOG_STD_MIN, LOG_STD_MAX]);
    }

    #[test]
    fn reparam_examples() {
        let unit = GaussianParams::<f64>::unit(1);
        assert_eq!(reparam_sample(&unit, &[0.0]).unwrap().0, vec![0.0]);
        let shifted = GaussianParams::new(vec![3.0], vec![0.0]).unwrap();
        assert_eq!(reparam_sample(&shifted, &[0.0]).unwrap().0, vec![3.0]);
        let wide = GaussianParams::new(vec![1.0], vec![2f64.ln()]).unwrap();
        assert_abs_diff_eq!(reparam_sample(&wide, &[0.5]).unwrap().0[0], 2.0, epsilon = 1e-15);
        assert!(reparam_sample(&wide, &[0.5, 0.1]).is_err());
    }

    #[test]
    fn log_density_of_standard_normal_at_zero() {
        let unit = GaussianParams::<f64>::unit(1);
        assert_abs_diff_eq!(log_density(&unit, &[0.0]), -0.5 * (2.0 * std::f64::consts::PI).ln(), epsilon = 1e-15);
    }
}
