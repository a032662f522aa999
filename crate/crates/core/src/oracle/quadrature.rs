//! Gauss-Hermite rules and adaptive Gauss-Kronrod integration.

use crate::scalar::Scalar;

/// Largest order whose Newton starting guesses are reliable.
pub const MAX_HERMITE_ORDER: usize = 128;

/// Nodes and weights of the `n`-point Gauss-Hermite rule for
/// `int exp(-x^2) f(x) dx`, computed by Newton iteration on the
/// orthonormal Hermite recurrence. Nodes are returned in descending order.
pub fn gauss_hermite(n: usize) -> (Vec<f64>, Vec<f64>) {
    assert!((1..=MAX_HERMITE_ORDER).contains(&n), "order must lie in 1..={MAX_HERMITE_ORDER}");
    const PIM4: f64 = 0.751_125_544_464_942_5;
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    let nf = n as f64;
    let mut z = 0.0;
    for i in 0..n.div_ceil(2) {
        z = match i {
            0 => (2.0 * nf + 1.0).sqrt() - 1.855_75 * (2.0 * nf + 1.0).powf(-0.166_67),
            1 => z - 1.14 * nf.powf(0.426) / z,
            2 => 1.86 * z - 0.86 * x[0],
            3 => 1.91 * z - 0.91 * x[1],
            _ => 2.0 * z - x[i - 2],
        };
        let mut pp = 0.0;
        for _ in 0..100 {
            let (mut p1, mut p2) = (PIM4, 0.0);
            for j in 1..=n {
                let p3 = p2;
                p2 = p1;
                let jf = j as f64;
                p1 = z * (2.0 / jf).sqrt() * p2 - ((jf - 1.0) / jf).sqrt() * p3;
            }
            pp = (2.0 * nf).sqrt() * p2;
            let z1 = z;
            z = z1 - p1 / pp;
            if (z - z1).abs() <= 1e-15 * z.abs().max(1.0) {
                break;
            }
        }
        x[i] = z;
        x[n - 1 - i] = -z;
        w[i] = 2.0 / (pp * pp);
        w[n - 1 - i] = w[i];
    }
    (x, w)
}

/// Gauss-Hermite rule rescaled for expectations under a standard normal:
/// `E[f(Z)] ~= sum_i w_i f(x_i)`.
#[derive(Clone, Debug)]
pub struct NormalRule<F> {
    pub nodes: Vec<F>,
    pub weights: Vec<F>,
}

impl<F: Scalar> NormalRule<F> {
    pub fn new(n: usize) -> Self {
        let (x, w) = gauss_hermite(n);
        let sqrt2 = std::f64::consts::SQRT_2;
        let inv_sqrt_pi = 1.0 / std::f64::consts::PI.sqrt();
        Self {
            nodes: x.iter().map(|&v| F::lit(v * sqrt2)).collect(),
            weights: w.iter().map(|&v| F::lit(v * inv_sqrt_pi)).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// `E[f(mean + std * Z)]`.
    pub fn expect(&self, mean: F, std: F, mut f: impl FnMut(F) -> F) -> F {
        self.nodes
            .iter()
            .zip(&self.weights)
            .map(|(&x, &w)| w * f(mean + std * x))
            .fold(F::zero(), |a, b| a + b)
    }
}

const GK_NODES: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const K15_WEIGHTS: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_2,
    0.140_653_259_715_525_9,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_728_0,
];
const G7_WEIGHTS: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

fn kronrod<F: Scalar>(f: &mut impl FnMut(F) -> F, a: F, b: F) -> (F, F) {
    let half = (b - a) * F::lit(0.5);
    let mid = (a + b) * F::lit(0.5);
    let fc = f(mid);
    let mut k = fc * F::lit(K15_WEIGHTS[7]);
    let mut g = fc * F::lit(G7_WEIGHTS[3]);
    for i in 0..7 {
        let dx = half * F::lit(GK_NODES[i]);
        let s = f(mid - dx) + f(mid + dx);
        k = k + s * F::lit(K15_WEIGHTS[i]);
        if i % 2 == 1 {
            g = g + s * F::lit(G7_WEIGHTS[i / 2]);
        }
    }
    (k * half, ((k - g) * half).abs())
}

/// Adaptive 15-point Gauss-Kronrod integration of `f` over `[a, b]`.
/// Returns `None` when the error target is not met within the depth limit.
pub fn integrate<F: Scalar>(mut f: impl FnMut(F) -> F, a: F, b: F, tol: F) -> Option<F> {
    fn rec<F: Scalar>(f: &mut impl FnMut(F) -> F, a: F, b: F, tol: F, whole: (F, F), depth: u32) -> Option<F> {
        let (value, err) = whole;
        if err <= tol {
            return Some(value);
        }
        if depth == 0 {
            return None;
        }
        let m = (a + b) * F::lit(0.5);
        let left = kronrod(f, a, m);
        let right = kronrod(f, m, b);
        let t = tol * F::lit(0.5);
        Some(rec(f, a, m, t, left, depth - 1)? + rec(f, m, b, t, right, depth - 1)?)
    }
    let whole = kronrod(&mut f, a, b);
    rec(&mut f, a, b, tol, whole, 40)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn hermite_moments() {
        for n in [1, 2, 5, 20, 64, 128] {
            let r = NormalRule::<f64>::new(n);
            assert_abs_diff_eq!(r.weights.iter().sum::<f64>(), 1.0, epsilon = 1e-12);
            if n >= 3 {
                assert_abs_diff_eq!(r.expect(0.0, 1.0, |z| z * z), 1.0, epsilon = 1e-11);
                assert_abs_diff_eq!(r.expect(0.0, 1.0, |z| z.powi(4)), 3.0, epsilon = 1e-10);
            }
        }
    }

    #[test]
    fn two_point_rule() {
        let (x, w) = gauss_hermite(2);
        assert_abs_diff_eq!(x[0], std::f64::consts::FRAC_1_SQRT_2, epsilon = 1e-14);
        assert_abs_diff_eq!(w[0], std::f64::consts::PI.sqrt() / 2.0, epsilon = 1e-14);
    }

    #[test]
    fn shifted_expectation() {
        let r = NormalRule::<f64>::new(40);
        // E[exp(X)] for X ~ N(0.3, 0.5^2) = exp(0.3 + 0.125)
        assert_abs_diff_eq!(r.expect(0.3, 0.5, f64::exp), (0.425f64).exp(), epsilon = 1e-12);
    }

    #[test]
    fn kronrod_integrates_gaussian() {
        let v = integrate(|x: f64| (-x * x).exp(), -10.0, 10.0, 1e-13).unwrap();
        assert_abs_diff_eq!(v, std::f64::consts::PI.sqrt(), epsilon = 1e-12);
        let s = integrate(|x: f64| x.sin(), 0.0, std::f64::consts::PI, 1e-12).unwrap();
        assert_abs_diff_eq!(s, 2.0, epsilon = 1e-12);
    }
}
