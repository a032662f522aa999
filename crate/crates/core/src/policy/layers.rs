use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::numerics::{NumericsError, ParamId, ParamSet, Tape, Tensor, Var};
use crate::scalar::Scalar;

#[derive(Clone, Debug)]
pub(crate) struct Linear {
    pub w: ParamId,
    pub b: ParamId,
}

impl Linear {
    /// Uniform `+-gain/sqrt(fan_in)` weights, zero bias.
    pub fn new<F: Scalar>(
        params: &mut ParamSet<F>,
        name: &str,
        fan_in: usize,
        fan_out: usize,
        gain: f64,
        rng: &mut ChaCha8Rng,
    ) -> Result<Self, NumericsError> {
        let bound = gain / (fan_in.max(1) as f64).sqrt();
        let w = (0..fan_in * fan_out)
            .map(|_| F::lit(rng.random_range(-bound..=bound)))
            .collect();
        let w = params.insert(format!("{name}.w"), Tensor::matrix(fan_in, fan_out, w)?)?;
        let b = params.insert(format!("{name}.b"), Tensor::zeros(&[fan_out]))?;
        Ok(Self { w, b })
    }

    pub fn forward<F: Scalar>(&self, tape: &mut Tape<'_, F>, x: Var) -> Result<Var, NumericsError> {
        let w = tape.param(self.w);
        let b = tape.param(self.b);
        tape.affine(x, w, b)
    }
}

/// Stack of affine layers with `tanh` between them (none after the last).
#[derive(Clone, Debug)]
pub(crate) struct Mlp {
    pub layers: Vec<Linear>,
}

impl Mlp {
    pub fn new<F: Scalar>(
        params: &mut ParamSet<F>,
        name: &str,
        input: usize,
        hidden: &[usize],
        output: usize,
        output_gain: f64,
        rng: &mut ChaCha8Rng,
    ) -> Result<Self, NumericsError> {
        let mut layers = Vec::new();
        let mut fan_in = input;
        for (i, &h) in hidden.iter().enumerate() {
            layers.push(Linear::new(params, &format!("{name}.{i}"), fan_in, h, 1.0, rng)?);
            fan_in = h;
        }
        layers.push(Linear::new(params, &format!("{name}.out"), fan_in, output, output_gain, rng)?);
        Ok(Self { layers })
    }

    pub fn forward<F: Scalar>(&self, tape: &mut Tape<'_, F>, x: Var) -> Result<Var, NumericsError> {
        let mut h = x;
        let last = self.layers.len() - 1;
        for (i, layer) in self.layers.iter().enumerate() {
            h = layer.forward(tape, h)?;
            if i < last {
                h = tape.tanh(h)?;
            }
        }
        Ok(h)
    }
}

/// Gated recurrent cell with reset and update gates.
///
/// `r, u = sigmoid([x, h] W_g + b_g)`,
/// `n = tanh(x W_x + b_x + r * (h W_h + b_h))`,
/// `h' = (1 - u) * n + u * h`.
#[derive(Clone, Debug)]
pub(crate) struct GatedCell {
    pub gates: Linear,
    pub cand_x: Linear,
    pub cand_h: Linear,
    pub hidden: usize,
}

impl GatedCell {
    pub fn new<F: Scalar>(
        params: &mut ParamSet<F>,
        name: &str,
        input: usize,
        hidden: usize,
        rng: &mut ChaCha8Rng,
    ) -> Result<Self, NumericsError> {
        Ok(Self {
            gates: Linear::new(params, &format!("{name}.gates"), input + hidden, 2 * hidden, 1.0, rng)?,
            cand_x: Linear::new(params, &format!("{name}.cand_x"), input, hidden, 1.0, rng)?,
            cand_h: Linear::new(params, &format!("{name}.cand_h"), hidden, hidden, 1.0, rng)?,
            hidden,
        })
    }

    pub fn forward<F: Scalar>(&self, tape: &mut Tape<'_, F>, x: Var, h: Var) -> Result<Var, NumericsError> {
        let xh = tape.concat(&[x, h])?;
        let g = self.gates.forward(tape, xh)?;
        let g = tape.sigmoid(g)?;
        let r = tape.columns(g, 0, self.hidden)?;
        let u = tape.columns(g, self.hidden, self.hidden)?;
        let cx = self.cand_x.forward(tape, x)?;
        let ch = self.cand_h.forward(tape, h)?;
        let rch = tape.mul(r, ch)?;
        let pre = tape.add(cx, rch)?;
        let n = tape.tanh(pre)?;
        let keep = tape.one_minus(u)?;
        let a = tape.mul(keep, n)?;
        let b = tape.mul(u, h)?;
        tape.add(a, b)
    }
}
