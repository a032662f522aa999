//! Reverse-mode automatic differentiation over small dense tensors.
//!
//! A [`Tape`] records every forward operation together with its value.
//! [`Tape::backward`] walks the record in reverse and accumulates
//! `d loss / d param` into a [`Gradients`] buffer. Parameters are read
//! in place from the borrowed [`ParamSet`], so many tapes can share one
//! immutable parameter snapshot.

use std::sync::atomic::{AtomicU64, Ordering};

use super::gaussian::{clamp_log_std, kl_component};
use super::{Gradients, NumericsError, ParamId, ParamSet, Tensor};
use crate::scalar::Scalar;

static NEXT_TAPE: AtomicU64 = AtomicU64::new(1);

/// Handle to a value recorded on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Var {
    tape: u64,
    index: usize,
}

#[derive(Debug)]
enum Op<F> {
    Input,
    Param(ParamId),
    Affine { x: usize, w: usize, b: usize },
    Add(usize, usize),
    Sub(usize, usize),
    Mul(usize, usize),
    Tanh(usize),
    Sigmoid(usize),
    Relu(usize),
    Exp(usize),
    OneMinus(usize),
    Clamp { a: usize, lo: F, hi: F },
    Concat(Vec<usize>),
    Columns { a: usize, start: usize },
    TakeRows(usize),
    Reparam { mean: usize, log_std: usize, noise: Vec<F> },
    GaussianKl { mean: usize, log_std: usize, prior_mean: Vec<F>, prior_log_std: Vec<F> },
    LogProb { logits: usize, actions: Vec<usize> },
    Entropy(usize),
    WeightedSum { a: usize, weights: Vec<F> },
    SquaredError { a: usize, targets: Vec<F>, weights: Vec<F> },
    SumScalars(Vec<usize>),
    Scale(usize, F),
}

#[derive(Debug)]
struct Node<F> {
    op: Op<F>,
    value: Option<Tensor<F>>,
    requires_grad: bool,
}

/// Operation record for one forward/backward pass.
pub struct Tape<'p, F> {
    id: u64,
    params: &'p ParamSet<F>,
    nodes: Vec<Node<F>>,
    param_nodes: Vec<Option<usize>>,
}

/// Sum of per-coordinate Gaussian KL terms, floored at zero.
pub(crate) fn kl_sum<F: Scalar>(mean: &[F], log_std: &[F], prior_mean: &[F], prior_log_std: &[F]) -> F {
    let kl = (0..mean.len())
        .map(|k| kl_component(mean[k], log_std[k], prior_mean[k], prior_log_std[k]))
        .sum::<F>();
    kl.max(F::zero())
}

fn log_softmax_row<F: Scalar>(row: &[F], out: &mut Vec<F>) {
    out.clear();
    let max = row.iter().copied().fold(F::neg_infinity(), F::max);
    let lse = row.iter().map(|&l| (l - max).exp()).sum::<F>().ln() + max;
    out.extend(row.iter().map(|&l| l - lse));
}

impl<'p, F: Scalar> Tape<'p, F> {
    pub fn new(params: &'p ParamSet<F>) -> Self {
        Self {
            id: NEXT_TAPE.fetch_add(1, Ordering::Relaxed),
            params,
            nodes: Vec::new(),
            param_nodes: vec![None; params.len()],
        }
    }

    /// Drops every recorded node; previously issued [`Var`]s become invalid.
    pub fn clear(&mut self) {
        self.id = NEXT_TAPE.fetch_add(1, Ordering::Relaxed);
        self.nodes.clear();
        self.param_nodes.iter_mut().for_each(|p| *p = None);
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn params(&self) -> &'p ParamSet<F> {
        self.params
    }

    fn var(&self, index: usize) -> Var {
        Var { tape: self.id, index }
    }

    fn check(&self, v: Var) -> Result<usize, NumericsError> {
        if v.tape != self.id || v.index >= self.nodes.len() {
            return Err(NumericsError::NotOnTape);
        }
        Ok(v.index)
    }

    fn val(&self, index: usize) -> &Tensor<F> {
        let node = &self.nodes[index];
        match node.op {
            Op::Param(id) => self.params.get(id),
            _ => node.value.as_ref().expect("non-parameter nodes own their value"),
        }
    }

    fn push(&mut self, op: Op<F>, value: Tensor<F>, inputs: &[usize]) -> Var {
        let requires_grad = inputs.iter().any(|&i| self.nodes[i].requires_grad);
        self.nodes.push(Node {
            op,
            value: Some(value),
            requires_grad,
        });
        self.var(self.nodes.len() - 1)
    }

    pub fn value(&self, v: Var) -> &Tensor<F> {
        self.val(self.check(v).expect("var belongs to this tape"))
    }

    /// First element of a recorded value.
    pub fn scalar(&self, v: Var) -> F {
        self.value(v).data()[0]
    }

    /// Records a constant with no gradient.
    pub fn input(&mut self, value: Tensor<F>) -> Var {
        self.nodes.push(Node {
            op: Op::Input,
            value: Some(value),
            requires_grad: false,
        });
        self.var(self.nodes.len() - 1)
    }

    /// Leaf for a trainable parameter. Repeated calls return the same node.
    pub fn param(&mut self, id: ParamId) -> Var {
        if let Some(index) = self.param_nodes[id.index()] {
            return self.var(index);
        }
        self.nodes.push(Node {
            op: Op::Param(id),
            value: None,
            requires_grad: true,
        });
        let index = self.nodes.len() - 1;
        self.param_nodes[id.index()] = Some(index);
        self.var(index)
    }

    /// `x . w + b` with `x: [rows, n]`, `w: [n, m]`, `b: [m]`.
    pub fn affine(&mut self, x: Var, w: Var, b: Var) -> Result<Var, NumericsError> {
        let (xi, wi, bi) = (self.check(x)?, self.check(w)?, self.check(b)?);
        let (xv, wv, bv) = (self.val(xi), self.val(wi), self.val(bi));
        let (rows, n) = (xv.rows(), xv.cols());
        if wv.shape().len() != 2 || wv.shape()[0] != n {
            return Err(NumericsError::ShapeMismatch {
                op: "affine",
                left: xv.shape().to_vec(),
                right: wv.shape().to_vec(),
            });
        }
        let m = wv.shape()[1];
        if bv.len() != m {
            return Err(NumericsError::ShapeMismatch {
                op: "affine bias",
                left: wv.shape().to_vec(),
                right: bv.shape().to_vec(),
            });
        }
        let (xd, wd, bd) = (xv.data(), wv.data(), bv.data());
        let mut out = Vec::with_capacity(rows * m);
        for i in 0..rows {
            out.extend_from_slice(bd);
            let orow = &mut out[i * m..(i + 1) * m];
            for (k, &xk) in xd[i * n..(i + 1) * n].iter().enumerate() {
                if xk.is_zero() {
                    continue;
                }
                for (o, &wkj) in orow.iter_mut().zip(&wd[k * m..(k + 1) * m]) {
                    *o = *o + xk * wkj;
                }
            }
        }
        let shape = Tensor::<F>::row_shape(xv.shape(), rows, m);
        let value = Tensor::new(shape, out)?;
        Ok(self.push(Op::Affine { x: xi, w: wi, b: bi }, value, &[xi, wi, bi]))
    }

    fn binary(&mut self, a: Var, b: Var, name: &'static str, f: impl Fn(F, F) -> F) -> Result<(usize, usize, Tensor<F>), NumericsError> {
        let (ai, bi) = (self.check(a)?, self.check(b)?);
        let (av, bv) = (self.val(ai), self.val(bi));
        if av.shape() != bv.shape() {
            return Err(NumericsError::ShapeMismatch {
                op: name,
                left: av.shape().to_vec(),
                right: bv.shape().to_vec(),
            });
        }
        let data = av.data().iter().zip(bv.data()).map(|(&x, &y)| f(x, y)).collect();
        Ok((ai, bi, Tensor::new(av.shape().to_vec(), data)?))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var, NumericsError> {
        let (ai, bi, v) = self.binary(a, b, "add", |x, y| x + y)?;
        Ok(self.push(Op::Add(ai, bi), v, &[ai, bi]))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var, NumericsError> {
        let (ai, bi, v) = self.binary(a, b, "sub", |x, y| x - y)?;
        Ok(self.push(Op::Sub(ai, bi), v, &[ai, bi]))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var, NumericsError> {
        let (ai, bi, v) = self.binary(a, b, "mul", |x, y| x * y)?;
        Ok(self.push(Op::Mul(ai, bi), v, &[ai, bi]))
    }

    fn unary(&mut self, a: Var, f: impl Fn(F) -> F) -> Result<(usize, Tensor<F>), NumericsError> {
        let ai = self.check(a)?;
        let av = self.val(ai);
        let data = av.data().iter().map(|&x| f(x)).collect();
        Ok((ai, Tensor::new(av.shape().to_vec(), data)?))
    }

    pub fn tanh(&mut self, a: Var) -> Result<Var, NumericsError> {
        let (ai, v) = self.unary(a, F::tanh)?;
        Ok(self.push(Op::Tanh(ai), v, &[ai]))
    }

    pub fn sigmoid(&mut self, a: Var) -> Result<Var, NumericsError> {
        let (ai, v) = self.unary(a, |x| F::one() / (F::one() + (-x).exp()))?;
        Ok(self.push(Op::Sigmoid(ai), v, &[ai]))
    }

    pub fn relu(&mut self, a: Var) -> Result<Var, NumericsError> {
        let (ai, v) = self.unary(a, |x| x.max(F::zero()))?;
        Ok(self.push(Op::Relu(ai), v, &[ai]))
    }

    pub fn exp(&mut self, a: Var) -> Result<Var, NumericsError> {
        let (ai, v) = self.unary(a, F::exp)?;
        Ok(self.push(Op::Exp(ai), v, &[ai]))
    }

    /// `1 - a`, elementwise.
    pub fn one_minus(&mut self, a: Var) -> Result<Var, NumericsError> {
        let (ai, v) = self.unary(a, |x| F::one() - x)?;
        Ok(self.push(Op::OneMinus(ai), v, &[ai]))
    }

    /// Elementwise clamp; the gradient is zero outside `[lo, hi]`.
    pub fn clamp(&mut self, a: Var, lo: F, hi: F) -> Result<Var, NumericsError> {
        let (ai, v) = self.unary(a, |x| x.max(lo).min(hi))?;
        Ok(self.push(Op::Clamp { a: ai, lo, hi }, v, &[ai]))
    }

    /// Clamp into the encoder log-std range.
    pub fn clamp_log_std(&mut self, a: Var) -> Result<Var, NumericsError> {
        let (ai, v) = self.unary(a, clamp_log_std)?;
        let (lo, hi) = (F::lit(super::LOG_STD_MIN), F::lit(super::LOG_STD_MAX));
        Ok(self.push(Op::Clamp { a: ai, lo, hi }, v, &[ai]))
    }

    pub fn scale(&mut self, a: Var, c: F) -> Result<Var, NumericsError> {
        let (ai, v) = self.unary(a, |x| x * c)?;
        Ok(self.push(Op::Scale(ai, c), v, &[ai]))
    }

    /// Concatenates along the trailing axis; every part must have the same row count.
    pub fn concat(&mut self, parts: &[Var]) -> Result<Var, NumericsError> {
        let idx = parts.iter().map(|&p| self.check(p)).collect::<Result<Vec<_>, _>>()?;
        let rows = self.val(idx[0]).rows();
        if let Some(&bad) = idx.iter().find(|&&i| self.val(i).rows() != rows) {
            return Err(NumericsError::ShapeMismatch {
                op: "concat",
                left: self.val(idx[0]).shape().to_vec(),
                right: self.val(bad).shape().to_vec(),
            });
        }
        let total: usize = idx.iter().map(|&i| self.val(i).cols()).sum();
        let mut data = Vec::with_capacity(rows * total);
        for r in 0..rows {
            for &i in &idx {
                data.extend_from_slice(self.val(i).row(r));
            }
        }
        let shape = Tensor::<F>::row_shape(self.val(idx[0]).shape(), rows, total);
        let value = Tensor::new(shape, data)?;
        let inputs = idx.clone();
        Ok(self.push(Op::Concat(idx), value, &inputs))
    }

    /// Columns `[start, start + len)` of every row.
    pub fn columns(&mut self, a: Var, start: usize, len: usize) -> Result<Var, NumericsError> {
        let ai = self.check(a)?;
        let av = self.val(ai);
        if start + len > av.cols() {
            return Err(NumericsError::ShapeMismatch {
                op: "columns",
                left: av.shape().to_vec(),
                right: vec![start, len],
            });
        }
        let rows = av.rows();
        let mut data = Vec::with_capacity(rows * len);
        for r in 0..rows {
            data.extend_from_slice(&av.row(r)[start..start + len]);
        }
        let value = Tensor::new(Tensor::<F>::row_shape(av.shape(), rows, len), data)?;
        Ok(self.push(Op::Columns { a: ai, start }, value, &[ai]))
    }

    /// The first `n` rows.
    pub fn take_rows(&mut self, a: Var, n: usize) -> Result<Var, NumericsError> {
        let ai = self.check(a)?;
        let av = self.val(ai);
        if n > av.rows() {
            return Err(NumericsError::ShapeMismatch {
                op: "take_rows",
                left: av.shape().to_vec(),
                right: vec![n],
            });
        }
        let cols = av.cols();
        let value = Tensor::new(vec![n, cols], av.data()[..n * cols].to_vec())?;
        Ok(self.push(Op::TakeRows(ai), value, &[ai]))
    }

    /// `z = mean + exp(log_std) * noise` with `noise` held constant.
    pub fn reparam(&mut self, mean: Var, log_std: Var, noise: Vec<F>) -> Result<Var, NumericsError> {
        let (mi, si) = (self.check(mean)?, self.check(log_std)?);
        let (mv, sv) = (self.val(mi), self.val(si));
        if mv.shape() != sv.shape() || noise.len() != mv.len() {
            return Err(NumericsError::ShapeMismatch {
                op: "reparam",
                left: mv.shape().to_vec(),
                right: vec![sv.len(), noise.len()],
            });
        }
        let data = mv
            .data()
            .iter()
            .zip(sv.data())
            .zip(&noise)
            .map(|((&m, &s), &e)| m + s.exp() * e)
            .collect();
        let value = Tensor::new(mv.shape().to_vec(), data)?;
        Ok(self.push(Op::Reparam { mean: mi, log_std: si, noise }, value, &[mi, si]))
    }

    /// Row-wise `KL(N(mean, exp(log_std)) || prior)`; one entry per row.
    pub fn gaussian_kl(&mut self, mean: Var, log_std: Var, prior_mean: Vec<F>, prior_log_std: Vec<F>) -> Result<Var, NumericsError> {
        let (mi, si) = (self.check(mean)?, self.check(log_std)?);
        let (mv, sv) = (self.val(mi), self.val(si));
        let k = mv.cols();
        if mv.shape() != sv.shape() || prior_mean.len() != k || prior_log_std.len() != k {
            return Err(NumericsError::DimMismatch {
                op: "gaussian_kl",
                expected: k,
                got: prior_mean.len(),
            });
        }
        let data = (0..mv.rows())
            .map(|r| kl_sum(mv.row(r), sv.row(r), &prior_mean, &prior_log_std))
            .collect::<Vec<_>>();
        let value = Tensor::vector(data);
        Ok(self.push(
            Op::GaussianKl {
                mean: mi,
                log_std: si,
                prior_mean,
                prior_log_std,
            },
            value,
            &[mi, si],
        ))
    }

    /// Row-wise `log softmax(logits)[action]`.
    pub fn log_prob(&mut self, logits: Var, actions: Vec<usize>) -> Result<Var, NumericsError> {
        let li = self.check(logits)?;
        let lv = self.val(li);
        if actions.len() != lv.rows() || actions.iter().any(|&a| a >= lv.cols()) {
            return Err(NumericsError::DimMismatch {
                op: "log_prob",
                expected: lv.rows(),
                got: actions.len(),
            });
        }
        let mut buf = Vec::new();
        let data = actions
            .iter()
            .enumerate()
            .map(|(r, &a)| {
                log_softmax_row(lv.row(r), &mut buf);
                buf[a]
            })
            .collect();
        let value = Tensor::vector(data);
        Ok(self.push(Op::LogProb { logits: li, actions }, value, &[li]))
    }

    /// Row-wise entropy of `softmax(logits)`.
    pub fn entropy(&mut self, logits: Var) -> Result<Var, NumericsError> {
        let li = self.check(logits)?;
        let lv = self.val(li);
        let mut buf = Vec::new();
        let data = (0..lv.rows())
            .map(|r| {
                log_softmax_row(lv.row(r), &mut buf);
                buf.iter().map(|&lp| -lp.exp() * lp).sum::<F>()
            })
            .collect();
        let value = Tensor::vector(data);
        Ok(self.push(Op::Entropy(li), value, &[li]))
    }

    /// `sum_i weights_i * a_i` as a scalar.
    pub fn weighted_sum(&mut self, a: Var, weights: Vec<F>) -> Result<Var, NumericsError> {
        let ai = self.check(a)?;
        let av = self.val(ai);
        if weights.len() != av.len() {
            return Err(NumericsError::DimMismatch {
                op: "weighted_sum",
                expected: av.len(),
                got: weights.len(),
            });
        }
        let s = av.data().iter().zip(&weights).map(|(&x, &w)| x * w).sum();
        Ok(self.push(Op::WeightedSum { a: ai, weights }, Tensor::scalar(s), &[ai]))
    }

    pub fn sum(&mut self, a: Var) -> Result<Var, NumericsError> {
        let n = self.value(a).len();
        self.weighted_sum(a, vec![F::one(); n])
    }

    /// `sum_i weights_i * (a_i - targets_i)^2` as a scalar; targets are constants.
    pub fn squared_error(&mut self, a: Var, targets: Vec<F>, weights: Vec<F>) -> Result<Var, NumericsError> {
        let ai = self.check(a)?;
        let av = self.val(ai);
        if targets.len() != av.len() || weights.len() != av.len() {
            return Err(NumericsError::DimMismatch {
                op: "squared_error",
                expected: av.len(),
                got: targets.len(),
            });
        }
        let s = av
            .data()
            .iter()
            .zip(&targets)
            .zip(&weights)
            .map(|((&x, &t), &w)| w * (x - t) * (x - t))
            .sum();
        Ok(self.push(Op::SquaredError { a: ai, targets, weights }, Tensor::scalar(s), &[ai]))
    }

    /// Adds scalar vars.
    pub fn add_scalars(&mut self, parts: &[Var]) -> Result<Var, NumericsError> {
        let idx = parts.iter().map(|&p| self.check(p)).collect::<Result<Vec<_>, _>>()?;
        if let Some(&bad) = idx.iter().find(|&&i| self.val(i).len() != 1) {
            return Err(NumericsError::ShapeMismatch {
                op: "add_scalars",
                left: vec![1],
                right: self.val(bad).shape().to_vec(),
            });
        }
        let s = idx.iter().map(|&i| self.val(i).data()[0]).sum();
        let inputs = idx.clone();
        Ok(self.push(Op::SumScalars(idx), Tensor::scalar(s), &inputs))
    }

    /// Accumulates `d loss / d param` into `grads`. Repeated calls add up.
    pub fn backward(&self, loss: Var, grads: &mut Gradients<F>) -> Result<(), NumericsError> {
        let li = self.check(loss)?;
        if self.val(li).len() != 1 {
            return Err(NumericsError::ShapeMismatch {
                op: "backward",
                left: vec![1],
                right: self.val(li).shape().to_vec(),
            });
        }
        if grads.tensors.len() != self.params.len() {
            return Err(NumericsError::DimMismatch {
                op: "backward gradients",
                expected: self.params.len(),
                got: grads.tensors.len(),
            });
        }
        let mut g: Vec<Option<Vec<F>>> = (0..=li).map(|_| None).collect();
        g[li] = Some(vec![F::one()]);
        let mut buf = Vec::new();
        for i in (0..=li).rev() {
            let Some(gi) = g[i].take() else { continue };
            let node = &self.nodes[i];
            if !node.requires_grad {
                continue;
            }
            match &node.op {
                Op::Input => {}
                Op::Param(id) => {
                    for (a, &d) in grads.tensors[id.index()].data_mut().iter_mut().zip(&gi) {
                        *a = *a + d;
                    }
                }
                Op::Affine { x, w, b } => {
                    let (xv, wv) = (self.val(*x), self.val(*w));
                    let (rows, n, m) = (xv.rows(), xv.cols(), wv.shape()[1]);
                    let (xd, wd) = (xv.data(), wv.data());
                    if self.nodes[*b].requires_grad {
                        let gb = slot(&mut g, *b, m);
                        for r in 0..rows {
                            for (acc, &d) in gb.iter_mut().zip(&gi[r * m..(r + 1) * m]) {
                                *acc = *acc + d;
                            }
                        }
                    }
                    if self.nodes[*w].requires_grad {
                        let gw = slot(&mut g, *w, n * m);
                        for r in 0..rows {
                            let grow = &gi[r * m..(r + 1) * m];
                            for (k, &xk) in xd[r * n..(r + 1) * n].iter().enumerate() {
                                if xk.is_zero() {
                                    continue;
                                }
                                for (acc, &d) in gw[k * m..(k + 1) * m].iter_mut().zip(grow) {
                                    *acc = *acc + xk * d;
                                }
                            }
                        }
                    }
                    if self.nodes[*x].requires_grad {
                        let gx = slot(&mut g, *x, rows * n);
                        for r in 0..rows {
                            let grow = &gi[r * m..(r + 1) * m];
                            for k in 0..n {
                                let dot = grow.iter().zip(&wd[k * m..(k + 1) * m]).map(|(&d, &w)| d * w).sum::<F>();
                                gx[r * n + k] = gx[r * n + k] + dot;
                            }
                        }
                    }
                }
                Op::Add(a, b) => {
                    accumulate(&mut g, self, *a, gi.iter().copied());
                    accumulate(&mut g, self, *b, gi.iter().copied());
                }
                Op::Sub(a, b) => {
                    accumulate(&mut g, self, *a, gi.iter().copied());
                    accumulate(&mut g, self, *b, gi.iter().map(|&d| -d));
                }
                Op::Mul(a, b) => {
                    let (av, bv) = (self.val(*a).data(), self.val(*b).data());
                    accumulate(&mut g, self, *a, gi.iter().zip(bv).map(|(&d, &y)| d * y));
                    accumulate(&mut g, self, *b, gi.iter().zip(av).map(|(&d, &x)| d * x));
                }
                Op::Tanh(a) => {
                    let out = self.val(i).data();
                    accumulate(&mut g, self, *a, gi.iter().zip(out).map(|(&d, &y)| d * (F::one() - y * y)));
                }
                Op::Sigmoid(a) => {
                    let out = self.val(i).data();
                    accumulate(&mut g, self, *a, gi.iter().zip(out).map(|(&d, &y)| d * y * (F::one() - y)));
                }
                Op::Relu(a) => {
                    let inp = self.val(*a).data();
                    accumulate(
                        &mut g,
                        self,
                        *a,
                        gi.iter().zip(inp).map(|(&d, &x)| if x > F::zero() { d } else { F::zero() }),
                    );
                }
                Op::Exp(a) => {
                    let out = self.val(i).data();
                    accumulate(&mut g, self, *a, gi.iter().zip(out).map(|(&d, &y)| d * y));
                }
                Op::OneMinus(a) => accumulate(&mut g, self, *a, gi.iter().map(|&d| -d)),
                Op::Scale(a, c) => accumulate(&mut g, self, *a, gi.iter().map(|&d| d * *c)),
                Op::Clamp { a, lo, hi } => {
                    let inp = self.val(*a).data();
                    accumulate(
                        &mut g,
                        self,
                        *a,
                        gi.iter()
                            .zip(inp)
                            .map(|(&d, &x)| if x >= *lo && x <= *hi { d } else { F::zero() }),
                    );
                }
                Op::Concat(parts) => {
                    let total = self.val(i).cols();
                    let rows = self.val(i).rows();
                    let mut offset = 0;
                    for &p in parts {
                        let w = self.val(p).cols();
                        if self.nodes[p].requires_grad {
                            let gp = slot(&mut g, p, rows * w);
                            for r in 0..rows {
                                for c in 0..w {
                                    gp[r * w + c] = gp[r * w + c] + gi[r * total + offset + c];
                                }
                            }
                        }
                        offset += w;
                    }
                }
                Op::Columns { a, start } => {
                    let (rows, len) = (self.val(i).rows(), self.val(i).cols());
                    let cols = self.val(*a).cols();
                    if self.nodes[*a].requires_grad {
                        let ga = slot(&mut g, *a, rows * cols);
                        for r in 0..rows {
                            for c in 0..len {
                                ga[r * cols + start + c] = ga[r * cols + start + c] + gi[r * len + c];
                            }
                        }
                    }
                }
                Op::TakeRows(a) => {
                    let total = self.val(*a).len();
                    if self.nodes[*a].requires_grad {
                        let ga = slot(&mut g, *a, total);
                        for (acc, &d) in ga.iter_mut().zip(&gi) {
                            *acc = *acc + d;
                        }
                    }
                }
                Op::Reparam { mean, log_std, noise } => {
                    let sv = self.val(*log_std).data();
                    accumulate(&mut g, self, *mean, gi.iter().copied());
                    accumulate(
                        &mut g,
                        self,
                        *log_std,
                        gi.iter().zip(sv).zip(noise).map(|((&d, &s), &e)| d * s.exp() * e),
                    );
                }
                Op::GaussianKl {
                    mean,
                    log_std,
                    prior_mean,
                    prior_log_std,
                } => {
                    let (mv, sv) = (self.val(*mean), self.val(*log_std));
                    let k = mv.cols();
                    let inv_var = prior_log_std.iter().map(|&pl| (-(pl + pl)).exp()).collect::<Vec<_>>();
                    let dm = mv.data().iter().enumerate().map(|(j, &m)| {
                        let (r, c) = (j / k, j % k);
                        gi[r] * (m - prior_mean[c]) * inv_var[c]
                    });
                    accumulate(&mut g, self, *mean, dm);
                    let ds = sv.data().iter().enumerate().map(|(j, &s)| {
                        let (r, c) = (j / k, j % k);
                        gi[r] * ((s + s).exp() * inv_var[c] - F::one())
                    });
                    accumulate(&mut g, self, *log_std, ds);
                }
                Op::LogProb { logits, actions } => {
                    let lv = self.val(*logits);
                    let cols = lv.cols();
                    let mut d = vec![F::zero(); lv.len()];
                    for (r, &a) in actions.iter().enumerate() {
                        log_softmax_row(lv.row(r), &mut buf);
                        for c in 0..cols {
                            let ind = if c == a { F::one() } else { F::zero() };
                            d[r * cols + c] = gi[r] * (ind - buf[c].exp());
                        }
                    }
                    accumulate(&mut g, self, *logits, d.into_iter());
                }
                Op::Entropy(logits) => {
                    let lv = self.val(*logits);
                    let cols = lv.cols();
                    let out = self.val(i).data();
                    let mut d = vec![F::zero(); lv.len()];
                    for r in 0..lv.rows() {
                        log_softmax_row(lv.row(r), &mut buf);
                        for c in 0..cols {
                            d[r * cols + c] = -gi[r] * buf[c].exp() * (buf[c] + out[r]);
                        }
                    }
                    accumulate(&mut g, self, *logits, d.into_iter());
                }
                Op::WeightedSum { a, weights } => {
                    accumulate(&mut g, self, *a, weights.iter().map(|&w| w * gi[0]));
                }
                Op::SquaredError { a, targets, weights } => {
                    let av = self.val(*a).data();
                    let two = F::lit(2.0);
                    accumulate(
                        &mut g,
                        self,
                        *a,
                        av.iter()
                            .zip(targets)
                            .zip(weights)
                            .map(|((&x, &t), &w)| two * w * (x - t) * gi[0]),
                    );
                }
                Op::SumScalars(parts) => {
                    for &p in parts {
                        accumulate(&mut g, self, p, std::iter::once(gi[0]));
                    }
                }
            }
        }
        Ok(())
    }
}

fn slot<F: Scalar>(g: &mut [Option<Vec<F>>], index: usize, len: usize) -> &mut Vec<F> {
    g[index].get_or_insert_with(|| vec![F::zero(); len])
}

fn accumulate<F: Scalar>(g: &mut [Option<Vec<F>>], tape: &Tape<'_, F>, index: usize, contrib: impl Iterator<Item = F>) {
    if !tape.nodes[index].requires_grad {
        return;
    }
    let len = tape.val(index).len();
    let buf = slot(g, index, len);
    for (acc, d) in buf.iter_mut().zip(contrib) {
        *acc = *acc + d;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn params_with(name: &str, t: Tensor<f64>) -> (ParamSet<f64>, ParamId) {
        let mut p = ParamSet::new();
        let id = p.insert(name, t).unwrap();
        (p, id)
    }

    #[test]
    fn affine_identity_and_zero_input() {
        let empty = ParamSet::<f64>::new();
        let mut tape = Tape::new(&empty);
        let x = tape.input(Tensor::vector(vec![1.0, 2.0]));
        let w = tape.input(Tensor::matrix(2, 2, vec![1.0, 0.0, 0.0, 1.0]).unwrap());
        let b = tape.input(Tensor::vector(vec![0.0, 0.0]));
        let y = tape.affine(x, w, b).unwrap();
        assert_eq!(tape.value(y).data(), &[1.0, 2.0]);
        assert_eq!(tape.value(y).shape(), &[2]);

        let x0 = tape.input(Tensor::vector(vec![0.0, 0.0]));
        let w2 = tape.input(Tensor::matrix(2, 2, vec![5.0, -7.0, 2.0, 9.0]).unwrap());
        let b2 = tape.input(Tensor::vector(vec![3.0, -1.0]));
        let y0 = tape.affine(x0, w2, b2).unwrap();
        assert_eq!(tape.value(y0).data(), &[3.0, -1.0]);
    }

    #[test]
    fn affine_hand_multiply() {
        let empty = ParamSet::<f64>::new();
        let mut tape = Tape::new(&empty);
        let x = tape.input(Tensor::vector(vec![1.0, 1.0]));
        let w = tape.input(Tensor::matrix(2, 2, vec![1.0, 2.0, 3.0, 4.0]).unwrap());
        let b = tape.input(Tensor::vector(vec![0.0, 0.0]));
        let y = tape.affine(x, w, b).unwrap();
        assert_eq!(tape.value(y).data(), &[4.0, 6.0]);
    }

    #[test]
    fn affine_shape_mismatch_names_both_shapes() {
        let empty = ParamSet::<f64>::new();
        let mut tape = Tape::new(&empty);
        let x = tape.input(Tensor::vector(vec![1.0, 1.0, 1.0]));
        let w = tape.input(Tensor::matrix(2, 2, vec![1.0; 4]).unwrap());
        let b = tape.input(Tensor::vector(vec![0.0, 0.0]));
        let err = tape.affine(x, w, b).unwrap_err().to_string();
        assert!(err.contains("[3]") && err.contains("[2, 2]"), "{err}");
    }

    #[test]
    fn constant_loss_has_zero_gradient() {
        let (params, _) = params_with("w", Tensor::vector(vec![3.0]));
        let mut tape = Tape::new(&params);
        let c = tape.input(Tensor::scalar(4.0));
        let loss = tape.sum(c).unwrap();
        let mut grads = params.zero_grads();
        tape.backward(loss, &mut grads).unwrap();
        assert_eq!(grads.flatten(), vec![0.0]);
    }

    #[test]
    fn square_gradient_and_accumulation() {
        let (params, id) = params_with("w", Tensor::vector(vec![3.0]));
        let mut tape = Tape::new(&params);
        let w = tape.param(id);
        let sq = tape.mul(w, w).unwrap();
        let loss = tape.sum(sq).unwrap();
        assert_eq!(tape.scalar(loss), 9.0);
        let mut grads = params.zero_grads();
        tape.backward(loss, &mut grads).unwrap();
        assert_eq!(grads.get(id).data(), &[6.0]);
        tape.backward(loss, &mut grads).unwrap();
        assert_eq!(grads.get(id).data(), &[12.0]);
        grads.clear();
        assert_eq!(grads.get(id).data(), &[0.0]);
    }

    #[test]
    fn loss_from_other_tape_is_rejected() {
        let (params, id) = params_with("w", Tensor::vector(vec![1.0]));
        let mut a = Tape::new(&params);
        let b = Tape::new(&params);
        let w = a.param(id);
        let loss = a.sum(w).unwrap();
        let mut grads = params.zero_grads();
        assert!(matches!(b.backward(loss, &mut grads), Err(NumericsError::NotOnTape)));
        a.clear();
        assert!(matches!(a.backward(loss, &mut grads), Err(NumericsError::NotOnTape)));
    }

    #[test]
    fn taped_kl_matches_closed_form() {
        let empty = ParamSet::<f64>::new();
        let mut tape = Tape::new(&empty);
        let m = tape.input(Tensor::matrix(2, 1, vec![1.0, 0.0]).unwrap());
        let s = tape.input(Tensor::matrix(2, 1, vec![0.0, 2f64.ln()]).unwrap());
        let kl = tape.gaussian_kl(m, s, vec![0.0], vec![0.0]).unwrap();
        assert_abs_diff_eq!(tape.value(kl).data()[0], 0.5, epsilon = 1e-15);
        assert_abs_diff_eq!(tape.value(kl).data()[1], 1.5 - 2f64.ln(), epsilon = 1e-15);
    }
}
