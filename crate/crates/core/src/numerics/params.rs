use serde::{Deserialize, Serialize};

use super::{NumericsError, Tensor};
use crate::scalar::Scalar;

/// Index of a parameter tensor inside a [`ParamSet`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ParamId(pub(crate) usize);

impl ParamId {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Named parameters in insertion order, each paired with an RMSProp
/// second-moment accumulator of identical shape.
#[derive(Clone, Debug, PartialEq)]
pub struct ParamSet<F> {
    names: Vec<String>,
    values: Vec<Tensor<F>>,
    accumulators: Vec<Tensor<F>>,
}

impl<F: Scalar> Default for ParamSet<F> {
    fn default() -> Self {
        Self::new()
    }
}

impl<F: Scalar> ParamSet<F> {
    pub fn new() -> Self {
        Self {
            names: Vec::new(),
            values: Vec::new(),
            accumulators: Vec::new(),
        }
    }

    pub fn insert(&mut self, name: impl Into<String>, value: Tensor<F>) -> Result<ParamId, NumericsError> {
        let name = name.into();
        if self.names.iter().any(|n| *n == name) {
            return Err(NumericsError::DuplicateParam(name));
        }
        self.accumulators.push(Tensor::zeros(value.shape()));
        self.values.push(value);
        self.names.push(name);
        Ok(ParamId(self.values.len() - 1))
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Total number of scalar components.
    pub fn numel(&self) -> usize {
        self.values.iter().map(Tensor::len).sum()
    }

    pub fn id(&self, name: &str) -> Option<ParamId> {
        self.names.iter().position(|n| n == name).map(ParamId)
    }

    pub fn name(&self, id: ParamId) -> &str {
        &self.names[id.0]
    }

    pub fn get(&self, id: ParamId) -> &Tensor<F> {
        &self.values[id.0]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Tensor<F> {
        &mut self.values[id.0]
    }

    pub fn accumulator(&self, id: ParamId) -> &Tensor<F> {
        &self.accumulators[id.0]
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> {
        (0..self.values.len()).map(ParamId)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor<F>)> {
        self.names.iter().map(String::as_str).zip(self.values.iter())
    }

    pub(crate) fn value_and_accumulator_mut(&mut self, id: ParamId) -> (&mut Tensor<F>, &mut Tensor<F>) {
        (&mut self.values[id.0], &mut self.accumulators[id.0])
    }

    pub(crate) fn accumulator_mut(&mut self, id: ParamId) -> &mut Tensor<F> {
        &mut self.accumulators[id.0]
    }

    /// Zero-filled gradient buffers matching every parameter.
    pub fn zero_grads(&self) -> Gradients<F> {
        Gradients {
            tensors: self.values.iter().map(|t| Tensor::zeros(t.shape())).collect(),
        }
    }
}

/// Gradient buffers aligned with a [`ParamSet`].
#[derive(Clone, Debug, PartialEq)]
pub struct Gradients<F> {
    pub(crate) tensors: Vec<Tensor<F>>,
}

impl<F: Scalar> Gradients<F> {
    pub fn get(&self, id: ParamId) -> &Tensor<F> {
        &self.tensors[id.0]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Tensor<F> {
        &mut self.tensors[id.0]
    }

    pub fn clear(&mut self) {
        self.tensors.iter_mut().for_each(|t| t.fill(F::zero()));
    }

    pub fn is_finite(&self) -> bool {
        self.tensors.iter().all(Tensor::is_finite)
    }

    pub fn global_norm(&self) -> F {
        self.tensors
            .iter()
            .flat_map(|t| t.data().iter())
            .fold(F::zero(), |acc, &g| acc + g * g)
            .sqrt()
    }

    pub fn scale(&mut self, factor: F) {
        for t in &mut self.tensors {
            t.data_mut().iter_mut().for_each(|g| *g = *g * factor);
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = &Tensor<F>> {
        self.tensors.iter()
    }

    /// Flattened components in parameter order.
    pub fn flatten(&self) -> Vec<F> {
        self.tensors.iter().flat_map(|t| t.data().iter().copied()).collect()
    }
}
