use rand_chacha::ChaCha8Rng;
use rand::SeedableRng;
use serde::{Deserialize, Serialize};

use super::{Policy, PolicyConfig, PolicyError};
use crate::numerics::Tensor;
use crate::scalar::Scalar;

pub const CHECKPOINT_VERSION: u32 = 1;

/// One parameter tensor and its optimizer accumulator.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NamedTensor {
    pub name: String,
    pub shape: Vec<usize>,
    pub value: Vec<f64>,
    pub accumulator: Vec<f64>,
}

/// Position of a ChaCha8 stream.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RngState {
    pub seed: [u8; 32],
    pub stream: u64,
    /// `u128` word position, written as a decimal string.
    pub word_pos: String,
}

impl RngState {
    pub fn capture(rng: &ChaCha8Rng) -> Self {
        Self {
            seed: rng.get_seed(),
            stream: rng.get_stream(),
            word_pos: rng.get_word_pos().to_string(),
        }
    }

    pub fn restore(&self) -> Result<ChaCha8Rng, PolicyError> {
        let pos: u128 = self
            .word_pos
            .parse()
            .map_err(|_| PolicyError::Checkpoint(format!("bad word_pos {:?}", self.word_pos)))?;
        let mut rng = ChaCha8Rng::from_seed(self.seed);
        rng.set_stream(self.stream);
        rng.set_word_pos(pos);
        Ok(rng)
    }
}

/// Serializable snapshot of a policy, its optimizer state and an rng.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub version: u32,
    pub config: PolicyConfig,
    pub params: Vec<NamedTensor>,
    pub rng: Option<RngState>,
    /// Updates applied so far.
    pub updates: u64,
}

impl Checkpoint {
    pub fn from_policy<F: Scalar>(policy: &Policy<F>, rng: Option<&ChaCha8Rng>, updates: u64) -> Self {
        let ps = policy.params();
        let params = ps
            .ids()
            .map(|id| {
                let v = ps.get(id);
                NamedTensor {
                    name: ps.name(id).to_owned(),
                    shape: v.shape().to_vec(),
                    value: v.data().iter().map(|x| x.as_f64()).collect(),
                    accumulator: ps.accumulator(id).data().iter().map(|x| x.as_f64()).collect(),
                }
            })
            .collect();
        Self {
            version: CHECKPOINT_VERSION,
            config: policy.config().clone(),
            params,
            rng: rng.map(RngState::capture),
            updates,
        }
    }

    /// Rebuilds the policy. Every parameter of the architecture must be present
    /// with the expected shape.
    pub fn to_policy<F: Scalar>(&self) -> Result<Policy<F>, PolicyError> {
        if self.version != CHECKPOINT_VERSION {
            return Err(PolicyError::Checkpoint(format!("unsupported version {}", self.version)));
        }
        let mut policy = Policy::new(self.config.clone(), 0)?;
        if policy.params().len() != self.params.len() {
            return Err(PolicyError::Checkpoint(format!(
                "expected {} tensors, found {}",
                policy.params().len(),
                self.params.len()
            )));
        }
        let ps = policy.params_mut();
        for t in &self.params {
            let id = ps
                .id(&t.name)
                .ok_or_else(|| PolicyError::Checkpoint(format!("unknown parameter {}", t.name)))?;
            if ps.get(id).shape() != t.shape.as_slice() || t.value.len() != t.accumulator.len() {
                return Err(PolicyError::Checkpoint(format!("shape mismatch for {}", t.name)));
            }
            let value = Tensor::new(t.shape.clone(), t.value.iter().map(|&x| F::lit(x)).collect())?;
            let acc = Tensor::new(t.shape.clone(), t.accumulator.iter().map(|&x| F::lit(x)).collect())?;
            let (v, a) = ps.value_and_accumulator_mut(id);
            *v = value;
            *a = acc;
        }
        Ok(policy)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("checkpoint serializes")
    }

    pub fn from_json(s: &str) -> Result<Self, PolicyError> {
        serde_json::from_str(s).map_err(|e| PolicyError::Checkpoint(e.to_string()))
    }
}
