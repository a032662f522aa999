//! Dense tensors, reverse-mode differentiation, Gaussian and categorical
//! helpers, and the RMSProp optimizer.

mod categorical;
mod finite_diff;
mod gaussian;
mod optim;
mod params;
mod tape;
mod tensor;

pub use categorical::{argmax, categorical_sample, entropy, log_softmax, softmax};
pub use finite_diff::{finite_difference, max_relative_error};
pub use gaussian::{
    clamp_log_std, gaussian_kl, kl_component, log_density, reparam_sample, GaussianParams, LatentSample, LOG_STD_MAX,
    LOG_STD_MIN,
};
pub use optim::{rmsprop_step, RmsProp};
pub use params::{Gradients, ParamId, ParamSet};
pub use tape::{Tape, Var};
pub use tensor::Tensor;

#[derive(Debug, thiserror::Error)]
pub enum NumericsError {
    #[error("{op}: shape mismatch between {left:?} and {right:?}")]
    ShapeMismatch {
        op: &'static str,
        left: Vec<usize>,
        right: Vec<usize>,
    },
    #[error("{op}: expected dimension {expected}, got {got}")]
    DimMismatch { op: &'static str, expected: usize, got: usize },
    #[error("non-finite values in {0}")]
    NonFinite(&'static str),
    #[error("variable is not recorded on this tape")]
    NotOnTape,
    #[error("duplicate parameter name `{0}`")]
    DuplicateParam(String),
}
