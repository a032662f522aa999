//! Goal-conditioned policies with a KL information bottleneck on the goal,
//! the gridworlds they are trained on, and the tooling around them:
//! phase-1 training, count-decayed KL exploration bonuses for transfer,
//! exact mutual-information oracles and a config-driven experiment harness.
//!
//! Numeric code is generic over [`scalar::Scalar`] (`f32` or `f64`); the
//! aliases below fix `f64`, which the trainers use throughout.

pub mod envs;
pub mod harness;
pub mod numerics;
pub mod oracle;
pub mod policy;
pub mod scalar;
pub mod train;
pub mod transfer;

pub type Tensor = numerics::Tensor<f64>;
pub type ParamSet = numerics::ParamSet<f64>;
pub type Gradients = numerics::Gradients<f64>;
pub type Tape<'p> = numerics::Tape<'p, f64>;
pub type GaussianParams = numerics::GaussianParams<f64>;
pub type RmsProp = numerics::RmsProp<f64>;
pub type Policy = policy::Policy<f64>;
pub type RecurrentState = policy::RecurrentState<f64>;
pub type PolicyOutput = policy::PolicyOutput<f64>;
pub type TabularTask = oracle::TabularTask<f64>;

/// Any error raised by the library.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error(transparent)]
    Env(#[from] envs::EnvError),
    #[error(transparent)]
    Numerics(#[from] numerics::NumericsError),
    #[error(transparent)]
    Policy(#[from] policy::PolicyError),
    #[error(transparent)]
    Train(#[from] train::TrainError),
    #[error(transparent)]
    Oracle(#[from] oracle::OracleError),
    #[error(transparent)]
    Harness(#[from] harness::HarnessError),
}
