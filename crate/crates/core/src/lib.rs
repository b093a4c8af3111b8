//! Value learning from action-free demonstrations in procedurally generated
//! mazes, and Q-learning agents that consume the learned values.
//!
//! The pipeline runs bottom-up through the modules:
//!
//! * [`gridworld`]: seedable mazes, pure transitions, observation encoding.
//! * [`expert`]: A* demonstrations stored as state-only trajectories.
//! * [`approx`]: tabular and multilayer-perceptron function approximators.
//! * [`pvo`]: regression of state values onto `γ^(T-t-1)` targets.
//! * [`rl`]: Q-learning with sparse, value-replacement and shaped targets,
//!   plus an exact value-iteration oracle.
//! * [`harness`]: configuration, experiment pipelines and artifact export.
//!
//! Numeric code is generic over [`Scalar`]; the aliases below fix it to
//! `f64`, which is what the pipelines and file formats use.

pub mod approx;
pub mod error;
pub mod expert;
pub mod gridworld;
pub mod harness;
pub mod pvo;
pub mod rl;
mod scalar;

pub use error::{Error, Result};
pub use scalar::{Rational, Scalar};

pub type Mlp = approx::MlpFn<f64>;
pub type Mlp32 = approx::MlpFn<f32>;
pub type Tabular = approx::TabularFn<f64>;
pub type ValueFunction = pvo::ValueFunction<f64>;
pub type QFunction = rl::QFunction<f64>;
pub type Oracle = rl::OracleSolution<f64>;
