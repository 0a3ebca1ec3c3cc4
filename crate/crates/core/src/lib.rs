//! Simulator and solvers for hybrid federated learning of linear SVMs, where
//! every client holds a subset of samples and a subset of features.
//!
//! The numeric core is generic over [`Scalar`] (`f32` or `f64`); the aliases
//! at the crate root fix the scalar to `f64`, which is what the experiment
//! drivers and tolerances assume.

pub mod centralized;
pub mod data;
pub mod error;
pub mod fedavg;
pub mod hyfdca;
pub mod metrics;
pub mod objective;
pub mod partition;
pub mod rng;
mod scalar;
pub mod tuning;

pub use error::{Error, Result};
pub use scalar::Scalar;

pub type Dataset = data::SparseDataset<f64>;
pub type Sample = data::SparseVector<f64>;
pub type Reg = objective::Regularization<f64>;

pub type DatasetF32 = data::SparseDataset<f32>;
pub type RegF32 = objective::Regularization<f32>;
