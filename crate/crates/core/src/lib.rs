//! Verification laboratory for tail decoupling inequalities of multivariate
//! U-statistics.

pub mod campaign;
pub mod error;
pub mod kernel;
pub mod prob;
pub mod randomization;
pub mod rng;
pub mod scalar;
pub mod ustat;
pub mod value_space;
pub mod verifier;

pub use error::{Error, Result};
pub use scalar::Scalar;

/// Values in `R^d` with `f64` coordinates.
pub type Value = value_space::NormedValue<f64>;
/// Finitely supported law on `R^d`.
pub type Distribution = value_space::DiscreteDistribution<f64>;
/// Kernel family `(h_i)` indexed by distinct tuples.
pub type Kernel = kernel::KernelFamily<f64>;
/// Rows are sample indices, columns are independent copies.
pub type Sample = ustat::SampleMatrix<f64>;

pub type Value32 = value_space::NormedValue<f32>;
pub type Distribution32 = value_space::DiscreteDistribution<f32>;
pub type Kernel32 = kernel::KernelFamily<f32>;
pub type Sample32 = ustat::SampleMatrix<f32>;
