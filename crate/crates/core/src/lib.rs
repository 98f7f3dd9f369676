//! Model-free state estimation for distribution grids by low-rank canonical
//! polyadic decomposition (CPD) of a `PHASE × MEASUREMENT × TIME` tensor.
//!
//! The crate covers the dense tensor algebra ([`tensor`]), masked ALS fitting
//! and factor alignment ([`cpd`]), structured sampling masks together with
//! their identifiability certificates ([`sampling`]), a synthetic radial
//! feeder simulator that produces state tensors ([`feeder`]), and the error
//! metrics used to score imputations ([`metrics`]).
//!
//! Numerics are generic over [`Scalar`] (`f32` or `f64`); the aliases below
//! fix `f64`, which is what the simulator and experiments use.

pub mod cpd;
pub mod feeder;
pub mod metrics;
pub mod sampling;
pub mod scalar;
pub mod tensor;

pub use scalar::Scalar;

pub type Tensor = tensor::Tensor3<f64>;
pub type Matrix = tensor::Matrix<f64>;
pub type Factors = cpd::CpdFactors<f64>;
pub type Fit = cpd::FitResult<f64>;
