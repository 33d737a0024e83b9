//! Numerical laboratory for stochastic neural field equations
//! `du = −αu dt + K F(u) dt + B(u) dW` on discretized weighted `L²` spaces.
//!
//! The core is generic over the scalar type ([`Real`], implemented for `f32`
//! and `f64`); the `*64` aliases below fix double precision.

pub mod activation;
pub mod dynamics;
pub mod ergodicity;
pub mod error;
pub mod kernel;
pub mod noise;
pub mod nonlocal;
pub mod particle;
pub mod scalar;
pub mod space;
pub mod stats;

pub use error::{Error, Result};
pub use scalar::Real;

pub type Grid64 = space::Grid<f64>;
pub type Weight64 = space::Weight<f64>;
pub type Field64 = space::Field<f64>;
pub type KernelSpec64 = kernel::KernelSpec<f64>;
pub type KernelOperator64 = kernel::KernelOperator<f64>;
pub type NonlocalMetric64 = nonlocal::NonlocalMetric<f64>;
pub type Activation64 = activation::Activation<f64>;
pub type NoiseModel64 = noise::NoiseModel<f64>;
pub type Model64 = dynamics::Model<f64>;
