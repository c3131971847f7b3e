//! Hardware-realistic benchmarking of spiking neural network inference.
//!
//! A functional SNN engine ([`snn`]) drives two hardware cost models: a
//! systolic-array accelerator with a three-level memory hierarchy
//! ([`digital`]) and a tiled analog RRAM crossbar accelerator with IR-drop
//! and device-noise non-idealities ([`analog`]). Their energy, latency and
//! area can be compared against the FLOPs-based energy estimate common in the
//! SNN literature ([`estimator`]). [`mitigations`] provides dynamic timestep
//! exit, LIF sharing, crossbar-aware weight encoding and batchnorm adaptation.
//!
//! The numeric kernels are generic over the scalar type; see [`scalar`].

pub mod analog;
pub mod digital;
pub mod error;
pub mod estimator;
pub mod io;
pub mod mitigations;
pub mod parallel;
pub mod scalar;
pub mod snn;
pub mod tensor;

pub use error::{Error, Result};
pub use scalar::{Field, Real};
pub use tensor::{Shape, SpikeTensor, Tensor};

/// Exact rational scalar used for bit-exact checks of the field kernels.
pub type Exact = num_rational::Ratio<i128>;
pub type Tensor64 = Tensor<f64>;
pub type Tensor32 = Tensor<f32>;
pub type Inference64 = snn::Inference<f64>;
pub type MembraneState64 = snn::MembraneState<f64>;
