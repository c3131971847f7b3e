//! Functional SNN inference: LIF dynamics, direct encoding, the timestep loop
//! and sparsity profiling.

pub mod encode;
pub mod forward;
pub mod model;
pub mod neuron;
pub mod sparsity;

pub use encode::direct_encode;
pub use forward::{
    argmax, forward_timestep, forward_timestep_observed, infer, run_inference, ActivationObserver,
    ExactMvm, Inference, InferenceTrace, LayerActivity, MembraneState, MvmContext, MvmProvider,
    NoObserver, TimestepOutput,
};
pub use model::{
    qmax_for_bits, BatchNormParams, GemmDims, LayerKind, LayerSpec, QuantizedWeights, SnnModel,
    WeightStore,
};
pub use neuron::{lif_step, NeuronParams, ResetMode};
pub use sparsity::{sparsity_profile, SparsityProfile};
