//! Tiled RRAM crossbar accelerator model: conductance mapping, ideal and
//! non-ideal (read noise, IR drop) dot products, converters, the DIFF
//! signed-weight correction, and energy/latency/area accounting.

pub mod adc;
pub mod conductance;
pub mod config;
pub mod diff;
pub mod grid;
pub mod mapping;
pub mod mvm;
pub mod pipeline;
pub mod sim;

pub use adc::{adc_dequantize, adc_quantize, AdcCode, AdcRange};
pub use conductance::{conductance_to_weight, weight_to_conductance, ConductanceMatrix, SliceCoding};
pub use config::{AnalogCostModel, CrossbarConfig};
pub use diff::{decode_column, diff_correct, DiffMeta};
pub use grid::CrossbarNetwork;
pub use mapping::{map_model, Crossbar, EncodingMode, LayerMapping, TilePlan};
pub use mvm::{apply_read_noise, derive_seed, ideal_mvm, nonideal_mvm};
pub use pipeline::{CrossbarPipeline, PipelineMode, PipelineStats};
pub use sim::{
    analog_area, plan_for, simulate_analog, tile_layout, AnalogArea, AnalogCostReport, AnalogEnergy,
    AnalogOptions, AnalogRow, TileLayout,
};
