//! Systolic-array accelerator cost model with a DRAM / SRAM / scratchpad
//! memory hierarchy.

pub mod config;
pub mod energy;
pub mod sim;
pub mod tiling;
pub mod traffic;

pub use config::{Dataflow, DigitalEnergyTable, SystolicConfig};
pub use energy::{compute_energy, gated_ops, lif_cost, LifCost};
pub use sim::{simulate_digital, DigitalArea, DigitalCostReport, DigitalEnergy, DigitalOptions, DigitalRow};
pub use tiling::{tile_layer, tile_model, LoopNest, PassTile};
pub use traffic::{memory_traffic, LayerTraffic, LevelBits, Traffic};
