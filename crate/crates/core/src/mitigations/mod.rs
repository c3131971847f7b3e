//! Inference and model transforms that reduce the hardware cost of SNNs:
//! dynamic timestep exit, LIF sharing, non-ideality-aware weight encoding and
//! batchnorm adaptation.

pub mod bn_adapt;
pub mod dtsnn;
pub mod ni_aware;
pub mod share;
pub mod tune;

pub use bn_adapt::{bn_adapt, bn_adapt_with, BnAdaptOutcome, NoiseCalibrationSpec};
pub use dtsnn::{dt_snn_infer, entropy, DtSnnPolicy};
pub use ni_aware::ni_aware_encode;
pub use share::{share_lif, ShareDimension, ShareSpec};
pub use tune::{threshold_grid, tune_dt_threshold, TuneOutcome};
