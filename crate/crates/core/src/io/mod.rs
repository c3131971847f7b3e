//! File formats: model manifests with weight blobs, datasets, hardware
//! configs, reports, and the synthetic workload generator.

pub mod dataset;
pub mod hwconfig;
pub mod manifest;
pub mod report;
pub mod synthetic;

pub use dataset::{load_dataset, save_dataset, Dataset, SampleDtype};
pub use hwconfig::{load_hardware_config, Backend, HardwareConfig};
pub use manifest::{decode_model, encode_model, load_model, save_model, ModelManifest, WeightDtype};
pub use report::{report_to_csv, report_to_json, write_report, CostReport, ReportFormat};
pub use synthetic::{
    generate_synthetic_workload, generate_synthetic_workload_with, vgg9_shaped, SyntheticOptions,
    SyntheticProfile, SyntheticWorkload,
};
