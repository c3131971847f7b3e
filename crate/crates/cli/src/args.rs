use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

#[derive(Debug, Parser)]
#[command(
    name = "spikebench",
    version,
    about = "Energy, latency, area and accuracy of SNN inference on digital and analog accelerators"
)]
pub struct Cli {
    /// Worker threads for per-input simulation. Defaults to
    /// SPIKEBENCH_THREADS, then to all available cores.
    #[arg(long, global = true, value_name = "N")]
    pub workers: Option<usize>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run a workload on one backend and write its cost report.
    Simulate(SimulateArgs),
    /// FLOPs-based energy estimate, optionally against a simulated backend.
    Estimate(EstimateArgs),
    /// Re-run a workload across one parameter and emit a CSV table.
    Sweep(SweepArgs),
    /// Write a synthetic workload (model, weights, dataset) to a directory.
    Gen(GenArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum BackendArg {
    Digital,
    Analog,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum FormatArg {
    Json,
    Csv,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum DataflowArg {
    Os,
    Ws,
    TickBatch,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct Workload {
    /// Model manifest (JSON) with its weight blob alongside.
    #[arg(long, value_name = "PATH")]
    pub model: PathBuf,
    /// Dataset file.
    #[arg(long, value_name = "PATH")]
    pub data: PathBuf,
    /// Override the model's timestep count.
    #[arg(long, value_name = "T")]
    pub timesteps: Option<usize>,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct SimulateArgs {
    #[arg(long, value_enum)]
    pub backend: BackendArg,
    #[command(flatten)]
    #[serde(flatten)]
    pub workload: Workload,
    /// Hardware config (TOML) for the chosen backend.
    #[arg(long, value_name = "PATH")]
    pub hw: PathBuf,
    /// Seed for every random draw (analog read noise).
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Fixed DT-SNN entropy threshold (nats); 0 disables dynamic exit.
    #[arg(long, value_name = "NATS", conflicts_with = "dt_auto")]
    pub dt_threshold: Option<f64>,
    /// Tune the DT-SNN threshold on --val-data.
    #[arg(long, requires = "val_data")]
    pub dt_auto: bool,
    /// Held-out labelled data for --dt-auto.
    #[arg(long, value_name = "PATH")]
    pub val_data: Option<PathBuf>,
    /// Accuracy budget (percentage points) for --dt-auto.
    #[arg(long, default_value_t = 1.0, value_name = "PP")]
    pub dt_target_drop: f64,
    /// Share each LIF neuron across N output channels.
    #[arg(long, value_name = "N")]
    pub share_lif: Option<usize>,
    /// Analog: run with read noise, IR drop and finite converters.
    #[arg(long)]
    pub nonideal: bool,
    /// Analog: complement-encode columns towards high resistance.
    #[arg(long)]
    pub ni_aware: bool,
    /// Analog: re-estimate batchnorm statistics on N noisy samples.
    #[arg(long, value_name = "N", requires = "nonideal")]
    pub bn_adapt: Option<usize>,
    /// Unlabelled inputs for --bn-adapt (defaults to --data).
    #[arg(long, value_name = "PATH", requires = "bn_adapt")]
    pub calib_data: Option<PathBuf>,
    #[arg(long, default_value_t = 0.5, value_name = "M")]
    pub bn_momentum: f64,
    #[arg(long, default_value_t = 16, value_name = "N")]
    pub bn_batch: usize,
    /// Digital: override the config's dataflow.
    #[arg(long, value_enum)]
    pub dataflow: Option<DataflowArg>,
    /// Report file; without it only the summary line is printed.
    #[arg(long, value_name = "PATH")]
    #[serde(skip)]
    pub out: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = FormatArg::Json)]
    pub format: FormatArg,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct EstimateArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub workload: Workload,
    /// Also simulate on this backend config and report the divergence ratio.
    #[arg(long, value_name = "PATH")]
    pub hw: Option<PathBuf>,
    /// Use this sparsity instead of the measured one.
    #[arg(long, value_name = "S")]
    pub sparsity: Option<f64>,
    /// Energy of one accumulation in pJ (default: the digital energy table).
    #[arg(long, value_name = "PJ")]
    pub e_ac: Option<f64>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// JSON output file.
    #[arg(long, value_name = "PATH")]
    #[serde(skip)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Axis {
    Timesteps,
    ShareN,
    NoiseSigma,
    RWire,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct SweepArgs {
    #[arg(long, value_enum)]
    pub axis: Axis,
    /// Comma-separated axis values; each axis has a default grid.
    #[arg(long, value_delimiter = ',', value_name = "LIST")]
    pub values: Option<Vec<f64>>,
    #[arg(long, value_enum)]
    pub backend: BackendArg,
    #[command(flatten)]
    #[serde(flatten)]
    pub workload: Workload,
    #[arg(long, value_name = "PATH")]
    pub hw: PathBuf,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Analog: non-ideal pipeline for the timesteps and share-n axes (the
    /// noise and wire axes always run it).
    #[arg(long)]
    pub nonideal: bool,
    /// CSV output file (default: stdout).
    #[arg(long, value_name = "PATH")]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
pub enum ProfileArg {
    #[value(name = "tiny-mlp")]
    TinyMlp,
    #[value(name = "tiny-cnn")]
    TinyCnn,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct GenArgs {
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, value_enum)]
    pub profile: ProfileArg,
    /// Output directory (created if missing).
    #[arg(long, value_name = "DIR")]
    pub out: PathBuf,
    /// Number of samples (default depends on the profile).
    #[arg(long, value_name = "N")]
    pub samples: Option<usize>,
    /// Input noise amplitude in [0, 0.1).
    #[arg(long, value_name = "A")]
    pub noise: Option<f64>,
}
