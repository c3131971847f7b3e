use std::fs;
use std::io::Write;
use std::path::Path;

use serde::Serialize;

use spikebench::analog::{plan_for, simulate_analog, AnalogOptions, CrossbarConfig, EncodingMode};
use spikebench::digital::{simulate_digital, Dataflow, DigitalEnergyTable, DigitalOptions};
use spikebench::estimator::{count_flops, estimate_energy, EstimateInputs};
use spikebench::io::{
    generate_synthetic_workload_with, load_dataset, load_hardware_config, load_model, save_dataset, save_model,
    write_report, CostReport, Dataset, HardwareConfig, ReportFormat, SampleDtype, SyntheticProfile,
};
use spikebench::mitigations::{bn_adapt, share_lif, tune_dt_threshold, DtSnnPolicy, NoiseCalibrationSpec, ShareSpec, TuneOutcome};
use spikebench::snn::{infer, sparsity_profile, ExactMvm, SnnModel};
use spikebench::{Error, Result};

use crate::args::{
    Axis, BackendArg, DataflowArg, EstimateArgs, FormatArg, GenArgs, ProfileArg, SimulateArgs, SweepArgs, Workload,
};

/// What was asked for and what the mitigations decided, stored in every
/// report next to the hardware config the backend already records.
#[derive(Debug, Serialize)]
struct RunRecord<'a, A: Serialize> {
    command: &'static str,
    args: &'a A,
    #[serde(skip_serializing_if = "Option::is_none")]
    dt_tuning: Option<TuneOutcome>,
    #[serde(skip_serializing_if = "Option::is_none")]
    bn_adapt: Option<BnSummary>,
}

#[derive(Debug, Clone, Serialize)]
struct BnSummary {
    adapted_layers: usize,
    batches: usize,
    samples: usize,
}

#[derive(Serialize)]
struct WithRun<'a, A: Serialize, R> {
    run: &'a RunRecord<'a, A>,
    #[serde(flatten)]
    report: &'a R,
}

impl<A: Serialize, R: CostReport> CostReport for WithRun<'_, A, R> {
    fn check_totals(&self) -> Result<()> {
        self.report.check_totals()
    }

    fn csv_header(&self) -> Vec<String> {
        self.report.csv_header()
    }

    fn csv_rows(&self) -> Vec<Vec<String>> {
        self.report.csv_rows()
    }
}

fn load_workload(w: &Workload) -> Result<(SnnModel, Dataset)> {
    let mut model = load_model(&w.model)?;
    let data = load_dataset(&w.data)?;
    if data.sample_shape != model.input_shape {
        return Err(Error::InvalidArgument(format!(
            "--data samples have shape {} but the model expects {}",
            data.sample_shape, model.input_shape
        )));
    }
    if let Some(t) = w.timesteps {
        if t == 0 {
            return Err(Error::InvalidArgument("--timesteps must be >= 1".into()));
        }
        model = model.with_timesteps(t);
    }
    Ok((model, data))
}

fn load_config(path: &Path, backend: BackendArg) -> Result<HardwareConfig> {
    let config = load_hardware_config(path)?;
    let want = match backend {
        BackendArg::Digital => spikebench::io::Backend::Digital,
        BackendArg::Analog => spikebench::io::Backend::Analog,
    };
    if config.backend() != want {
        return Err(Error::InvalidArgument(format!(
            "--hw {} describes the {} backend but --backend is {want}",
            path.display(),
            config.backend()
        )));
    }
    Ok(config)
}

fn format_of(f: FormatArg) -> ReportFormat {
    match f {
        FormatArg::Json => ReportFormat::Json,
        FormatArg::Csv => ReportFormat::Csv,
    }
}

fn summary(
    backend: &str,
    accuracy: f64,
    total_pj: f64,
    per_inf_pj: f64,
    latency_ns: f64,
    edp: f64,
    avg_t: f64,
) -> String {
    format!(
        "{backend}: accuracy {accuracy:.4}, energy {total_pj:.4e} pJ total ({per_inf_pj:.4e} pJ/inference), \
         latency {latency_ns:.4e} ns/inference, EDP {edp:.4e} pJ*ns, avg timesteps {avg_t:.3}"
    )
}

fn check_analog_only(args: &SimulateArgs) -> Result<()> {
    if args.backend == BackendArg::Analog {
        if args.dataflow.is_some() {
            return Err(Error::InvalidArgument("--dataflow applies to the digital backend only".into()));
        }
        return Ok(());
    }
    for (set, flag) in [
        (args.nonideal, "--nonideal"),
        (args.ni_aware, "--ni-aware"),
        (args.bn_adapt.is_some(), "--bn-adapt"),
    ] {
        if set {
            return Err(Error::InvalidArgument(format!("{flag} applies to the analog backend only")));
        }
    }
    Ok(())
}

pub fn simulate(args: &SimulateArgs, workers: Option<usize>) -> Result<String> {
    check_analog_only(args)?;
    let config = load_config(&args.hw, args.backend)?;
    let (mut model, data) = load_workload(&args.workload)?;
    if let Some(n) = args.share_lif {
        model = share_lif(&model, ShareSpec::channel(n))
            .map_err(|e| Error::InvalidArgument(format!("--share-lif {n}: {}", e.root())))?;
    }

    let mut record = RunRecord {
        command: "simulate",
        args,
        dt_tuning: None,
        bn_adapt: None,
    };
    let dt_snn = if let Some(th) = args.dt_threshold {
        Some(DtSnnPolicy::new(th, model.timesteps).map_err(|e| Error::InvalidArgument(format!("--dt-threshold: {e}")))?)
    } else if args.dt_auto {
        let val = load_dataset(args.val_data.as_ref().expect("clap enforces --val-data"))?;
        let tuned = tune_dt_threshold(&model, &val, args.dt_target_drop, workers)?;
        let policy = DtSnnPolicy::new(tuned.threshold, model.timesteps)?;
        record.dt_tuning = Some(tuned);
        Some(policy)
    } else {
        None
    };

    let line = match config {
        HardwareConfig::Digital { mut systolic, energy } => {
            if let Some(df) = args.dataflow {
                systolic.dataflow = match df {
                    DataflowArg::Os => Dataflow::OutputStationary,
                    DataflowArg::Ws => Dataflow::WeightStationary,
                    DataflowArg::TickBatch => Dataflow::TickBatchWs,
                };
            }
            let r = simulate_digital(&model, &data, &systolic, &energy, &DigitalOptions { dt_snn, workers })?;
            write_if_asked(args, &record, &r)?;
            summary(
                "digital",
                r.accuracy,
                r.total_energy_pj,
                r.energy_per_inference_pj,
                r.latency_per_inference_ns,
                r.edp_pj_ns,
                r.avg_timesteps_used,
            )
        }
        HardwareConfig::Analog { crossbar, cost } => {
            let encoding = if args.ni_aware { EncodingMode::NiAware } else { EncodingMode::Naive };
            if let Some(n) = args.bn_adapt {
                let calib = match &args.calib_data {
                    Some(p) => load_dataset(p)?,
                    None => data.clone(),
                };
                let spec = NoiseCalibrationSpec {
                    sample_count: n,
                    momentum: args.bn_momentum,
                    batch_size: args.bn_batch,
                };
                spec.validate().map_err(|e| Error::InvalidArgument(format!("--bn-adapt: {e}")))?;
                let plan = plan_for(&model, &crossbar, encoding)?;
                let out = bn_adapt(&model, &calib.samples, &plan, &spec, args.seed)?;
                if let Some(w) = &out.warning {
                    eprintln!("warning: {w}");
                }
                record.bn_adapt = Some(BnSummary {
                    adapted_layers: out.adapted_layers,
                    batches: out.batches,
                    samples: n.min(calib.len()),
                });
                model = out.model;
            }
            let opts = AnalogOptions {
                nonideal: args.nonideal,
                seed: args.seed,
                dt_snn,
                encoding,
                workers,
            };
            let r = simulate_analog(&model, &data, &crossbar, &cost, &opts)?;
            write_if_asked(args, &record, &r)?;
            let mut line = summary(
                "analog",
                r.accuracy,
                r.total_energy_pj,
                r.energy_per_inference_pj,
                r.latency_per_inference_ns,
                r.edp_pj_ns,
                r.avg_timesteps_used,
            );
            if let Some(ni) = r.accuracy_nonideal {
                line.push_str(&format!(" (ideal accuracy {:.4}, non-ideal {ni:.4})", r.accuracy_ideal));
            }
            line
        }
    };
    Ok(line)
}

fn write_if_asked<R: CostReport>(args: &SimulateArgs, record: &RunRecord<'_, SimulateArgs>, report: &R) -> Result<()> {
    if let Some(out) = &args.out {
        write_report(&WithRun { run: record, report }, out, format_of(args.format))?;
    }
    Ok(())
}

#[derive(Debug, Serialize)]
struct EstimateReport<'a> {
    run: RunRecord<'a, EstimateArgs>,
    flops_per_timestep: u64,
    timesteps: usize,
    sparsity: f64,
    measured_sparsity: f64,
    e_ac_pj: f64,
    formula: String,
    e_est_pj: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    backend: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    simulated_energy_pj: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    divergence_ratio: Option<f64>,
}

pub fn estimate(args: &EstimateArgs, workers: Option<usize>) -> Result<String> {
    let (model, data) = load_workload(&args.workload)?;
    let config = args.hw.as_ref().map(load_hardware_config).transpose()?;
    let measured = sparsity_profile(&model, &data.samples)?.aggregate;
    let sparsity = args.sparsity.unwrap_or(measured);
    let e_ac = match (args.e_ac, &config) {
        (Some(e), _) => e,
        (None, Some(HardwareConfig::Digital { energy, .. })) => energy.e_ac_pj,
        (None, _) => DigitalEnergyTable::default().e_ac_pj,
    };
    let flops = count_flops(&model).total;
    let e_est = estimate_energy(&EstimateInputs {
        flops: flops as f64,
        timesteps: model.timesteps as u32,
        sparsity,
        e_ac,
    })
    .map_err(|e| match e {
        Error::InvalidArgument(m) => Error::InvalidArgument(format!("--sparsity/--e-ac: {m}")),
        other => other,
    })?;
    let formula = format!(
        "E_est = FLOPs x T x (1 - sparsity) x E_AC = {flops} x {} x (1 - {sparsity}) x {e_ac} = {e_est} pJ",
        model.timesteps
    );
    let (backend, simulated) = match &config {
        None => (None, None),
        Some(HardwareConfig::Digital { systolic, energy }) => {
            let r = simulate_digital(&model, &data, systolic, energy, &DigitalOptions { dt_snn: None, workers })?;
            (Some("digital".to_string()), Some(r.energy_per_inference_pj))
        }
        Some(HardwareConfig::Analog { crossbar, cost }) => {
            let opts = AnalogOptions { seed: args.seed, workers, ..Default::default() };
            let r = simulate_analog(&model, &data, crossbar, cost, &opts)?;
            (Some("analog".to_string()), Some(r.energy_per_inference_pj))
        }
    };
    let ratio = simulated.map(|s| s / e_est);
    let mut text = formula.clone();
    if let (Some(b), Some(s), Some(r)) = (&backend, simulated, ratio) {
        text.push_str(&format!("\n{b}: simulated {s:.4e} pJ/inference, divergence ratio {r:.2}"));
    }
    let report = EstimateReport {
        run: RunRecord { command: "estimate", args, dt_tuning: None, bn_adapt: None },
        flops_per_timestep: flops,
        timesteps: model.timesteps,
        sparsity,
        measured_sparsity: measured,
        e_ac_pj: e_ac,
        formula,
        e_est_pj: e_est,
        backend,
        simulated_energy_pj: simulated,
        divergence_ratio: ratio,
    };
    if let Some(out) = &args.out {
        let mut json = serde_json::to_string_pretty(&report)?;
        json.push('\n');
        fs::write(out, json)?;
    }
    Ok(text)
}

#[derive(Debug, Serialize)]
struct SweepRow {
    axis: &'static str,
    value: f64,
    energy_pj: f64,
    latency_ns: f64,
    edp_pj_ns: f64,
    accuracy: f64,
    accuracy_ideal: f64,
    avg_timesteps: f64,
    neuronal_area_mm2: f64,
}

fn axis_name(a: Axis) -> &'static str {
    match a {
        Axis::Timesteps => "timesteps",
        Axis::ShareN => "share_n",
        Axis::NoiseSigma => "noise_sigma",
        Axis::RWire => "r_wire",
    }
}

fn default_grid(a: Axis) -> Vec<f64> {
    match a {
        Axis::Timesteps => vec![1.0, 2.0, 3.0, 4.0],
        Axis::ShareN => vec![1.0, 2.0, 4.0],
        Axis::NoiseSigma => vec![0.0, 0.05, 0.1, 0.2, 0.3],
        Axis::RWire => vec![0.0, 0.5, 1.0, 2.0, 4.0],
    }
}

fn as_count(axis: Axis, v: f64) -> Result<usize> {
    if v >= 1.0 && v.fract() == 0.0 {
        Ok(v as usize)
    } else {
        Err(Error::InvalidArgument(format!(
            "--values: {} takes positive integers, got {v}",
            axis_name(axis)
        )))
    }
}

/// The noise and wire axes measure one non-ideality at a time: every other
/// source (read noise, wire, driver and sense resistance, converter
/// quantization) is switched off, so the zero point is the ideal pipeline.
fn isolated(base: &CrossbarConfig, axis: Axis, v: f64) -> CrossbarConfig {
    let mut c = CrossbarConfig {
        read_noise_sigma: 0.0,
        r_wire_ohm: 0.0,
        r_source_ohm: 0.0,
        r_sink_ohm: 0.0,
        adc_bits: 0,
        dac_bits: 0,
        ..base.clone()
    };
    match axis {
        Axis::NoiseSigma => c.read_noise_sigma = v,
        _ => c.r_wire_ohm = v,
    }
    c
}

pub fn sweep(args: &SweepArgs, workers: Option<usize>) -> Result<String> {
    let config = load_config(&args.hw, args.backend)?;
    let (model, data) = load_workload(&args.workload)?;
    let axis = args.axis;
    let values = args.values.clone().unwrap_or_else(|| default_grid(axis));
    if values.is_empty() {
        return Err(Error::InvalidArgument("--values is empty".into()));
    }
    if matches!(axis, Axis::NoiseSigma | Axis::RWire) && args.backend != BackendArg::Analog {
        return Err(Error::InvalidArgument(format!(
            "--axis {} needs --backend analog",
            axis_name(axis)
        )));
    }
    let mut rows = Vec::with_capacity(values.len());
    for &v in &values {
        let mut m = model.clone();
        match axis {
            Axis::Timesteps => m = m.with_timesteps(as_count(axis, v)?),
            Axis::ShareN => {
                let n = as_count(axis, v)?;
                m = share_lif(&m, ShareSpec::channel(n))
                    .map_err(|e| Error::InvalidArgument(format!("--values: share_n {n}: {}", e.root())))?;
            }
            _ => {}
        }
        let row = match &config {
            HardwareConfig::Digital { systolic, energy } => {
                let r = simulate_digital(&m, &data, systolic, energy, &DigitalOptions { dt_snn: None, workers })?;
                SweepRow {
                    axis: axis_name(axis),
                    value: v,
                    energy_pj: r.energy_per_inference_pj,
                    latency_ns: r.latency_per_inference_ns,
                    edp_pj_ns: r.edp_pj_ns,
                    accuracy: r.accuracy,
                    accuracy_ideal: r.accuracy,
                    avg_timesteps: r.avg_timesteps_used,
                    neuronal_area_mm2: r.lif.area_mm2,
                }
            }
            HardwareConfig::Analog { crossbar, cost } => {
                let (xc, nonideal) = match axis {
                    Axis::NoiseSigma | Axis::RWire => {
                        if !(v >= 0.0 && v.is_finite()) {
                            return Err(Error::InvalidArgument(format!(
                                "--values: {} must be finite and >= 0, got {v}",
                                axis_name(axis)
                            )));
                        }
                        (isolated(crossbar, axis, v), true)
                    }
                    _ => (crossbar.clone(), args.nonideal),
                };
                let opts = AnalogOptions { nonideal, seed: args.seed, workers, ..Default::default() };
                let r = simulate_analog(&m, &data, &xc, cost, &opts)?;
                SweepRow {
                    axis: axis_name(axis),
                    value: v,
                    energy_pj: r.energy_per_inference_pj,
                    latency_ns: r.latency_per_inference_ns,
                    edp_pj_ns: r.edp_pj_ns,
                    accuracy: r.accuracy,
                    accuracy_ideal: r.accuracy_ideal,
                    avg_timesteps: r.avg_timesteps_used,
                    neuronal_area_mm2: r.area.neuronal_mm2,
                }
            }
        };
        rows.push(row);
    }
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in &rows {
        w.serialize(r).map_err(|e| Error::Numerical(format!("cannot serialize sweep row: {e}")))?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Io(e.into_error()))?;
    match &args.out {
        Some(p) => {
            fs::write(p, &bytes)?;
            Ok(format!("{} rows written to {}", rows.len(), p.display()))
        }
        None => {
            std::io::stdout().write_all(&bytes)?;
            Ok(String::new())
        }
    }
}

pub fn gen(args: &GenArgs) -> Result<String> {
    let profile = match args.profile {
        ProfileArg::TinyMlp => SyntheticProfile::TinyMlp,
        ProfileArg::TinyCnn => SyntheticProfile::TinyCnn,
    };
    let mut opts = profile.default_options();
    if let Some(n) = args.samples {
        opts.samples = n;
    }
    if let Some(a) = args.noise {
        opts.noise = a;
    }
    let w = generate_synthetic_workload_with(args.seed, profile, &opts)?;
    fs::create_dir_all(&args.out)?;
    save_model(&w.model, args.out.join("model.json"))?;
    save_dataset(&w.dataset, args.out.join("data.snnb"), SampleDtype::F64)?;

    let mut per_class = vec![0usize; w.model.num_classes];
    for &l in &w.dataset.labels {
        per_class[l as usize] += 1;
    }
    let correct = w
        .dataset
        .samples
        .iter()
        .zip(&w.dataset.labels)
        .map(|(x, l)| infer(&w.model, x, &mut ExactMvm).map(|r| r.prediction == *l as usize))
        .collect::<Result<Vec<_>>>()?
        .into_iter()
        .filter(|c| *c)
        .count();
    Ok(format!(
        "{profile} seed {}: {} samples of shape {}, {} classes (per class {:?}), T = {}, exact accuracy {:.4}\nwrote {}",
        args.seed,
        w.dataset.len(),
        w.dataset.sample_shape,
        w.model.num_classes,
        per_class,
        w.model.timesteps,
        correct as f64 / w.dataset.len() as f64,
        args.out.display()
    ))
}
