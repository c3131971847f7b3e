//! End-to-end analog simulation: functional inference through the crossbar
//! pipeline and per-timestep energy, latency and area accounting.

use serde::{Deserialize, Serialize};

use crate::analog::config::{AnalogCostModel, CrossbarConfig};
use crate::analog::mapping::{map_model, EncodingMode, LayerMapping, TilePlan};
use crate::analog::pipeline::{CrossbarPipeline, PipelineMode, PipelineStats};
use crate::digital::sim::close;
use crate::error::{Error, Result};
use crate::io::Dataset;
use crate::mitigations::{ni_aware_encode, DtSnnPolicy};
use crate::parallel::run_indexed;
use crate::snn::{run_inference, LayerActivity, NoObserver, SnnModel};

#[derive(Debug, Clone, PartialEq)]
pub struct AnalogOptions {
    /// Run the non-ideal pipeline (costs and the headline accuracy come from
    /// it); the ideal accuracy is always reported.
    pub nonideal: bool,
    pub seed: u64,
    pub dt_snn: Option<DtSnnPolicy>,
    pub encoding: EncodingMode,
    pub workers: Option<usize>,
}

impl Default for AnalogOptions {
    fn default() -> Self {
        AnalogOptions {
            nonideal: false,
            seed: 0,
            dt_snn: None,
            encoding: EncodingMode::Naive,
            workers: None,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct AnalogEnergy {
    pub crossbar_pj: f64,
    pub adc_pj: f64,
    pub dac_pj: f64,
    pub diff_pj: f64,
    pub htree_pj: f64,
    pub noc_pj: f64,
    pub neuronal_pj: f64,
    pub buffers_pj: f64,
    pub entropy_pj: f64,
}

impl AnalogEnergy {
    pub fn total(&self) -> f64 {
        self.components().iter().map(|(_, v)| v).sum()
    }

    pub(crate) fn components(&self) -> [(&'static str, f64); 9] {
        [
            ("crossbar_pj", self.crossbar_pj),
            ("adc_pj", self.adc_pj),
            ("dac_pj", self.dac_pj),
            ("diff_pj", self.diff_pj),
            ("htree_pj", self.htree_pj),
            ("noc_pj", self.noc_pj),
            ("neuronal_pj", self.neuronal_pj),
            ("buffers_pj", self.buffers_pj),
            ("entropy_pj", self.entropy_pj),
        ]
    }

    fn add(&mut self, o: &AnalogEnergy) {
        self.crossbar_pj += o.crossbar_pj;
        self.adc_pj += o.adc_pj;
        self.dac_pj += o.dac_pj;
        self.diff_pj += o.diff_pj;
        self.htree_pj += o.htree_pj;
        self.noc_pj += o.noc_pj;
        self.neuronal_pj += o.neuronal_pj;
        self.buffers_pj += o.buffers_pj;
        self.entropy_pj += o.entropy_pj;
    }

    fn compute_pj(&self) -> f64 {
        self.crossbar_pj + self.adc_pj + self.dac_pj + self.diff_pj
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AnalogArea {
    pub crossbars_mm2: f64,
    pub adcs_mm2: f64,
    /// LIF logic plus the u^t membrane cache.
    pub neuronal_mm2: f64,
    pub buffers_mm2: f64,
    pub total_mm2: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalogRow {
    pub layer: usize,
    pub kind: String,
    pub timestep: usize,
    pub samples: usize,
    pub latency_ns: f64,
    #[serde(flatten)]
    pub energy: AnalogEnergy,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalogCostReport {
    pub backend: String,
    pub samples: usize,
    pub nonideal: bool,
    pub seed: u64,
    pub encoding: EncodingMode,
    /// Accuracy of the pipeline the costs were taken from.
    pub accuracy: f64,
    pub accuracy_ideal: f64,
    pub accuracy_nonideal: Option<f64>,
    pub max_timesteps: usize,
    pub avg_timesteps_used: f64,
    pub energy: AnalogEnergy,
    pub total_energy_pj: f64,
    pub latency_ns: f64,
    pub energy_per_inference_pj: f64,
    pub latency_per_inference_ns: f64,
    pub edp_pj_ns: f64,
    pub area: AnalogArea,
    pub crossbars: usize,
    pub tiles: usize,
    pub high_resistance_fraction: f64,
    pub adc_conversions: u64,
    pub adc_saturations: u64,
    pub predictions: Vec<usize>,
    pub timesteps_used: Vec<usize>,
    pub rows: Vec<AnalogRow>,
    pub config: CrossbarConfig,
    pub cost: AnalogCostModel,
    pub dt_snn: Option<DtSnnPolicy>,
}

impl AnalogCostReport {
    pub fn check_totals(&self) -> Result<()> {
        let mut sum = AnalogEnergy::default();
        let mut latency = 0.0;
        for r in &self.rows {
            sum.add(&r.energy);
            latency += r.latency_ns;
        }
        for ((name, total), (_, rows)) in self.energy.components().iter().zip(sum.components()) {
            if !close(*total, rows) {
                return Err(Error::Numerical(format!(
                    "report {name} total {total} differs from row sum {rows}"
                )));
            }
        }
        if !close(self.total_energy_pj, self.energy.total()) || !close(self.latency_ns, latency) {
            return Err(Error::Numerical("report totals inconsistent with rows".into()));
        }
        Ok(())
    }
}

/// Static placement of tiles on the smallest square grid, neuronal module
/// in the middle.
#[derive(Debug, Clone, PartialEq)]
pub struct TileLayout {
    pub tiles_per_layer: Vec<usize>,
    pub side: usize,
    /// Mean Manhattan hops (plus one for ejection) from a layer's tiles to
    /// the neuronal module.
    pub mean_hops: Vec<f64>,
    /// Hops inside a tile's H-tree.
    pub htree_hops: u32,
}

pub fn tile_layout(plan: &TilePlan, cost: &AnalogCostModel) -> TileLayout {
    let tiles_per_layer: Vec<usize> = plan
        .layers
        .iter()
        .map(|m| m.as_ref().map_or(0, |m| m.crossbar_count().div_ceil(cost.crossbars_per_tile)))
        .collect();
    let total: usize = tiles_per_layer.iter().sum();
    let mut side = 1;
    while side * side < total {
        side += 1;
    }
    let center = (side / 2) as i64;
    let mut next = 0usize;
    let mean_hops = tiles_per_layer
        .iter()
        .map(|&n| {
            if n == 0 {
                return 0.0;
            }
            let hops: i64 = (next..next + n)
                .map(|k| {
                    let (x, y) = ((k % side) as i64, (k / side) as i64);
                    (x - center).abs() + (y - center).abs() + 1
                })
                .sum();
            next += n;
            hops as f64 / n as f64
        })
        .collect();
    let htree_hops = (cost.crossbars_per_tile as f64).log2().ceil().max(1.0) as u32;
    TileLayout {
        tiles_per_layer,
        side,
        mean_hops,
        htree_hops,
    }
}

/// Energy and latency of one layer at one timestep given its activity.
pub fn layer_step_cost(
    m: &LayerMapping,
    real_input: bool,
    act: &LayerActivity,
    layout: &TileLayout,
    config: &CrossbarConfig,
    cost: &AnalogCostModel,
) -> (AnalogEnergy, f64) {
    let g = m.gemm;
    let slices = m.coding.slices as f64;
    let steps = if real_input { config.dac_bits.max(1) as f64 } else { 1.0 };
    let in_bits = if real_input { config.dac_bits.max(1) as f64 } else { 1.0 };
    let used_cols: usize = m.crossbars.iter().map(|x| x.cols_used).sum();
    let conversions = used_cols as f64 * g.positions as f64 * steps;
    let row_drives = act.active_row_reads as f64 * m.col_tiles as f64 * slices * steps;
    let adc_bits = config.adc_bits.max(1);
    let psum = cost.psum_bits as f64;
    let outputs = (g.outputs * g.positions) as f64;
    let mut e = AnalogEnergy {
        crossbar_pj: row_drives * cost.e_xbar_read_pj,
        adc_pj: conversions * cost.e_adc_pj_per_level * (1u64 << adc_bits) as f64,
        ..Default::default()
    };
    if real_input {
        e.dac_pj = act.active_row_reads as f64 * m.col_tiles as f64 * steps * cost.e_dac_pj;
    }
    e.diff_pj = outputs * m.row_tiles as f64 * slices * steps * cost.e_diff_pj;
    e.htree_pj = conversions * adc_bits as f64 * layout.htree_hops as f64 * cost.e_htree_pj_per_bit_per_hop;
    let noc_bits = outputs * m.row_tiles as f64 * psum + act.input_len as f64 * in_bits;
    e.noc_pj = noc_bits * layout.mean_hops[m.layer_index] * cost.e_noc_pj_per_bit_per_hop;
    let updates = act.membrane_updates as f64;
    e.neuronal_pj = updates * cost.e_lif_pj
        + 2.0 * updates * cost.membrane_bits as f64 / 8.0 * cost.e_buffer_pj_per_byte;
    let buffer_bits = (g.reduction * g.positions * m.col_tiles) as f64 * in_bits;
    e.buffers_pj = buffer_bits / 8.0 * cost.e_buffer_pj_per_byte;
    let latency = g.positions as f64 * steps * cost.t_read_ns;
    (e, latency)
}

pub fn analog_area(model: &SnnModel, plan: &TilePlan, layout: &TileLayout, cost: &AnalogCostModel) -> AnalogArea {
    let xb = plan.crossbar_count() as f64;
    let membrane_bits: usize = model
        .layers
        .iter()
        .filter(|l| l.neuron.is_some())
        .map(|l| l.membrane_count() * cost.membrane_bits as usize)
        .sum();
    let crossbars_mm2 = xb * cost.xbar_area_mm2;
    let adcs_mm2 = xb * cost.adc_area_mm2;
    let neuronal_mm2 =
        cost.lif_logic_area_mm2 + membrane_bits as f64 / 8.0 / 1024.0 * cost.cache_area_mm2_per_kib;
    let tiles: usize = layout.tiles_per_layer.iter().sum();
    let buffers_mm2 = tiles as f64 * cost.tile_buffer_area_mm2;
    AnalogArea {
        crossbars_mm2,
        adcs_mm2,
        neuronal_mm2,
        buffers_mm2,
        total_mm2: crossbars_mm2 + adcs_mm2 + neuronal_mm2 + buffers_mm2,
    }
}

/// Builds the tile plan an options set asks for.
pub fn plan_for(model: &SnnModel, config: &CrossbarConfig, encoding: EncodingMode) -> Result<TilePlan> {
    let plan = map_model(model, config)?;
    match encoding {
        EncodingMode::Naive => Ok(plan),
        EncodingMode::NiAware => ni_aware_encode(&plan, &model.weights),
    }
}

struct SampleRun {
    prediction: usize,
    used: usize,
    rows: Vec<Vec<(f64, AnalogEnergy)>>,
    stats: PipelineStats,
}

pub fn simulate_analog(
    model: &SnnModel,
    dataset: &Dataset,
    config: &CrossbarConfig,
    cost: &AnalogCostModel,
    options: &AnalogOptions,
) -> Result<AnalogCostReport> {
    cost.validate()?;
    dataset.validate()?;
    if dataset.is_empty() {
        return Err(Error::InvalidArgument("dataset is empty".into()));
    }
    if dataset.sample_shape != model.input_shape {
        return Err(Error::InvalidArgument(format!(
            "dataset samples are {} but the model expects {}",
            dataset.sample_shape, model.input_shape
        )));
    }
    if let Some(p) = &options.dt_snn {
        p.validate()?;
    }
    let plan = plan_for(model, config, options.encoding)?;
    let layout = tile_layout(&plan, cost);
    let policy = options.dt_snn.filter(|p| p.is_active());
    let max_t = options.dt_snn.map_or(model.timesteps, |p| p.max_timesteps);
    let ci = model.classifier_index();

    let run = |mode: PipelineMode, i: usize| -> Result<SampleRun> {
        let mut pipe = CrossbarPipeline::new(&plan, mode, i as u64);
        let inf = run_inference(model, &dataset.samples[i], &mut pipe, max_t, &mut NoObserver, |_, l| {
            policy.is_some_and(|p| p.should_exit(l))
        })?;
        let mut rows = vec![Vec::with_capacity(inf.timesteps_used); model.layers.len()];
        for step in &inf.trace.timesteps {
            let mut compute = 0.0;
            for (li, act) in step.layers.iter().enumerate() {
                let cell = match &plan.layers[li] {
                    Some(m) => {
                        let real_input = li == 0 || !model.layers[li - 1].is_weighted();
                        let (e, lat) = layer_step_cost(m, real_input, act, &layout, config, cost);
                        compute += e.compute_pj();
                        (lat, e)
                    }
                    None => (0.0, AnalogEnergy::default()),
                };
                rows[li].push(cell);
            }
            if policy.is_some() {
                let last = rows[ci].last_mut().expect("classifier row");
                last.1.entropy_pj = cost.entropy_overhead_fraction * compute;
            }
        }
        Ok(SampleRun {
            prediction: inf.prediction,
            used: inf.timesteps_used,
            rows,
            stats: pipe.stats,
        })
    };

    let n = dataset.len();
    let ideal = run_indexed(n, options.workers, |i| run(PipelineMode::Ideal, i))?;
    let nonideal = if options.nonideal {
        Some(run_indexed(n, options.workers, |i| {
            run(PipelineMode::Nonideal { seed: options.seed }, i)
        })?)
    } else {
        None
    };
    let accuracy_of = |runs: &[SampleRun]| {
        runs.iter()
            .zip(&dataset.labels)
            .filter(|(r, l)| r.prediction == **l as usize)
            .count() as f64
            / n as f64
    };
    let accuracy_ideal = accuracy_of(&ideal);
    let accuracy_nonideal = nonideal.as_deref().map(accuracy_of);
    let primary = nonideal.as_deref().unwrap_or(&ideal);

    let mut rows: Vec<AnalogRow> = (0..model.layers.len())
        .flat_map(|li| {
            let kind = model.layers[li].kind.name().to_string();
            (0..max_t).map(move |t| AnalogRow {
                layer: li,
                kind: kind.clone(),
                timestep: t,
                samples: 0,
                latency_ns: 0.0,
                energy: AnalogEnergy::default(),
            })
        })
        .collect();
    let mut stats = PipelineStats::default();
    for r in primary {
        for (li, per_t) in r.rows.iter().enumerate() {
            for (t, (lat, e)) in per_t.iter().enumerate() {
                let row = &mut rows[li * max_t + t];
                row.samples += 1;
                row.latency_ns += lat;
                row.energy.add(e);
            }
        }
        stats.conversions += r.stats.conversions;
        stats.saturations += r.stats.saturations;
    }
    let mut energy = AnalogEnergy::default();
    let mut latency_ns = 0.0;
    for r in &rows {
        energy.add(&r.energy);
        latency_ns += r.latency_ns;
    }
    let nf = n as f64;
    let energy_per_inference_pj = energy.total() / nf;
    let latency_per_inference_ns = latency_ns / nf;
    let report = AnalogCostReport {
        backend: "analog".into(),
        samples: n,
        nonideal: options.nonideal,
        seed: options.seed,
        encoding: options.encoding,
        accuracy: accuracy_nonideal.unwrap_or(accuracy_ideal),
        accuracy_ideal,
        accuracy_nonideal,
        max_timesteps: max_t,
        avg_timesteps_used: primary.iter().map(|r| r.used).sum::<usize>() as f64 / nf,
        energy,
        total_energy_pj: energy.total(),
        latency_ns,
        energy_per_inference_pj,
        latency_per_inference_ns,
        edp_pj_ns: energy_per_inference_pj * latency_per_inference_ns,
        area: analog_area(model, &plan, &layout, cost),
        crossbars: plan.crossbar_count(),
        tiles: layout.tiles_per_layer.iter().sum(),
        high_resistance_fraction: plan.high_resistance_fraction(),
        adc_conversions: stats.conversions,
        adc_saturations: stats.saturations,
        predictions: primary.iter().map(|r| r.prediction).collect(),
        timesteps_used: primary.iter().map(|r| r.used).collect(),
        rows,
        config: config.clone(),
        cost: cost.clone(),
        dt_snn: options.dt_snn,
    };
    report.check_totals()?;
    Ok(report)
}
