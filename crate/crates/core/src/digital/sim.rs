//! End-to-end digital simulation: exact functional inference with the cost
//! of every layer integrated per timestep.

use serde::{Deserialize, Serialize};

use crate::digital::config::{Dataflow, DigitalEnergyTable, SystolicConfig};
use crate::digital::energy::{compute_energy, lif_cost, LifCost};
use crate::digital::tiling::tile_model;
use crate::digital::traffic::{memory_traffic, LayerTraffic, Traffic};
use crate::error::{Error, Result};
use crate::io::Dataset;
use crate::mitigations::DtSnnPolicy;
use crate::parallel::run_indexed;
use crate::snn::{run_inference, ExactMvm, NoObserver, SnnModel};

#[derive(Debug, Clone, Default, PartialEq)]
pub struct DigitalOptions {
    /// Dynamic timestep exit; `None` runs the model's static T.
    pub dt_snn: Option<DtSnnPolicy>,
    /// Worker threads for per-input simulation; `None` uses the global pool.
    pub workers: Option<usize>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct DigitalEnergy {
    pub compute_pj: f64,
    pub spad_pj: f64,
    pub sram_pj: f64,
    pub dram_pj: f64,
    pub lif_pj: f64,
    pub leakage_pj: f64,
    /// Entropy module of dynamic timestep exit.
    pub entropy_pj: f64,
}

impl DigitalEnergy {
    pub fn total(&self) -> f64 {
        self.compute_pj
            + self.spad_pj
            + self.sram_pj
            + self.dram_pj
            + self.lif_pj
            + self.leakage_pj
            + self.entropy_pj
    }

    /// Data movement across the memory hierarchy.
    pub fn memory_pj(&self) -> f64 {
        self.spad_pj + self.sram_pj + self.dram_pj
    }

    fn add(&mut self, o: &DigitalEnergy) {
        self.compute_pj += o.compute_pj;
        self.spad_pj += o.spad_pj;
        self.sram_pj += o.sram_pj;
        self.dram_pj += o.dram_pj;
        self.lif_pj += o.lif_pj;
        self.leakage_pj += o.leakage_pj;
        self.entropy_pj += o.entropy_pj;
    }

    pub(crate) fn components(&self) -> [(&'static str, f64); 7] {
        [
            ("compute_pj", self.compute_pj),
            ("spad_pj", self.spad_pj),
            ("sram_pj", self.sram_pj),
            ("dram_pj", self.dram_pj),
            ("lif_pj", self.lif_pj),
            ("leakage_pj", self.leakage_pj),
            ("entropy_pj", self.entropy_pj),
        ]
    }
}

/// Cost of one layer at one timestep, summed over every input that ran it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DigitalRow {
    pub layer: usize,
    pub kind: String,
    pub timestep: usize,
    pub samples: usize,
    pub active_ops: u64,
    pub latency_cycles: u64,
    #[serde(flatten)]
    pub energy: DigitalEnergy,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DigitalArea {
    pub pe_mm2: f64,
    pub sram_mm2: f64,
    pub lif_mm2: f64,
    pub total_mm2: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DigitalCostReport {
    pub backend: String,
    pub samples: usize,
    pub accuracy: f64,
    pub max_timesteps: usize,
    pub avg_timesteps_used: f64,
    /// Totals over the whole dataset.
    pub energy: DigitalEnergy,
    pub total_energy_pj: f64,
    pub latency_cycles: u64,
    pub energy_per_inference_pj: f64,
    pub latency_per_inference_ns: f64,
    /// Per-inference energy times per-inference latency.
    pub edp_pj_ns: f64,
    pub area: DigitalArea,
    pub lif: LifCost,
    /// Bits moved over the dataset, by data kind and level.
    pub traffic: Traffic,
    pub predictions: Vec<usize>,
    pub timesteps_used: Vec<usize>,
    pub rows: Vec<DigitalRow>,
    pub config: SystolicConfig,
    pub table: DigitalEnergyTable,
    pub dt_snn: Option<DtSnnPolicy>,
}

impl DigitalCostReport {
    /// Bits of weights moved from DRAM and SRAM towards the array.
    pub fn weight_movement_bits(&self) -> u64 {
        let w = self.traffic.weight;
        w.dram() + w.sram() + w.spad_write
    }

    /// Checks that every total equals the sum of its rows.
    pub fn check_totals(&self) -> Result<()> {
        let mut sum = DigitalEnergy::default();
        let mut cycles = 0;
        for r in &self.rows {
            sum.add(&r.energy);
            cycles += r.latency_cycles;
        }
        for ((name, total), (_, rows)) in self.energy.components().iter().zip(sum.components()) {
            if !close(*total, rows) {
                return Err(Error::Numerical(format!(
                    "report {name} total {total} differs from row sum {rows}"
                )));
            }
        }
        if !close(self.total_energy_pj, self.energy.total()) || cycles != self.latency_cycles {
            return Err(Error::Numerical("report totals inconsistent with rows".into()));
        }
        Ok(())
    }
}

pub(crate) fn close(a: f64, b: f64) -> bool {
    (a - b).abs() <= 1e-9 * a.abs().max(b.abs()).max(1e-300)
}

struct LayerPlan {
    traffic: LayerTraffic,
    once_cycles: u64,
    per_cycles: u64,
}

struct SampleCost {
    prediction: usize,
    correct: bool,
    used: usize,
    /// `[layer][timestep]` for the timesteps that ran.
    rows: Vec<Vec<(u64, u64, DigitalEnergy)>>,
    membrane_updates: u64,
}

pub fn simulate_digital(
    model: &SnnModel,
    dataset: &Dataset,
    config: &SystolicConfig,
    table: &DigitalEnergyTable,
    options: &DigitalOptions,
) -> Result<DigitalCostReport> {
    model.validate()?;
    config.validate()?;
    table.validate()?;
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
    let policy = options.dt_snn.filter(|p| p.is_active());
    if let Some(p) = &options.dt_snn {
        p.validate()?;
    }
    if policy.is_some() && config.dataflow == Dataflow::TickBatchWs {
        return Err(Error::InvalidArgument(
            "dynamic timestep exit needs the classifier output after every timestep, \
             which tick_batch_ws only produces after all timesteps"
                .into(),
        ));
    }
    let max_t = options.dt_snn.map_or(model.timesteps, |p| p.max_timesteps);

    let plans: Vec<Option<LayerPlan>> = tile_model(model, config)?
        .into_iter()
        .map(|nest| {
            nest.map(|n| {
                let (once_cycles, per_cycles) = n.latency_cycles(config.dataflow);
                LayerPlan {
                    traffic: memory_traffic(&n, config),
                    once_cycles,
                    per_cycles,
                }
            })
        })
        .collect();

    let leak_pj_per_cycle =
        table.leakage_pw_per_pe * config.pe_count() as f64 / table.clock_ghz * 1e-9;

    let per_sample = |i: usize| -> Result<SampleCost> {
        let input = &dataset.samples[i];
        let inf = run_inference(model, input, &mut ExactMvm, max_t, &mut NoObserver, |_, running| {
            policy.is_some_and(|p| p.should_exit(running))
        })?;
        let used = inf.timesteps_used;
        let mut rows = vec![Vec::with_capacity(used); model.layers.len()];
        let mut membrane_updates = 0;
        for (t, step) in inf.trace.timesteps.iter().enumerate() {
            let mut step_compute = 0.0;
            for (li, act) in step.layers.iter().enumerate() {
                let mut e = DigitalEnergy::default();
                let mut cycles = 0;
                if let Some(plan) = &plans[li] {
                    let mut tr = plan.traffic.per_timestep;
                    cycles = plan.per_cycles;
                    if t == 0 {
                        tr = tr + plan.traffic.once;
                        cycles += plan.once_cycles;
                    }
                    let (spad, sram, dram) = tr.total().energy_pj(table);
                    e.spad_pj = spad;
                    e.sram_pj = sram;
                    e.dram_pj = dram;
                    e.compute_pj = compute_energy(act.active_ops, table);
                    e.lif_pj = act.membrane_updates as f64 * table.e_lif_update_pj;
                    e.leakage_pj = cycles as f64 * leak_pj_per_cycle;
                    membrane_updates += act.membrane_updates as u64;
                    step_compute += e.compute_pj;
                }
                rows[li].push((act.active_ops, cycles, e));
            }
            if policy.is_some() {
                let ci = model.classifier_index();
                rows[ci][t].2.entropy_pj = table.entropy_overhead_fraction * step_compute;
            }
        }
        Ok(SampleCost {
            prediction: inf.prediction,
            correct: inf.prediction == dataset.labels[i] as usize,
            used,
            rows,
            membrane_updates,
        })
    };
    let costs = run_indexed(dataset.len(), options.workers, per_sample)?;

    let n_layers = model.layers.len();
    let mut rows: Vec<DigitalRow> = (0..n_layers)
        .flat_map(|li| {
            let kind = model.layers[li].kind.name().to_string();
            (0..max_t).map(move |t| DigitalRow {
                layer: li,
                kind: kind.clone(),
                timestep: t,
                samples: 0,
                active_ops: 0,
                latency_cycles: 0,
                energy: DigitalEnergy::default(),
            })
        })
        .collect();
    let mut traffic = Traffic::default();
    let mut membrane_updates = 0;
    for c in &costs {
        for (li, per_t) in c.rows.iter().enumerate() {
            for (t, (ops, cycles, e)) in per_t.iter().enumerate() {
                let row = &mut rows[li * max_t + t];
                row.samples += 1;
                row.active_ops += ops;
                row.latency_cycles += cycles;
                row.energy.add(e);
            }
        }
        for plan in plans.iter().flatten() {
            traffic = traffic + plan.traffic.over(c.used as u64);
        }
        membrane_updates += c.membrane_updates;
    }

    let mut energy = DigitalEnergy::default();
    let mut latency_cycles = 0;
    for r in &rows {
        energy.add(&r.energy);
        latency_cycles += r.latency_cycles;
    }
    let lif = lif_cost(model, config, table, membrane_updates)?;
    let area = {
        let pe_mm2 = config.pe_count() as f64 * table.pe_area_mm2;
        let sram_mm2 = config.sram_bytes as f64 / 1024.0 * table.sram_area_mm2_per_kib;
        DigitalArea {
            pe_mm2,
            sram_mm2,
            lif_mm2: lif.area_mm2,
            total_mm2: pe_mm2 + sram_mm2 + lif.area_mm2,
        }
    };
    let n = dataset.len() as f64;
    let energy_per_inference_pj = energy.total() / n;
    let latency_per_inference_ns = latency_cycles as f64 / table.clock_ghz / n;
    let report = DigitalCostReport {
        backend: "digital".into(),
        samples: dataset.len(),
        accuracy: costs.iter().filter(|c| c.correct).count() as f64 / n,
        max_timesteps: max_t,
        avg_timesteps_used: costs.iter().map(|c| c.used).sum::<usize>() as f64 / n,
        energy,
        total_energy_pj: energy.total(),
        latency_cycles,
        energy_per_inference_pj,
        latency_per_inference_ns,
        edp_pj_ns: energy_per_inference_pj * latency_per_inference_ns,
        area,
        lif,
        traffic,
        predictions: costs.iter().map(|c| c.prediction).collect(),
        timesteps_used: costs.iter().map(|c| c.used).collect(),
        rows,
        config: config.clone(),
        table: table.clone(),
        dt_snn: options.dt_snn,
    };
    report.check_totals()?;
    Ok(report)
}
