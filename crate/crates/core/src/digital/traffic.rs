//! Bit-level data movement across DRAM, the SRAM global buffer and the PE
//! scratchpads.
//!
//! Spike inputs are fetched densely (one bit per element whatever its value);
//! only the PE compute is gated by zero operands. Traffic is therefore a
//! function of the loop nest alone.

use std::ops::{Add, AddAssign};

use serde::{Deserialize, Serialize};

use crate::digital::config::{Dataflow, DigitalEnergyTable, SystolicConfig};
use crate::digital::tiling::LoopNest;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct LevelBits {
    pub dram_read: u64,
    pub dram_write: u64,
    pub sram_read: u64,
    pub sram_write: u64,
    pub spad_read: u64,
    pub spad_write: u64,
}

impl LevelBits {
    pub fn dram(&self) -> u64 {
        self.dram_read + self.dram_write
    }

    pub fn sram(&self) -> u64 {
        self.sram_read + self.sram_write
    }

    pub fn spad(&self) -> u64 {
        self.spad_read + self.spad_write
    }

    pub fn scaled(&self, k: u64) -> Self {
        LevelBits {
            dram_read: self.dram_read * k,
            dram_write: self.dram_write * k,
            sram_read: self.sram_read * k,
            sram_write: self.sram_write * k,
            spad_read: self.spad_read * k,
            spad_write: self.spad_write * k,
        }
    }

    /// `(spad_pj, sram_pj, dram_pj)`.
    pub fn energy_pj(&self, table: &DigitalEnergyTable) -> (f64, f64, f64) {
        let bytes = |bits: u64| bits as f64 / 8.0;
        (
            bytes(self.spad()) * table.e_spad_access_pj_per_byte,
            bytes(self.sram()) * table.e_sram_access_pj_per_byte,
            bytes(self.dram()) * table.e_dram_access_pj_per_byte,
        )
    }
}

impl Add for LevelBits {
    type Output = LevelBits;

    fn add(self, o: LevelBits) -> LevelBits {
        LevelBits {
            dram_read: self.dram_read + o.dram_read,
            dram_write: self.dram_write + o.dram_write,
            sram_read: self.sram_read + o.sram_read,
            sram_write: self.sram_write + o.sram_write,
            spad_read: self.spad_read + o.spad_read,
            spad_write: self.spad_write + o.spad_write,
        }
    }
}

impl AddAssign for LevelBits {
    fn add_assign(&mut self, o: LevelBits) {
        *self = *self + o;
    }
}

/// Traffic split by the kind of data moved.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Traffic {
    pub weight: LevelBits,
    pub input: LevelBits,
    pub psum: LevelBits,
    pub membrane: LevelBits,
    pub output: LevelBits,
}

impl Traffic {
    pub fn total(&self) -> LevelBits {
        self.weight + self.input + self.psum + self.membrane + self.output
    }

    pub fn scaled(&self, k: u64) -> Self {
        Traffic {
            weight: self.weight.scaled(k),
            input: self.input.scaled(k),
            psum: self.psum.scaled(k),
            membrane: self.membrane.scaled(k),
            output: self.output.scaled(k),
        }
    }
}

impl Add for Traffic {
    type Output = Traffic;

    fn add(self, o: Traffic) -> Traffic {
        Traffic {
            weight: self.weight + o.weight,
            input: self.input + o.input,
            psum: self.psum + o.psum,
            membrane: self.membrane + o.membrane,
            output: self.output + o.output,
        }
    }
}

/// Traffic of one layer: a non-recurring part paid at the first timestep and
/// a part repeated every timestep.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct LayerTraffic {
    pub once: Traffic,
    pub per_timestep: Traffic,
}

impl LayerTraffic {
    pub fn over(&self, timesteps: u64) -> Traffic {
        self.once + self.per_timestep.scaled(timesteps)
    }
}

pub fn memory_traffic(nest: &LoopNest, config: &SystolicConfig) -> LayerTraffic {
    let g = nest.gemm;
    let (wb, ib) = (nest.weight_bits as u64, nest.input_bits as u64);
    let psb = config.psum_bits as u64;
    let weights = nest.weight_count();
    let ops = nest.ops_per_timestep();
    let mut once = Traffic::default();
    let mut per = Traffic::default();

    let weight_fetch = LevelBits {
        dram_read: weights * wb,
        sram_write: weights * wb,
        sram_read: weights * wb,
        ..Default::default()
    };
    let pin = LevelBits {
        spad_write: weights * wb,
        ..Default::default()
    };
    match config.dataflow {
        Dataflow::OutputStationary => per.weight += weight_fetch,
        Dataflow::WeightStationary => per.weight += weight_fetch + pin,
        Dataflow::TickBatchWs => once.weight += weight_fetch + pin,
    }
    // Operand registers inside the PEs are touched by every accumulation.
    per.weight.spad_read += ops * wb;
    per.input.spad_read += ops * ib;
    per.psum.spad_read += ops * psb;
    per.psum.spad_write += ops * psb;

    // Each pass streams its input block; inputs are re-read per column tile.
    per.input.sram_read += (g.reduction * g.positions * nest.col_tiles) as u64 * ib;
    if nest.loads_input_from_dram {
        let bits = nest.input_elems as u64 * ib;
        once.input.dram_read += bits;
        once.input.sram_write += bits;
    }

    if config.dataflow != Dataflow::OutputStationary && nest.row_tiles > 1 {
        let spill = ((nest.row_tiles - 1) * g.outputs * g.positions) as u64 * psb;
        per.psum.sram_write += spill;
        per.psum.sram_read += spill;
    }

    let mb = config.membrane_bits as u64;
    per.membrane.sram_read += nest.membrane_count as u64 * mb;
    per.membrane.sram_write += nest.membrane_count as u64 * mb;

    let out_bits = if nest.is_classifier { psb } else { 1 };
    per.output.sram_write += nest.output_elems as u64 * out_bits;

    LayerTraffic {
        once,
        per_timestep: per,
    }
}
