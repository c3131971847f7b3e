use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Dataflow {
    /// Partial sums stay in the PEs; weights stream from SRAM on every pass
    /// of every timestep.
    OutputStationary,
    /// Weights are pinned in PE scratchpads for a pass but refetched every
    /// timestep.
    WeightStationary,
    /// Weight-stationary with the timestep loop innermost: each weight tile
    /// is fetched once and reused for all timesteps.
    TickBatchWs,
}

impl std::str::FromStr for Dataflow {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "output_stationary" | "os" => Ok(Dataflow::OutputStationary),
            "weight_stationary" | "ws" => Ok(Dataflow::WeightStationary),
            "tick_batch_ws" | "tick_batch" => Ok(Dataflow::TickBatchWs),
            other => Err(Error::InvalidArgument(format!("unknown dataflow '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystolicConfig {
    pub pe_rows: usize,
    pub pe_cols: usize,
    pub spad_bytes_per_pe: usize,
    pub sram_bytes: usize,
    pub dataflow: Dataflow,
    pub lif_units: usize,
    pub membrane_bits: u32,
    pub psum_bits: u32,
    /// Width of real-valued activations (direct-encoded input, pooled maps).
    pub activation_bits: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DigitalEnergyTable {
    pub e_ac_pj: f64,
    pub e_spad_access_pj_per_byte: f64,
    pub e_sram_access_pj_per_byte: f64,
    pub e_dram_access_pj_per_byte: f64,
    pub e_lif_update_pj: f64,
    pub leakage_pw_per_pe: f64,
    pub clock_ghz: f64,
    pub entropy_overhead_fraction: f64,
    pub pe_area_mm2: f64,
    pub sram_area_mm2_per_kib: f64,
    pub lif_area_mm2_per_bit: f64,
    pub lif_power_uw_per_bit: f64,
}

impl SystolicConfig {
    pub fn pe_count(&self) -> usize {
        self.pe_rows * self.pe_cols
    }

    pub fn validate(&self) -> Result<()> {
        let sizes = [
            ("pe_rows", self.pe_rows),
            ("pe_cols", self.pe_cols),
            ("spad_bytes_per_pe", self.spad_bytes_per_pe),
            ("sram_bytes", self.sram_bytes),
            ("lif_units", self.lif_units),
            ("membrane_bits", self.membrane_bits as usize),
            ("psum_bits", self.psum_bits as usize),
            ("activation_bits", self.activation_bits as usize),
        ];
        if let Some((name, _)) = sizes.iter().find(|(_, v)| *v == 0) {
            return Err(Error::InvalidConfig(format!("systolic.{name} must be > 0")));
        }
        if self.lif_units > self.pe_count() {
            return Err(Error::InvalidConfig(format!(
                "systolic.lif_units ({}) exceeds PE count ({})",
                self.lif_units,
                self.pe_count()
            )));
        }
        Ok(())
    }
}

impl DigitalEnergyTable {
    pub fn validate(&self) -> Result<()> {
        let entries = [
            ("e_ac_pj", self.e_ac_pj),
            ("e_spad_access_pj_per_byte", self.e_spad_access_pj_per_byte),
            ("e_sram_access_pj_per_byte", self.e_sram_access_pj_per_byte),
            ("e_dram_access_pj_per_byte", self.e_dram_access_pj_per_byte),
            ("e_lif_update_pj", self.e_lif_update_pj),
            ("leakage_pw_per_pe", self.leakage_pw_per_pe),
            ("entropy_overhead_fraction", self.entropy_overhead_fraction),
            ("pe_area_mm2", self.pe_area_mm2),
            ("sram_area_mm2_per_kib", self.sram_area_mm2_per_kib),
            ("lif_area_mm2_per_bit", self.lif_area_mm2_per_bit),
            ("lif_power_uw_per_bit", self.lif_power_uw_per_bit),
        ];
        if let Some((name, v)) = entries.iter().find(|(_, v)| !(v.is_finite() && *v >= 0.0)) {
            return Err(Error::InvalidConfig(format!(
                "energy.{name} must be finite and >= 0, got {v}"
            )));
        }
        if !(self.clock_ghz.is_finite() && self.clock_ghz > 0.0) {
            return Err(Error::InvalidConfig("energy.clock_ghz must be > 0".into()));
        }
        if !(self.e_dram_access_pj_per_byte > self.e_sram_access_pj_per_byte
            && self.e_sram_access_pj_per_byte > self.e_spad_access_pj_per_byte)
        {
            return Err(Error::InvalidConfig(
                "per-byte access energy must order dram > sram > spad".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Deserialize)]
struct DefaultFile {
    systolic: SystolicConfig,
    energy: DigitalEnergyTable,
}

const DEFAULT_TOML: &str = include_str!("../../../../configs/digital_default.toml");

fn defaults() -> DefaultFile {
    toml::from_str(DEFAULT_TOML).expect("shipped digital config parses")
}

impl Default for SystolicConfig {
    fn default() -> Self {
        defaults().systolic
    }
}

impl Default for DigitalEnergyTable {
    fn default() -> Self {
        defaults().energy
    }
}
