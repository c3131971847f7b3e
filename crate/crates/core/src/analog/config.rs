use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CrossbarConfig {
    pub rows: usize,
    pub cols: usize,
    /// Siemens.
    pub g_min: f64,
    pub g_max: f64,
    pub bits_per_cell: u32,
    pub r_wire_ohm: f64,
    pub r_source_ohm: f64,
    pub r_sink_ohm: f64,
    pub read_noise_sigma: f64,
    pub v_read: f64,
    /// 0 means an exact (unquantized) converter.
    pub adc_bits: u32,
    pub dac_bits: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnalogCostModel {
    pub e_xbar_read_pj: f64,
    pub e_adc_pj_per_level: f64,
    pub e_dac_pj: f64,
    pub e_diff_pj: f64,
    pub e_htree_pj_per_bit_per_hop: f64,
    pub e_noc_pj_per_bit_per_hop: f64,
    pub e_lif_pj: f64,
    pub e_buffer_pj_per_byte: f64,
    pub t_read_ns: f64,
    pub crossbars_per_tile: usize,
    pub membrane_bits: u32,
    pub psum_bits: u32,
    pub entropy_overhead_fraction: f64,
    pub xbar_area_mm2: f64,
    pub adc_area_mm2: f64,
    pub tile_buffer_area_mm2: f64,
    pub lif_logic_area_mm2: f64,
    pub cache_area_mm2_per_kib: f64,
}

fn non_negative(entries: &[(&str, f64)], section: &str) -> Result<()> {
    match entries.iter().find(|(_, v)| !(v.is_finite() && *v >= 0.0)) {
        Some((name, v)) => Err(Error::InvalidConfig(format!(
            "{section}.{name} must be finite and >= 0, got {v}"
        ))),
        None => Ok(()),
    }
}

impl CrossbarConfig {
    pub fn validate(&self) -> Result<()> {
        if self.rows == 0 || self.cols == 0 {
            return Err(Error::InvalidConfig("crossbar.rows and crossbar.cols must be > 0".into()));
        }
        if !(self.g_min > 0.0 && self.g_min < self.g_max && self.g_max.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "crossbar conductances need 0 < g_min < g_max, got {} and {}",
                self.g_min, self.g_max
            )));
        }
        if !(1..=8).contains(&self.bits_per_cell) {
            return Err(Error::InvalidConfig(format!(
                "crossbar.bits_per_cell must be in 1..=8, got {}",
                self.bits_per_cell
            )));
        }
        // Infinite resistances are open circuits and allowed.
        for (name, v) in [
            ("r_wire_ohm", self.r_wire_ohm),
            ("r_source_ohm", self.r_source_ohm),
            ("r_sink_ohm", self.r_sink_ohm),
        ] {
            if !(v >= 0.0) {
                return Err(Error::InvalidConfig(format!("crossbar.{name} must be >= 0, got {v}")));
            }
        }
        non_negative(&[("read_noise_sigma", self.read_noise_sigma)], "crossbar")?;
        if !(self.v_read > 0.0 && self.v_read.is_finite()) {
            return Err(Error::InvalidConfig("crossbar.v_read must be > 0".into()));
        }
        if self.adc_bits > 24 || self.dac_bits > 16 {
            return Err(Error::InvalidConfig("converter resolution out of range".into()));
        }
        Ok(())
    }

    /// Parasitics and noise all zero.
    pub fn is_lossless(&self) -> bool {
        self.r_wire_ohm == 0.0
            && self.r_source_ohm == 0.0
            && self.r_sink_ohm == 0.0
            && self.read_noise_sigma == 0.0
    }
}

impl AnalogCostModel {
    pub fn validate(&self) -> Result<()> {
        non_negative(
            &[
                ("e_xbar_read_pj", self.e_xbar_read_pj),
                ("e_adc_pj_per_level", self.e_adc_pj_per_level),
                ("e_dac_pj", self.e_dac_pj),
                ("e_diff_pj", self.e_diff_pj),
                ("e_htree_pj_per_bit_per_hop", self.e_htree_pj_per_bit_per_hop),
                ("e_noc_pj_per_bit_per_hop", self.e_noc_pj_per_bit_per_hop),
                ("e_lif_pj", self.e_lif_pj),
                ("e_buffer_pj_per_byte", self.e_buffer_pj_per_byte),
                ("t_read_ns", self.t_read_ns),
                ("entropy_overhead_fraction", self.entropy_overhead_fraction),
                ("xbar_area_mm2", self.xbar_area_mm2),
                ("adc_area_mm2", self.adc_area_mm2),
                ("tile_buffer_area_mm2", self.tile_buffer_area_mm2),
                ("lif_logic_area_mm2", self.lif_logic_area_mm2),
                ("cache_area_mm2_per_kib", self.cache_area_mm2_per_kib),
            ],
            "cost",
        )?;
        if self.crossbars_per_tile == 0 || self.membrane_bits == 0 || self.psum_bits == 0 {
            return Err(Error::InvalidConfig(
                "cost.crossbars_per_tile, membrane_bits and psum_bits must be > 0".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Deserialize)]
struct DefaultFile {
    crossbar: CrossbarConfig,
    cost: AnalogCostModel,
}

const DEFAULT_TOML: &str = include_str!("../../../../configs/analog_default.toml");

fn defaults() -> DefaultFile {
    toml::from_str(DEFAULT_TOML).expect("shipped analog config parses")
}

impl Default for CrossbarConfig {
    fn default() -> Self {
        defaults().crossbar
    }
}

impl Default for AnalogCostModel {
    fn default() -> Self {
        defaults().cost
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn shipped_defaults_are_valid() {
        let c = CrossbarConfig::default();
        c.validate().unwrap();
        assert_eq!((c.rows, c.cols), (64, 64));
        AnalogCostModel::default().validate().unwrap();
    }

    #[test]
    fn rejects_bad_window_and_negative_costs() {
        let mut c = CrossbarConfig::default();
        c.g_min = c.g_max;
        assert!(c.validate().is_err());
        let mut c = CrossbarConfig::default();
        c.r_wire_ohm = -1.0;
        assert!(c.validate().is_err());
        let mut c = CrossbarConfig::default();
        c.r_sink_ohm = f64::INFINITY;
        c.validate().unwrap();
        let mut m = AnalogCostModel::default();
        m.e_adc_pj_per_level = -0.1;
        assert!(m.validate().is_err());
    }
}
