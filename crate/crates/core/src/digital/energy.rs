//! Sparsity-gated compute energy and LIF unit cost.

use serde::{Deserialize, Serialize};

use crate::digital::config::{DigitalEnergyTable, SystolicConfig};
use crate::error::{Error, Result};
use crate::snn::{LayerSpec, SnnModel};
use crate::tensor::SpikeTensor;

/// Accumulations with a nonzero input operand when `input` drives `layer`.
/// Zero operands are skipped inside the PE and cost nothing.
pub fn gated_ops(layer: &LayerSpec, input: &SpikeTensor) -> Result<u64> {
    if input.shape() != &layer.input_shape {
        return Err(Error::Contract(format!(
            "spike shape {} does not match layer input {}",
            input.shape(),
            layer.input_shape
        )));
    }
    let outputs = layer.out_channels() as u64;
    Ok(layer
        .input_fanout()
        .iter()
        .zip(input.iter())
        .filter(|(_, s)| *s)
        .map(|(f, _)| f * outputs)
        .sum())
}

pub fn compute_energy(active_ops: u64, table: &DigitalEnergyTable) -> f64 {
    active_ops as f64 * table.e_ac_pj
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LifCost {
    /// One unit per shared membrane potential.
    pub units: usize,
    /// `units * membrane_bits`.
    pub area_units: u64,
    pub area_mm2: f64,
    pub power_uw: f64,
    pub lif_pj: f64,
}

/// LIF hardware cost of a model given the number of membrane updates performed.
pub fn lif_cost(
    model: &SnnModel,
    config: &SystolicConfig,
    table: &DigitalEnergyTable,
    membrane_updates: u64,
) -> Result<LifCost> {
    let mut units = 0;
    for (i, layer) in model.layers.iter().enumerate() {
        if layer.neuron.is_none() {
            continue;
        }
        let c = layer.out_channels();
        if layer.lif_share == 0 || c % layer.lif_share != 0 {
            return Err(Error::InvalidModel(format!(
                "lif_share {} does not divide {c} channels",
                layer.lif_share
            ))
            .at_layer(i));
        }
        units += layer.membrane_count();
    }
    let area_units = units as u64 * config.membrane_bits as u64;
    Ok(LifCost {
        units,
        area_units,
        area_mm2: area_units as f64 * table.lif_area_mm2_per_bit,
        power_uw: area_units as f64 * table.lif_power_uw_per_bit,
        lif_pj: membrane_updates as f64 * table.e_lif_update_pj,
    })
}
