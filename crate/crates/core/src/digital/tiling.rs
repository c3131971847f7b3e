//! Mapping of a layer's matrix product onto the PE array.
//!
//! The array's rows take a slice of the reduction dimension and its columns a
//! slice of the output channels; each pass pins one such weight block and
//! streams every output position through it. The same geometric tiling serves
//! all dataflows; they differ only in what is refetched (see `traffic`).

use serde::{Deserialize, Serialize};

use crate::digital::config::{Dataflow, SystolicConfig};
use crate::error::{Error, Result};
use crate::snn::{GemmDims, LayerKind, LayerSpec, SnnModel};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LoopNest {
    pub layer_index: usize,
    pub gemm: GemmDims,
    pub array_rows: usize,
    pub array_cols: usize,
    /// Reduction-dimension tiles, `ceil(reduction / rows)`.
    pub row_tiles: usize,
    /// Output-channel tiles, `ceil(outputs / cols)`.
    pub col_tiles: usize,
    pub weight_bits: u32,
    /// 1 for spike inputs, the activation width for real-valued inputs.
    pub input_bits: u32,
    /// The layer reads the network input from DRAM.
    pub loads_input_from_dram: bool,
    pub input_elems: usize,
    pub output_elems: usize,
    /// Membrane potentials held for this layer (0 for the classifier).
    pub membrane_count: usize,
    pub is_classifier: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PassTile {
    pub row_tile: usize,
    pub col_tile: usize,
    pub rows_used: usize,
    pub cols_used: usize,
    /// Systolic steps per timestep: one per streamed output position.
    pub steps: usize,
}

impl PassTile {
    pub fn ops(&self) -> u64 {
        (self.rows_used * self.cols_used * self.steps) as u64
    }
}

impl LoopNest {
    pub fn passes(&self) -> usize {
        self.row_tiles * self.col_tiles
    }

    pub fn weight_count(&self) -> u64 {
        self.gemm.weight_count()
    }

    pub fn pass_tiles(&self) -> impl Iterator<Item = PassTile> + '_ {
        let g = self.gemm;
        (0..self.col_tiles).flat_map(move |ct| {
            (0..self.row_tiles).map(move |rt| PassTile {
                row_tile: rt,
                col_tile: ct,
                rows_used: (g.reduction - rt * self.array_rows).min(self.array_rows),
                cols_used: (g.outputs - ct * self.array_cols).min(self.array_cols),
                steps: g.positions,
            })
        })
    }

    /// Accumulations per timestep summed over every pass.
    pub fn ops_per_timestep(&self) -> u64 {
        self.pass_tiles().map(|p| p.ops()).sum()
    }

    /// Uses of each pinned weight per timestep.
    pub fn weight_reuse(&self) -> usize {
        self.gemm.positions
    }

    /// Times each input element is re-read from the buffer per timestep.
    pub fn input_refetch(&self) -> usize {
        self.col_tiles
    }

    /// `(non-recurring, per-timestep)` cycles. A pass costs
    /// `rows + cols + steps - 2`; passes run back to back. Tick-batch pays the
    /// fill/drain once per pass and streams all timesteps through it.
    pub fn latency_cycles(&self, dataflow: Dataflow) -> (u64, u64) {
        let fill = (self.array_rows + self.array_cols - 2) as u64;
        let passes = self.passes() as u64;
        let steps = self.gemm.positions as u64;
        match dataflow {
            Dataflow::TickBatchWs => (passes * fill, passes * steps),
            _ => (0, passes * (fill + steps)),
        }
    }
}

/// Tiles a weighted layer assuming spike inputs.
pub fn tile_layer(layer: &LayerSpec, config: &SystolicConfig) -> Result<LoopNest> {
    let gemm = match layer.kind {
        LayerKind::AvgPool { .. } => {
            return Err(Error::InvalidArgument("pooling layers are not mapped to the array".into()))
        }
        _ => layer.gemm().expect("weighted layer"),
    };
    if gemm.reduction == 0 || gemm.outputs == 0 || gemm.positions == 0 {
        return Err(Error::InvalidArgument(format!(
            "degenerate layer {gemm:?} cannot be tiled"
        )));
    }
    config.validate()?;
    Ok(LoopNest {
        layer_index: 0,
        gemm,
        array_rows: config.pe_rows,
        array_cols: config.pe_cols,
        row_tiles: gemm.reduction.div_ceil(config.pe_rows),
        col_tiles: gemm.outputs.div_ceil(config.pe_cols),
        weight_bits: layer.weight_bits as u32,
        input_bits: 1,
        loads_input_from_dram: false,
        input_elems: layer.input_shape.numel(),
        output_elems: layer.output_shape.numel(),
        membrane_count: layer.membrane_count(),
        is_classifier: layer.neuron.is_none(),
    })
}

/// Tiles every weighted layer; `None` for pooling layers.
pub fn tile_model(model: &SnnModel, config: &SystolicConfig) -> Result<Vec<Option<LoopNest>>> {
    model
        .layers
        .iter()
        .enumerate()
        .map(|(i, layer)| {
            if !layer.is_weighted() {
                return Ok(None);
            }
            let mut nest = tile_layer(layer, config).map_err(|e| e.at_layer(i))?;
            nest.layer_index = i;
            let real_valued_input = i == 0 || !model.layers[i - 1].is_weighted();
            if real_valued_input {
                nest.input_bits = config.activation_bits;
            }
            nest.loads_input_from_dram = i == 0;
            Ok(Some(nest))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::Shape;
    use proptest::prelude::*;

    fn cfg() -> SystolicConfig {
        SystolicConfig::default()
    }

    #[test]
    fn small_fc_is_one_pass() {
        let nest = tile_layer(&LayerSpec::fully_connected(Shape::new(vec![16]), 4), &cfg()).unwrap();
        assert_eq!(nest.passes(), 1);
    }

    #[test]
    fn square_fc_pass_count() {
        let nest = tile_layer(&LayerSpec::fully_connected(Shape::new(vec![64]), 64), &cfg()).unwrap();
        assert_eq!(nest.passes(), 4 * 8);
    }

    #[test]
    fn pooling_is_rejected() {
        let pool = LayerSpec::avgpool(Shape::new(vec![1, 4, 4]), 2).unwrap();
        assert!(tile_layer(&pool, &cfg()).is_err());
    }

    #[test]
    fn latency_counts_fill_and_drain() {
        let nest = tile_layer(&LayerSpec::fully_connected(Shape::new(vec![16]), 4), &cfg()).unwrap();
        assert_eq!(nest.latency_cycles(Dataflow::OutputStationary), (0, 16 + 8 + 1 - 2));
        assert_eq!(nest.latency_cycles(Dataflow::TickBatchWs), (22, 1));
    }

    proptest! {
        #[test]
        fn tiling_conserves_ops(
            c_in in 1usize..6, c_out in 1usize..20, hw in 3usize..9,
            k in 1usize..4, stride in 1usize..3, pad in 0usize..2,
            rows in 1usize..20, cols in 1usize..20,
        ) {
            let layer = LayerSpec::conv2d(Shape::new(vec![c_in, hw, hw]), c_out, k, stride, pad).unwrap();
            let mut config = cfg();
            config.pe_rows = rows;
            config.pe_cols = cols;
            config.lif_units = 1;
            let nest = tile_layer(&layer, &config).unwrap();
            prop_assert_eq!(nest.ops_per_timestep(), layer.gemm().unwrap().ops());
            prop_assert_eq!(nest.pass_tiles().count(), nest.passes());
        }
    }
}
