//! Weight-stationary placement of every layer onto crossbars.
//!
//! A layer's matrix is unrolled to `reduction` rows (kernel x in-channels for
//! conv) by `outputs` columns, cut into `rows x cols` tiles and repeated once
//! per bit slice.

use serde::{Deserialize, Serialize};

use crate::analog::config::CrossbarConfig;
use crate::analog::conductance::{weight_to_conductance, SliceCoding};
use crate::analog::diff::DiffMeta;
use crate::error::{Error, Result};
use crate::snn::{GemmDims, QuantizedWeights, SnnModel};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EncodingMode {
    Naive,
    NiAware,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Crossbar {
    pub row_tile: usize,
    pub col_tile: usize,
    pub slice: usize,
    pub row_start: usize,
    pub rows_used: usize,
    pub col_start: usize,
    pub cols_used: usize,
    /// Row-major `rows_used x cols_used`, rows are reduction indices.
    pub g: Vec<f64>,
    /// Per used column.
    pub complement: Vec<bool>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LayerMapping {
    pub layer_index: usize,
    pub weight_ref: String,
    pub gemm: GemmDims,
    pub coding: SliceCoding,
    pub row_tiles: usize,
    pub col_tiles: usize,
    /// Ordered by row tile, then column tile, then slice.
    pub crossbars: Vec<Crossbar>,
}

impl LayerMapping {
    pub fn crossbar(&self, row_tile: usize, col_tile: usize, slice: usize) -> &Crossbar {
        &self.crossbars[(row_tile * self.col_tiles + col_tile) * self.coding.slices + slice]
    }

    pub fn crossbar_count(&self) -> usize {
        self.crossbars.len()
    }

    /// Mean fraction of cells in use per crossbar.
    pub fn utilization(&self, config: &CrossbarConfig) -> f64 {
        let used: usize = self.crossbars.iter().map(|x| x.rows_used * x.cols_used).sum();
        used as f64 / (self.crossbars.len() * config.rows * config.cols) as f64
    }

    pub fn diff_meta(&self, row_tile: usize, col_tile: usize) -> DiffMeta {
        let slices = self.coding.slices;
        let complement = (0..slices)
            .flat_map(|s| self.crossbar(row_tile, col_tile, s).complement.iter().copied())
            .collect();
        DiffMeta {
            coding: self.coding,
            cols: self.crossbar(row_tile, col_tile, 0).cols_used,
            complement,
        }
    }

    /// `(high_resistance_cells, cells)`: cells stored below the midpoint
    /// conductance.
    pub fn high_resistance_cells(&self, config: &CrossbarConfig) -> (usize, usize) {
        let mut high = 0;
        let mut total = 0;
        for x in &self.crossbars {
            for g in &x.g {
                let stored = self.coding.g_to_digit(*g, false, config);
                if 2 * stored < self.coding.levels {
                    high += 1;
                }
                total += 1;
            }
        }
        (high, total)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TilePlan {
    pub layers: Vec<Option<LayerMapping>>,
    pub encoding: EncodingMode,
    pub config: CrossbarConfig,
}

impl TilePlan {
    pub fn mappings(&self) -> impl Iterator<Item = &LayerMapping> {
        self.layers.iter().flatten()
    }

    pub fn crossbar_count(&self) -> usize {
        self.mappings().map(|m| m.crossbar_count()).sum()
    }

    pub fn high_resistance_fraction(&self) -> f64 {
        let (h, t) = self
            .mappings()
            .map(|m| m.high_resistance_cells(&self.config))
            .fold((0, 0), |a, b| (a.0 + b.0, a.1 + b.1));
        if t == 0 {
            0.0
        } else {
            h as f64 / t as f64
        }
    }
}

/// Integer weight of reduction row `r`, output `m`.
fn q_at(w: &QuantizedWeights, r: usize, m: usize) -> i32 {
    w.get(m, r) as i32
}

pub(crate) fn build_layer(
    layer_index: usize,
    weight_ref: &str,
    gemm: GemmDims,
    w: &QuantizedWeights,
    config: &CrossbarConfig,
    complement: impl Fn(usize, usize, usize) -> Vec<bool>,
) -> Result<LayerMapping> {
    if w.rows != gemm.outputs || w.cols != gemm.reduction {
        return Err(Error::InvalidModel(format!(
            "weights are {}x{}, layer needs {}x{}",
            w.rows, w.cols, gemm.outputs, gemm.reduction
        ))
        .at_layer(layer_index));
    }
    let coding = SliceCoding::new(w.bits, config.bits_per_cell)?;
    let row_tiles = gemm.reduction.div_ceil(config.rows);
    let col_tiles = gemm.outputs.div_ceil(config.cols);
    let mut crossbars = Vec::with_capacity(row_tiles * col_tiles * coding.slices);
    for rt in 0..row_tiles {
        let row_start = rt * config.rows;
        let rows_used = (gemm.reduction - row_start).min(config.rows);
        for ct in 0..col_tiles {
            let col_start = ct * config.cols;
            let cols_used = (gemm.outputs - col_start).min(config.cols);
            let q: Vec<i32> = (0..rows_used * cols_used)
                .map(|k| q_at(w, row_start + k / cols_used, col_start + k % cols_used))
                .collect();
            let flags: Vec<bool> = (0..coding.slices).flat_map(|s| complement(rt, ct, s)).collect();
            let slices = weight_to_conductance(&q, rows_used, cols_used, &coding, config, Some(&flags))?;
            for (s, m) in slices.into_iter().enumerate() {
                crossbars.push(Crossbar {
                    row_tile: rt,
                    col_tile: ct,
                    slice: s,
                    row_start,
                    rows_used,
                    col_start,
                    cols_used,
                    g: m.g,
                    complement: m.complement,
                });
            }
        }
    }
    Ok(LayerMapping {
        layer_index,
        weight_ref: weight_ref.to_string(),
        gemm,
        coding,
        row_tiles,
        col_tiles,
        crossbars,
    })
}

/// Maps every weighted layer with direct (uncomplemented) encoding.
pub fn map_model(model: &SnnModel, config: &CrossbarConfig) -> Result<TilePlan> {
    model.validate()?;
    config.validate()?;
    let layers = model
        .layers
        .iter()
        .enumerate()
        .map(|(i, layer)| {
            let Some(gemm) = layer.gemm() else {
                return Ok(None);
            };
            let name = layer.weight_ref.as_deref().unwrap_or_default();
            let w = model
                .layer_weights(i)
                .ok_or_else(|| Error::InvalidModel("missing weights".into()).at_layer(i))?;
            let cols = |ct: usize| (gemm.outputs - ct * config.cols).min(config.cols);
            build_layer(i, name, gemm, w, config, |_, ct, _| vec![false; cols(ct)]).map(Some)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(TilePlan {
        layers,
        encoding: EncodingMode::Naive,
        config: config.clone(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::analog::conductance::conductance_to_weight;
    use crate::snn::{LayerSpec, WeightStore};
    use crate::tensor::Shape;

    fn fc_model(inputs: usize, outputs: usize) -> SnnModel {
        let mut weights = WeightStore::new();
        let q = (0..inputs * outputs).map(|k| ((k * 37) % 255) as i32 - 127).map(|v| v as i8).collect();
        weights.insert("w".into(), QuantizedWeights::new(outputs, inputs, 8, 0.01, q).unwrap());
        SnnModel {
            layers: vec![LayerSpec::fully_connected(Shape::new(vec![inputs]), outputs).with_weights("w", 8)],
            input_shape: Shape::new(vec![inputs]),
            timesteps: 1,
            num_classes: outputs,
            weights,
        }
    }

    #[test]
    fn crossbar_counts() {
        let c = CrossbarConfig::default();
        let plan = map_model(&fc_model(64, 64), &c).unwrap();
        assert_eq!(plan.crossbar_count(), 2);
        let plan = map_model(&fc_model(16, 4), &c).unwrap();
        let m = plan.layers[0].as_ref().unwrap();
        assert_eq!((m.row_tiles, m.col_tiles), (1, 1));
        assert!((m.utilization(&c) - (16.0 / 64.0) * (4.0 / 64.0)).abs() < 1e-15);
        let wide = map_model(&fc_model(16, 128), &c).unwrap();
        let wider = map_model(&fc_model(16, 256), &c).unwrap();
        assert_eq!(
            wider.layers[0].as_ref().unwrap().col_tiles,
            2 * wide.layers[0].as_ref().unwrap().col_tiles
        );
    }

    #[test]
    fn every_weight_lands_in_one_cell_per_slice() {
        let c = CrossbarConfig {
            rows: 7,
            cols: 5,
            ..CrossbarConfig::default()
        };
        let model = fc_model(20, 11);
        let plan = map_model(&model, &c).unwrap();
        let m = plan.layers[0].as_ref().unwrap();
        let w = &model.weights["w"];
        let mut seen = vec![0; 20 * 11];
        for rt in 0..m.row_tiles {
            for ct in 0..m.col_tiles {
                let slices: Vec<_> = (0..m.coding.slices)
                    .map(|s| {
                        let x = m.crossbar(rt, ct, s);
                        crate::analog::conductance::ConductanceMatrix {
                            rows: x.rows_used,
                            cols: x.cols_used,
                            g: x.g.clone(),
                            complement: x.complement.clone(),
                            offset_g: 0.0,
                        }
                    })
                    .collect();
                let q = conductance_to_weight(&slices, &m.coding, &c);
                let x = m.crossbar(rt, ct, 0);
                for (k, v) in q.iter().enumerate() {
                    let (r, o) = (x.row_start + k / x.cols_used, x.col_start + k % x.cols_used);
                    assert_eq!(*v, w.get(o, r) as i32);
                    seen[o * 20 + r] += 1;
                }
            }
        }
        assert!(seen.iter().all(|&n| n == 1));
    }
}
