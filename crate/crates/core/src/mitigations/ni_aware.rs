//! Non-ideality-aware weight encoding: store each crossbar column either
//! directly or complemented, whichever leaves more cells in the
//! high-resistance half of the conductance window. Low conductances carry
//! less read-noise current and less IR drop.

use crate::analog::mapping::{build_layer, EncodingMode, TilePlan};
use crate::error::{Error, Result};
use crate::snn::WeightStore;

pub fn ni_aware_encode(plan: &TilePlan, weights: &WeightStore) -> Result<TilePlan> {
    let config = &plan.config;
    let layers = plan
        .layers
        .iter()
        .map(|m| {
            let Some(m) = m else { return Ok(None) };
            let w = weights.get(&m.weight_ref).ok_or_else(|| {
                Error::InvalidModel(format!("weights '{}' not found", m.weight_ref)).at_layer(m.layer_index)
            })?;
            let coding = m.coding;
            let choose = |rt: usize, ct: usize, s: usize| -> Vec<bool> {
                let rows = rt * config.rows..(m.gemm.reduction).min((rt + 1) * config.rows);
                let cols = ct * config.cols..(m.gemm.outputs).min((ct + 1) * config.cols);
                cols.map(|o| {
                    let (mut above, mut below) = (0usize, 0usize);
                    for r in rows.clone() {
                        let d = coding.digit(w.get(o, r) as i32, s);
                        if 2 * d > coding.levels {
                            above += 1;
                        } else if 2 * d < coding.levels {
                            below += 1;
                        }
                    }
                    above > below
                })
                .collect()
            };
            build_layer(m.layer_index, &m.weight_ref, m.gemm, w, config, choose).map(Some)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(TilePlan {
        layers,
        encoding: EncodingMode::NiAware,
        config: config.clone(),
    })
}
