//! The crossbar dot-product pipeline as an [`MvmProvider`]: DAC drive,
//! per-tile crossbar read, ADC, DIFF correction and digital accumulation
//! across tiles and slices.

use crate::analog::adc::{adc_dequantize, adc_quantize, AdcRange};
use crate::analog::diff::{decode_column, diff_correct};
use crate::analog::grid::CrossbarNetwork;
use crate::analog::mapping::{LayerMapping, TilePlan};
use crate::analog::mvm::{apply_read_noise, build_network, derive_seed, ideal_mvm};
use crate::error::{Error, Result};
use crate::scalar::Real;
use crate::snn::{MvmContext, MvmProvider};
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PipelineMode {
    /// Nominal conductances, ideal Kirchhoff sums, exact converters.
    Ideal,
    /// Read noise, IR drop and finite converter resolution.
    Nonideal { seed: u64 },
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct PipelineStats {
    pub conversions: u64,
    pub saturations: u64,
}

pub struct CrossbarPipeline<'a> {
    plan: &'a TilePlan,
    mode: PipelineMode,
    /// Distinguishes the noise streams of different inputs.
    stream: u64,
    pub stats: PipelineStats,
}

enum Reader<S> {
    Ideal(Vec<S>),
    Network(CrossbarNetwork<S>),
}

impl<S: Real> Reader<S> {
    fn read(&self, rows: usize, cols: usize, v: &[S]) -> Result<Vec<S>> {
        match self {
            Reader::Ideal(g) => ideal_mvm(g, rows, cols, v),
            Reader::Network(n) => n.column_currents(v),
        }
    }
}

impl<'a> CrossbarPipeline<'a> {
    pub fn new(plan: &'a TilePlan, mode: PipelineMode, stream: u64) -> Self {
        CrossbarPipeline {
            plan,
            mode,
            stream,
            stats: PipelineStats::default(),
        }
    }

    pub fn ideal(plan: &'a TilePlan) -> Self {
        Self::new(plan, PipelineMode::Ideal, 0)
    }

    fn mapping(&self, ctx: &MvmContext<'_>) -> Result<&'a LayerMapping> {
        let m = self
            .plan
            .layers
            .get(ctx.layer_index)
            .and_then(|m| m.as_ref())
            .ok_or_else(|| Error::Contract("layer is not mapped to crossbars".into()))?;
        if Some(m.gemm) != ctx.layer.gemm() {
            return Err(Error::Contract("tile plan does not match the layer".into()));
        }
        Ok(m)
    }
}

/// One drive pattern applied to the rows, weighted by `weight` in the sum.
struct Drive<S> {
    weight: S,
    levels: Vec<S>,
    binary: bool,
}

impl<S: Real> MvmProvider<S> for CrossbarPipeline<'_> {
    fn weighted_input(&mut self, ctx: &MvmContext<'_>, input: &Tensor<S>) -> Result<Tensor<S>> {
        let m = self.mapping(ctx)?;
        let layer = ctx.layer;
        if input.shape() != &layer.input_shape {
            return Err(Error::Contract(format!(
                "input shape {} does not match layer input {}",
                input.shape(),
                layer.input_shape
            )));
        }
        let config = &self.plan.config;
        let x = input.data();
        if let Some(bad) = x.iter().find(|v| !(**v >= S::zero()) || !v.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "crossbar inputs must be finite and non-negative, got {bad:?}"
            )));
        }
        let binary = x.iter().all(|v| v.is_zero() || *v == S::one());
        let x_max = x.iter().copied().fold(S::zero(), |a, b| if b > a { b } else { a });
        let (nonideal, seed) = match self.mode {
            PipelineMode::Ideal => (false, 0),
            PipelineMode::Nonideal { seed } => (true, seed),
        };
        let dac_bits = if binary || !nonideal { 0 } else { config.dac_bits };
        let adc_bits = if nonideal { config.adc_bits } else { 0 };
        let v_read = S::from_f64_lossy(config.v_read);
        let (g_min, g_max) = (S::from_f64_lossy(config.g_min), S::from_f64_lossy(config.g_max));

        // Read-out path per crossbar: noise drawn once per invocation.
        let readers = m
            .crossbars
            .iter()
            .enumerate()
            .map(|(k, xb)| -> Result<Reader<S>> {
                if !nonideal {
                    return Ok(Reader::Ideal(xb.g.iter().map(|g| S::from_f64_lossy(*g)).collect()));
                }
                let s = derive_seed(&[seed, self.stream, ctx.layer_index as u64, k as u64, ctx.timestep as u64]);
                let g = apply_read_noise::<S>(&xb.g, config.read_noise_sigma, s)?;
                if config.r_wire_ohm == 0.0 && config.r_source_ohm == 0.0 && config.r_sink_ohm == 0.0 {
                    Ok(Reader::Ideal(g))
                } else {
                    Ok(Reader::Network(build_network(&g, xb.rows_used, xb.cols_used, config)?))
                }
            })
            .collect::<Result<Vec<_>>>()?;
        // ADC full scale: ideal current of each column with every row driven.
        let ranges: Vec<Vec<S>> = m
            .crossbars
            .iter()
            .map(|xb| {
                (0..xb.cols_used)
                    .map(|j| {
                        let g: f64 = (0..xb.rows_used).map(|i| xb.g[i * xb.cols_used + j]).sum();
                        S::from_f64_lossy(g * config.v_read)
                    })
                    .collect()
            })
            .collect();

        let g = m.gemm;
        let mut out = vec![S::zero(); g.outputs * g.positions];
        let mut unrolled = vec![S::zero(); g.reduction];
        for p in 0..g.positions {
            for (r, u) in unrolled.iter_mut().enumerate() {
                *u = layer.input_index(p, r).map_or(S::zero(), |i| x[i]);
            }
            let drives: Vec<Drive<S>> = if binary {
                vec![Drive { weight: S::one(), levels: unrolled.clone(), binary: true }]
            } else if x_max.is_zero() {
                Vec::new()
            } else if dac_bits == 0 {
                vec![Drive {
                    weight: x_max,
                    levels: unrolled.iter().map(|v| *v / x_max).collect(),
                    binary: false,
                }]
            } else {
                let full = S::from_f64_lossy(((1u64 << dac_bits) - 1) as f64);
                let codes: Vec<u64> = unrolled
                    .iter()
                    .map(|v| (*v / x_max * full).round().as_f64() as u64)
                    .collect();
                (0..dac_bits)
                    .map(|b| Drive {
                        weight: x_max * S::from_f64_lossy((1u64 << b) as f64) / full,
                        levels: codes
                            .iter()
                            .map(|c| if (c >> b) & 1 == 1 { S::one() } else { S::zero() })
                            .collect(),
                        binary: true,
                    })
                    .collect()
            };
            for drive in &drives {
                for rt in 0..m.row_tiles {
                    for ct in 0..m.col_tiles {
                        let first = m.crossbar(rt, ct, 0);
                        let a = &drive.levels[first.row_start..first.row_start + first.rows_used];
                        let drive_sum = a.iter().fold(S::zero(), |s, v| s + *v);
                        if drive_sum.is_zero() {
                            continue;
                        }
                        let v: Vec<S> = a.iter().map(|l| *l * v_read).collect();
                        let mut digit_sums = Vec::with_capacity(m.coding.slices);
                        for s in 0..m.coding.slices {
                            let idx = (rt * m.col_tiles + ct) * m.coding.slices + s;
                            let xb = &m.crossbars[idx];
                            let mut currents = readers[idx].read(xb.rows_used, xb.cols_used, &v)?;
                            if adc_bits > 0 {
                                for (j, c) in currents.iter_mut().enumerate() {
                                    let range = AdcRange::new(S::zero(), ranges[idx][j])?;
                                    let code = adc_quantize(&[*c], adc_bits, range)[0];
                                    self.stats.saturations += code.saturated as u64;
                                    *c = adc_dequantize(code.code, adc_bits, range);
                                }
                            }
                            self.stats.conversions += xb.cols_used as u64;
                            let sums: Vec<S> = currents
                                .iter()
                                .map(|c| {
                                    let d = decode_column(*c, drive_sum, v_read, g_min, g_max, m.coding.levels);
                                    // An exact converter resolves the integer digit-sum levels.
                                    if !nonideal && drive.binary {
                                        d.round()
                                    } else {
                                        d
                                    }
                                })
                                .collect();
                            digit_sums.push(sums);
                        }
                        let signed = diff_correct(&digit_sums, drive_sum, &m.diff_meta(rt, ct))?;
                        for (j, val) in signed.into_iter().enumerate() {
                            let o = (first.col_start + j) * g.positions + p;
                            out[o] += drive.weight * val;
                        }
                    }
                }
            }
        }
        let scale = S::from_f64_lossy(ctx.weights.scale);
        for v in &mut out {
            *v *= scale;
        }
        Tensor::from_vec(layer.output_shape.clone(), out)
    }
}
