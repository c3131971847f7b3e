//! Batchnorm adaptation: re-estimate running statistics from the activations
//! the deployed (noisy) hardware actually produces. Learnable parameters and
//! weights are left untouched.

use serde::{Deserialize, Serialize};

use crate::analog::{CrossbarPipeline, PipelineMode, TilePlan};
use crate::error::{Error, Result};
use crate::snn::{run_inference, ActivationObserver, MvmProvider, SnnModel};
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseCalibrationSpec {
    pub sample_count: usize,
    /// Weight of each new batch statistic in the running average.
    pub momentum: f64,
    #[serde(default = "default_batch")]
    pub batch_size: usize,
}

fn default_batch() -> usize {
    16
}

impl NoiseCalibrationSpec {
    pub fn new(sample_count: usize, momentum: f64) -> Result<Self> {
        let s = NoiseCalibrationSpec {
            sample_count,
            momentum,
            batch_size: default_batch(),
        };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        if self.sample_count < 1 || self.batch_size < 1 {
            return Err(Error::InvalidArgument("sample_count and batch_size must be >= 1".into()));
        }
        if !(self.momentum > 0.0 && self.momentum <= 1.0) {
            return Err(Error::InvalidArgument(format!(
                "momentum must be in (0, 1], got {}",
                self.momentum
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BnAdaptOutcome {
    pub model: SnnModel,
    pub adapted_layers: usize,
    pub batches: usize,
    pub warning: Option<String>,
}

/// Per-channel sums of pre-BN activations, one accumulator per
/// (layer, timestep).
struct Moments {
    bn_layers: Vec<usize>,
    // [bn layer][timestep] -> (sum, sum of squares, count) per channel
    acc: Vec<Vec<Vec<(f64, f64, usize)>>>,
}

impl ActivationObserver<f64> for Moments {
    fn pre_bn(&mut self, layer: usize, timestep: usize, activation: &Tensor<f64>) {
        let Some(k) = self.bn_layers.iter().position(|&l| l == layer) else {
            return;
        };
        let shape = activation.shape();
        let (c, spatial) = (shape.channels(), shape.spatial());
        let per_t = &mut self.acc[k];
        while per_t.len() <= timestep {
            per_t.push(vec![(0.0, 0.0, 0); c]);
        }
        for (ch, chunk) in activation.data().chunks(spatial).enumerate() {
            let slot = &mut per_t[timestep][ch];
            for &v in chunk {
                slot.0 += v;
                slot.1 += v * v;
                slot.2 += 1;
            }
        }
    }
}

/// Adapts with an arbitrary provider; `provider(i)` builds the provider for
/// calibration sample `i`.
pub fn bn_adapt_with<P, F>(
    model: &SnnModel,
    samples: &[Tensor<f64>],
    spec: &NoiseCalibrationSpec,
    mut provider: F,
) -> Result<BnAdaptOutcome>
where
    P: MvmProvider<f64>,
    F: FnMut(usize) -> P,
{
    spec.validate()?;
    let bn_layers: Vec<usize> = (0..model.layers.len()).filter(|&i| model.layers[i].bn.is_some()).collect();
    if bn_layers.is_empty() {
        let warning = "model has no batchnorm layers; nothing to adapt".to_string();
        log::warn!("{warning}");
        return Ok(BnAdaptOutcome {
            model: model.clone(),
            adapted_layers: 0,
            batches: 0,
            warning: Some(warning),
        });
    }
    if samples.is_empty() {
        return Err(Error::InvalidArgument("bn_adapt needs at least one sample".into()));
    }
    let count = spec.sample_count.min(samples.len());
    let mut adapted = model.clone();
    let mut batches = 0;
    for start in (0..count).step_by(spec.batch_size) {
        let mut moments = Moments {
            bn_layers: bn_layers.clone(),
            acc: vec![Vec::new(); bn_layers.len()],
        };
        for i in start..(start + spec.batch_size).min(count) {
            let mut p = provider(i);
            run_inference(&adapted, &samples[i], &mut p, adapted.timesteps, &mut moments, |_, _| false)?;
        }
        for (k, &li) in bn_layers.iter().enumerate() {
            let bn = adapted.layers[li].bn.as_mut().expect("bn layer");
            for per_ch in &moments.acc[k] {
                for (ch, &(s, sq, n)) in per_ch.iter().enumerate() {
                    if n == 0 {
                        continue;
                    }
                    let mean = s / n as f64;
                    let var = (sq / n as f64 - mean * mean).max(0.0);
                    let m = spec.momentum;
                    bn.running_mean[ch] = (1.0 - m) * bn.running_mean[ch] + m * mean;
                    bn.running_var[ch] = (1.0 - m) * bn.running_var[ch] + m * var;
                }
            }
        }
        batches += 1;
    }
    adapted.validate()?;
    Ok(BnAdaptOutcome {
        model: adapted,
        adapted_layers: bn_layers.len(),
        batches,
        warning: None,
    })
}

/// Adapts against the non-ideal crossbar pipeline of `plan`.
pub fn bn_adapt(
    model: &SnnModel,
    samples: &[Tensor<f64>],
    plan: &TilePlan,
    spec: &NoiseCalibrationSpec,
    seed: u64,
) -> Result<BnAdaptOutcome> {
    // Calibration noise streams are kept apart from evaluation streams.
    let offset = 1u64 << 40;
    bn_adapt_with(model, samples, spec, |i| {
        CrossbarPipeline::new(plan, PipelineMode::Nonideal { seed }, offset + i as u64)
    })
}
