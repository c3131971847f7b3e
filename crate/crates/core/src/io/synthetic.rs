//! Synthetic workloads: class-template datasets and analytically set
//! template-matching weights, small enough to simulate end to end.
//!
//! Templates are dense (most inputs on, one region off per class) and the
//! detectors are centered matched filters, so every class is recognized by
//! the absence of its own region.

use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::analog::derive_seed;
use crate::error::{Error, Result};
use crate::io::Dataset;
use crate::mitigations::{bn_adapt_with, NoiseCalibrationSpec};
use crate::snn::{infer, BatchNormParams, ExactMvm, LayerSpec, NeuronParams, QuantizedWeights, SnnModel, WeightStore};
use crate::tensor::{Shape, Tensor};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SyntheticProfile {
    TinyMlp,
    TinyCnn,
}

impl SyntheticProfile {
    pub const ALL: [SyntheticProfile; 2] = [SyntheticProfile::TinyMlp, SyntheticProfile::TinyCnn];

    pub fn name(self) -> &'static str {
        match self {
            SyntheticProfile::TinyMlp => "tiny-mlp",
            SyntheticProfile::TinyCnn => "tiny-cnn",
        }
    }

    pub fn default_options(self) -> SyntheticOptions {
        match self {
            SyntheticProfile::TinyMlp => SyntheticOptions { samples: 64, noise: 0.04 },
            SyntheticProfile::TinyCnn => SyntheticOptions { samples: 48, noise: 0.04 },
        }
    }
}

impl fmt::Display for SyntheticProfile {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for SyntheticProfile {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "tiny-mlp" => Ok(SyntheticProfile::TinyMlp),
            "tiny-cnn" => Ok(SyntheticProfile::TinyCnn),
            other => Err(Error::InvalidArgument(format!(
                "unknown synthetic profile '{other}' (expected tiny-mlp or tiny-cnn)"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SyntheticOptions {
    pub samples: usize,
    /// Upper bound of the uniform per-input noise added to every sample.
    pub noise: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticWorkload {
    pub profile: SyntheticProfile,
    pub model: SnnModel,
    pub dataset: Dataset,
}

const CLASSES: usize = 4;
const TIMESTEPS: usize = 4;
const AMPLITUDE: (f64, f64) = (0.3, 1.0);
const JITTER: f64 = 0.1;
/// Largest dimming of the distractor region; 1 makes it as dark as the
/// class's own region.
const DISTRACTOR: f64 = 1.0;
const MAX_DRAWS: usize = 10_000;
/// Smallest accepted logit margin, relative to the largest logit.
const MARGIN: f64 = 1e-6;

fn lif() -> NeuronParams {
    NeuronParams::new(0.95, 1.5).expect("valid neuron")
}

pub fn generate_synthetic_workload(seed: u64, profile: SyntheticProfile) -> Result<SyntheticWorkload> {
    generate_synthetic_workload_with(seed, profile, &profile.default_options())
}

pub fn generate_synthetic_workload_with(
    seed: u64,
    profile: SyntheticProfile,
    options: &SyntheticOptions,
) -> Result<SyntheticWorkload> {
    if options.samples == 0 {
        return Err(Error::InvalidArgument("synthetic sample count must be >= 1".into()));
    }
    if !(options.noise >= 0.0 && options.noise < 0.1) {
        return Err(Error::InvalidArgument(format!(
            "synthetic noise must lie in [0, 0.1), got {}",
            options.noise
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(&[seed, profile as u64]));
    let (model, templates) = match profile {
        SyntheticProfile::TinyMlp => tiny_mlp(&mut rng)?,
        SyntheticProfile::TinyCnn => tiny_cnn(&mut rng)?,
    };
    let region = region_map(profile);
    let mut samples = Vec::with_capacity(options.samples);
    let mut labels = Vec::with_capacity(options.samples);
    for i in 0..options.samples {
        let label = i % CLASSES;
        let x = draw_sample(&model, &templates[label], label, &region, options.noise, &mut rng)?;
        samples.push(x);
        labels.push(label as u16);
    }
    let dataset = Dataset::new(model.input_shape.clone(), samples, labels)?;
    let model = calibrate_bn(model, &dataset)?;
    Ok(SyntheticWorkload { profile, model, dataset })
}

/// Draws until exact inference classifies the sample with a strictly
/// positive logit margin; ambiguous draws (distractor fully dark) are redrawn.
fn draw_sample(
    model: &SnnModel,
    template: &[f64],
    label: usize,
    region: &[usize],
    noise: f64,
    rng: &mut ChaCha8Rng,
) -> Result<Tensor<f64>> {
    for _ in 0..MAX_DRAWS {
        let a = rng.random_range(AMPLITUDE.0..=AMPLITUDE.1);
        // Another class's region is partially dimmed.
        let distractor = (label + rng.random_range(1..CLASSES)) % CLASSES;
        let dim = 1.0 - rng.random_range(0.0..=DISTRACTOR);
        let data: Vec<f64> = template
            .iter()
            .zip(region)
            .map(|(t, r)| {
                let level = if *r == distractor { a * dim } else { a };
                level * t + noise * rng.random::<f64>()
            })
            .collect();
        let x = Tensor::from_vec(model.input_shape.clone(), data)?;
        let logits = infer(model, &x, &mut ExactMvm)?.logits;
        let peak = logits.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let rival = logits
            .iter()
            .enumerate()
            .filter(|(k, _)| *k != label)
            .fold(f64::NEG_INFINITY, |m, (_, v)| m.max(*v));
        if logits[label] - rival > MARGIN * peak.max(1.0) {
            return Ok(x);
        }
    }
    Err(Error::Numerical(format!(
        "no sample of class {label} with a positive margin in {MAX_DRAWS} draws"
    )))
}

/// Class region each input element belongs to.
fn region_map(profile: SyntheticProfile) -> Vec<usize> {
    match profile {
        SyntheticProfile::TinyMlp => (0..16).map(|i| i % CLASSES).collect(),
        SyntheticProfile::TinyCnn => (0..64).map(|p| cnn_quadrant(p / 8, p % 8)).collect(),
    }
}

fn cnn_quadrant(y: usize, x: usize) -> usize {
    (y / 4) * 2 + x / 4
}

/// Sets every batchnorm layer to the identity on the clean data: running
/// statistics are the clean statistics and gamma/beta undo them.
fn calibrate_bn(model: SnnModel, dataset: &Dataset) -> Result<SnnModel> {
    let n = dataset.len();
    let spec = NoiseCalibrationSpec {
        sample_count: n,
        momentum: 1.0,
        batch_size: n,
    };
    let mut model = bn_adapt_with(&model, &dataset.samples, &spec, |_| ExactMvm)?.model;
    for layer in &mut model.layers {
        if let Some(bn) = &mut layer.bn {
            for c in 0..bn.channels() {
                bn.gamma[c] = (bn.running_var[c] + bn.epsilon).sqrt();
                bn.beta[c] = bn.running_mean[c];
            }
        }
    }
    model.validate()?;
    Ok(model)
}

fn jittered(rng: &mut ChaCha8Rng, w: f64) -> f64 {
    w * rng.random_range(1.0 - JITTER..=1.0 + JITTER)
}

/// Centered matched filter of a binary template.
fn matched_filter(template: &[f64], rng: &mut ChaCha8Rng) -> Vec<f64> {
    let mean = template.iter().sum::<f64>() / template.len() as f64;
    template.iter().map(|t| jittered(rng, t - mean)).collect()
}

fn add_layer(weights: &mut WeightStore, name: &str, rows: usize, cols: usize, w: &[f64]) -> Result<()> {
    weights.insert(name.into(), QuantizedWeights::quantize(rows, cols, 8, w)?);
    Ok(())
}

/// 16 inputs, input `i` belongs to group `i % 4`; class `k` switches group
/// `k` off. 16 hidden LIF neurons, 4 per class, then a 4-way classifier.
fn tiny_mlp(rng: &mut ChaCha8Rng) -> Result<(SnnModel, Vec<Vec<f64>>)> {
    let inputs = 16;
    let hidden = 16;
    let templates: Vec<Vec<f64>> = (0..CLASSES)
        .map(|k| (0..inputs).map(|i| if i % CLASSES == k { 0.0 } else { 1.0 }).collect())
        .collect();
    let per_class = hidden / CLASSES;
    let w1: Vec<f64> = (0..hidden).flat_map(|j| matched_filter(&templates[j / per_class], rng)).collect();
    let w2 = classifier_weights(hidden, |j| j / per_class, rng);
    let mut weights = WeightStore::new();
    add_layer(&mut weights, "fc1", hidden, inputs, &w1)?;
    add_layer(&mut weights, "fc2", CLASSES, hidden, &w2)?;
    let input_shape = Shape::new(vec![inputs]);
    let l1 = LayerSpec::fully_connected(input_shape.clone(), hidden)
        .with_weights("fc1", 8)
        .with_bn(BatchNormParams::identity(hidden))
        .with_neuron(lif());
    let l2 = LayerSpec::fully_connected(Shape::new(vec![hidden]), CLASSES).with_weights("fc2", 8);
    let model = SnnModel {
        layers: vec![l1, l2],
        input_shape,
        timesteps: TIMESTEPS,
        num_classes: CLASSES,
        weights,
    };
    Ok((model, templates))
}

/// Votes for the class of each presynaptic unit: +1 for its own class and
/// -1/3 for the others, so every classifier column is zero-mean.
fn classifier_weights(inputs: usize, class_of: impl Fn(usize) -> usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let other = -1.0 / (CLASSES as f64 - 1.0);
    let mut w = Vec::with_capacity(CLASSES * inputs);
    for k in 0..CLASSES {
        for j in 0..inputs {
            w.push(jittered(rng, if class_of(j) == k { 1.0 } else { other }));
        }
    }
    w
}

/// 1x8x8 images, class `k` darkens quadrant `k`. A 3x3 conv with 8
/// brightness detectors feeds 2x2 average pooling and a classifier that
/// matches the pooled 4x4 maps against the dark quadrant.
fn tiny_cnn(rng: &mut ChaCha8Rng) -> Result<(SnnModel, Vec<Vec<f64>>)> {
    let side = 8;
    let half = side / 2;
    let quadrant = cnn_quadrant;
    let templates: Vec<Vec<f64>> = (0..CLASSES)
        .map(|k| {
            (0..side * side)
                .map(|p| if quadrant(p / side, p % side) == k { 0.0 } else { 1.0 })
                .collect()
        })
        .collect();
    let channels = 8;
    // Center-weighted blob detectors.
    let kernel = [0.25, 0.5, 0.25, 0.5, 1.0, 0.5, 0.25, 0.5, 0.25];
    let w1: Vec<f64> = (0..channels).flat_map(|_| kernel.map(|w| jittered(rng, w))).collect();
    let pooled = half;
    let pq = |p: usize| quadrant((p / pooled) * 2, (p % pooled) * 2);
    let spatial = pooled * pooled;
    let pooled_templates: Vec<Vec<f64>> = (0..CLASSES)
        .map(|k| (0..spatial).map(|p| if pq(p) == k { 0.0 } else { 1.0 }).collect())
        .collect();
    let mut w2 = Vec::with_capacity(CLASSES * channels * spatial);
    for t in &pooled_templates {
        for _ in 0..channels {
            w2.extend(matched_filter(t, rng));
        }
    }
    let mut weights = WeightStore::new();
    add_layer(&mut weights, "conv1", channels, 9, &w1)?;
    add_layer(&mut weights, "fc2", CLASSES, channels * spatial, &w2)?;
    let input_shape = Shape::new(vec![1, side, side]);
    let conv = LayerSpec::conv2d(input_shape.clone(), channels, 3, 1, 1)?
        .with_weights("conv1", 8)
        .with_bn(BatchNormParams::identity(channels))
        .with_neuron(lif());
    let pool = LayerSpec::avgpool(conv.output_shape.clone(), 2)?;
    let fc = LayerSpec::fully_connected(pool.output_shape.clone(), CLASSES).with_weights("fc2", 8);
    let model = SnnModel {
        layers: vec![conv, pool, fc],
        input_shape,
        timesteps: TIMESTEPS,
        num_classes: CLASSES,
        weights,
    };
    Ok((model, templates))
}

/// VGG9 layer geometry (64-64-P-128-128-P-256-256-256-P-1024-classes) on a
/// `3 x side x side` input with random 8-bit weights. Only the shapes are
/// meaningful; the weights are not trained.
pub fn vgg9_shaped(seed: u64, side: usize, timesteps: usize, num_classes: usize) -> Result<SnnModel> {
    if side % 8 != 0 || side == 0 {
        return Err(Error::InvalidArgument(format!("vgg9 input side must be a multiple of 8, got {side}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(&[seed, 0x9999]));
    let neuron = NeuronParams::new(0.95, 1.0)?;
    let plan: [Option<usize>; 10] = [
        Some(64),
        Some(64),
        None,
        Some(128),
        Some(128),
        None,
        Some(256),
        Some(256),
        Some(256),
        None,
    ];
    let mut weights = WeightStore::new();
    let mut layers = Vec::new();
    let input_shape = Shape::new(vec![3, side, side]);
    let mut shape = input_shape.clone();
    let mut random_layer = |name: String, rows: usize, cols: usize, weights: &mut WeightStore| -> Result<()> {
        let q = (0..rows * cols).map(|_| rng.random_range(-127i8..=127)).collect();
        // He-style scale keeps roughly a quarter of the neurons firing.
        let scale = 2.0 / (cols as f64).sqrt() / 127.0;
        weights.insert(name, QuantizedWeights::new(rows, cols, 8, scale, q)?);
        Ok(())
    };
    for (i, step) in plan.iter().enumerate() {
        let layer = match step {
            Some(c) => {
                let name = format!("conv{i}");
                let l = LayerSpec::conv2d(shape.clone(), *c, 3, 1, 1)?;
                random_layer(name.clone(), *c, shape.channels() * 9, &mut weights)?;
                l.with_weights(name, 8).with_neuron(neuron)
            }
            None => LayerSpec::avgpool(shape.clone(), 2)?,
        };
        shape = layer.output_shape.clone();
        layers.push(layer);
    }
    let flat = shape.numel();
    random_layer("fc1".into(), 1024, flat, &mut weights)?;
    layers.push(
        LayerSpec::fully_connected(shape.clone(), 1024)
            .with_weights("fc1", 8)
            .with_neuron(neuron),
    );
    random_layer("fc2".into(), num_classes, 1024, &mut weights)?;
    layers.push(LayerSpec::fully_connected(Shape::new(vec![1024]), num_classes).with_weights("fc2", 8));
    let model = SnnModel {
        layers,
        input_shape,
        timesteps,
        num_classes,
        weights,
    };
    model.validate()?;
    Ok(model)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn accuracy(w: &SyntheticWorkload) -> f64 {
        let correct = w
            .dataset
            .samples
            .iter()
            .zip(&w.dataset.labels)
            .filter(|(x, l)| infer(&w.model, *x, &mut ExactMvm).unwrap().prediction == **l as usize)
            .count();
        correct as f64 / w.dataset.len() as f64
    }

    #[test]
    fn profiles_parse() {
        for p in SyntheticProfile::ALL {
            assert_eq!(p.name().parse::<SyntheticProfile>().unwrap(), p);
        }
        assert!(matches!("vgg".parse::<SyntheticProfile>(), Err(Error::InvalidArgument(_))));
    }

    #[test]
    fn tiny_mlp_shape_and_accuracy() {
        let w = generate_synthetic_workload(1, SyntheticProfile::TinyMlp).unwrap();
        assert_eq!(w.model.input_shape, Shape::new(vec![16]));
        assert_eq!(w.model.num_classes, 4);
        assert_eq!(w.model.timesteps, 4);
        assert_eq!(w.model.layers.iter().filter(|l| l.is_weighted()).count(), 2);
        assert_eq!(accuracy(&w), 1.0);
    }

    #[test]
    fn all_seeds_classify_perfectly() {
        for seed in 0..20 {
            for p in SyntheticProfile::ALL {
                let w = generate_synthetic_workload(seed, p).unwrap();
                assert_eq!(accuracy(&w), 1.0, "seed {seed} {p}");
            }
        }
    }

    #[test]
    fn vgg9_geometry() {
        let m = vgg9_shaped(0, 32, 4, 10).unwrap();
        let weighted: Vec<_> = m.layers.iter().filter(|l| l.is_weighted()).collect();
        assert_eq!(weighted.len(), 9);
        assert_eq!(m.layers[m.classifier_index()].output_shape, Shape::new(vec![10]));
        assert!(vgg9_shaped(0, 12, 4, 10).is_err());
    }
}
