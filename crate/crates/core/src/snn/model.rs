//! Layer graph, quantized weight store and model validation.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Real;
use crate::snn::neuron::NeuronParams;
use crate::tensor::{Shape, Tensor};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LayerKind {
    Conv2d {
        in_channels: usize,
        out_channels: usize,
        kernel: usize,
        stride: usize,
        padding: usize,
    },
    FullyConnected {
        in_features: usize,
        out_features: usize,
    },
    AvgPool {
        kernel: usize,
        stride: usize,
    },
}

impl LayerKind {
    pub fn name(&self) -> &'static str {
        match self {
            LayerKind::Conv2d { .. } => "conv2d",
            LayerKind::FullyConnected { .. } => "fully_connected",
            LayerKind::AvgPool { .. } => "avgpool",
        }
    }
}

/// A layer seen as a matrix product: `outputs x reduction` weights applied at
/// `positions` output locations.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct GemmDims {
    /// Unrolled input length per output (`in_channels * k * k` for conv).
    pub reduction: usize,
    /// Output channels / features.
    pub outputs: usize,
    /// Output spatial positions (1 for fully connected).
    pub positions: usize,
}

impl GemmDims {
    pub fn weight_count(&self) -> u64 {
        (self.reduction * self.outputs) as u64
    }

    pub fn ops(&self) -> u64 {
        self.weight_count() * self.positions as u64
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatchNormParams {
    pub running_mean: Vec<f64>,
    pub running_var: Vec<f64>,
    pub gamma: Vec<f64>,
    pub beta: Vec<f64>,
    pub epsilon: f64,
}

impl BatchNormParams {
    pub fn identity(channels: usize) -> Self {
        BatchNormParams {
            running_mean: vec![0.0; channels],
            running_var: vec![1.0; channels],
            gamma: vec![1.0; channels],
            beta: vec![0.0; channels],
            epsilon: 1e-5,
        }
    }

    pub fn channels(&self) -> usize {
        self.gamma.len()
    }

    pub fn validate(&self, channels: usize) -> Result<()> {
        let lens = [
            self.running_mean.len(),
            self.running_var.len(),
            self.gamma.len(),
            self.beta.len(),
        ];
        if lens.iter().any(|&l| l != channels) {
            return Err(Error::InvalidModel(format!(
                "batchnorm vectors must have {channels} entries, got {lens:?}"
            )));
        }
        if self.running_var.iter().any(|&v| !(v >= 0.0)) {
            return Err(Error::InvalidModel("batchnorm running_var must be >= 0".into()));
        }
        if !(self.epsilon > 0.0) {
            return Err(Error::InvalidModel("batchnorm epsilon must be > 0".into()));
        }
        Ok(())
    }

    /// Normalizes `x` in place; channel is the leading dimension.
    pub fn apply<S: Real>(&self, x: &mut Tensor<S>) {
        let spatial = x.shape().spatial();
        for (c, chunk) in x.data_mut().chunks_mut(spatial).enumerate() {
            let scale = self.gamma[c] / (self.running_var[c] + self.epsilon).sqrt();
            let shift = self.beta[c] - scale * self.running_mean[c];
            let (scale, shift) = (S::from_f64_lossy(scale), S::from_f64_lossy(shift));
            for v in chunk.iter_mut() {
                *v = scale * *v + shift;
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerSpec {
    #[serde(flatten)]
    pub kind: LayerKind,
    pub input_shape: Shape,
    pub output_shape: Shape,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub weight_ref: Option<String>,
    #[serde(default = "default_weight_bits")]
    pub weight_bits: u8,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bn: Option<BatchNormParams>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub neuron: Option<NeuronParams>,
    #[serde(default = "default_lif_share")]
    pub lif_share: usize,
}

fn default_weight_bits() -> u8 {
    8
}

fn default_lif_share() -> usize {
    1
}

impl LayerSpec {
    pub fn conv2d(
        input_shape: Shape,
        out_channels: usize,
        kernel: usize,
        stride: usize,
        padding: usize,
    ) -> Result<Self> {
        let [c, h, w] = input_shape.dims() else {
            return Err(Error::InvalidModel(format!(
                "conv2d input must be [C, H, W], got {input_shape}"
            )));
        };
        if kernel == 0 || stride == 0 || out_channels == 0 {
            return Err(Error::InvalidArgument("conv2d with zero dimension".into()));
        }
        let out_dim = |d: usize| -> Result<usize> {
            let padded = d + 2 * padding;
            if padded < kernel {
                return Err(Error::InvalidModel(format!(
                    "kernel {kernel} larger than padded input {padded}"
                )));
            }
            Ok((padded - kernel) / stride + 1)
        };
        let output_shape = Shape::new(vec![out_channels, out_dim(*h)?, out_dim(*w)?]);
        Ok(LayerSpec {
            kind: LayerKind::Conv2d {
                in_channels: *c,
                out_channels,
                kernel,
                stride,
                padding,
            },
            input_shape,
            output_shape,
            weight_ref: None,
            weight_bits: 8,
            bn: None,
            neuron: None,
            lif_share: 1,
        })
    }

    pub fn fully_connected(input_shape: Shape, out_features: usize) -> Self {
        LayerSpec {
            kind: LayerKind::FullyConnected {
                in_features: input_shape.numel(),
                out_features,
            },
            input_shape,
            output_shape: Shape::new(vec![out_features]),
            weight_ref: None,
            weight_bits: 8,
            bn: None,
            neuron: None,
            lif_share: 1,
        }
    }

    pub fn avgpool(input_shape: Shape, kernel: usize) -> Result<Self> {
        let [c, h, w] = input_shape.dims() else {
            return Err(Error::InvalidModel(format!(
                "avgpool input must be [C, H, W], got {input_shape}"
            )));
        };
        if kernel == 0 || h % kernel != 0 || w % kernel != 0 {
            return Err(Error::InvalidModel(format!(
                "avgpool kernel {kernel} must tile {h}x{w}"
            )));
        }
        Ok(LayerSpec {
            kind: LayerKind::AvgPool {
                kernel,
                stride: kernel,
            },
            output_shape: Shape::new(vec![*c, h / kernel, w / kernel]),
            input_shape,
            weight_ref: None,
            weight_bits: 8,
            bn: None,
            neuron: None,
            lif_share: 1,
        })
    }

    pub fn with_weights(mut self, weight_ref: impl Into<String>, bits: u8) -> Self {
        self.weight_ref = Some(weight_ref.into());
        self.weight_bits = bits;
        self
    }

    pub fn with_neuron(mut self, neuron: NeuronParams) -> Self {
        self.neuron = Some(neuron);
        self
    }

    pub fn with_bn(mut self, bn: BatchNormParams) -> Self {
        self.bn = Some(bn);
        self
    }

    pub fn is_weighted(&self) -> bool {
        !matches!(self.kind, LayerKind::AvgPool { .. })
    }

    pub fn out_channels(&self) -> usize {
        self.output_shape.channels()
    }

    pub fn gemm(&self) -> Option<GemmDims> {
        match self.kind {
            LayerKind::Conv2d {
                in_channels,
                out_channels,
                kernel,
                ..
            } => Some(GemmDims {
                reduction: in_channels * kernel * kernel,
                outputs: out_channels,
                positions: self.output_shape.spatial(),
            }),
            LayerKind::FullyConnected {
                in_features,
                out_features,
            } => Some(GemmDims {
                reduction: in_features,
                outputs: out_features,
                positions: 1,
            }),
            LayerKind::AvgPool { .. } => None,
        }
    }

    /// Neurons with their own membrane potential (output elements / `lif_share`).
    pub fn membrane_count(&self) -> usize {
        if self.neuron.is_none() {
            return 0;
        }
        self.output_shape.numel() / self.lif_share.max(1)
    }

    pub fn membrane_shape(&self) -> Shape {
        let mut dims = self.output_shape.dims().to_vec();
        dims[0] /= self.lif_share.max(1);
        Shape::new(dims)
    }

    /// Im2col gather: input flat index feeding reduction row `r` at output
    /// position `p`, or `None` where the kernel overlaps padding.
    pub fn input_index(&self, position: usize, r: usize) -> Option<usize> {
        match self.kind {
            LayerKind::FullyConnected { .. } => Some(r),
            LayerKind::Conv2d {
                kernel,
                stride,
                padding,
                ..
            } => {
                let (h, w) = (self.input_shape.dims()[1], self.input_shape.dims()[2]);
                let w_out = self.output_shape.dims()[2];
                let (oy, ox) = (position / w_out, position % w_out);
                let c = r / (kernel * kernel);
                let (ky, kx) = ((r / kernel) % kernel, r % kernel);
                let y = (oy * stride + ky) as isize - padding as isize;
                let x = (ox * stride + kx) as isize - padding as isize;
                if y < 0 || x < 0 || y >= h as isize || x >= w as isize {
                    None
                } else {
                    Some(c * h * w + y as usize * w + x as usize)
                }
            }
            LayerKind::AvgPool { .. } => None,
        }
    }

    /// Number of (position, reduction row) pairs that read each input element.
    pub fn input_fanout(&self) -> Vec<u64> {
        match self.kind {
            LayerKind::FullyConnected { .. } => vec![1; self.input_shape.numel()],
            LayerKind::Conv2d {
                kernel,
                stride,
                padding,
                ..
            } => {
                let dims = self.input_shape.dims();
                let (c, h, w) = (dims[0], dims[1], dims[2]);
                let out = self.output_shape.dims();
                let axis = |len: usize, out_len: usize| -> Vec<u64> {
                    let mut cnt = vec![0u64; len];
                    for o in 0..out_len {
                        for k in 0..kernel {
                            let i = (o * stride + k) as isize - padding as isize;
                            if i >= 0 && (i as usize) < len {
                                cnt[i as usize] += 1;
                            }
                        }
                    }
                    cnt
                };
                let (cy, cx) = (axis(h, out[1]), axis(w, out[2]));
                let mut fan = Vec::with_capacity(c * h * w);
                for _ in 0..c {
                    for y in 0..h {
                        for x in 0..w {
                            fan.push(cy[y] * cx[x]);
                        }
                    }
                }
                fan
            }
            LayerKind::AvgPool { .. } => vec![0; self.input_shape.numel()],
        }
    }
}

/// Integer weight payload of one layer, row-major `[outputs][reduction]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuantizedWeights {
    pub rows: usize,
    pub cols: usize,
    pub bits: u8,
    pub scale: f64,
    pub q: Vec<i8>,
}

impl QuantizedWeights {
    pub fn new(rows: usize, cols: usize, bits: u8, scale: f64, q: Vec<i8>) -> Result<Self> {
        let w = QuantizedWeights {
            rows,
            cols,
            bits,
            scale,
            q,
        };
        w.validate()?;
        Ok(w)
    }

    /// Symmetric quantization of real weights with one scale per layer.
    pub fn quantize(rows: usize, cols: usize, bits: u8, weights: &[f64]) -> Result<Self> {
        if weights.len() != rows * cols {
            return Err(Error::InvalidArgument(format!(
                "expected {} weights, got {}",
                rows * cols,
                weights.len()
            )));
        }
        let qmax = qmax_for_bits(bits)?;
        let peak = weights.iter().fold(0.0f64, |m, w| m.max(w.abs()));
        let scale = if peak > 0.0 { peak / qmax as f64 } else { 1.0 };
        let q = weights
            .iter()
            .map(|w| (w / scale).round().clamp(-(qmax as f64), qmax as f64) as i8)
            .collect();
        QuantizedWeights::new(rows, cols, bits, scale, q)
    }

    pub fn qmax(&self) -> i32 {
        qmax_for_bits(self.bits).unwrap_or(127)
    }

    pub fn get(&self, row: usize, col: usize) -> i8 {
        self.q[row * self.cols + col]
    }

    pub fn dequantize<S: Real>(&self, row: usize, col: usize) -> S {
        S::from_f64_lossy(self.scale * self.get(row, col) as f64)
    }

    pub fn validate(&self) -> Result<()> {
        let qmax = qmax_for_bits(self.bits)?;
        if self.q.len() != self.rows * self.cols {
            return Err(Error::InvalidModel(format!(
                "weight payload has {} values, expected {}x{}",
                self.q.len(),
                self.rows,
                self.cols
            )));
        }
        if !(self.scale.is_finite() && self.scale > 0.0) {
            return Err(Error::InvalidModel(format!(
                "weight scale must be finite and > 0, got {}",
                self.scale
            )));
        }
        if let Some(bad) = self.q.iter().find(|&&v| (v as i32).abs() > qmax) {
            return Err(Error::InvalidModel(format!(
                "weight value {bad} outside +/-{qmax} for {}-bit weights",
                self.bits
            )));
        }
        Ok(())
    }

    /// Order-sensitive digest of the integer payload and scale.
    pub fn checksum(&self) -> u64 {
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        let mut feed = |b: u8| {
            h ^= b as u64;
            h = h.wrapping_mul(0x0100_0000_01b3);
        };
        for b in self.scale.to_le_bytes() {
            feed(b);
        }
        for &v in &self.q {
            feed(v as u8);
        }
        h
    }
}

pub fn qmax_for_bits(bits: u8) -> Result<i32> {
    match bits {
        4 | 8 => Ok((1i32 << (bits - 1)) - 1),
        other => Err(Error::InvalidModel(format!(
            "weight_bits must be 4 or 8, got {other}"
        ))),
    }
}

pub type WeightStore = BTreeMap<String, QuantizedWeights>;

#[derive(Debug, Clone, PartialEq)]
pub struct SnnModel {
    pub layers: Vec<LayerSpec>,
    pub input_shape: Shape,
    pub timesteps: usize,
    pub num_classes: usize,
    pub weights: WeightStore,
}

impl SnnModel {
    pub fn validate(&self) -> Result<()> {
        if self.layers.is_empty() {
            return Err(Error::InvalidModel("model has no layers".into()));
        }
        if self.timesteps < 1 {
            return Err(Error::InvalidModel("timesteps must be >= 1".into()));
        }
        if self.num_classes < 2 {
            return Err(Error::InvalidModel("num_classes must be >= 2".into()));
        }
        let mut shape = self.input_shape.clone();
        let last = self.layers.len() - 1;
        for (i, layer) in self.layers.iter().enumerate() {
            self.validate_layer(i, layer, &shape, i == last)
                .map_err(|e| e.at_layer(i))?;
            shape = layer.output_shape.clone();
        }
        Ok(())
    }

    fn validate_layer(
        &self,
        index: usize,
        layer: &LayerSpec,
        incoming: &Shape,
        is_last: bool,
    ) -> Result<()> {
        if layer.input_shape != *incoming {
            return Err(Error::InvalidModel(format!(
                "input shape {} does not chain from previous output {incoming}",
                layer.input_shape
            )));
        }
        if layer.input_shape.numel() == 0 || layer.output_shape.numel() == 0 {
            return Err(Error::InvalidModel("zero-sized layer".into()));
        }
        let expected = match layer.kind {
            LayerKind::Conv2d {
                in_channels,
                out_channels,
                kernel,
                stride,
                padding,
            } => {
                if layer.input_shape.channels() != in_channels {
                    return Err(Error::InvalidModel(format!(
                        "conv2d declares {in_channels} input channels, input is {}",
                        layer.input_shape
                    )));
                }
                LayerSpec::conv2d(layer.input_shape.clone(), out_channels, kernel, stride, padding)?
                    .output_shape
            }
            LayerKind::FullyConnected {
                in_features,
                out_features,
            } => {
                if layer.input_shape.numel() != in_features {
                    return Err(Error::InvalidModel(format!(
                        "fully_connected declares {in_features} inputs, input is {}",
                        layer.input_shape
                    )));
                }
                Shape::new(vec![out_features])
            }
            LayerKind::AvgPool { kernel, stride } => {
                if stride != kernel {
                    return Err(Error::InvalidModel(
                        "avgpool requires stride == kernel".into(),
                    ));
                }
                LayerSpec::avgpool(layer.input_shape.clone(), kernel)?.output_shape
            }
        };
        if expected != layer.output_shape {
            return Err(Error::InvalidModel(format!(
                "declared output {} inconsistent with geometry ({expected})",
                layer.output_shape
            )));
        }
        qmax_for_bits(layer.weight_bits)?;
        if layer.lif_share == 0 || layer.out_channels() % layer.lif_share != 0 {
            return Err(Error::InvalidModel(format!(
                "lif_share {} does not divide {} output channels",
                layer.lif_share,
                layer.out_channels()
            )));
        }
        if let Some(n) = &layer.neuron {
            n.validate()?;
        }
        if let Some(bn) = &layer.bn {
            bn.validate(layer.out_channels())?;
        }
        if layer.is_weighted() {
            let gemm = layer.gemm().expect("weighted layer");
            let name = layer
                .weight_ref
                .as_ref()
                .ok_or_else(|| Error::InvalidModel("weighted layer without weight_ref".into()))?;
            let w = self
                .weights
                .get(name)
                .ok_or_else(|| Error::InvalidModel(format!("weight '{name}' missing from store")))?;
            if w.rows != gemm.outputs || w.cols != gemm.reduction {
                return Err(Error::InvalidModel(format!(
                    "weight '{name}' is {}x{}, layer needs {}x{}",
                    w.rows, w.cols, gemm.outputs, gemm.reduction
                )));
            }
            if w.bits != layer.weight_bits {
                return Err(Error::InvalidModel(format!(
                    "weight '{name}' has {} bits, layer declares {}",
                    w.bits, layer.weight_bits
                )));
            }
            w.validate()?;
            let classifier = layer.neuron.is_none();
            if classifier && !is_last {
                return Err(Error::InvalidModel(format!(
                    "weighted layer {index} has no neuron but is not the final classifier"
                )));
            }
            if classifier && layer.output_shape.numel() != self.num_classes {
                return Err(Error::InvalidModel(format!(
                    "classifier width {} != num_classes {}",
                    layer.output_shape.numel(),
                    self.num_classes
                )));
            }
        } else if layer.neuron.is_some() || layer.bn.is_some() {
            return Err(Error::InvalidModel("pooling layers carry no neuron or batchnorm".into()));
        }
        if is_last && !(layer.is_weighted() && layer.neuron.is_none()) {
            return Err(Error::InvalidModel(
                "last layer must be a weighted classifier without a neuron".into(),
            ));
        }
        Ok(())
    }

    pub fn layer_weights(&self, index: usize) -> Option<&QuantizedWeights> {
        self.layers[index]
            .weight_ref
            .as_ref()
            .and_then(|r| self.weights.get(r))
    }

    pub fn with_timesteps(&self, timesteps: usize) -> Self {
        let mut m = self.clone();
        m.timesteps = timesteps;
        m
    }

    pub fn classifier_index(&self) -> usize {
        self.layers.len() - 1
    }
}
