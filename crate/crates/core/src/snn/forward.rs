//! Layer-by-layer timestep loop and classifier averaging.

use crate::error::{Error, Result};
use crate::scalar::Real;
use crate::snn::encode::direct_encode;
use crate::snn::model::{LayerKind, LayerSpec, QuantizedWeights, SnnModel};
use crate::snn::neuron::lif_step;
use crate::tensor::{SpikeTensor, Tensor};

/// Everything a dot-product provider needs to evaluate one layer.
#[derive(Debug, Clone, Copy)]
pub struct MvmContext<'a> {
    pub layer_index: usize,
    pub layer: &'a LayerSpec,
    pub weights: &'a QuantizedWeights,
    /// Zero-based timestep.
    pub timestep: usize,
}

/// Computes a layer's weighted input (`sum_j w_ij * x_j` for every output).
///
/// The returned tensor has the layer's output shape.
pub trait MvmProvider<S: Real> {
    fn weighted_input(&mut self, ctx: &MvmContext<'_>, input: &Tensor<S>) -> Result<Tensor<S>>;
}

impl<S: Real, P: MvmProvider<S> + ?Sized> MvmProvider<S> for &mut P {
    fn weighted_input(&mut self, ctx: &MvmContext<'_>, input: &Tensor<S>) -> Result<Tensor<S>> {
        (**self).weighted_input(ctx, input)
    }
}

/// Exact digital arithmetic on the dequantized weights.
#[derive(Debug, Clone, Copy, Default)]
pub struct ExactMvm;

impl<S: Real> MvmProvider<S> for ExactMvm {
    fn weighted_input(&mut self, ctx: &MvmContext<'_>, input: &Tensor<S>) -> Result<Tensor<S>> {
        let layer = ctx.layer;
        let gemm = layer
            .gemm()
            .ok_or_else(|| Error::Contract("pooling layer has no weighted input".into()))?;
        if input.shape() != &layer.input_shape {
            return Err(Error::Contract(format!(
                "input shape {} does not match layer input {}",
                input.shape(),
                layer.input_shape
            )));
        }
        let w: Vec<S> = (0..gemm.outputs)
            .flat_map(|m| (0..gemm.reduction).map(move |r| (m, r)))
            .map(|(m, r)| ctx.weights.dequantize(m, r))
            .collect();
        let x = input.data();
        let mut out = Vec::with_capacity(gemm.outputs * gemm.positions);
        for m in 0..gemm.outputs {
            let row = &w[m * gemm.reduction..(m + 1) * gemm.reduction];
            for p in 0..gemm.positions {
                let mut acc = S::zero();
                for (r, &wr) in row.iter().enumerate() {
                    if let Some(i) = layer.input_index(p, r) {
                        acc = acc + wr * x[i];
                    }
                }
                out.push(acc);
            }
        }
        Tensor::from_vec(layer.output_shape.clone(), out)
    }
}

/// Hook for inspecting activations during a forward pass.
pub trait ActivationObserver<S: Real> {
    /// Called with a layer's weighted input before batchnorm is applied.
    fn pre_bn(&mut self, _layer: usize, _timestep: usize, _activation: &Tensor<S>) {}
}

pub struct NoObserver;

impl<S: Real> ActivationObserver<S> for NoObserver {}

/// Membrane potentials of every LIF layer, shaped by the shared neuron count.
#[derive(Debug, Clone, PartialEq)]
pub struct MembraneState<S> {
    pub potentials: Vec<Option<Tensor<S>>>,
}

impl<S: Real> MembraneState<S> {
    pub fn new(model: &SnnModel) -> Self {
        let potentials = model
            .layers
            .iter()
            .map(|l| l.neuron.map(|_| Tensor::zeros(l.membrane_shape())))
            .collect();
        MembraneState { potentials }
    }

    pub fn membrane_entries(&self) -> usize {
        self.potentials.iter().flatten().map(|t| t.len()).sum()
    }
}

/// Per-layer activity observed in one timestep; consumed by the hardware models.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerActivity {
    pub input_len: usize,
    pub input_nonzero: usize,
    /// Accumulations whose input operand is nonzero.
    pub active_ops: u64,
    /// Nonzero entries summed over all unrolled input vectors (crossbar row drives).
    pub active_row_reads: u64,
    /// Output spikes of LIF layers.
    pub spikes: Option<SpikeTensor>,
    /// Membrane potentials updated (neurons / lif_share).
    pub membrane_updates: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TimestepOutput<S> {
    pub layers: Vec<LayerActivity>,
    /// Classifier accumulation of this timestep alone.
    pub logits: Vec<S>,
}

pub fn forward_timestep<S: Real, P: MvmProvider<S>>(
    model: &SnnModel,
    drive: &Tensor<S>,
    state: &mut MembraneState<S>,
    timestep: usize,
    mvm: &mut P,
) -> Result<TimestepOutput<S>> {
    forward_timestep_observed(model, drive, state, timestep, mvm, &mut NoObserver)
}

pub fn forward_timestep_observed<S: Real, P: MvmProvider<S>, O: ActivationObserver<S>>(
    model: &SnnModel,
    drive: &Tensor<S>,
    state: &mut MembraneState<S>,
    timestep: usize,
    mvm: &mut P,
    observer: &mut O,
) -> Result<TimestepOutput<S>> {
    if drive.shape() != &model.input_shape {
        return Err(Error::Contract(format!(
            "drive shape {} does not match model input {}",
            drive.shape(),
            model.input_shape
        )));
    }
    let mut x = drive.clone();
    let mut layers = Vec::with_capacity(model.layers.len());
    let mut logits = Vec::new();
    for (li, layer) in model.layers.iter().enumerate() {
        let mut activity = LayerActivity {
            input_len: x.len(),
            input_nonzero: x.count_nonzero(),
            active_ops: 0,
            active_row_reads: 0,
            spikes: None,
            membrane_updates: 0,
        };
        match layer.kind {
            LayerKind::AvgPool { kernel, .. } => {
                x = avg_pool(&x, layer, kernel)?;
            }
            _ => {
                let weights = model
                    .layer_weights(li)
                    .ok_or_else(|| Error::InvalidModel("missing weights".into()).at_layer(li))?;
                let outputs = layer.out_channels() as u64;
                let row_reads: u64 = layer
                    .input_fanout()
                    .iter()
                    .zip(x.data())
                    .filter(|(_, v)| !v.is_zero())
                    .map(|(f, _)| *f)
                    .sum();
                activity.active_row_reads = row_reads;
                activity.active_ops = row_reads * outputs;
                let ctx = MvmContext {
                    layer_index: li,
                    layer,
                    weights,
                    timestep,
                };
                let mut z = mvm
                    .weighted_input(&ctx, &x)
                    .map_err(|e| e.at_layer(li))?;
                if z.shape() != &layer.output_shape {
                    return Err(Error::Contract(format!(
                        "provider returned shape {}, expected {}",
                        z.shape(),
                        layer.output_shape
                    ))
                    .at_layer(li));
                }
                observer.pre_bn(li, timestep, &z);
                if let Some(bn) = &layer.bn {
                    bn.apply(&mut z);
                }
                match &layer.neuron {
                    Some(params) => {
                        let u = state.potentials[li]
                            .as_ref()
                            .ok_or_else(|| Error::Contract("membrane state missing".into()).at_layer(li))?;
                        let shared = group_mean(&z, layer.lif_share)?;
                        let (u_next, fired) = lif_step(u, &shared, params).map_err(|e| e.at_layer(li))?;
                        activity.membrane_updates = u_next.len();
                        state.potentials[li] = Some(u_next);
                        let spikes = broadcast_groups(&fired, layer)?;
                        x = spikes.to_tensor();
                        activity.spikes = Some(spikes);
                    }
                    None => {
                        logits = z.into_data();
                        x = Tensor::zeros(layer.output_shape.clone());
                    }
                }
            }
        }
        layers.push(activity);
    }
    Ok(TimestepOutput { layers, logits })
}

fn avg_pool<S: Real>(x: &Tensor<S>, layer: &LayerSpec, kernel: usize) -> Result<Tensor<S>> {
    let d = layer.input_shape.dims();
    let (c, h, w) = (d[0], d[1], d[2]);
    let (ho, wo) = (h / kernel, w / kernel);
    let norm = S::from_usize_exact(kernel * kernel);
    let src = x.data();
    let mut out = Vec::with_capacity(c * ho * wo);
    for ch in 0..c {
        for oy in 0..ho {
            for ox in 0..wo {
                let mut acc = S::zero();
                for ky in 0..kernel {
                    for kx in 0..kernel {
                        acc = acc + src[ch * h * w + (oy * kernel + ky) * w + ox * kernel + kx];
                    }
                }
                out.push(acc / norm);
            }
        }
    }
    Tensor::from_vec(layer.output_shape.clone(), out)
}

/// Mean over each block of `n` consecutive channels.
fn group_mean<S: Real>(z: &Tensor<S>, n: usize) -> Result<Tensor<S>> {
    if n == 1 {
        return Ok(z.clone());
    }
    let shape = z.shape();
    let (c, spatial) = (shape.channels(), shape.spatial());
    if c % n != 0 {
        return Err(Error::InvalidModel(format!(
            "lif_share {n} does not divide {c} channels"
        )));
    }
    let mut dims = shape.dims().to_vec();
    dims[0] = c / n;
    let norm = S::from_usize_exact(n);
    let src = z.data();
    let mut out = vec![S::zero(); (c / n) * spatial];
    for ch in 0..c {
        let g = ch / n;
        for s in 0..spatial {
            out[g * spatial + s] = out[g * spatial + s] + src[ch * spatial + s];
        }
    }
    for v in &mut out {
        *v = *v / norm;
    }
    Tensor::from_vec(crate::tensor::Shape::new(dims), out)
}

fn broadcast_groups(fired: &SpikeTensor, layer: &LayerSpec) -> Result<SpikeTensor> {
    let n = layer.lif_share;
    if n == 1 {
        return Ok(fired.clone());
    }
    let shape = layer.output_shape.clone();
    let spatial = shape.spatial();
    let mut out = SpikeTensor::zeros(shape.clone());
    for ch in 0..shape.channels() {
        for s in 0..spatial {
            if fired.get((ch / n) * spatial + s) {
                out.set(ch * spatial + s, true);
            }
        }
    }
    Ok(out)
}

/// Index of the largest value; the lowest index wins ties.
pub fn argmax<S: Real>(values: &[S]) -> usize {
    let mut best = 0;
    for (i, v) in values.iter().enumerate().skip(1) {
        if *v > values[best] {
            best = i;
        }
    }
    best
}

#[derive(Debug, Clone, PartialEq)]
pub struct InferenceTrace<S> {
    pub timesteps: Vec<TimestepOutput<S>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Inference<S> {
    pub prediction: usize,
    /// Mean classifier accumulation over the timesteps that ran.
    pub logits: Vec<S>,
    pub timesteps_used: usize,
    pub trace: InferenceTrace<S>,
}

impl<S: Real> Inference<S> {
    /// Mean output sparsity of each LIF layer over the timesteps that ran.
    pub fn layer_sparsity(&self) -> Vec<Option<f64>> {
        let n_layers = self.trace.timesteps.first().map_or(0, |t| t.layers.len());
        (0..n_layers)
            .map(|li| {
                let per_t: Vec<f64> = self
                    .trace
                    .timesteps
                    .iter()
                    .filter_map(|t| t.layers[li].spikes.as_ref().map(|s| s.sparsity()))
                    .collect();
                (!per_t.is_empty()).then(|| per_t.iter().sum::<f64>() / per_t.len() as f64)
            })
            .collect()
    }
}

/// Runs up to `max_timesteps` steps; `stop(t, running_mean_logits)` is asked
/// after every step `t` (1-based) and ends the run when it returns true.
pub fn run_inference<S, P, O, F>(
    model: &SnnModel,
    input: &Tensor<S>,
    mvm: &mut P,
    max_timesteps: usize,
    observer: &mut O,
    mut stop: F,
) -> Result<Inference<S>>
where
    S: Real,
    P: MvmProvider<S>,
    O: ActivationObserver<S>,
    F: FnMut(usize, &[S]) -> bool,
{
    let drives = direct_encode(input, max_timesteps)?;
    let mut state = MembraneState::new(model);
    let mut sum = vec![S::zero(); model.num_classes];
    let mut timesteps = Vec::with_capacity(max_timesteps);
    for (t, drive) in drives.iter().enumerate() {
        let out = forward_timestep_observed(model, drive, &mut state, t, mvm, observer)?;
        for (acc, v) in sum.iter_mut().zip(&out.logits) {
            *acc = *acc + *v;
        }
        timesteps.push(out);
        let steps = S::from_usize_exact(t + 1);
        let running: Vec<S> = sum.iter().map(|v| *v / steps).collect();
        if stop(t + 1, &running) {
            break;
        }
    }
    let used = timesteps.len();
    let steps = S::from_usize_exact(used);
    let logits: Vec<S> = sum.iter().map(|v| *v / steps).collect();
    Ok(Inference {
        prediction: argmax(&logits),
        logits,
        timesteps_used: used,
        trace: InferenceTrace { timesteps },
    })
}

/// Static-T inference with classifier outputs averaged over all timesteps.
pub fn infer<S: Real, P: MvmProvider<S>>(
    model: &SnnModel,
    input: &Tensor<S>,
    mvm: &mut P,
) -> Result<Inference<S>> {
    run_inference(model, input, mvm, model.timesteps, &mut NoObserver, |_, _| false)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::snn::model::{BatchNormParams, WeightStore};
    use crate::snn::neuron::NeuronParams;
    use crate::tensor::Shape;

    /// 2 inputs -> 2 LIF neurons -> 2 classes, weights in units of 0.1.
    fn toy(threshold: f64) -> SnnModel {
        let neuron = NeuronParams::new(1.0, threshold).unwrap();
        let l1 = LayerSpec::fully_connected(Shape::new(vec![2]), 2)
            .with_weights("a", 8)
            .with_neuron(neuron);
        let l2 = LayerSpec::fully_connected(Shape::new(vec![2]), 2).with_weights("b", 8);
        let mut weights = WeightStore::new();
        // a = [[0.6, 0.2], [-0.3, 0.9]], b = [[1.0, -0.5], [0.2, 0.7]]
        weights.insert("a".into(), QuantizedWeights::new(2, 2, 8, 0.1, vec![6, 2, -3, 9]).unwrap());
        weights.insert("b".into(), QuantizedWeights::new(2, 2, 8, 0.1, vec![10, -5, 2, 7]).unwrap());
        SnnModel {
            layers: vec![l1, l2],
            input_shape: Shape::new(vec![2]),
            timesteps: 3,
            num_classes: 2,
            weights,
        }
    }

    fn input(a: f64, b: f64) -> Tensor<f64> {
        Tensor::from_vec(Shape::new(vec![2]), vec![a, b]).unwrap()
    }

    #[test]
    fn zero_drive_gives_nothing() {
        let m = toy(0.5);
        let mut st = MembraneState::new(&m);
        let out = forward_timestep(&m, &input(0.0, 0.0), &mut st, 0, &mut ExactMvm).unwrap();
        assert_eq!(out.logits, vec![0.0, 0.0]);
        assert_eq!(out.layers[0].spikes.as_ref().unwrap().count_ones(), 0);
    }

    #[test]
    fn infinite_threshold_never_fires() {
        let m = toy(f64::INFINITY);
        let r = infer(&m, &input(1.0, 1.0), &mut ExactMvm).unwrap();
        for t in &r.trace.timesteps {
            assert_eq!(t.layers[0].spikes.as_ref().unwrap().count_ones(), 0);
        }
        assert_eq!(r.logits, vec![0.0, 0.0]);
    }

    #[test]
    fn hand_computed_logits() {
        // x = [1, 0.5]; hidden drive = [0.6 + 0.1, -0.3 + 0.45] = [0.7, 0.15], theta = 0.5.
        // t1: u = [0.7, 0.15] -> spikes [1, 0], u = [0, 0.15]
        // t2: u = [0.7, 0.30] -> spikes [1, 0], u = [0, 0.30]
        // t3: u = [0.7, 0.45] -> spikes [1, 0]
        // classifier per step = b[:, 0] = [1.0, 0.2].
        let m = toy(0.5);
        let r = infer(&m, &input(1.0, 0.5), &mut ExactMvm).unwrap();
        assert!((r.logits[0] - 1.0).abs() < 1e-12);
        assert!((r.logits[1] - 0.2).abs() < 1e-12);
        assert_eq!(r.prediction, 0);

        // Lower threshold: hidden 2 fires at t2 (0.30 > 0.25).
        // t1: spikes [1, 0]; t2: u2 = 0.30 -> [1, 1]; t3: u2 = 0.15 -> [1, 0].
        // sums: class0 = 1.0*3 - 0.5 = 2.5, class1 = 0.2*3 + 0.7 = 1.3.
        let m = toy(0.25);
        let r = infer(&m, &input(1.0, 0.5), &mut ExactMvm).unwrap();
        assert!((r.logits[0] - 2.5 / 3.0).abs() < 1e-12);
        assert!((r.logits[1] - 1.3 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn mean_of_per_step_accumulations() {
        let m = toy(0.25);
        let r = infer(&m, &input(0.9, 0.7), &mut ExactMvm).unwrap();
        for k in 0..2 {
            let sum: f64 = r.trace.timesteps.iter().map(|t| t.logits[k]).sum();
            assert_eq!(r.logits[k], sum / 3.0);
        }
    }

    #[test]
    fn single_timestep_is_single_pass() {
        let m = toy(0.25).with_timesteps(1);
        let r = infer(&m, &input(0.9, 0.7), &mut ExactMvm).unwrap();
        let mut st = MembraneState::new(&m);
        let once = forward_timestep(&m, &input(0.9, 0.7), &mut st, 0, &mut ExactMvm).unwrap();
        assert_eq!(r.logits, once.logits);
    }

    #[test]
    fn argmax_prefers_lowest_index() {
        assert_eq!(argmax(&[1.0, 3.0, 3.0, 2.0]), 1);
        assert_eq!(argmax(&[0.5, 0.5]), 0);
    }

    #[test]
    fn batchnorm_applies_before_lif() {
        let mut m = toy(0.5);
        let mut bn = BatchNormParams::identity(2);
        bn.beta = vec![-10.0, 0.0];
        m.layers[0].bn = Some(bn);
        let r = infer(&m, &input(1.0, 0.5), &mut ExactMvm).unwrap();
        assert!(r.trace.timesteps.iter().all(|t| !t.layers[0].spikes.as_ref().unwrap().get(0)));
    }

    #[test]
    fn membrane_conservation_without_firing() {
        let m = toy(f64::INFINITY);
        let mut st = MembraneState::new(&m);
        let x = input(0.37, 0.11);
        for t in 0..7 {
            forward_timestep(&m, &x, &mut st, t, &mut ExactMvm).unwrap();
        }
        let drive = [0.6 * 0.37 + 0.2 * 0.11, -0.3 * 0.37 + 0.9 * 0.11];
        let u = st.potentials[0].as_ref().unwrap().data().to_vec();
        for (ui, di) in u.iter().zip(drive) {
            assert!((ui - 7.0 * di).abs() <= 1e-9 * (7.0 * di).abs());
        }
    }

    #[test]
    fn wrong_input_shape_is_rejected() {
        let m = toy(0.5);
        let x = Tensor::<f64>::zeros(Shape::new(vec![3]));
        assert!(infer(&m, &x, &mut ExactMvm).is_err());
    }

    struct Failing;
    impl MvmProvider<f64> for Failing {
        fn weighted_input(&mut self, ctx: &MvmContext<'_>, _: &Tensor<f64>) -> Result<Tensor<f64>> {
            if ctx.layer_index == 1 {
                Err(Error::Numerical("boom".into()))
            } else {
                Ok(Tensor::zeros(ctx.layer.output_shape.clone()))
            }
        }
    }

    #[test]
    fn provider_errors_carry_layer_index() {
        let m = toy(0.5);
        let err = infer(&m, &input(1.0, 1.0), &mut Failing).unwrap_err();
        assert!(matches!(err, Error::Layer { layer: 1, .. }), "{err}");
    }
}
