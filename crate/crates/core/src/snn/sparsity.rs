use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Real;
use crate::snn::forward::{infer, ExactMvm};
use crate::snn::model::SnnModel;
use crate::tensor::Tensor;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SparsityProfile {
    /// `[layer][timestep]` mean output sparsity; `None` for layers without neurons.
    pub per_layer: Vec<Vec<Option<f64>>>,
    /// Zero fraction over every emitted spike slot (all LIF layers, timesteps, samples).
    pub aggregate: f64,
}

impl SparsityProfile {
    pub fn layer_mean(&self, layer: usize) -> Option<f64> {
        let vals: Vec<f64> = self.per_layer[layer].iter().flatten().copied().collect();
        (!vals.is_empty()).then(|| vals.iter().sum::<f64>() / vals.len() as f64)
    }
}

/// Spike sparsity of every LIF layer per timestep, averaged over `samples`
/// under exact arithmetic.
pub fn sparsity_profile<S: Real>(model: &SnnModel, samples: &[Tensor<S>]) -> Result<SparsityProfile> {
    if samples.is_empty() {
        return Err(Error::InvalidArgument("sparsity profile needs at least one sample".into()));
    }
    let n_layers = model.layers.len();
    let t_max = model.timesteps;
    let mut zeros = vec![vec![0u64; t_max]; n_layers];
    let mut slots = vec![vec![0u64; t_max]; n_layers];
    for x in samples {
        let run = infer(model, x, &mut ExactMvm)?;
        for (t, step) in run.trace.timesteps.iter().enumerate() {
            for (li, act) in step.layers.iter().enumerate() {
                if let Some(s) = &act.spikes {
                    zeros[li][t] += (s.len() - s.count_ones()) as u64;
                    slots[li][t] += s.len() as u64;
                }
            }
        }
    }
    let per_layer = (0..n_layers)
        .map(|li| {
            (0..t_max)
                .map(|t| (slots[li][t] > 0).then(|| zeros[li][t] as f64 / slots[li][t] as f64))
                .collect()
        })
        .collect();
    let total_zero: u64 = zeros.iter().flatten().sum();
    let total: u64 = slots.iter().flatten().sum();
    let aggregate = if total == 0 { 1.0 } else { total_zero as f64 / total as f64 };
    Ok(SparsityProfile { per_layer, aggregate })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::snn::model::{LayerSpec, QuantizedWeights, WeightStore};
    use crate::snn::neuron::NeuronParams;
    use crate::tensor::Shape;

    fn model(threshold: f64) -> SnnModel {
        let l1 = LayerSpec::fully_connected(Shape::new(vec![3]), 4)
            .with_weights("a", 8)
            .with_neuron(NeuronParams::new(1.0, threshold).unwrap());
        let l2 = LayerSpec::fully_connected(Shape::new(vec![4]), 2).with_weights("b", 8);
        let mut weights = WeightStore::new();
        weights.insert("a".into(), QuantizedWeights::new(4, 3, 8, 0.01, vec![50; 12]).unwrap());
        weights.insert("b".into(), QuantizedWeights::new(2, 4, 8, 0.01, vec![10; 8]).unwrap());
        SnnModel {
            layers: vec![l1, l2],
            input_shape: Shape::new(vec![3]),
            timesteps: 3,
            num_classes: 2,
            weights,
        }
    }

    fn data() -> Vec<Tensor<f64>> {
        vec![
            Tensor::from_vec(Shape::new(vec![3]), vec![0.2, 0.4, 0.9]).unwrap(),
            Tensor::from_vec(Shape::new(vec![3]), vec![1.0, 0.1, 0.3]).unwrap(),
        ]
    }

    #[test]
    fn silent_model_is_fully_sparse() {
        let p = sparsity_profile(&model(f64::INFINITY), &data()).unwrap();
        assert_eq!(p.aggregate, 1.0);
        assert!(p.per_layer[0].iter().all(|v| *v == Some(1.0)));
        assert!(p.per_layer[1].iter().all(|v| v.is_none()));
    }

    #[test]
    fn tiny_threshold_always_fires() {
        let p = sparsity_profile(&model(1e-9), &data()).unwrap();
        assert!(p.per_layer[0].iter().all(|v| *v == Some(0.0)));
        assert_eq!(p.aggregate, 0.0);
    }

    #[test]
    fn empty_dataset_rejected() {
        let empty: Vec<Tensor<f64>> = Vec::new();
        assert!(matches!(
            sparsity_profile(&model(1.0), &empty),
            Err(Error::InvalidArgument(_))
        ));
    }
}
