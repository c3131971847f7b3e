//! The FLOPs-based energy estimate used throughout the SNN literature:
//! `E_est = FLOPs * timesteps * (1 - sparsity) * E_AC`.
//!
//! FLOPs are counted as synaptic accumulations (one AC per weight use), not
//! as 2-op MACs, because spike inputs make every multiply a gated add.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Field;
use crate::snn::SnnModel;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlopCount {
    /// Accumulations per layer for one timestep (0 for pooling).
    pub per_layer: Vec<u64>,
    pub total: u64,
}

/// Conv: output elements x kernel area x input channels. FC: inputs x outputs.
pub fn count_flops(model: &SnnModel) -> FlopCount {
    let per_layer: Vec<u64> = model
        .layers
        .iter()
        .map(|l| l.gemm().map_or(0, |g| g.ops()))
        .collect();
    let total = per_layer.iter().sum();
    FlopCount { per_layer, total }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EstimateInputs<S> {
    pub flops: S,
    pub timesteps: u32,
    pub sparsity: S,
    /// Energy of one INT8 accumulation, pJ.
    pub e_ac: S,
}

impl<S: Field> EstimateInputs<S> {
    pub fn validate(&self) -> Result<()> {
        let (zero, one) = (S::zero(), S::one());
        // Written as negated comparisons so NaN fails too.
        if !(self.flops >= zero) {
            return Err(Error::InvalidArgument(format!("flops must be >= 0, got {:?}", self.flops)));
        }
        if !(self.sparsity >= zero && self.sparsity <= one) {
            return Err(Error::InvalidArgument(format!(
                "sparsity must lie in [0, 1], got {:?}",
                self.sparsity
            )));
        }
        if !(self.e_ac >= zero) {
            return Err(Error::InvalidArgument(format!("e_ac must be >= 0, got {:?}", self.e_ac)));
        }
        Ok(())
    }
}

/// Estimated energy in pJ.
pub fn estimate_energy<S: Field>(inputs: &EstimateInputs<S>) -> Result<S> {
    inputs.validate()?;
    let t = S::from_i64_exact(inputs.timesteps as i64);
    Ok(inputs.flops * t * (S::one() - inputs.sparsity) * inputs.e_ac)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::snn::{LayerSpec, QuantizedWeights, WeightStore};
    use crate::tensor::Shape;
    use crate::Exact;

    #[test]
    fn quoted_example() {
        let e: f64 = estimate_energy(&EstimateInputs {
            flops: 1e6,
            timesteps: 4,
            sparsity: 0.9,
            e_ac: 0.03,
        })
        .unwrap();
        assert!((e - 1.2e4).abs() < 1e-8);
    }

    #[test]
    fn exact_in_rationals() {
        let e = estimate_energy(&EstimateInputs {
            flops: Exact::from_integer(1_000_000),
            timesteps: 4,
            sparsity: Exact::new(9, 10),
            e_ac: Exact::new(3, 100),
        })
        .unwrap();
        assert_eq!(e, Exact::from_integer(12_000));
    }

    #[test]
    fn degenerate_and_linear() {
        let base = EstimateInputs {
            flops: 5e5,
            timesteps: 3,
            sparsity: 1.0,
            e_ac: 0.03,
        };
        assert_eq!(estimate_energy(&base).unwrap(), 0.0);
        let half = EstimateInputs { sparsity: 0.5, ..base };
        let doubled = EstimateInputs { timesteps: 6, ..half };
        assert_eq!(estimate_energy(&doubled).unwrap(), 2.0 * estimate_energy(&half).unwrap());
    }

    #[test]
    fn rejects_out_of_range() {
        let bad = EstimateInputs {
            flops: 1.0,
            timesteps: 1,
            sparsity: 1.5,
            e_ac: 0.03,
        };
        assert!(estimate_energy(&bad).is_err());
        assert!(estimate_energy(&EstimateInputs { sparsity: f64::NAN, ..bad }).is_err());
        assert!(estimate_energy(&EstimateInputs { sparsity: 0.5, e_ac: -1.0, ..bad }).is_err());
    }

    #[test]
    fn flop_counting_convention() {
        let fc = LayerSpec::fully_connected(Shape::new(vec![16]), 4);
        assert_eq!(fc.gemm().unwrap().ops(), 64);
        let conv = LayerSpec::conv2d(Shape::new(vec![1, 6, 6]), 1, 3, 1, 0).unwrap();
        assert_eq!(conv.output_shape, Shape::new(vec![1, 4, 4]));
        assert_eq!(conv.gemm().unwrap().ops(), 144);

        let pool = LayerSpec::avgpool(Shape::new(vec![1, 4, 4]), 2).unwrap();
        let head = LayerSpec::fully_connected(Shape::new(vec![1, 2, 2]), 2).with_weights("h", 8);
        let mut weights = WeightStore::new();
        weights.insert("c".into(), QuantizedWeights::new(1, 9, 8, 1.0, vec![0; 9]).unwrap());
        weights.insert("h".into(), QuantizedWeights::new(2, 4, 8, 1.0, vec![0; 8]).unwrap());
        let model = SnnModel {
            layers: vec![conv.with_weights("c", 8), pool, head],
            input_shape: Shape::new(vec![1, 6, 6]),
            timesteps: 1,
            num_classes: 2,
            weights,
        };
        let f = count_flops(&model);
        assert_eq!(f.per_layer, vec![144, 0, 8]);
        assert_eq!(f.total, 152);
    }
}
