//! Leaky integrate-and-fire dynamics with hard reset.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Real;
use crate::tensor::{SpikeTensor, Tensor};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ResetMode {
    /// Fired neurons return to exactly zero.
    #[default]
    Zero,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NeuronParams {
    /// Multiplicative leak applied to the carried potential, in `[0, 1]`.
    pub leak: f64,
    /// Firing threshold; a neuron fires when its potential is strictly above it.
    pub threshold: f64,
    #[serde(default)]
    pub reset_mode: ResetMode,
}

impl NeuronParams {
    pub fn new(leak: f64, threshold: f64) -> Result<Self> {
        let p = NeuronParams {
            leak,
            threshold,
            reset_mode: ResetMode::Zero,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.leak) {
            return Err(Error::InvalidArgument(format!(
                "leak must lie in [0, 1], got {}",
                self.leak
            )));
        }
        if self.threshold.is_nan() || self.threshold <= 0.0 {
            return Err(Error::InvalidArgument(format!(
                "threshold must be > 0, got {}",
                self.threshold
            )));
        }
        Ok(())
    }
}

/// One membrane update: `v = leak * u + input`, spike where `v > threshold`,
/// and the potential of every fired neuron is reset to zero.
pub fn lif_step<S: Real>(
    u: &Tensor<S>,
    weighted_input: &Tensor<S>,
    params: &NeuronParams,
) -> Result<(Tensor<S>, SpikeTensor)> {
    if u.shape() != weighted_input.shape() {
        return Err(Error::Contract(format!(
            "membrane shape {} does not match input shape {}",
            u.shape(),
            weighted_input.shape()
        )));
    }
    let leak = S::from_f64_lossy(params.leak);
    let theta = S::from_f64_lossy(params.threshold);
    let mut spikes = SpikeTensor::zeros(u.shape().clone());
    let mut next = Vec::with_capacity(u.len());
    for (i, (&ui, &xi)) in u.data().iter().zip(weighted_input.data()).enumerate() {
        let v = leak * ui + xi;
        if v > theta {
            spikes.set(i, true);
            next.push(S::zero());
        } else {
            next.push(v);
        }
    }
    Ok((Tensor::from_vec(u.shape().clone(), next)?, spikes))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::Shape;
    use proptest::prelude::*;

    fn scalar(v: f64) -> Tensor<f64> {
        Tensor::from_vec(Shape::new(vec![1]), vec![v]).unwrap()
    }

    #[test]
    fn integrates_below_threshold() {
        let p = NeuronParams::new(1.0, 1.0).unwrap();
        let (u, s) = lif_step(&scalar(0.0), &scalar(0.5), &p).unwrap();
        assert_eq!(u.data(), &[0.5]);
        assert!(!s.get(0));
    }

    #[test]
    fn fires_and_resets() {
        let p = NeuronParams::new(1.0, 1.0).unwrap();
        let (u, s) = lif_step(&scalar(0.8), &scalar(0.5), &p).unwrap();
        assert_eq!(u.data(), &[0.0]);
        assert!(s.get(0));
    }

    #[test]
    fn leaks_carried_potential() {
        let p = NeuronParams::new(0.5, 1.0).unwrap();
        let (u, s) = lif_step(&scalar(0.8), &scalar(0.1), &p).unwrap();
        assert!((u.data()[0] - 0.5).abs() < 1e-15);
        assert!(!s.get(0));
    }

    #[test]
    fn equality_with_threshold_does_not_fire() {
        let p = NeuronParams::new(1.0, 1.0).unwrap();
        let (u, s) = lif_step(&scalar(0.5), &scalar(0.5), &p).unwrap();
        assert_eq!(u.data(), &[1.0]);
        assert!(!s.get(0));
    }

    #[test]
    fn works_in_single_precision() {
        let p = NeuronParams::new(1.0, 1.0).unwrap();
        let u = Tensor::from_vec(Shape::new(vec![2]), vec![0.8f32, 0.0]).unwrap();
        let x = Tensor::from_vec(Shape::new(vec![2]), vec![0.5f32, 0.5]).unwrap();
        let (next, s) = lif_step(&u, &x, &p).unwrap();
        assert_eq!(next.data(), &[0.0, 0.5]);
        assert_eq!(s.count_ones(), 1);
    }

    #[test]
    fn shape_mismatch_is_contract_error() {
        let p = NeuronParams::new(1.0, 1.0).unwrap();
        let x = Tensor::<f64>::zeros(Shape::new(vec![2]));
        let err = lif_step(&scalar(0.0), &x, &p).unwrap_err();
        assert!(matches!(err, Error::Contract(_)));
    }

    #[test]
    fn rejects_bad_params() {
        assert!(NeuronParams::new(1.5, 1.0).is_err());
        assert!(NeuronParams::new(-0.1, 1.0).is_err());
        assert!(NeuronParams::new(0.5, 0.0).is_err());
        assert!(NeuronParams::new(0.5, f64::INFINITY).is_ok());
    }

    proptest! {
        #[test]
        fn hard_reset_rule(
            leak in 0.0f64..=1.0,
            theta in 0.01f64..5.0,
            pairs in proptest::collection::vec((-5.0f64..5.0, -5.0f64..5.0), 1..64),
        ) {
            let p = NeuronParams::new(leak, theta).unwrap();
            let shape = Shape::new(vec![pairs.len()]);
            let u = Tensor::from_vec(shape.clone(), pairs.iter().map(|p| p.0).collect()).unwrap();
            let x = Tensor::from_vec(shape, pairs.iter().map(|p| p.1).collect()).unwrap();
            let (next, spikes) = lif_step(&u, &x, &p).unwrap();
            for (i, (ui, xi)) in pairs.iter().enumerate() {
                let v = leak * ui + xi;
                prop_assert_eq!(spikes.get(i), v > theta);
                if spikes.get(i) {
                    prop_assert_eq!(next.data()[i], 0.0);
                } else {
                    prop_assert_eq!(next.data()[i], v);
                }
            }
        }
    }
}
