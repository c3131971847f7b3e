//! Dynamic-timestep inference: stop as soon as the running prediction is
//! confident enough, measured by the entropy of its softmax.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Real;
use crate::snn::{run_inference, Inference, MvmProvider, NoObserver, SnnModel};
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DtSnnPolicy {
    /// Exit when the entropy (nats) of the running-mean prediction drops
    /// strictly below this value.
    pub entropy_threshold: f64,
    pub max_timesteps: usize,
}

impl DtSnnPolicy {
    pub fn new(entropy_threshold: f64, max_timesteps: usize) -> Result<Self> {
        let p = DtSnnPolicy {
            entropy_threshold,
            max_timesteps,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.entropy_threshold >= 0.0) {
            return Err(Error::InvalidArgument(format!(
                "entropy threshold must be >= 0, got {}",
                self.entropy_threshold
            )));
        }
        if self.max_timesteps < 1 {
            return Err(Error::InvalidArgument("max_timesteps must be >= 1".into()));
        }
        Ok(())
    }

    /// A zero threshold can never be undercut, so no exit logic (and no
    /// entropy hardware) is needed.
    pub fn is_active(&self) -> bool {
        self.entropy_threshold > 0.0
    }

    pub fn should_exit<S: Real>(&self, running_logits: &[S]) -> bool {
        self.is_active()
            && entropy(running_logits).is_ok_and(|h| h < self.entropy_threshold)
    }
}

/// Shannon entropy (nats) of `softmax(logits)`.
pub fn entropy<S: Real>(logits: &[S]) -> Result<f64> {
    if logits.len() < 2 {
        return Err(Error::InvalidArgument(format!(
            "entropy needs at least 2 classes, got {}",
            logits.len()
        )));
    }
    let z: Vec<f64> = logits.iter().map(|v| v.as_f64()).collect();
    if z.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidArgument("non-finite logits".into()));
    }
    let max = z.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let shifted: Vec<f64> = z.iter().map(|v| v - max).collect();
    let norm: f64 = shifted.iter().map(|v| v.exp()).sum();
    let log_norm = norm.ln();
    // H = log Z - sum p_i * z_i with z shifted so the max is 0.
    let h = log_norm - shifted.iter().map(|v| (v - log_norm).exp() * v).sum::<f64>();
    Ok(h.max(0.0))
}

/// Runs at most `policy.max_timesteps` steps, exiting at the first step whose
/// running-mean logits have entropy below the threshold.
pub fn dt_snn_infer<S: Real, P: MvmProvider<S>>(
    model: &SnnModel,
    input: &Tensor<S>,
    policy: &DtSnnPolicy,
    mvm: &mut P,
) -> Result<Inference<S>> {
    policy.validate()?;
    run_inference(model, input, mvm, policy.max_timesteps, &mut NoObserver, |_, running| {
        policy.should_exit(running)
    })
}
