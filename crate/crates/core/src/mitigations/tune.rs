//! Selection of the DT-SNN entropy threshold on held-out data.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io::Dataset;
use crate::mitigations::dtsnn::entropy;
use crate::parallel::run_indexed;
use crate::snn::{argmax, run_inference, ExactMvm, NoObserver, SnnModel};

/// `0.05 k ln K` for `k = 1..=19`.
pub fn threshold_grid(num_classes: usize) -> Vec<f64> {
    let ln_k = (num_classes as f64).ln();
    (1..=19).map(|k| 0.05 * k as f64 * ln_k).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TuneOutcome {
    /// 0 when no grid value meets the target (dynamic exit disabled).
    pub threshold: f64,
    /// Set when no grid value was feasible.
    pub infeasible: bool,
    pub static_accuracy: f64,
    /// `(threshold, accuracy, mean timesteps used)` for every grid value.
    pub grid: Vec<(f64, f64, f64)>,
}

/// Largest grid threshold whose validation accuracy is at most
/// `target_drop_pp` percentage points below static-T accuracy.
pub fn tune_dt_threshold(
    model: &SnnModel,
    validation: &Dataset,
    target_drop_pp: f64,
    workers: Option<usize>,
) -> Result<TuneOutcome> {
    if validation.is_empty() {
        return Err(Error::InvalidArgument("validation set is empty".into()));
    }
    if !(target_drop_pp >= 0.0) {
        return Err(Error::InvalidArgument("target accuracy drop must be >= 0".into()));
    }
    let t_max = model.timesteps;
    // Running-mean logits after every timestep; exits can be replayed offline
    // because the decision at t only looks at timesteps <= t.
    let running: Vec<Vec<Vec<f64>>> = run_indexed(validation.len(), workers, |i| {
        let mut per_t = Vec::with_capacity(t_max);
        run_inference(model, &validation.samples[i], &mut ExactMvm, t_max, &mut NoObserver, |_, l| {
            per_t.push(l.to_vec());
            false
        })?;
        Ok(per_t)
    })?;
    let n = validation.len() as f64;
    let labels = &validation.labels;
    let static_correct = running
        .iter()
        .zip(labels)
        .filter(|(r, l)| argmax(r.last().expect("T >= 1")) == **l as usize)
        .count();
    let static_accuracy = static_correct as f64 / n;
    let mut grid = Vec::new();
    for th in threshold_grid(model.num_classes) {
        let mut correct = 0;
        let mut used = 0;
        for (r, l) in running.iter().zip(labels) {
            let exit = r
                .iter()
                .position(|logits| entropy(logits).is_ok_and(|h| h < th))
                .unwrap_or(t_max - 1);
            used += exit + 1;
            correct += (argmax(&r[exit]) == *l as usize) as usize;
        }
        grid.push((th, correct as f64 / n, used as f64 / n));
    }
    let feasible = grid
        .iter()
        .rev()
        .find(|(_, acc, _)| (static_accuracy - acc) * 100.0 <= target_drop_pp + 1e-9);
    let outcome = match feasible {
        Some(&(threshold, _, _)) => TuneOutcome {
            threshold,
            infeasible: false,
            static_accuracy,
            grid,
        },
        None => {
            log::warn!("no entropy threshold meets a {target_drop_pp} pp accuracy budget; dynamic exit disabled");
            TuneOutcome {
                threshold: 0.0,
                infeasible: true,
                static_accuracy,
                grid,
            }
        }
    };
    Ok(outcome)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_is_fixed() {
        let g = threshold_grid(4);
        assert_eq!(g.len(), 19);
        assert!((g[0] - 0.05 * 4f64.ln()).abs() < 1e-15);
        assert!((g[18] - 0.95 * 4f64.ln()).abs() < 1e-15);
        assert_eq!(g, threshold_grid(4));
    }
}
