//! Digital signed-weight correction for single-crossbar encoding.
//!
//! Column sums come off the crossbar in shifted code units; subtracting
//! `qmax` times the input sum recovers the signed dot product, so no second
//! (negative-weight) crossbar is needed.

use serde::{Deserialize, Serialize};

use crate::analog::conductance::SliceCoding;
use crate::error::{Error, Result};
use crate::scalar::Real;

/// Per-layer metadata the correction needs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiffMeta {
    pub coding: SliceCoding,
    pub cols: usize,
    /// Complement flag per slice and column, slice-major.
    pub complement: Vec<bool>,
}

/// Digit sum `sum_i a_i d_ij` implied by a sensed column current, given the
/// drive levels' sum `sum_i a_i` (voltages are `a_i * v_read`).
pub fn decode_column<S: Real>(
    current: S,
    drive_sum: S,
    v_read: S,
    g_min: S,
    g_max: S,
    levels: u32,
) -> S {
    (current / v_read - g_min * drive_sum) * S::from_f64_lossy(levels as f64) / (g_max - g_min)
}

/// `digit_sums[s][j]` are per-slice digit sums; returns `sum_i a_i q_ij`.
pub fn diff_correct<S: Real>(
    digit_sums: &[Vec<S>],
    drive_sum: S,
    meta: &DiffMeta,
) -> Result<Vec<S>> {
    let c = &meta.coding;
    if digit_sums.len() != c.slices
        || digit_sums.iter().any(|d| d.len() != meta.cols)
        || meta.complement.len() != c.slices * meta.cols
    {
        return Err(Error::Contract(format!(
            "DIFF metadata for {} slices x {} columns does not match the column sums",
            c.slices, meta.cols
        )));
    }
    let levels = S::from_f64_lossy(c.levels as f64);
    let offset = S::from_f64_lossy(c.qmax as f64) * drive_sum;
    Ok((0..meta.cols)
        .map(|j| {
            let mut code = S::zero();
            for (s, sums) in digit_sums.iter().enumerate() {
                let d = if meta.complement[s * meta.cols + j] {
                    levels * drive_sum - sums[j]
                } else {
                    sums[j]
                };
                code += S::from_f64_lossy(c.radix_weight(s)) * d;
            }
            code - offset
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_input_gives_zero() {
        let meta = DiffMeta {
            coding: SliceCoding::new(8, 4).unwrap(),
            cols: 2,
            complement: vec![false, true, false, true],
        };
        let out = diff_correct(&[vec![0.0, 0.0], vec![0.0, 0.0]], 0.0, &meta).unwrap();
        assert_eq!(out, vec![0.0, 0.0]);
    }

    #[test]
    fn missing_metadata_is_a_contract_error() {
        let meta = DiffMeta {
            coding: SliceCoding::new(8, 4).unwrap(),
            cols: 2,
            complement: vec![false; 2],
        };
        assert!(matches!(
            diff_correct(&[vec![0.0, 0.0], vec![0.0, 0.0]], 1.0, &meta),
            Err(Error::Contract(_))
        ));
    }

    #[test]
    fn decode_inverts_ideal_current() {
        // Two active rows with digits 3 and 10 out of 15.
        let (gmin, gmax, v) = (1e-5, 1e-4, 0.2);
        let g = |d: f64| gmin + d / 15.0 * (gmax - gmin);
        let i = v * (g(3.0) + g(10.0));
        assert!((decode_column(i, 2.0, v, gmin, gmax, 15) - 13.0).abs() < 1e-9);
    }
}
