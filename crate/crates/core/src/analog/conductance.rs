//! Signed integer weights as unipolar conductances.
//!
//! A weight `q` in `[-qmax, qmax]` is shifted to the code `c = q + qmax`.
//! When a cell holds all weight bits the code maps linearly onto
//! `[g_min, g_max]` with `2*qmax` steps; otherwise the code is split into
//! base-`2^bits_per_cell` digits, one per crossbar slice, each with
//! `2^bits_per_cell - 1` steps. A complemented column stores
//! `g_min + g_max - G`, i.e. digit `L - d`.

use serde::{Deserialize, Serialize};

use crate::analog::config::CrossbarConfig;
use crate::error::{Error, Result};
use crate::snn::qmax_for_bits;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SliceCoding {
    pub weight_bits: u8,
    pub qmax: i32,
    pub slices: usize,
    /// Bits of the code held by each slice (the slice radix is `2^this`).
    pub bits_per_slice: u32,
    /// Highest digit of a slice.
    pub levels: u32,
}

impl SliceCoding {
    pub fn new(weight_bits: u8, bits_per_cell: u32) -> Result<Self> {
        let qmax = qmax_for_bits(weight_bits)?;
        if bits_per_cell == 0 {
            return Err(Error::InvalidConfig("bits_per_cell must be > 0".into()));
        }
        if bits_per_cell >= weight_bits as u32 {
            return Ok(SliceCoding {
                weight_bits,
                qmax,
                slices: 1,
                bits_per_slice: weight_bits as u32,
                levels: 2 * qmax as u32,
            });
        }
        Ok(SliceCoding {
            weight_bits,
            qmax,
            slices: (weight_bits as u32).div_ceil(bits_per_cell) as usize,
            bits_per_slice: bits_per_cell,
            levels: (1 << bits_per_cell) - 1,
        })
    }

    /// Place value of slice `s` (slice 0 holds the least significant digit).
    pub fn radix_weight(&self, s: usize) -> f64 {
        if self.slices == 1 {
            1.0
        } else {
            (1u64 << (self.bits_per_slice as usize * s)) as f64
        }
    }

    pub fn check(&self, q: i32) -> Result<()> {
        if q.abs() > self.qmax {
            return Err(Error::InvalidArgument(format!(
                "weight {q} outside +/-{} for {}-bit weights",
                self.qmax, self.weight_bits
            )));
        }
        Ok(())
    }

    pub fn digit(&self, q: i32, s: usize) -> u32 {
        let c = (q + self.qmax) as u32;
        if self.slices == 1 {
            c
        } else {
            (c >> (self.bits_per_slice as usize * s)) & self.levels
        }
    }

    pub fn code_from_digits(&self, digits: &[u32]) -> i32 {
        let c: u32 = if self.slices == 1 {
            digits[0]
        } else {
            digits
                .iter()
                .enumerate()
                .map(|(s, d)| d << (self.bits_per_slice as usize * s))
                .sum()
        };
        c as i32 - self.qmax
    }

    pub fn digit_to_g(&self, d: u32, complement: bool, config: &CrossbarConfig) -> f64 {
        let d = if complement { self.levels - d } else { d };
        config.g_min + d as f64 / self.levels as f64 * (config.g_max - config.g_min)
    }

    /// Nearest digit for a conductance, undoing complement encoding.
    pub fn g_to_digit(&self, g: f64, complement: bool, config: &CrossbarConfig) -> u32 {
        let raw = ((g - config.g_min) / (config.g_max - config.g_min) * self.levels as f64)
            .round()
            .clamp(0.0, self.levels as f64) as u32;
        if complement {
            self.levels - raw
        } else {
            raw
        }
    }

    /// The digit is stored below the conductance midpoint (high resistance).
    pub fn is_high_resistance(&self, d: u32, complement: bool) -> bool {
        let d = if complement { self.levels - d } else { d };
        2 * d < self.levels
    }
}

/// One slice of a weight matrix on a crossbar, row-major `rows x cols`
/// where rows are inputs and columns are outputs.
#[derive(Debug, Clone, PartialEq)]
pub struct ConductanceMatrix {
    pub rows: usize,
    pub cols: usize,
    pub g: Vec<f64>,
    pub complement: Vec<bool>,
    /// Conductance of a zero weight; the DIFF offset reference.
    pub offset_g: f64,
}

/// Maps an integer matrix (`q[r][c]`, inputs by outputs) to one conductance
/// matrix per slice. `complement` flags columns (one flag per slice and
/// column, slice-major); `None` encodes every column directly.
pub fn weight_to_conductance(
    q: &[i32],
    rows: usize,
    cols: usize,
    coding: &SliceCoding,
    config: &CrossbarConfig,
    complement: Option<&[bool]>,
) -> Result<Vec<ConductanceMatrix>> {
    if q.len() != rows * cols {
        return Err(Error::Contract(format!("{} weights for a {rows}x{cols} matrix", q.len())));
    }
    for &v in q {
        coding.check(v)?;
    }
    let flags = match complement {
        Some(f) if f.len() == coding.slices * cols => f.to_vec(),
        Some(f) => {
            return Err(Error::Contract(format!(
                "{} complement flags for {} slices x {cols} columns",
                f.len(),
                coding.slices
            )))
        }
        None => vec![false; coding.slices * cols],
    };
    let mid = 0.5 * (config.g_min + config.g_max);
    Ok((0..coding.slices)
        .map(|s| {
            let comp = flags[s * cols..(s + 1) * cols].to_vec();
            let g = (0..rows * cols)
                .map(|k| coding.digit_to_g(coding.digit(q[k], s), comp[k % cols], config))
                .collect();
            ConductanceMatrix {
                rows,
                cols,
                g,
                complement: comp,
                offset_g: mid,
            }
        })
        .collect())
}

/// Inverse of [`weight_to_conductance`].
pub fn conductance_to_weight(
    slices: &[ConductanceMatrix],
    coding: &SliceCoding,
    config: &CrossbarConfig,
) -> Vec<i32> {
    let (rows, cols) = (slices[0].rows, slices[0].cols);
    (0..rows * cols)
        .map(|k| {
            let digits: Vec<u32> = slices
                .iter()
                .map(|m| coding.g_to_digit(m.g[k], m.complement[k % cols], config))
                .collect();
            coding.code_from_digits(&digits)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn cfg(bits_per_cell: u32) -> CrossbarConfig {
        CrossbarConfig {
            bits_per_cell,
            ..CrossbarConfig::default()
        }
    }

    #[test]
    fn single_slice_endpoints_and_midpoint() {
        let c = cfg(8);
        let coding = SliceCoding::new(8, 8).unwrap();
        assert_eq!((coding.slices, coding.levels), (1, 254));
        let m = weight_to_conductance(&[-127, 0, 127], 3, 1, &coding, &c, None).unwrap();
        assert_eq!(m.len(), 1);
        assert_eq!(m[0].g[0], c.g_min);
        assert!((m[0].g[1] - 0.5 * (c.g_min + c.g_max)).abs() < 1e-18);
        assert!((m[0].g[2] - c.g_max).abs() < 1e-18);
    }

    #[test]
    fn bit_slicing_counts() {
        let coding = SliceCoding::new(8, 4).unwrap();
        assert_eq!((coding.slices, coding.levels), (2, 15));
        assert_eq!(coding.digit(127, 1), 15);
        assert_eq!(coding.digit(127, 0), 14);
        assert_eq!(SliceCoding::new(4, 2).unwrap().slices, 2);
        assert!(coding.check(128).is_err());
    }

    #[test]
    fn complement_flips_extreme_column() {
        let c = cfg(8);
        let coding = SliceCoding::new(8, 8).unwrap();
        let m = weight_to_conductance(&[127; 4], 4, 1, &coding, &c, Some(&[true])).unwrap();
        assert!(m[0].g.iter().all(|g| (*g - c.g_min).abs() < 1e-18));
        assert_eq!(conductance_to_weight(&m, &coding, &c), vec![127; 4]);
    }

    proptest! {
        #[test]
        fn decode_inverts_encode(
            q in proptest::collection::vec(-127i32..=127, 16),
            flags in proptest::collection::vec(any::<bool>(), 8),
            bpc in 1u32..=8,
        ) {
            let c = cfg(bpc);
            let coding = SliceCoding::new(8, bpc).unwrap();
            let f = &flags[..coding.slices.min(2) * 4];
            let comp = (coding.slices <= 2).then_some(f);
            let m = weight_to_conductance(&q, 4, 4, &coding, &c, comp).unwrap();
            prop_assert_eq!(conductance_to_weight(&m, &coding, &c), q);
        }
    }
}
