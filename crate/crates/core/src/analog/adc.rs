//! Column-current digitization.

use crate::error::{Error, Result};
use crate::scalar::Real;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdcRange<S> {
    pub min: S,
    pub max: S,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AdcCode {
    pub code: u32,
    /// The input fell outside the range and was clipped.
    pub saturated: bool,
}

impl<S: Real> AdcRange<S> {
    pub fn new(min: S, max: S) -> Result<Self> {
        if !(max > min) {
            return Err(Error::InvalidArgument(format!(
                "ADC range needs max > min, got [{min:?}, {max:?}]"
            )));
        }
        Ok(AdcRange { min, max })
    }

    pub fn lsb(&self, bits: u32) -> S {
        (self.max - self.min) / S::from_f64_lossy((1u64 << bits) as f64)
    }
}

/// Uniform mid-rise quantizer with `2^bits` codes.
pub fn adc_quantize<S: Real>(values: &[S], bits: u32, range: AdcRange<S>) -> Vec<AdcCode> {
    let top = (1u64 << bits) - 1;
    let lsb = range.lsb(bits);
    values
        .iter()
        .map(|&v| {
            let saturated = v < range.min || v > range.max;
            let raw = ((v - range.min) / lsb).floor().as_f64();
            let code = raw.clamp(0.0, top as f64) as u32;
            AdcCode { code, saturated }
        })
        .collect()
}

/// Center of a code's bin.
pub fn adc_dequantize<S: Real>(code: u32, bits: u32, range: AdcRange<S>) -> S {
    range.min + (S::from_f64_lossy(code as f64) + S::from_f64_lossy(0.5)) * range.lsb(bits)
}
