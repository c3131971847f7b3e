//! Dense real tensors and bit-packed spike tensors.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Real;

/// Row-major tensor dimensions, outermost first (`[C, H, W]` for feature maps).
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Shape(pub Vec<usize>);

impl Shape {
    pub fn new(dims: impl Into<Vec<usize>>) -> Self {
        Shape(dims.into())
    }

    pub fn numel(&self) -> usize {
        self.0.iter().product()
    }

    pub fn dims(&self) -> &[usize] {
        &self.0
    }

    pub fn rank(&self) -> usize {
        self.0.len()
    }

    /// Leading (channel) dimension; a flat vector has one channel per element.
    pub fn channels(&self) -> usize {
        match self.0.len() {
            0 => 1,
            1 => self.0[0],
            _ => self.0[0],
        }
    }

    /// Elements per channel.
    pub fn spatial(&self) -> usize {
        match self.0.len() {
            0 | 1 => 1,
            _ => self.0[1..].iter().product(),
        }
    }
}

impl std::fmt::Display for Shape {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let parts: Vec<String> = self.0.iter().map(|d| d.to_string()).collect();
        write!(f, "[{}]", parts.join("x"))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Tensor<S> {
    shape: Shape,
    data: Vec<S>,
}

impl<S: Real> Tensor<S> {
    pub fn zeros(shape: Shape) -> Self {
        let n = shape.numel();
        Tensor {
            shape,
            data: vec![S::zero(); n],
        }
    }

    pub fn from_vec(shape: Shape, data: Vec<S>) -> Result<Self> {
        if shape.numel() != data.len() {
            return Err(Error::Contract(format!(
                "tensor shape {shape} needs {} elements, got {}",
                shape.numel(),
                data.len()
            )));
        }
        Ok(Tensor { shape, data })
    }

    pub fn shape(&self) -> &Shape {
        &self.shape
    }

    pub fn data(&self) -> &[S] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [S] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<S> {
        self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn count_nonzero(&self) -> usize {
        self.data.iter().filter(|v| !v.is_zero()).count()
    }

    /// Fraction of exactly-zero elements.
    pub fn sparsity(&self) -> f64 {
        if self.data.is_empty() {
            return 1.0;
        }
        1.0 - self.count_nonzero() as f64 / self.data.len() as f64
    }

    pub fn reshaped(mut self, shape: Shape) -> Result<Self> {
        if shape.numel() != self.data.len() {
            return Err(Error::Contract(format!(
                "cannot reshape {} into {shape}",
                self.shape
            )));
        }
        self.shape = shape;
        Ok(self)
    }

    pub fn map<T: Real>(&self, f: impl Fn(S) -> T) -> Tensor<T> {
        Tensor {
            shape: self.shape.clone(),
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }
}

/// Binary activation tensor, one bit per element, LSB-first within each byte.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct SpikeTensor {
    shape: Shape,
    bits: Vec<u8>,
}

impl SpikeTensor {
    pub fn zeros(shape: Shape) -> Self {
        let bytes = shape.numel().div_ceil(8);
        SpikeTensor {
            shape,
            bits: vec![0; bytes],
        }
    }

    pub fn from_bools(shape: Shape, values: &[bool]) -> Result<Self> {
        if shape.numel() != values.len() {
            return Err(Error::Contract(format!(
                "spike shape {shape} needs {} elements, got {}",
                shape.numel(),
                values.len()
            )));
        }
        let mut out = SpikeTensor::zeros(shape);
        for (i, &v) in values.iter().enumerate() {
            if v {
                out.set(i, true);
            }
        }
        Ok(out)
    }

    pub fn from_packed(shape: Shape, bits: Vec<u8>) -> Result<Self> {
        let n = shape.numel();
        if bits.len() != n.div_ceil(8) {
            return Err(Error::Contract(format!(
                "spike payload for {shape} must be {} bytes, got {}",
                n.div_ceil(8),
                bits.len()
            )));
        }
        let mut out = SpikeTensor { shape, bits };
        // Padding bits past the last element are kept clear so equality and
        // popcounts stay structural.
        if n % 8 != 0 {
            let last = out.bits.len() - 1;
            out.bits[last] &= (1u8 << (n % 8)) - 1;
        }
        Ok(out)
    }

    pub fn shape(&self) -> &Shape {
        &self.shape
    }

    pub fn len(&self) -> usize {
        self.shape.numel()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn payload(&self) -> &[u8] {
        &self.bits
    }

    pub fn get(&self, i: usize) -> bool {
        assert!(i < self.len(), "spike index {i} out of range");
        self.bits[i / 8] >> (i % 8) & 1 == 1
    }

    pub fn set(&mut self, i: usize, value: bool) {
        assert!(i < self.len(), "spike index {i} out of range");
        let mask = 1u8 << (i % 8);
        if value {
            self.bits[i / 8] |= mask;
        } else {
            self.bits[i / 8] &= !mask;
        }
    }

    pub fn count_ones(&self) -> usize {
        self.bits.iter().map(|b| b.count_ones() as usize).sum()
    }

    /// Fraction of zero bits.
    pub fn sparsity(&self) -> f64 {
        if self.is_empty() {
            return 1.0;
        }
        1.0 - self.count_ones() as f64 / self.len() as f64
    }

    pub fn iter(&self) -> impl Iterator<Item = bool> + '_ {
        (0..self.len()).map(move |i| self.get(i))
    }

    pub fn to_tensor<S: Real>(&self) -> Tensor<S> {
        let data = self
            .iter()
            .map(|b| if b { S::one() } else { S::zero() })
            .collect();
        Tensor {
            shape: self.shape.clone(),
            data,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn payload_is_ceil_of_bits() {
        for n in [0usize, 1, 7, 8, 9, 17] {
            let s = SpikeTensor::zeros(Shape::new(vec![n]));
            assert_eq!(s.payload().len(), n.div_ceil(8));
        }
    }

    #[test]
    fn packed_padding_is_cleared() {
        let s = SpikeTensor::from_packed(Shape::new(vec![3]), vec![0xff]).unwrap();
        assert_eq!(s.count_ones(), 3);
        assert_eq!(s.payload(), &[0b111]);
        assert!(SpikeTensor::from_packed(Shape::new(vec![9]), vec![0]).is_err());
    }

    #[test]
    fn tensor_shape_checked() {
        assert!(Tensor::<f64>::from_vec(Shape::new(vec![2, 2]), vec![0.0; 3]).is_err());
    }

    proptest! {
        #[test]
        fn bools_roundtrip_and_sparsity(values in proptest::collection::vec(any::<bool>(), 1..200)) {
            let shape = Shape::new(vec![values.len()]);
            let s = SpikeTensor::from_bools(shape, &values).unwrap();
            let back: Vec<bool> = s.iter().collect();
            prop_assert_eq!(&back, &values);
            let zeros = values.iter().filter(|v| !**v).count();
            prop_assert!((s.sparsity() - zeros as f64 / values.len() as f64).abs() < 1e-12);
            prop_assert!((0.0..=1.0).contains(&s.sparsity()));
        }
    }
}
