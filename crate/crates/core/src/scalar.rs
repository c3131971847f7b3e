//! Scalar abstractions.
//!
//! Arithmetic that only needs a field (crossbar conductance encoding, ideal
//! dot products, the DIFF correction, the energy estimate) is written against
//! [`Field`], so it also runs on exact rationals. Everything that needs
//! transcendental functions or ordering against infinity uses [`Real`].

use std::fmt::Debug;

use num_traits::{Float, FromPrimitive, Num, NumAssign, ToPrimitive};

/// A number type closed under `+ - * /`: `f32`, `f64`, or an exact rational.
pub trait Field:
    Num + NumAssign + Copy + PartialOrd + Debug + FromPrimitive + Send + Sync + 'static
{
    fn from_i64_exact(v: i64) -> Self {
        Self::from_i64(v).expect("integer representable in scalar type")
    }

    fn from_usize_exact(v: usize) -> Self {
        Self::from_usize(v).expect("integer representable in scalar type")
    }
}

impl<T> Field for T where
    T: Num + NumAssign + Copy + PartialOrd + Debug + FromPrimitive + Send + Sync + 'static
{
}

/// Floating point scalar: `f32` or `f64`.
pub trait Real: Field + Float + ToPrimitive + Default {
    fn from_f64_lossy(v: f64) -> Self {
        Self::from_f64(v).unwrap_or_else(Self::nan)
    }

    fn as_f64(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }
}

impl Real for f32 {}
impl Real for f64 {}

#[cfg(test)]
mod tests {
    use super::*;
    use num_rational::Ratio;

    fn sum<S: Field>(xs: &[S]) -> S {
        xs.iter().fold(S::zero(), |acc, &x| acc + x)
    }

    #[test]
    fn field_covers_floats_and_rationals() {
        assert_eq!(sum(&[1.0f32, 2.0]), 3.0);
        assert_eq!(sum(&[1.0f64, 2.0]), 3.0);
        let third = Ratio::new(1i128, 3);
        assert_eq!(sum(&[third, third, third]), Ratio::from_integer(1));
        assert_eq!(Ratio::<i128>::from_i64_exact(-4), Ratio::from_integer(-4));
    }

    #[test]
    fn real_roundtrips_through_f64() {
        assert_eq!(f32::from_f64_lossy(0.5).as_f64(), 0.5);
    }
}
