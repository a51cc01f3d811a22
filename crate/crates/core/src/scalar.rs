//! Scalar abstraction shared by the numerical modules.

use std::fmt::{Debug, Display};
use std::iter::Sum;
use std::ops::{AddAssign, DivAssign, MulAssign, SubAssign};

use ndarray::{LinalgScalar, ScalarOperand};
use num_traits::{Float, FromPrimitive, ToPrimitive};

/// Floating point type usable by the network, PCA and dynamics code.
///
/// Implemented for `f32` (training, export) and `f64` (oracles, gradient
/// checks, RL). Matrix products go through `ndarray`, which dispatches to
/// `matrixmultiply` for both.
pub trait Scalar:
    Float
    + FromPrimitive
    + ToPrimitive
    + LinalgScalar
    + ScalarOperand
    + AddAssign
    + SubAssign
    + MulAssign
    + DivAssign
    + Sum
    + Default
    + Debug
    + Display
    + Send
    + Sync
    + 'static
{
    /// Lossy conversion from `f64`.
    #[inline]
    fn of(x: f64) -> Self {
        Self::from_f64(x).expect("f64 is representable")
    }

    #[inline]
    fn f64(self) -> f64 {
        self.to_f64().expect("scalar converts to f64")
    }

    /// Short name used in file headers.
    fn dtype() -> &'static str;
}

impl Scalar for f32 {
    fn dtype() -> &'static str {
        "f32"
    }
}

impl Scalar for f64 {
    fn dtype() -> &'static str {
        "f64"
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn conversions_round_trip() {
        assert_eq!(<f32 as Scalar>::of(0.5).f64(), 0.5);
        assert_eq!(<f64 as Scalar>::of(1e-300), 1e-300);
        assert_eq!(f32::dtype(), "f32");
    }
}
