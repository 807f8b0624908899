//! Floating-point abstraction shared by every estimator in the crate.

use std::fmt::{Debug, Display, LowerExp};
use std::iter::Sum;
use std::ops::{AddAssign, DivAssign, MulAssign, SubAssign};

use num_traits::{Float, FloatConst, FromPrimitive, ToPrimitive};

/// Bundle of bounds needed by the numerical routines (implemented for `f32` and `f64`).
pub trait Scalar:
    Float
    + FloatConst
    + FromPrimitive
    + ToPrimitive
    + AddAssign
    + SubAssign
    + MulAssign
    + DivAssign
    + Sum
    + Debug
    + Display
    + LowerExp
    + Default
    + Send
    + Sync
    + 'static
{
    /// Absolute tolerance used when checking that a point lies on its manifold.
    ///
    /// `1e-9` in double precision; single precision cannot resolve that, so it
    /// falls back to a few hundred ulps.
    fn on_manifold_tolerance() -> Self {
        let eps = Self::epsilon() * Self::cst(256.0);
        Self::cst(1e-9).max(eps)
    }

    /// Lossy conversion from an `f64` literal.
    #[inline]
    fn cst(value: f64) -> Self {
        Self::from_f64(value).expect("f64 literal representable in scalar type")
    }

    #[inline]
    fn to_f64_lossy(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }
}

impl<T> Scalar for T where
    T: Float
        + FloatConst
        + FromPrimitive
        + ToPrimitive
        + AddAssign
        + SubAssign
        + MulAssign
        + DivAssign
        + Sum
        + Debug
        + Display
        + LowerExp
        + Default
        + Send
        + Sync
        + 'static
{
}
