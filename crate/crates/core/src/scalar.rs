//! Scalar abstraction for the algebraic core.
//!
//! The geometry, polynomial, root-finding, two-body and coefficient modules are
//! written against [`Real`] so they can be instantiated at `f32`, `f64` or the
//! double-double `TwoFloat`. The tolerances quoted throughout the crate assume
//! `f64`.

use std::fmt::{Debug, Display, LowerExp};

use num_traits::{Float, FloatConst, FromPrimitive, NumAssign, ToPrimitive};

/// Floating point type usable by the generic modules.
pub trait Real:
    Float
    + FloatConst
    + NumAssign
    + FromPrimitive
    + ToPrimitive
    + Default
    + Debug
    + Display
    + LowerExp
    + Send
    + Sync
    + 'static
{
    /// Converts an `f64` literal into `Self`.
    #[inline]
    fn of(x: f64) -> Self {
        Self::from_f64(x).expect("f64 literal representable")
    }

    /// Lossy conversion back to `f64`, used at I/O boundaries.
    #[inline]
    fn to_f64_lossy(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }

    /// Wraps an angle into `(-π, π]`.
    fn wrap_pi(self) -> Self {
        let two_pi = Self::TAU();
        let mut x = self % two_pi;
        if x > Self::PI() {
            x -= two_pi;
        } else if x <= -Self::PI() {
            x += two_pi;
        }
        x
    }

    /// Wraps an angle into `[0, 2π)`.
    fn wrap_two_pi(self) -> Self {
        let two_pi = Self::TAU();
        let mut x = self % two_pi;
        if x < Self::zero() {
            x += two_pi;
        }
        if x >= two_pi {
            x -= two_pi;
        }
        x
    }
}

impl Real for f32 {}
impl Real for f64 {}

// twofloat inherits the num-traits defaults for `from_f64`/`to_f64`, which
// round-trip through `i64`.
impl Real for twofloat::TwoFloat {
    #[inline]
    fn of(x: f64) -> Self {
        twofloat::TwoFloat::from(x)
    }

    #[inline]
    fn to_f64_lossy(self) -> f64 {
        self.hi() + self.lo()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn twofloat_conversions_keep_fractions() {
        use twofloat::TwoFloat;
        let x = <TwoFloat as Real>::of(0.123456789);
        assert_eq!(x.to_f64_lossy(), 0.123456789);
        // (1/3)·3 rounds to 1 in f64 but is kept exactly in double-double
        let third = <TwoFloat as Real>::of(1.0 / 3.0);
        let r = third * <TwoFloat as Real>::of(3.0) - <TwoFloat as Real>::of(1.0);
        assert_eq!((1.0f64 / 3.0) * 3.0 - 1.0, 0.0);
        assert_eq!(r.to_f64_lossy(), -(2.0f64.powi(-54)));
    }

    #[test]
    fn wrapping() {
        let x = (0.1f64 - std::f64::consts::TAU + 0.1).wrap_pi();
        assert!((x - 0.2).abs() < 1e-15);
        assert_eq!(std::f64::consts::PI.wrap_pi(), std::f64::consts::PI);
        assert!(((-std::f64::consts::PI).wrap_pi() - std::f64::consts::PI).abs() < 1e-15);
        assert!(((-0.5f64).wrap_two_pi() - (std::f64::consts::TAU - 0.5)).abs() < 1e-15);
        assert_eq!(0.0f32.wrap_two_pi(), 0.0);
    }
}
