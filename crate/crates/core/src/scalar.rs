//! Scalar abstraction shared by every numerical routine in the crate.
//!
//! The estimation core is written once against [`Real`] and instantiated for
//! `f32` and `f64`. Tolerances that the algorithms quote for double precision
//! are floored at a small multiple of the scalar's machine epsilon so that the
//! same code stays meaningful in single precision.

use nalgebra::RealField;
use num_traits::{FromPrimitive, ToPrimitive};

/// Floating-point scalar usable by the estimators.
pub trait Real: RealField + Copy + FromPrimitive + ToPrimitive + Send + Sync + 'static {
    /// Machine epsilon of the concrete type.
    const EPS: Self;

    /// Lossless-enough conversion of an `f64` literal.
    #[inline]
    fn lit(x: f64) -> Self {
        <Self as FromPrimitive>::from_f64(x).expect("f64 literal representable")
    }

    #[inline]
    fn to_f64_lossy(self) -> f64 {
        <Self as ToPrimitive>::to_f64(&self).unwrap_or(f64::NAN)
    }

    #[inline]
    fn from_usize_lossy(n: usize) -> Self {
        <Self as FromPrimitive>::from_usize(n).expect("usize representable")
    }

    /// `max(x, 64·EPS)`: a relative tolerance that never drops below what the
    /// type can resolve.
    #[inline]
    fn tol(x: f64) -> Self {
        let floor = Self::EPS * Self::lit(64.0);
        let x = Self::lit(x);
        if x > floor {
            x
        } else {
            floor
        }
    }
}

impl Real for f32 {
    const EPS: Self = f32::EPSILON;
}

impl Real for f64 {
    const EPS: Self = f64::EPSILON;
}
