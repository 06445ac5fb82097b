//! Scalar abstraction shared by every numerical routine in the crate.

use std::fmt;

use nalgebra::RealField;
use num_traits::{FromPrimitive, ToPrimitive};

/// Real floating-point scalar usable by the clustering pipeline.
///
/// Implemented for `f32` and `f64`. Tolerances that depend on the working
/// precision live here so the algorithms stay precision-agnostic.
pub trait Real:
    RealField + Copy + FromPrimitive + ToPrimitive + fmt::Display + fmt::Debug + Send + Sync + 'static
{
    /// Maximum entrywise deviation of `UᵀU` from the identity for a basis to
    /// count as orthonormal.
    const ORTHO_TOL: f64;

    /// Converts an `f64` literal into this scalar.
    #[inline]
    fn lit(x: f64) -> Self {
        <Self as FromPrimitive>::from_f64(x).expect("f64 is representable")
    }

    /// Converts to `f64` (lossless for `f32` and `f64`).
    #[inline]
    fn as_f64(self) -> f64 {
        <Self as ToPrimitive>::to_f64(&self).unwrap_or(f64::NAN)
    }

    #[inline]
    fn finite(self) -> bool {
        self.as_f64().is_finite()
    }
}

impl Real for f64 {
    const ORTHO_TOL: f64 = 1e-9;
}

impl Real for f32 {
    const ORTHO_TOL: f64 = 1e-4;
}
