//! Scalar abstraction shared by the numeric kernels.

use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FloatConst, FromPrimitive, ToPrimitive};

/// Floating point type usable by the safety kernels: `f32` or `f64`.
///
/// Accuracy targets quoted throughout the crate (1e-10 for the normal CDF,
/// 1e-9 for condition checks) apply to `f64`.
pub trait Real:
    Float + FloatConst + FromPrimitive + ToPrimitive + Debug + Display + Default + Sum + Send + Sync + 'static
{
    /// Absolute slack used when re-verifying a constructed input against its
    /// defining inequality.
    fn check_tolerance() -> Self;

    /// Convert an `f64` literal. Never fails for finite input.
    #[inline]
    fn lit(v: f64) -> Self {
        Self::from_f64(v).expect("f64 literal representable")
    }

    #[inline]
    fn from_usize_lossy(v: usize) -> Self {
        Self::from_usize(v).expect("usize representable")
    }

    #[inline]
    fn to_f64_lossy(self) -> f64 {
        self.to_f64().expect("real converts to f64")
    }
}

impl Real for f32 {
    fn check_tolerance() -> Self {
        1e-4
    }
}

impl Real for f64 {
    fn check_tolerance() -> Self {
        1e-9
    }
}
