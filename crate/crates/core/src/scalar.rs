//! Scalar abstraction over the float width used by the numeric kernels.
//!
//! Model weights live in f32 (matching the on-disk format), while gradient
//! accumulation, encoding regressions and statistics run in f64. Every kernel
//! in this crate is generic over [`Scalar`] so the same code path can be
//! instantiated at either width (f64 instantiation is what the
//! finite-difference gradient checks run on).

use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, NumAssignOps};

pub trait Scalar:
    Float + NumAssignOps + Sum + Send + Sync + Debug + Display + Default + 'static
{
    /// Lossy conversion from f64 (identity for f64).
    fn of(x: f64) -> Self;

    fn to_f64(self) -> f64;

    fn to_f32(self) -> f32;

    fn from_f32(x: f32) -> Self;
}

impl Scalar for f32 {
    #[inline]
    fn of(x: f64) -> Self {
        x as f32
    }
    #[inline]
    fn to_f64(self) -> f64 {
        self as f64
    }
    #[inline]
    fn to_f32(self) -> f32 {
        self
    }
    #[inline]
    fn from_f32(x: f32) -> Self {
        x
    }
}

impl Scalar for f64 {
    #[inline]
    fn of(x: f64) -> Self {
        x
    }
    #[inline]
    fn to_f64(self) -> f64 {
        self
    }
    #[inline]
    fn to_f32(self) -> f32 {
        self as f32
    }
    #[inline]
    fn from_f32(x: f32) -> Self {
        x as f64
    }
}
