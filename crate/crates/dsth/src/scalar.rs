//! Scalar abstraction: the whole toolkit is generic over the floating-point
//! element type, with `f64` as the recommended compute type and `f32` as the
//! on-disk storage type.

use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FromPrimitive, NumAssign, ToPrimitive};

/// Floating-point scalar usable by the matrix kernels and the optimizer.
pub trait Real:
    Float
    + NumAssign
    + FromPrimitive
    + ToPrimitive
    + Sum<Self>
    + Debug
    + Display
    + Send
    + Sync
    + 'static
{
    /// Lossy conversion from `f64`, for constants and tolerances.
    fn from_f64_lossy(x: f64) -> Self {
        Self::from_f64(x).expect("f64 constant not representable in scalar type")
    }

    /// Lossy conversion to `f64`, for reporting and serialization.
    fn to_f64_lossy(self) -> f64 {
        self.to_f64().expect("scalar not representable as f64")
    }
}

impl Real for f32 {}
impl Real for f64 {}

/// Shorthand for `Real::from_f64_lossy`, used pervasively for constants.
pub(crate) fn real<T: Real>(x: f64) -> T {
    T::from_f64_lossy(x)
}
