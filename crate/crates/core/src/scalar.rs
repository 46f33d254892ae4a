//! Scalar abstraction shared by the numeric modules.

use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FloatConst, FromPrimitive, NumAssign, ToPrimitive};

/// Floating-point type the alignment math is generic over (`f32` or `f64`).
pub trait Scalar:
    Float
    + FloatConst
    + FromPrimitive
    + ToPrimitive
    + NumAssign
    + ndarray::ScalarOperand
    + Sum
    + Debug
    + Display
    + Default
    + Send
    + Sync
    + 'static
{
    /// Scaling factors outside `[1/bound, bound]` push the Sinkhorn solver into the log domain.
    fn scaling_bound() -> Self;

    /// Converts an `f64` constant. Panics only for values no float can hold.
    #[inline]
    fn lit(value: f64) -> Self {
        Self::from_f64(value).expect("finite constant")
    }

    #[inline]
    fn as_f64(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }
}

impl Scalar for f64 {
    fn scaling_bound() -> Self {
        1e100
    }
}

impl Scalar for f32 {
    fn scaling_bound() -> Self {
        1e30
    }
}
