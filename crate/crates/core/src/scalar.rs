use std::fmt::{Debug, Display};

use num_traits::{Float, FromPrimitive, NumAssign, NumCast};

/// Real scalar type used for sample values and kernel outputs.
///
/// Implemented for `f32` and `f64`. Probabilities are always `f64`
/// regardless of the scalar chosen for values.
pub trait Scalar:
    Float + FromPrimitive + NumCast + NumAssign + Default + Debug + Display + Send + Sync + 'static
{
    /// Lossy conversion from `f64`, used for constants and probabilities.
    fn of(x: f64) -> Self {
        <Self as NumCast>::from(x).expect("f64 is representable in every Scalar")
    }

    fn to_f64_lossy(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }
}

impl<T> Scalar for T where
    T: Float
        + FromPrimitive
        + NumCast
        + NumAssign
        + Default
        + Debug
        + Display
        + Send
        + Sync
        + 'static
{
}
