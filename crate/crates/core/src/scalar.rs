use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FloatConst, NumAssign};
use rustfft::FftNum;

/// Floating-point scalar the solver is generic over: `f32` or `f64`.
///
/// `Float` and `Signed` (through `FftNum`) both provide `abs`; call it as
/// `Float::abs(x)` in generic code.
pub trait Real:
    Float + FloatConst + FftNum + NumAssign + Sum + Display + Debug + Default + Send + Sync + 'static
{
    /// Converts an `f64` literal. Out-of-range values saturate to infinity.
    #[inline]
    fn of(x: f64) -> Self {
        Self::from_f64(x).unwrap_or_else(Self::infinity)
    }

    #[inline]
    fn as_f64(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }
}

impl Real for f32 {}
impl Real for f64 {}
