//! Scalar abstraction shared by the geometry, controller and dynamics code.

use std::fmt::{Debug, Display};

use num_traits::{Float, FloatConst, FromPrimitive, ToPrimitive};

/// Floating point scalar: `f32` or `f64`.
pub trait Real:
    Float + FloatConst + FromPrimitive + ToPrimitive + Debug + Display + Default + Send + Sync + 'static
{
    /// Lossy conversion from an `f64` literal.
    #[inline]
    fn lit(x: f64) -> Self {
        Self::from_f64(x).expect("f64 literal representable")
    }

    #[inline]
    fn as_f64(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }

    /// Clamp into `[lo, hi]`. NaN maps to `lo`.
    #[inline]
    fn clamp_to(self, lo: Self, hi: Self) -> Self {
        if self.is_nan() || self < lo {
            lo
        } else if self > hi {
            hi
        } else {
            self
        }
    }

    /// Wrap an angle into `(-pi, pi]`.
    #[inline]
    fn wrap_angle(self) -> Self {
        let two_pi = Self::PI() + Self::PI();
        let mut a = self % two_pi;
        if a <= -Self::PI() {
            a = a + two_pi;
        } else if a > Self::PI() {
            a = a - two_pi;
        }
        a
    }
}

impl Real for f32 {}
impl Real for f64 {}
