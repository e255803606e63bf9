//! Scalar abstraction shared by every numeric routine in the crate.

use std::fmt::{Debug, Display, LowerExp};

use nalgebra::RealField;
use num_traits::{FromPrimitive, ToPrimitive};

/// Real scalar usable by the estimator: `f32` or `f64`.
///
/// Linear algebra goes through nalgebra's `RealField`; conversions to and
/// from primitive values go through num-traits.
pub trait Real:
    RealField + Copy + FromPrimitive + ToPrimitive + Display + Debug + LowerExp + Send + Sync + 'static
{
    /// Converts an `f64` literal into `Self`.
    #[inline]
    fn lit(x: f64) -> Self {
        Self::from_f64(x).expect("f64 literal representable")
    }

    /// Converts a count into `Self`.
    #[inline]
    fn count(n: usize) -> Self {
        Self::from_usize(n).expect("count representable")
    }

    /// A comparison tolerance: `x` in `f64`, widened to a few hundred ulps for
    /// lower-precision types.
    #[inline]
    fn tol(x: f64) -> Self {
        let floor = Self::default_epsilon() * Self::lit(256.0);
        let t = Self::lit(x);
        if t > floor {
            t
        } else {
            floor
        }
    }

    #[inline]
    fn nan() -> Self {
        Self::lit(f64::NAN)
    }

    #[inline]
    fn as_f64(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }
}

impl Real for f32 {}
impl Real for f64 {}
