//! Scalar abstractions shared by the analytic layers.

use num_traits::{Float, FloatConst, FromPrimitive, Num, Signed, ToPrimitive};
use std::fmt::{Debug, Display};

/// Vacuum permeability (H/m).
pub const MU0: f64 = 1.256_637_062_12e-6;
/// Vacuum permittivity (F/m).
pub const EPS0: f64 = 8.854_187_812_8e-12;
/// Speed of light in vacuum (m/s).
pub const C0: f64 = 299_792_458.0;

/// Floating-point scalar for the analytic layers: `f32` or `f64`.
pub trait Real: Coord + Float + FloatConst + Display + Default + Send + Sync + 'static {
    /// Converts an `f64` literal. Infallible for the implementing types.
    #[inline]
    fn lit(x: f64) -> Self {
        Self::from_f64(x).expect("f64 literal representable")
    }
}

impl Real for f32 {}
impl Real for f64 {}

/// Coordinate scalar for polygon arithmetic. Satisfied by `f64` and by
/// `BigRational`, which makes the decomposition exact.
pub trait Coord: Clone + PartialOrd + Num + Signed + ToPrimitive + FromPrimitive + Debug {}

impl<T> Coord for T where T: Clone + PartialOrd + Num + Signed + ToPrimitive + FromPrimitive + Debug {}

pub(crate) fn coord_f64<T: Coord>(x: &T) -> f64 {
    x.to_f64().unwrap_or(f64::NAN)
}
