//! Scalar abstraction for position math.

use std::fmt::{Debug, Display};
use std::str::FromStr;

use num_traits::{Float, FromPrimitive, ToPrimitive};

/// Floating-point type usable for latitude/longitude arithmetic.
pub trait Coordinate:
    Float + FromPrimitive + ToPrimitive + FromStr + Display + Debug + Default + Send + Sync + 'static
{
}

impl Coordinate for f32 {}
impl Coordinate for f64 {}

pub(crate) fn lit<S: Coordinate>(v: f64) -> S {
    S::from_f64(v).expect("literal representable in every coordinate type")
}
