//! Scalar abstraction for the numeric core.
//!
//! Everything numeric in this crate is generic over [`Real`], so the same
//! code runs in `f32` (the storage precision of model files) or `f64`
//! (handy for property tests with tight tolerances).

use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FromPrimitive, NumAssign, ToPrimitive};

pub trait Real:
    Float + FromPrimitive + ToPrimitive + NumAssign + Sum + Debug + Display + Send + Sync + 'static
{
}

impl<T> Real for T where
    T: Float
        + FromPrimitive
        + ToPrimitive
        + NumAssign
        + Sum
        + Debug
        + Display
        + Send
        + Sync
        + 'static
{
}

/// Convert an `f64` constant into the working scalar type.
#[inline]
pub fn real<T: Real>(x: f64) -> T {
    T::from_f64(x).expect("f64 constant not representable in scalar type")
}

/// ln(sqrt(2*pi)), the normalization constant of the similarity score.
#[inline]
pub fn ln_sqrt_2pi<T: Real>() -> T {
    real(0.9189385332046727)
}
