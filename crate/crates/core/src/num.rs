//! Scalar abstractions shared by the formula, fitting and normalisation code.
//!
//! Closed-form quantities (visibility, correction factor, accidental rate,
//! g² normalisation) only need field arithmetic, so they are written against
//! [`Scalar`] and work for exact rationals as well as floats. Anything that
//! needs `sqrt`, trigonometry or iteration to a tolerance uses [`Real`].

use core::fmt::Debug;
use num_traits::{Float, FromPrimitive, Num};

/// Field-like scalar: `f32`, `f64`, or an exact rational type.
pub trait Scalar: Clone + PartialOrd + Debug + Num {}

impl<T: Clone + PartialOrd + Debug + Num> Scalar for T {}

/// Floating point scalar used by fits and statistics.
pub trait Real: Scalar + Float + FromPrimitive + Send + Sync + 'static {
    fn lit(x: f64) -> Self {
        Self::from_f64(x).expect("f64 literal representable")
    }
}

impl Real for f32 {}
impl Real for f64 {}

/// Converts a count into any scalar that can be built from primitives.
pub(crate) fn from_count<T: FromPrimitive>(n: u64) -> T {
    T::from_u64(n).expect("count representable in scalar type")
}
