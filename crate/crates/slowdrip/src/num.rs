//! Scalar abstraction for the numeric kernels.
//!
//! Quartiles, distribution distances, and the clustering stack are generic
//! over [`Real`] so they instantiate at `f32` or `f64`; the crate root
//! exports `f64` aliases for the common types. The trait is sealed by a
//! blanket impl — any float with the listed capabilities qualifies.

use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FromPrimitive, ToPrimitive};

/// Floating-point scalar usable by every numeric kernel in the crate.
pub trait Real:
    Float + FromPrimitive + ToPrimitive + Sum + Debug + Display + Copy + 'static
{
    /// Lossy-free conversion from a small count. Panics only if the count
    /// exceeds the mantissa range, which no pipeline quantity approaches.
    fn of_usize(n: usize) -> Self {
        <Self as FromPrimitive>::from_usize(n).expect("count representable in scalar")
    }

    /// Conversion from an `f64` constant (tolerances, probabilities).
    fn of_f64(x: f64) -> Self {
        <Self as FromPrimitive>::from_f64(x).expect("constant representable in scalar")
    }

    /// Round-trip into `f64` for serialization.
    fn as_f64(self) -> f64 {
        self.to_f64().expect("scalar representable as f64")
    }
}

impl<T> Real for T where
    T: Float + FromPrimitive + ToPrimitive + Sum + Debug + Display + Copy + 'static
{
}
