//! Floating-point abstraction used throughout the crate.

use std::fmt::{Debug, Display, LowerExp};
use std::iter::Sum;

use num_traits::{Float, FromPrimitive, NumAssignOps, ToPrimitive};

/// Floating-point scalar the numeric core is generic over.
///
/// Implemented for `f32` and `f64`; the `f64` instantiations are what the
/// CLI and the acceptance experiments use.
pub trait Scalar:
    Float
    + FromPrimitive
    + ToPrimitive
    + NumAssignOps
    + Sum
    + Debug
    + Display
    + LowerExp
    + Default
    + Send
    + Sync
    + 'static
{
    /// Shorthand for lossy conversion from `f64` (panics only if the target
    /// type cannot represent any finite value, which cannot happen for
    /// `f32`/`f64`).
    fn from_f64_lossy(v: f64) -> Self {
        Self::from_f64(v).expect("finite f64 converts to every Scalar")
    }

    /// Lossy widening to `f64` for reporting and serialization.
    fn to_f64_lossy(self) -> f64 {
        self.to_f64().expect("every Scalar widens to f64")
    }
}

impl Scalar for f32 {}
impl Scalar for f64 {}

/// Convenience conversion used all over the crate: `s::<T>(0.5)`.
#[inline]
pub fn s<T: Scalar>(v: f64) -> T {
    T::from_f64_lossy(v)
}
