//! Floating-point scalar abstraction shared by every numeric module.

use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FromPrimitive, ToPrimitive};
use serde::de::DeserializeOwned;
use serde::Serialize;

/// Real scalar the network math is generic over.
///
/// Implemented for `f32` and `f64`. Everything user-facing in this crate
/// defaults to `f64` through the aliases in the crate root.
pub trait Scalar:
    Float
    + FromPrimitive
    + ToPrimitive
    + Sum
    + Default
    + Debug
    + Display
    + Send
    + Sync
    + Serialize
    + DeserializeOwned
    + 'static
{
    /// Converts an `f64` literal or parameter into this scalar type.
    #[inline]
    fn lit(v: f64) -> Self {
        Self::from_f64(v).expect("f64 literal representable in scalar type")
    }

    #[inline]
    fn as_f64(self) -> f64 {
        self.to_f64().expect("scalar representable as f64")
    }

    /// Relative tolerance the finite-difference and equivalence checks can
    /// expect at this precision.
    fn default_rel_tol() -> Self;
}

impl Scalar for f32 {
    fn default_rel_tol() -> Self {
        1e-3
    }
}

impl Scalar for f64 {
    fn default_rel_tol() -> Self {
        1e-5
    }
}
