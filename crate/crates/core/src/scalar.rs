//! Scalar abstraction shared by the numeric parts of the crate.
//!
//! Function approximators, value targets and the dynamic-programming oracle
//! are written once against [`Scalar`] and instantiated for `f32` and `f64`.
//! Quantities that must be exact (the geometric value targets) can also be
//! computed over [`Rational`], see [`crate::pvo::pvo_target`].

use std::fmt::{Debug, Display};
use std::iter::Sum;
use std::ops::{AddAssign, DivAssign, MulAssign, SubAssign};

use num_traits::{Float, FromPrimitive, ToPrimitive};

/// Arbitrary-precision rational, used where floating point cannot state an
/// identity exactly.
pub type Rational = num_rational::BigRational;

/// Real number type accepted by the approximators and the oracle.
pub trait Scalar:
    Float
    + FromPrimitive
    + ToPrimitive
    + AddAssign
    + SubAssign
    + MulAssign
    + DivAssign
    + Sum
    + Default
    + Debug
    + Display
    + Send
    + Sync
    + 'static
{
    /// Lossy conversion from `f64`; panics only if the value is not
    /// representable at all, which cannot happen for finite `f64` inputs.
    fn of(x: f64) -> Self {
        Self::from_f64(x).expect("f64 is representable in every Scalar")
    }

    fn as_f64(self) -> f64 {
        self.to_f64().expect("Scalar converts to f64")
    }
}

impl<T> Scalar for T where
    T: Float
        + FromPrimitive
        + ToPrimitive
        + AddAssign
        + SubAssign
        + MulAssign
        + DivAssign
        + Sum
        + Default
        + Debug
        + Display
        + Send
        + Sync
        + 'static
{
}
