use std::fmt::Debug;
use std::ops::Neg;

use num_traits::{FromPrimitive, Num, ToPrimitive};

/// Coefficient type of symbolic expressions.
///
/// Anything with field operations that can be lowered to `f64` for the SDP
/// stage qualifies: `f32`, `f64` and [`crate::Rational`].
pub trait Scalar:
    Num + Neg<Output = Self> + Clone + Debug + PartialEq + ToPrimitive + FromPrimitive + Send + Sync + 'static
{
    fn from_count(n: usize) -> Self {
        Self::from_usize(n).expect("count representable in scalar type")
    }

    fn lower(&self) -> f64 {
        self.to_f64().expect("scalar representable as f64")
    }
}

impl<T> Scalar for T where
    T: Num + Neg<Output = T> + Clone + Debug + PartialEq + ToPrimitive + FromPrimitive + Send + Sync + 'static
{
}

/// Scalars closed under square roots, needed by the accelerated schedule.
pub trait RealScalar: Scalar + num_traits::Float {}

impl<T: Scalar + num_traits::Float> RealScalar for T {}
