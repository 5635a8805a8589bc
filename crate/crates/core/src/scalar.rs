use std::fmt::{Debug, Display};
use std::iter::Sum;
use std::ops::Neg;

use num_bigint::BigInt;
use num_traits::{Float, FloatConst, FromPrimitive, Num, ToPrimitive};

use crate::Rational;

/// Floating-point scalar used by the discretized energies and solvers.
pub trait Real:
    Float + FloatConst + FromPrimitive + ToPrimitive + Coefficient + Debug + Display + Default + Sum + Send + Sync + 'static
{
    /// Converts an `f64` literal; exact for every value used in this crate.
    fn of(x: f64) -> Self {
        Self::from_f64(x).expect("f64 literal is representable")
    }

    fn of_usize(n: usize) -> Self {
        Self::from_usize(n).expect("usize is representable")
    }
}

impl Real for f32 {}
impl Real for f64 {}

/// Field element usable as a polynomial coefficient.
pub trait Coefficient: Clone + Debug + PartialEq + Num + Neg<Output = Self> {
    fn from_i64(v: i64) -> Self;

    /// Approximates the value in double precision.
    fn approx(&self) -> f64;
}

impl Coefficient for f64 {
    fn from_i64(v: i64) -> Self {
        v as f64
    }

    fn approx(&self) -> f64 {
        *self
    }
}

impl Coefficient for f32 {
    fn from_i64(v: i64) -> Self {
        v as f32
    }

    fn approx(&self) -> f64 {
        f64::from(*self)
    }
}

impl Coefficient for Rational {
    fn from_i64(v: i64) -> Self {
        Rational::from_integer(BigInt::from(v))
    }

    fn approx(&self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }
}
