//! Floating-point abstraction used throughout the crate.
//!
//! Every solver is generic over [`Scalar`]; `f64` is the working type for
//! production tolerances, `f32` instantiations exist for cheap previews.

use std::fmt::{Debug, Display, LowerExp};
use std::iter::Sum;
use std::ops::{AddAssign, DivAssign, MulAssign, SubAssign};

use num_complex::Complex;
use num_traits::{Float, FloatConst, FromPrimitive};

pub trait Scalar:
    Float
    + FloatConst
    + FromPrimitive
    + AddAssign
    + SubAssign
    + MulAssign
    + DivAssign
    + Sum
    + Default
    + Debug
    + Display
    + LowerExp
    + Send
    + Sync
    + 'static
{
    /// Lifts an `f64` literal into the scalar type.
    fn of(x: f64) -> Self {
        Self::from_f64(x).expect("finite literal")
    }

    /// Round-trip to `f64` for reporting and serialization.
    fn to_f64(self) -> f64;
}

impl Scalar for f32 {
    fn to_f64(self) -> f64 {
        self as f64
    }
}

impl Scalar for f64 {
    fn to_f64(self) -> f64 {
        self
    }
}

/// Complex value over the crate scalar.
pub type C<S> = Complex<S>;

pub fn c_zero<S: Scalar>() -> C<S> {
    Complex::new(S::zero(), S::zero())
}

pub fn c_one<S: Scalar>() -> C<S> {
    Complex::new(S::one(), S::zero())
}

pub fn c_i<S: Scalar>() -> C<S> {
    Complex::new(S::zero(), S::one())
}

/// e^{i phi}
pub fn cis<S: Scalar>(phi: S) -> C<S> {
    let (s, c) = phi.sin_cos();
    Complex::new(c, s)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn literal_lift_round_trips() {
        assert_eq!(f64::of(0.4), 0.4);
        assert_eq!(f32::of(0.5), 0.5f32);
        assert_eq!(1.25f64.to_f64(), 1.25);
    }

    #[test]
    fn cis_is_unit_modulus() {
        let z = cis(1.234f64);
        assert!((z.norm() - 1.0).abs() < 1e-15);
        assert!((z.re - 1.234f64.cos()).abs() < 1e-15);
    }
}
