//! Scalar abstraction shared by every numeric routine in the crate.

use std::fmt::{Debug, Display};

use num_traits::{Float, FloatConst, FromPrimitive, ToPrimitive};
use rand::Rng;
use rand_distr::{Distribution, Exp1, Open01, StandardNormal};

/// Floating point scalar (`f32` or `f64`) with the random variates the
/// simulators need.
pub trait Real:
    Float + FloatConst + FromPrimitive + ToPrimitive + Debug + Display + Default + Send + Sync + 'static
{
    /// Draw from N(0, 1).
    fn standard_normal<R: Rng + ?Sized>(rng: &mut R) -> Self;

    /// Draw from the unit-rate exponential distribution.
    fn unit_exponential<R: Rng + ?Sized>(rng: &mut R) -> Self;

    /// Draw from the open interval (0, 1).
    fn open01<R: Rng + ?Sized>(rng: &mut R) -> Self;

    /// Lossy conversion from an `f64` literal.
    #[inline]
    fn lit(x: f64) -> Self {
        Self::from_f64(x).expect("f64 literal representable")
    }

    #[inline]
    fn from_count(n: usize) -> Self {
        Self::from_usize(n).expect("count representable")
    }

    #[inline]
    fn to_f64_lossy(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }
}

macro_rules! impl_real {
    ($t:ty) => {
        impl Real for $t {
            #[inline]
            fn standard_normal<R: Rng + ?Sized>(rng: &mut R) -> Self {
                StandardNormal.sample(rng)
            }

            #[inline]
            fn unit_exponential<R: Rng + ?Sized>(rng: &mut R) -> Self {
                Exp1.sample(rng)
            }

            #[inline]
            fn open01<R: Rng + ?Sized>(rng: &mut R) -> Self {
                Open01.sample(rng)
            }
        }
    };
}

impl_real!(f32);
impl_real!(f64);

/// Γ(d/2) for a positive integer `d`, from the factorial and half-integer
/// closed forms.
pub fn gamma_half_integer<T: Real>(d: u32) -> T {
    assert!(d >= 1, "gamma_half_integer needs d >= 1");
    if d.is_multiple_of(2) {
        // Γ(k) = (k-1)!
        let k = d / 2;
        (1..k).fold(T::one(), |acc, i| acc * T::from_u32(i).unwrap())
    } else {
        // Γ(k + 1/2) = (2k-1)!! √π / 2^k
        let k = (d - 1) / 2;
        let half = T::lit(0.5);
        (0..k).fold(T::PI().sqrt(), |acc, i| {
            acc * (T::from_u32(i).unwrap() + half)
        })
    }
}
