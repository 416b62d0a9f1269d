//! Scalar abstraction shared by the numeric modules.

use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_complex::Complex;
use num_traits::{Float, FloatConst, FromPrimitive, ToPrimitive};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

/// Floating point type the signal chain can be instantiated with.
pub trait Real:
    Float + FloatConst + FromPrimitive + ToPrimitive + Debug + Display + Default + Sum + Send + Sync + 'static
{
    /// Converts from `f64`, panicking only on impossible conversions.
    fn of(x: f64) -> Self;

    fn to_f64v(self) -> f64;

    fn from_len(n: usize) -> Self {
        Self::of(n as f64)
    }

    fn std_normal<R: Rng + ?Sized>(rng: &mut R) -> Self;

    /// Circularly symmetric complex normal with `E|z|^2 = var`.
    fn complex_normal<R: Rng + ?Sized>(rng: &mut R, var: Self) -> Complex<Self> {
        let s = (var / Self::of(2.0)).sqrt();
        Complex::new(Self::std_normal(rng) * s, Self::std_normal(rng) * s)
    }

    /// `exp(j*2*pi*cycles)`, reducing the argument to its fractional part first.
    fn cis_cycles(cycles: Self) -> Complex<Self> {
        let frac = cycles - cycles.floor();
        Complex::from_polar(Self::one(), Self::TAU() * frac)
    }
}

macro_rules! impl_real {
    ($t:ty) => {
        impl Real for $t {
            #[inline]
            fn of(x: f64) -> Self {
                x as $t
            }

            #[inline]
            fn to_f64v(self) -> f64 {
                self as f64
            }

            #[inline]
            fn std_normal<R: Rng + ?Sized>(rng: &mut R) -> Self {
                StandardNormal.sample(rng)
            }
        }
    };
}

impl_real!(f32);
impl_real!(f64);

/// Complex sample type.
pub type C<T> = Complex<T>;
