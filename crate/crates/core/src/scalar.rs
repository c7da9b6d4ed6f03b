//! Scalar abstraction shared by the numerical core.

use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_complex::Complex;
use num_traits::{Float, FloatConst, FromPrimitive, ToPrimitive};

/// Floating-point scalar usable by every generic routine in the crate.
pub trait Real:
    Float + FloatConst + FromPrimitive + ToPrimitive + Debug + Display + Default + Send + Sync + Sum + 'static
{
}

impl<T> Real for T where
    T: Float + FloatConst + FromPrimitive + ToPrimitive + Debug + Display + Default + Send + Sync + Sum + 'static
{
}

/// Converts an `f64` literal into `T`.
#[inline(always)]
pub fn lit<T: Real>(x: f64) -> T {
    T::from_f64(x).unwrap()
}

/// Converts a count into `T`.
#[inline(always)]
pub fn from_usize<T: Real>(n: usize) -> T {
    T::from_usize(n).unwrap()
}

#[inline(always)]
pub fn to_f64<T: Real>(x: T) -> f64 {
    x.to_f64().unwrap_or(f64::NAN)
}

#[inline(always)]
pub fn cplx<T: Real>(re: T, im: T) -> Complex<T> {
    Complex::new(re, im)
}

#[inline(always)]
pub fn czero<T: Real>() -> Complex<T> {
    Complex::new(T::zero(), T::zero())
}

#[inline(always)]
pub fn cone<T: Real>() -> Complex<T> {
    Complex::new(T::one(), T::zero())
}

/// `i * x`.
#[inline(always)]
pub fn times_i<T: Real>(z: Complex<T>) -> Complex<T> {
    Complex::new(-z.im, z.re)
}

/// `exp(i theta)`.
#[inline(always)]
pub fn expi<T: Real>(theta: T) -> Complex<T> {
    let (s, c) = theta.sin_cos();
    Complex::new(c, s)
}

/// Relative difference `|a-b| / max(|a|,|b|,floor)`.
pub fn rel_diff<T: Real>(a: Complex<T>, b: Complex<T>, floor: T) -> T {
    (a - b).norm() / a.norm().max(b.norm()).max(floor)
}

/// Value with an absolute error estimate.
#[derive(Clone, Copy, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct Estimate<V, T = V> {
    pub value: V,
    pub abs_err: T,
}

impl<V, T: Real> Estimate<V, T> {
    pub fn new(value: V, abs_err: T) -> Self {
        Estimate { value, abs_err }
    }
}

impl<T: Real> Estimate<Complex<T>, T> {
    pub fn zero() -> Self {
        Estimate::new(czero(), T::zero())
    }

    pub fn exact(value: Complex<T>) -> Self {
        Estimate::new(value, T::zero())
    }

    pub fn scale(self, c: Complex<T>) -> Self {
        Estimate::new(self.value * c, self.abs_err * c.norm())
    }
}

impl<T: Real> std::ops::Add for Estimate<Complex<T>, T> {
    type Output = Self;
    fn add(self, o: Self) -> Self {
        Estimate::new(self.value + o.value, self.abs_err + o.abs_err)
    }
}

impl<T: Real> std::iter::Sum for Estimate<Complex<T>, T> {
    fn sum<I: Iterator<Item = Self>>(iter: I) -> Self {
        iter.fold(Estimate::zero(), |a, b| a + b)
    }
}

pub type CEstimate<T> = Estimate<Complex<T>, T>;
