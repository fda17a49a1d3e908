//! Scalar abstraction shared by every numerical routine.

use nalgebra::RealField;
use num_complex::Complex;
use num_traits::{FromPrimitive, ToPrimitive};

/// Real scalar type the library is generic over (`f32` or `f64`).
pub trait Real:
    RealField + Copy + Default + rustfft::FftNum + FromPrimitive + ToPrimitive + Send + Sync + 'static
{
}

impl<T> Real for T where
    T: RealField + Copy + Default + rustfft::FftNum + FromPrimitive + ToPrimitive + Send + Sync + 'static
{
}

/// Complex scalar over `T`.
pub type Cplx<T> = Complex<T>;

/// Converts an `f64` literal into `T`.
#[inline]
pub fn lit<T: Real>(x: f64) -> T {
    T::from_f64(x).expect("literal representable in scalar type")
}

/// Converts an integer count into `T`.
#[inline]
pub fn from_usize<T: Real>(n: usize) -> T {
    T::from_usize(n).expect("count representable in scalar type")
}

/// Lossy conversion to `f64` for reporting.
#[inline]
pub fn to_f64<T: Real>(x: T) -> f64 {
    ToPrimitive::to_f64(&x).unwrap_or(f64::NAN)
}

#[inline]
pub fn abs<T: Real>(x: T) -> T {
    if x < T::zero() {
        -x
    } else {
        x
    }
}

#[inline]
pub fn cplx<T: Real>(re: T, im: T) -> Cplx<T> {
    Complex::new(re, im)
}

/// `e^{i theta}`.
#[inline]
pub fn expi<T: Real>(theta: T) -> Cplx<T> {
    Complex::new(theta.cos(), theta.sin())
}

#[inline]
pub fn czero<T: Real>() -> Cplx<T> {
    Complex::new(T::zero(), T::zero())
}

#[inline]
pub fn cone<T: Real>() -> Cplx<T> {
    Complex::new(T::one(), T::zero())
}

#[inline]
pub fn creal<T: Real>(x: T) -> Cplx<T> {
    Complex::new(x, T::zero())
}

/// `|z|^2`.
#[inline]
pub fn norm_sqr<T: Real>(z: Cplx<T>) -> T {
    z.re * z.re + z.im * z.im
}

/// `|z|`.
#[inline]
pub fn cabs<T: Real>(z: Cplx<T>) -> T {
    norm_sqr(z).sqrt()
}

/// Largest element, NaN-propagating.
pub fn max_of<T: Real>(it: impl IntoIterator<Item = T>) -> T {
    let mut m: Option<T> = None;
    for x in it {
        if x.partial_cmp(&x).is_none() {
            return x;
        }
        m = Some(match m {
            Some(y) if y >= x => y,
            _ => x,
        });
    }
    m.unwrap_or_else(T::zero)
}
