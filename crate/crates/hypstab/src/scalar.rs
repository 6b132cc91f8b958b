//! Scalar abstraction: all core math is generic over the real scalar type.

use nalgebra::{DMatrix, DVector, RealField};
use num_complex::Complex;
use num_traits::{FromPrimitive, ToPrimitive};

/// Real scalar the toolkit is generic over (`f64` in practice, `f32` compiles too).
pub trait Real: RealField + Copy + FromPrimitive + ToPrimitive {}
impl<T> Real for T where T: RealField + Copy + FromPrimitive + ToPrimitive {}

pub type Cplx<T> = Complex<T>;

pub type RVec<T> = DVector<T>;
pub type RMat<T> = DMatrix<T>;
pub type CVec<T> = DVector<Complex<T>>;
pub type CMat<T> = DMatrix<Complex<T>>;

/// Convert an `f64` constant into the generic scalar.
#[inline]
pub fn real<T: Real>(x: f64) -> T {
    T::from_f64(x).expect("constant not representable in scalar type")
}

#[inline]
pub fn to_f64<T: Real>(x: T) -> f64 {
    x.to_f64().expect("scalar not representable as f64")
}

#[inline]
pub fn cplx<T: Real>(re: f64, im: f64) -> Cplx<T> {
    Complex::new(real(re), real(im))
}

/// Modulus of a complex scalar (generic-safe; num_complex's `norm` needs Float).
#[inline]
pub fn cmod<T: Real>(z: Cplx<T>) -> T {
    nalgebra::ComplexField::modulus(z)
}

#[inline]
pub fn cmod2<T: Real>(z: Cplx<T>) -> T {
    nalgebra::ComplexField::modulus_squared(z)
}

/// Promote a real matrix to a complex one.
pub fn complexify<T: Real>(m: &RMat<T>) -> CMat<T> {
    m.map(|x| Complex::new(x, T::zero()))
}

pub fn complexify_vec<T: Real>(v: &RVec<T>) -> CVec<T> {
    v.map(|x| Complex::new(x, T::zero()))
}

/// Max-norm of a real vector.
pub fn inf_norm<T: Real>(v: &RVec<T>) -> T {
    v.iter().fold(T::zero(), |acc, x| acc.max(x.abs()))
}

/// Euclidean norm of a slice of reals.
pub fn norm2<T: Real>(xs: &[T]) -> T {
    xs.iter().fold(T::zero(), |acc, &x| acc + x * x).sqrt()
}

/// Least-squares line fit `y = a + b x`; returns `(a, b, r_squared)`.
///
/// `r_squared` is 1 for a perfect fit and degrades toward 0; callers use it
/// to certify log-linear tails.
pub fn linear_fit<T: Real>(xs: &[T], ys: &[T]) -> (T, T, T) {
    assert!(xs.len() == ys.len() && xs.len() >= 2, "fit needs >= 2 points");
    let n = real::<T>(xs.len() as f64);
    let sx = xs.iter().fold(T::zero(), |a, &x| a + x);
    let sy = ys.iter().fold(T::zero(), |a, &y| a + y);
    let mx = sx / n;
    let my = sy / n;
    let mut sxx = T::zero();
    let mut sxy = T::zero();
    let mut syy = T::zero();
    for (&x, &y) in xs.iter().zip(ys) {
        sxx += (x - mx) * (x - mx);
        sxy += (x - mx) * (y - my);
        syy += (y - my) * (y - my);
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let r2 = if syy > T::zero() { sxy * sxy / (sxx * syy) } else { T::one() };
    (intercept, slope, r2)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn linear_fit_recovers_exact_line() {
        let xs: Vec<f64> = (0..10).map(|i| i as f64).collect();
        let ys: Vec<f64> = xs.iter().map(|x| 3.0 - 0.5 * x).collect();
        let (a, b, r2) = linear_fit(&xs, &ys);
        assert!((a - 3.0).abs() < 1e-12);
        assert!((b + 0.5).abs() < 1e-12);
        assert!((r2 - 1.0).abs() < 1e-12);
    }
}
