//! Scalar plumbing shared by every module.

use nalgebra as na;
use num_complex::Complex;
use num_traits as nt;

/// Real scalar the numerics are generic over (`f32` or `f64`).
pub trait Real: na::RealField + nt::FromPrimitive + nt::FloatConst + Copy + Send + Sync {
    /// Machine-precision scaled tolerance used when the caller does not pin one.
    fn default_tol() -> Self;
    fn machine_eps() -> Self;
}

impl Real for f32 {
    fn default_tol() -> Self {
        1e-5
    }
    fn machine_eps() -> Self {
        f32::EPSILON
    }
}

impl Real for f64 {
    fn default_tol() -> Self {
        1e-12
    }
    fn machine_eps() -> Self {
        f64::EPSILON
    }
}

pub type C<T> = Complex<T>;
pub type CMatrix<T> = na::DMatrix<Complex<T>>;
pub type CVector<T> = na::DVector<Complex<T>>;

/// Converts an `f64` literal into `T`.
#[inline]
pub fn lit<T: Real>(x: f64) -> T {
    T::from_f64(x).expect("f64 literal representable in scalar type")
}

#[inline]
pub fn re<T: Real>(x: T) -> C<T> {
    Complex::new(x, T::zero())
}

#[inline]
pub fn cl<T: Real>(x: f64) -> C<T> {
    Complex::new(lit(x), T::zero())
}

#[inline]
pub fn to_f64<T: Real>(x: T) -> f64 {
    x.to_subset().unwrap_or(f64::NAN)
}

#[inline]
pub fn cabs<T: Real>(z: C<T>) -> T {
    na::ComplexField::modulus(z)
}

/// Largest elementwise modulus.
pub fn max_abs<T: Real>(m: &CMatrix<T>) -> T {
    m.iter().fold(T::zero(), |acc, z| acc.max(cabs(*z)))
}

/// Elementwise deviation from Hermiticity.
pub fn hermiticity_error<T: Real>(m: &CMatrix<T>) -> T {
    max_abs(&(m - m.adjoint()))
}

pub fn trace<T: Real>(m: &CMatrix<T>) -> C<T> {
    m.diagonal()
        .iter()
        .fold(C::new(T::zero(), T::zero()), |a, &b| a + b)
}

/// `(m + m†)/2`.
pub fn hermitize<T: Real>(m: &CMatrix<T>) -> CMatrix<T> {
    (m + m.adjoint()).scale(lit(0.5))
}

/// Eigenvalues of a Hermitian matrix in ascending order.
pub fn hermitian_eigenvalues<T: Real>(m: &CMatrix<T>) -> Vec<T> {
    let mut ev: Vec<T> = m.clone().symmetric_eigenvalues().iter().copied().collect();
    ev.sort_by(|a, b| a.partial_cmp(b).unwrap_or(std::cmp::Ordering::Equal));
    ev
}
