//! Scalar abstraction shared by every numerical routine in the crate.

use std::fmt::{Debug, Display};
use std::iter::Sum;
use std::ops::{AddAssign, DivAssign, MulAssign, SubAssign};

use num_complex::Complex;
use num_traits::{Float, FloatConst, FromPrimitive, NumAssign, ToPrimitive};

/// Real floating-point scalar the simulation is generic over (`f32`, `f64`).
pub trait Real:
    Float
    + FloatConst
    + FromPrimitive
    + ToPrimitive
    + AddAssign
    + SubAssign
    + MulAssign
    + DivAssign
    + NumAssign
    + Sum
    + Default
    + Debug
    + Display
    + Send
    + Sync
    + 'static
{
    /// Lossy conversion from an `f64` literal.
    #[inline]
    fn lit(x: f64) -> Self {
        Self::from_f64(x).expect("f64 literal representable")
    }

    #[inline]
    fn from_usize_lossy(n: usize) -> Self {
        Self::from_usize(n).expect("usize representable")
    }

    #[inline]
    fn to_f64_lossy(self) -> f64 {
        self.to_f64().expect("finite scalar")
    }
}

impl Real for f32 {}
impl Real for f64 {}

/// Complex scalar over `T`.
pub type Cplx<T> = Complex<T>;

/// Four-component two-atom wavefunction.
pub type StateVector<T> = [Cplx<T>; 4];

/// Dense 4x4 complex matrix, row-major.
pub type CMat4<T> = [[Cplx<T>; 4]; 4];

/// Dense 4x4 real matrix, row-major.
pub type RMat4<T> = [[T; 4]; 4];

/// In-plane vector (µm, or µm-derived units).
pub type Vec2<T> = [T; 2];

#[inline]
pub fn czero<T: Real>() -> Cplx<T> {
    Complex::new(T::zero(), T::zero())
}

pub fn norm_sqr<T: Real>(v: &[Cplx<T>]) -> T {
    v.iter().map(|z| z.norm_sqr()).sum()
}

/// `⟨a|b⟩`, conjugating the left argument.
pub fn inner<T: Real>(a: &[Cplx<T>], b: &[Cplx<T>]) -> Cplx<T> {
    a.iter()
        .zip(b)
        .fold(czero(), |acc, (x, y)| acc + x.conj() * y)
}

pub fn identity4<T: Real>() -> CMat4<T> {
    let mut m = [[czero(); 4]; 4];
    for (i, row) in m.iter_mut().enumerate() {
        row[i] = Complex::new(T::one(), T::zero());
    }
    m
}

pub fn cmat_mul<T: Real>(a: &CMat4<T>, b: &CMat4<T>) -> CMat4<T> {
    let mut out = [[czero(); 4]; 4];
    for i in 0..4 {
        for j in 0..4 {
            let mut acc = czero();
            for k in 0..4 {
                acc += a[i][k] * b[k][j];
            }
            out[i][j] = acc;
        }
    }
    out
}

pub fn cmat_adjoint<T: Real>(a: &CMat4<T>) -> CMat4<T> {
    let mut out = [[czero(); 4]; 4];
    for i in 0..4 {
        for j in 0..4 {
            out[i][j] = a[j][i].conj();
        }
    }
    out
}

pub fn cmat_apply<T: Real>(a: &CMat4<T>, v: &StateVector<T>) -> StateVector<T> {
    let mut out = [czero(); 4];
    for i in 0..4 {
        for k in 0..4 {
            out[i] += a[i][k] * v[k];
        }
    }
    out
}

/// Frobenius norm of `a - b`.
pub fn cmat_dist<T: Real>(a: &CMat4<T>, b: &CMat4<T>) -> T {
    let mut acc = T::zero();
    for i in 0..4 {
        for j in 0..4 {
            acc += (a[i][j] - b[i][j]).norm_sqr();
        }
    }
    acc.sqrt()
}

/// `‖U†U − I‖_F`.
pub fn unitarity_defect<T: Real>(u: &CMat4<T>) -> T {
    cmat_dist(&cmat_mul(&cmat_adjoint(u), u), &identity4())
}

/// Wrap an angle in degrees into (−180, 180].
pub fn wrap_degrees(mut deg: f64) -> f64 {
    deg %= 360.0;
    if deg <= -180.0 {
        deg += 360.0;
    } else if deg > 180.0 {
        deg -= 360.0;
    }
    deg
}
