//! Scalar abstraction shared by the state-vector numerics.

use std::fmt::{Debug, Display};
use std::iter::Sum;
use std::ops::{AddAssign, DivAssign, MulAssign, SubAssign};

use nalgebra::DMatrix;
use num_complex::Complex;
use num_traits::{Float, FloatConst, FromPrimitive, ToPrimitive};

/// Floating point type the quantum engine can run on: `f32` or `f64`.
///
/// Dense linear algebra (Hermitian eigenvalues, singular values) is routed
/// through nalgebra per concrete type, so generic code never has to juggle
/// the overlapping method sets of `num_traits::Float` and
/// `nalgebra::RealField`.
pub trait Real:
    Float
    + FloatConst
    + FromPrimitive
    + ToPrimitive
    + Sum
    + AddAssign
    + SubAssign
    + MulAssign
    + DivAssign
    + Default
    + Debug
    + Display
    + Send
    + Sync
    + 'static
{
    /// Eigenvalues of a Hermitian matrix, in no particular order.
    fn hermitian_eigenvalues(m: DMatrix<Complex<Self>>) -> Vec<Self>;

    /// Singular values of an arbitrary complex matrix.
    fn singular_values(m: DMatrix<Complex<Self>>) -> Vec<Self>;

    /// Eigenvalues of the smaller of `M M†` and `M† M`.
    fn gram_eigenvalues(m: DMatrix<Complex<Self>>) -> Vec<Self>;

    /// Lossy conversion from `f64`; used for literals and tolerances.
    fn lit(x: f64) -> Self {
        Self::from_f64(x).expect("f64 literal representable")
    }

    fn as_f64(self) -> f64 {
        self.to_f64().expect("finite scalar")
    }
}

macro_rules! impl_real {
    ($t:ty) => {
        impl Real for $t {
            fn hermitian_eigenvalues(m: DMatrix<Complex<$t>>) -> Vec<$t> {
                m.symmetric_eigenvalues().iter().copied().collect()
            }

            fn singular_values(m: DMatrix<Complex<$t>>) -> Vec<$t> {
                m.singular_values().iter().copied().collect()
            }

            fn gram_eigenvalues(m: DMatrix<Complex<$t>>) -> Vec<$t> {
                let gram = if m.nrows() <= m.ncols() { &m * m.adjoint() } else { m.adjoint() * &m };
                gram.symmetric_eigenvalues().iter().copied().collect()
            }
        }
    };
}

impl_real!(f32);
impl_real!(f64);
