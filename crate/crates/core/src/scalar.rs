// SPDX-License-Identifier: Apache-2.0

//! Scalar traits shared by the sparse kernels and the float-only layers.
//!
//! [`Scalar`] covers both exact integers (path counting) and floats
//! (weighted matrices). Every arithmetic step used by the kernels goes through
//! the checked methods so overflow is reported instead of wrapping or
//! saturating to infinity.

use std::fmt::{Debug, Display};

use ndarray::{LinalgScalar, ScalarOperand};
use num_traits::{Float, FromPrimitive, Num, ToPrimitive};

/// Element type of a [`SparseMatrix`](crate::sparse::SparseMatrix).
pub trait Scalar: Num + Copy + PartialOrd + Debug + Display + Send + Sync + ToPrimitive + 'static {
    /// `self + rhs`, or `None` on overflow / non-finite result.
    fn checked_add_s(self, rhs: Self) -> Option<Self>;
    /// `self * rhs`, or `None` on overflow / non-finite result.
    fn checked_mul_s(self, rhs: Self) -> Option<Self>;
    fn checked_sub_s(self, rhs: Self) -> Option<Self>;
    /// Finite for floats, always true for integers.
    fn is_finite_s(self) -> bool;
    /// Exact conversion of a count (binomial coefficients, identity entries).
    fn from_count(v: u64) -> Option<Self>;
}

macro_rules! impl_scalar_int {
    ($($t:ty),*) => {$(
        impl Scalar for $t {
            #[inline]
            fn checked_add_s(self, rhs: Self) -> Option<Self> { self.checked_add(rhs) }
            #[inline]
            fn checked_mul_s(self, rhs: Self) -> Option<Self> { self.checked_mul(rhs) }
            #[inline]
            fn checked_sub_s(self, rhs: Self) -> Option<Self> { self.checked_sub(rhs) }
            #[inline]
            fn is_finite_s(self) -> bool { true }
            fn from_count(v: u64) -> Option<Self> { <$t>::try_from(v).ok() }
        }
    )*};
}

macro_rules! impl_scalar_float {
    ($($t:ty),*) => {$(
        impl Scalar for $t {
            #[inline]
            fn checked_add_s(self, rhs: Self) -> Option<Self> {
                let r = self + rhs;
                r.is_finite().then_some(r)
            }
            #[inline]
            fn checked_mul_s(self, rhs: Self) -> Option<Self> {
                let r = self * rhs;
                r.is_finite().then_some(r)
            }
            #[inline]
            fn checked_sub_s(self, rhs: Self) -> Option<Self> {
                let r = self - rhs;
                r.is_finite().then_some(r)
            }
            #[inline]
            fn is_finite_s(self) -> bool { self.is_finite() }
            fn from_count(v: u64) -> Option<Self> { Some(v as $t) }
        }
    )*};
}

impl_scalar_int!(i32, i64, i128);
impl_scalar_float!(f32, f64);

/// Floating-point scalar for distributions, weights and the autoencoder.
pub trait Real: Scalar + Float + FromPrimitive + LinalgScalar + ScalarOperand + Default + std::iter::Sum {
    fn lit(v: f64) -> Self {
        <Self as FromPrimitive>::from_f64(v).expect("f64 literal representable")
    }
}

impl Real for f32 {}
impl Real for f64 {}
