//! Scalar abstraction so the tape can run in 64-bit (training, gradient
//! checks) or 32-bit (faster training) precision.

use std::fmt::Debug;
use std::iter::Sum;
use std::ops::{Add, AddAssign, Div, Mul, MulAssign, Neg, Sub, SubAssign};

pub trait Real:
    Copy
    + Debug
    + Default
    + PartialOrd
    + Send
    + Sync
    + 'static
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Div<Output = Self>
    + Neg<Output = Self>
    + AddAssign
    + SubAssign
    + MulAssign
    + Sum
{
    const ZERO: Self;
    const ONE: Self;
    fn from_f64(v: f64) -> Self;
    fn to_f64(self) -> f64;
    fn exp(self) -> Self;
    fn ln(self) -> Self;
    fn tanh(self) -> Self;
    fn sqrt(self) -> Self;
    fn is_finite(self) -> bool;

    /// `c = alpha * op(a) * op(b) + beta * c` on row-major buffers, where
    /// `op(a)` is `m × k` and `op(b)` is `k × n`.
    #[allow(clippy::too_many_arguments)]
    fn gemm(m: usize, k: usize, n: usize, alpha: Self, a: &[Self], ta: bool, b: &[Self], tb: bool, beta: Self, c: &mut [Self]);

    /// Element-wise logistic function.
    fn sigmoid_slice(x: &[Self], out: &mut [Self]) {
        for (o, v) in out.iter_mut().zip(x) {
            *o = if *v >= Self::ZERO {
                Self::ONE / (Self::ONE + (-*v).exp())
            } else {
                let e = v.exp();
                e / (Self::ONE + e)
            };
        }
    }

    fn tanh_slice(x: &[Self], out: &mut [Self]) {
        for (o, v) in out.iter_mut().zip(x) {
            *o = v.tanh();
        }
    }

    fn max(self, other: Self) -> Self {
        if other > self {
            other
        } else {
            self
        }
    }
}

macro_rules! impl_real {
    ($t:ty, $gemm:path $(, $extra:item)*) => {
        impl Real for $t {
            const ZERO: Self = 0.0;
            const ONE: Self = 1.0;
            fn from_f64(v: f64) -> Self {
                v as $t
            }
            fn to_f64(self) -> f64 {
                self as f64
            }
            fn exp(self) -> Self {
                <$t>::exp(self)
            }
            fn ln(self) -> Self {
                <$t>::ln(self)
            }
            fn tanh(self) -> Self {
                <$t>::tanh(self)
            }
            fn sqrt(self) -> Self {
                <$t>::sqrt(self)
            }
            fn is_finite(self) -> bool {
                <$t>::is_finite(self)
            }
            fn gemm(m: usize, k: usize, n: usize, alpha: Self, a: &[Self], ta: bool, b: &[Self], tb: bool, beta: Self, c: &mut [Self]) {
                assert!(a.len() >= m * k && b.len() >= k * n && c.len() >= m * n, "gemm operand too small");
                if m == 0 || n == 0 {
                    return;
                }
                // `a` is stored as m×k, or k×m when transposed; likewise `b`.
                let (rsa, csa) = if ta { (1, m as isize) } else { (k as isize, 1) };
                let (rsb, csb) = if tb { (1, k as isize) } else { (n as isize, 1) };
                // SAFETY: the asserts above guarantee every index reached through
                // these strides lies inside the slices.
                unsafe {
                    $gemm(m, k, n, alpha, a.as_ptr(), rsa, csa, b.as_ptr(), rsb, csb, beta, c.as_mut_ptr(), n as isize, 1);
                }
            }
            $($extra)*
        }
    };
}

impl_real!(f64, matrixmultiply::dgemm);
impl_real!(
    f32,
    matrixmultiply::sgemm,
    fn sigmoid_slice(x: &[f32], out: &mut [f32]) {
        for (o, v) in out.iter_mut().zip(x) {
            *o = 1.0 / (1.0 + fast_exp(-*v));
        }
    },
    fn tanh_slice(x: &[f32], out: &mut [f32]) {
        for (o, v) in out.iter_mut().zip(x) {
            // tanh(v) = 1 - 2 / (exp(2v) + 1); accurate to a few ulps of 1.
            *o = 1.0 - 2.0 / (fast_exp(2.0 * *v) + 1.0);
        }
    }
);

/// Branch-free `exp` for f32 that the compiler can vectorize: range reduction
/// by ln 2 and a degree-6 polynomial, relative error below 2e-7 on the
/// clamped domain.
#[inline(always)]
fn fast_exp(x: f32) -> f32 {
    let x = x.clamp(-87.0, 88.0);
    // Round to nearest by adding and removing 1.5 * 2^23; vectorizes where
    // `round` would not.
    let n = (x * std::f32::consts::LOG2_E + 12_582_912.0) - 12_582_912.0;
    let r = x - n * 0.693_145_75 - n * 1.428_606_8e-6;
    let p = 1.0
        + r * (1.0 + r * (0.5 + r * (0.166_666_67 + r * (0.041_666_668 + r * (0.008_333_452 + r * 0.001_388_89)))));
    p * f32::from_bits(((n as i32 + 127) as u32) << 23)
}
