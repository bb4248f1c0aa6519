//! Element type abstraction: f32 for training, f64 for numerical gradient tests.
//!
//! The two hot kernels (`axpy`, `dot`) carry the bulk of every convolution;
//! the f32 implementations dispatch to AVX2+FMA code paths when the CPU
//! supports them. Kernel selection is fixed per process, so results are
//! deterministic for a given machine.

use std::cmp::Ordering;
use std::fmt::{Debug, Display};
use std::ops::{Add, AddAssign, Div, Mul, MulAssign, Neg, Sub, SubAssign};

pub trait Scalar:
    Copy
    + PartialOrd
    + PartialEq
    + Send
    + Sync
    + Debug
    + Display
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Div<Output = Self>
    + Neg<Output = Self>
    + AddAssign
    + SubAssign
    + MulAssign
    + 'static
{
    const ZERO: Self;
    const ONE: Self;
    /// "f32" or "f64"; recorded in artifacts that depend on precision.
    const NAME: &'static str;

    fn from_f64(v: f64) -> Self;
    fn to_f64(self) -> f64;
    fn sqrt(self) -> Self;
    fn tanh(self) -> Self;
    fn exp(self) -> Self;
    fn abs(self) -> Self;
    fn is_finite(self) -> bool;
    fn total_cmp(&self, other: &Self) -> Ordering;

    /// `dst[i] += a * src[i]`
    fn axpy(dst: &mut [Self], src: &[Self], a: Self) {
        for (d, s) in dst.iter_mut().zip(src.iter()) {
            *d += a * *s;
        }
    }

    /// Inner product of two equal-length slices.
    fn dot(a: &[Self], b: &[Self]) -> Self {
        let mut acc = Self::ZERO;
        for (x, y) in a.iter().zip(b.iter()) {
            acc += *x * *y;
        }
        acc
    }

    /// Accelerated 3x3x3 unit-stride convolution (padding == dilation);
    /// accumulates into `out` and returns true when handled. The default has
    /// no fast path, so the generic implementation runs instead.
    #[allow(unused_variables)]
    #[allow(clippy::too_many_arguments)]
    fn conv3_fast_forward(
        input: &[Self],
        in_shape: [usize; 5],
        cout: usize,
        dil: [usize; 3],
        weights: &[Self],
        bias: Option<&[Self]>,
        out: &mut [Self],
    ) -> bool {
        false
    }

    /// Accelerated weight-gradient pass matching `conv3_fast_forward`.
    #[allow(unused_variables)]
    #[allow(clippy::too_many_arguments)]
    fn conv3_fast_backward_weights(
        grad_w: &mut [Self],
        grad_out: &[Self],
        input: &[Self],
        in_shape: [usize; 5],
        cout: usize,
        dil: [usize; 3],
    ) -> bool {
        false
    }
}

impl Scalar for f64 {
    const ZERO: Self = 0.0;
    const ONE: Self = 1.0;
    const NAME: &'static str = "f64";

    #[inline]
    fn from_f64(v: f64) -> Self {
        v
    }
    #[inline]
    fn to_f64(self) -> f64 {
        self
    }
    #[inline]
    fn sqrt(self) -> Self {
        f64::sqrt(self)
    }
    #[inline]
    fn tanh(self) -> Self {
        f64::tanh(self)
    }
    #[inline]
    fn exp(self) -> Self {
        f64::exp(self)
    }
    #[inline]
    fn abs(self) -> Self {
        f64::abs(self)
    }
    #[inline]
    fn is_finite(self) -> bool {
        f64::is_finite(self)
    }
    #[inline]
    fn total_cmp(&self, other: &Self) -> Ordering {
        f64::total_cmp(self, other)
    }
}

impl Scalar for f32 {
    const ZERO: Self = 0.0;
    const ONE: Self = 1.0;
    const NAME: &'static str = "f32";

    #[inline]
    fn from_f64(v: f64) -> Self {
        v as f32
    }
    #[inline]
    fn to_f64(self) -> f64 {
        self as f64
    }
    #[inline]
    fn sqrt(self) -> Self {
        f32::sqrt(self)
    }
    #[inline]
    fn tanh(self) -> Self {
        f32::tanh(self)
    }
    #[inline]
    fn exp(self) -> Self {
        f32::exp(self)
    }
    #[inline]
    fn abs(self) -> Self {
        f32::abs(self)
    }
    #[inline]
    fn is_finite(self) -> bool {
        f32::is_finite(self)
    }
    #[inline]
    fn total_cmp(&self, other: &Self) -> Ordering {
        f32::total_cmp(self, other)
    }

    #[inline]
    fn axpy(dst: &mut [f32], src: &[f32], a: f32) {
        #[cfg(target_arch = "x86_64")]
        if simd::fma_available() {
            // SAFETY: feature presence checked above.
            unsafe { simd::axpy_fma(dst, src, a) };
            return;
        }
        for (d, s) in dst.iter_mut().zip(src.iter()) {
            *d += a * *s;
        }
    }

    #[inline]
    fn dot(a: &[f32], b: &[f32]) -> f32 {
        #[cfg(target_arch = "x86_64")]
        if simd::fma_available() {
            // SAFETY: feature presence checked above.
            return unsafe { simd::dot_fma(a, b) };
        }
        let mut acc = 0.0f32;
        for (x, y) in a.iter().zip(b.iter()) {
            acc += *x * *y;
        }
        acc
    }

    fn conv3_fast_forward(
        input: &[f32],
        in_shape: [usize; 5],
        cout: usize,
        dil: [usize; 3],
        weights: &[f32],
        bias: Option<&[f32]>,
        out: &mut [f32],
    ) -> bool {
        #[cfg(target_arch = "x86_64")]
        if super::kernels::available() {
            super::kernels::conv3_forward(input, in_shape, cout, dil, weights, bias, out);
            return true;
        }
        let _ = (input, in_shape, cout, dil, weights, bias, out);
        false
    }

    fn conv3_fast_backward_weights(
        grad_w: &mut [f32],
        grad_out: &[f32],
        input: &[f32],
        in_shape: [usize; 5],
        cout: usize,
        dil: [usize; 3],
    ) -> bool {
        #[cfg(target_arch = "x86_64")]
        if super::kernels::available() {
            super::kernels::conv3_backward_weights(grad_w, grad_out, input, in_shape, cout, dil);
            return true;
        }
        let _ = (grad_w, grad_out, input, in_shape, cout, dil);
        false
    }
}

#[cfg(target_arch = "x86_64")]
mod simd {
    use std::sync::OnceLock;

    pub fn fma_available() -> bool {
        static AVAILABLE: OnceLock<bool> = OnceLock::new();
        *AVAILABLE.get_or_init(|| {
            std::arch::is_x86_feature_detected!("avx2")
                && std::arch::is_x86_feature_detected!("fma")
        })
    }

    #[target_feature(enable = "avx2,fma")]
    pub unsafe fn axpy_fma(dst: &mut [f32], src: &[f32], a: f32) {
        let n = dst.len().min(src.len());
        for i in 0..n {
            dst[i] = src[i].mul_add(a, dst[i]);
        }
    }

    #[target_feature(enable = "avx2,fma")]
    pub unsafe fn dot_fma(a: &[f32], b: &[f32]) -> f32 {
        let n = a.len().min(b.len());
        let mut acc = [0.0f32; 8];
        let chunks = n / 8;
        for c in 0..chunks {
            let base = c * 8;
            for j in 0..8 {
                acc[j] = a[base + j].mul_add(b[base + j], acc[j]);
            }
        }
        let mut tail = 0.0f32;
        for i in chunks * 8..n {
            tail = a[i].mul_add(b[i], tail);
        }
        ((acc[0] + acc[4]) + (acc[1] + acc[5])) + ((acc[2] + acc[6]) + (acc[3] + acc[7])) + tail
    }
}
