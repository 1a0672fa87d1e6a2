//! Fixed-width single-precision lane vector used by the micro-kernels.
//!
//! The kernels are written against this type only. It is a plain `[f32; VL]`
//! with element-wise operations, which LLVM lowers to 128-bit vector
//! instructions where the target has them and to scalar code otherwise.

use std::ops::{Add, Index, IndexMut, Mul};

/// Lanes per vector: 128-bit registers holding single-precision values.
pub const VL: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq, Default)]
#[repr(C, align(16))]
pub struct LaneVector(pub [f32; VL]);

impl LaneVector {
    pub const ZERO: Self = Self([0.0; VL]);

    #[inline(always)]
    pub fn splat(v: f32) -> Self {
        Self([v; VL])
    }

    /// Loads `VL` consecutive values starting at `src[0]`.
    #[inline(always)]
    pub fn load(src: &[f32]) -> Self {
        let mut out = [0.0; VL];
        out.copy_from_slice(&src[..VL]);
        Self(out)
    }

    /// Gathers `src[offset + j * step]` for every lane `j`.
    #[inline(always)]
    pub fn load_strided(src: &[f32], offset: usize, step: usize) -> Self {
        if step == 1 {
            return Self::load(&src[offset..]);
        }
        let mut out = [0.0; VL];
        for (j, lane) in out.iter_mut().enumerate() {
            *lane = src[offset + j * step];
        }
        Self(out)
    }

    #[inline(always)]
    pub fn store(self, dst: &mut [f32]) {
        dst[..VL].copy_from_slice(&self.0);
    }

    /// Writes lane `j` to `dst[offset + j * step]`.
    #[inline(always)]
    pub fn store_strided(self, dst: &mut [f32], offset: usize, step: usize) {
        for (j, lane) in self.0.iter().enumerate() {
            dst[offset + j * step] = *lane;
        }
    }

    /// `self + a * b` lane-wise, with `b` broadcast.
    ///
    /// Rounded as a multiply followed by an add; `f32::mul_add` falls back to
    /// a libm call on targets built without FMA.
    #[inline(always)]
    pub fn mul_add_scalar(self, a: Self, b: f32) -> Self {
        let mut out = self.0;
        for j in 0..VL {
            out[j] += a.0[j] * b;
        }
        Self(out)
    }

    /// `self + a * b` lane-wise.
    #[inline(always)]
    pub fn mul_add(self, a: Self, b: Self) -> Self {
        let mut out = self.0;
        for j in 0..VL {
            out[j] += a.0[j] * b.0[j];
        }
        Self(out)
    }

    #[inline(always)]
    pub fn lane(self, j: usize) -> f32 {
        self.0[j]
    }

    pub fn to_array(self) -> [f32; VL] {
        self.0
    }
}

impl Add for LaneVector {
    type Output = Self;

    #[inline(always)]
    fn add(self, rhs: Self) -> Self {
        let mut out = self.0;
        for j in 0..VL {
            out[j] += rhs.0[j];
        }
        Self(out)
    }
}

impl Mul for LaneVector {
    type Output = Self;

    #[inline(always)]
    fn mul(self, rhs: Self) -> Self {
        let mut out = self.0;
        for j in 0..VL {
            out[j] *= rhs.0[j];
        }
        Self(out)
    }
}

impl Index<usize> for LaneVector {
    type Output = f32;

    fn index(&self, j: usize) -> &f32 {
        &self.0[j]
    }
}

impl IndexMut<usize> for LaneVector {
    fn index_mut(&mut self, j: usize) -> &mut f32 {
        &mut self.0[j]
    }
}
