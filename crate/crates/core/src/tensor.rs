//! Dense single-precision containers for feature maps and per-channel filters.

use crate::error::{Error, Result};

/// A 4-D `f32` tensor stored in NCHW order.
#[derive(Debug, Clone, PartialEq)]
pub struct TensorNchw {
    n: usize,
    c: usize,
    h: usize,
    w: usize,
    data: Vec<f32>,
}

impl TensorNchw {
    pub fn zeros(n: usize, c: usize, h: usize, w: usize) -> Self {
        Self {
            n,
            c,
            h,
            w,
            data: vec![0.0; n * c * h * w],
        }
    }

    pub fn from_vec(n: usize, c: usize, h: usize, w: usize, data: Vec<f32>) -> Result<Self> {
        let expected = n * c * h * w;
        if data.len() != expected {
            return Err(Error::ShapeMismatch(format!(
                "tensor {n}x{c}x{h}x{w} needs {expected} elements, got {}",
                data.len()
            )));
        }
        Ok(Self { n, c, h, w, data })
    }

    pub fn from_fn(
        n: usize,
        c: usize,
        h: usize,
        w: usize,
        mut f: impl FnMut(usize, usize, usize, usize) -> f32,
    ) -> Self {
        let mut data = Vec::with_capacity(n * c * h * w);
        for ni in 0..n {
            for ci in 0..c {
                for hi in 0..h {
                    for wi in 0..w {
                        data.push(f(ni, ci, hi, wi));
                    }
                }
            }
        }
        Self { n, c, h, w, data }
    }

    #[inline]
    pub fn n(&self) -> usize {
        self.n
    }
    #[inline]
    pub fn c(&self) -> usize {
        self.c
    }
    #[inline]
    pub fn h(&self) -> usize {
        self.h
    }
    #[inline]
    pub fn w(&self) -> usize {
        self.w
    }

    pub fn shape(&self) -> [usize; 4] {
        [self.n, self.c, self.h, self.w]
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f32] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f32> {
        self.data
    }

    /// Flat offset of element `(n, c, h, w)`.
    #[inline]
    pub fn offset(&self, n: usize, c: usize, h: usize, w: usize) -> usize {
        ((n * self.c + c) * self.h + h) * self.w + w
    }

    /// Inverse of [`offset`](Self::offset).
    pub fn unflatten(&self, index: usize) -> (usize, usize, usize, usize) {
        let w = index % self.w;
        let rest = index / self.w;
        let h = rest % self.h;
        let rest = rest / self.h;
        (rest / self.c, rest % self.c, h, w)
    }

    #[inline]
    pub fn get(&self, n: usize, c: usize, h: usize, w: usize) -> f32 {
        self.data[self.offset(n, c, h, w)]
    }

    #[inline]
    pub fn set(&mut self, n: usize, c: usize, h: usize, w: usize, value: f32) {
        let i = self.offset(n, c, h, w);
        self.data[i] = value;
    }

    pub fn plane_len(&self) -> usize {
        self.h * self.w
    }

    /// The `h x w` spatial plane of sample `n`, channel `c`.
    pub fn plane(&self, n: usize, c: usize) -> &[f32] {
        let len = self.plane_len();
        let start = (n * self.c + c) * len;
        &self.data[start..start + len]
    }

    pub fn plane_mut(&mut self, n: usize, c: usize) -> &mut [f32] {
        let len = self.plane_len();
        let start = (n * self.c + c) * len;
        &mut self.data[start..start + len]
    }
}

/// One `hf x wf` filter per channel, stored as `[c][hf][wf]`.
#[derive(Debug, Clone, PartialEq)]
pub struct FilterSet {
    c: usize,
    hf: usize,
    wf: usize,
    data: Vec<f32>,
}

impl FilterSet {
    pub fn zeros(c: usize, hf: usize, wf: usize) -> Self {
        Self {
            c,
            hf,
            wf,
            data: vec![0.0; c * hf * wf],
        }
    }

    pub fn from_vec(c: usize, hf: usize, wf: usize, data: Vec<f32>) -> Result<Self> {
        let expected = c * hf * wf;
        if data.len() != expected {
            return Err(Error::ShapeMismatch(format!(
                "filter set {c}x{hf}x{wf} needs {expected} elements, got {}",
                data.len()
            )));
        }
        Ok(Self { c, hf, wf, data })
    }

    pub fn from_fn(c: usize, hf: usize, wf: usize, mut f: impl FnMut(usize, usize, usize) -> f32) -> Self {
        let mut data = Vec::with_capacity(c * hf * wf);
        for ci in 0..c {
            for y in 0..hf {
                for x in 0..wf {
                    data.push(f(ci, y, x));
                }
            }
        }
        Self { c, hf, wf, data }
    }

    #[inline]
    pub fn c(&self) -> usize {
        self.c
    }
    #[inline]
    pub fn hf(&self) -> usize {
        self.hf
    }
    #[inline]
    pub fn wf(&self) -> usize {
        self.wf
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f32] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f32> {
        self.data
    }

    #[inline]
    pub fn get(&self, c: usize, y: usize, x: usize) -> f32 {
        self.data[(c * self.hf + y) * self.wf + x]
    }

    #[inline]
    pub fn set(&mut self, c: usize, y: usize, x: usize, value: f32) {
        let i = (c * self.hf + y) * self.wf + x;
        self.data[i] = value;
    }

    pub fn channel(&self, c: usize) -> &[f32] {
        let len = self.hf * self.wf;
        &self.data[c * len..(c + 1) * len]
    }
}
