//! Lowered (im2col / col2im) baselines built on a plain matrix product.

use super::naive::tap;
use crate::error::{Error, Result};
use crate::geometry::ConvGeometry;
use crate::tensor::{FilterSet, TensorNchw};

/// Per-channel Toeplitz matrices: `c` blocks of `mm x nm`, where
/// `mm = hf * wf` and `nm = n * ho * wo`.
#[derive(Debug, Clone, PartialEq)]
pub struct Im2colMatrix {
    c: usize,
    mm: usize,
    nm: usize,
    data: Vec<f32>,
}

impl Im2colMatrix {
    pub fn zeros(c: usize, mm: usize, nm: usize) -> Self {
        Self {
            c,
            mm,
            nm,
            data: vec![0.0; c * mm * nm],
        }
    }

    pub fn c(&self) -> usize {
        self.c
    }
    pub fn mm(&self) -> usize {
        self.mm
    }
    pub fn nm(&self) -> usize {
        self.nm
    }
    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn channel(&self, c: usize) -> &[f32] {
        let len = self.mm * self.nm;
        &self.data[c * len..(c + 1) * len]
    }

    pub fn channel_mut(&mut self, c: usize) -> &mut [f32] {
        let len = self.mm * self.nm;
        &mut self.data[c * len..(c + 1) * len]
    }
}

/// `a (m x k) * b (k x n)`, row-major, accumulated in `f64`.
pub fn matmul(a: &[f32], b: &[f32], m: usize, k: usize, n: usize) -> Vec<f32> {
    assert_eq!(a.len(), m * k);
    assert_eq!(b.len(), k * n);
    let mut out = vec![0.0f32; m * n];
    let mut acc = vec![0.0f64; n];
    for i in 0..m {
        acc.fill(0.0);
        for p in 0..k {
            let x = a[i * k + p] as f64;
            for (dst, &y) in acc.iter_mut().zip(&b[p * n..(p + 1) * n]) {
                *dst += x * y as f64;
            }
        }
        for (o, v) in out[i * n..(i + 1) * n].iter_mut().zip(&acc) {
            *o = *v as f32;
        }
    }
    out
}

/// Lowers `input` so that column `(n, ho, wo)` of channel `c` holds the
/// `hf x wf` window feeding that output, zeros where the window hits padding.
pub fn im2col(input: &TensorNchw, geom: &ConvGeometry) -> Result<Im2colMatrix> {
    geom.check_input(input, "input")?;
    let [n, c, ho, wo] = geom.output_shape();
    let (hi, wi, hf, wf, s) = (geom.hi(), geom.wi(), geom.hf(), geom.wf(), geom.stride());
    let pad = geom.padding();
    let nm = n * ho * wo;
    let mut m = Im2colMatrix::zeros(c, hf * wf, nm);
    for ci in 0..c {
        let block = m.channel_mut(ci);
        for ni in 0..n {
            let plane = input.plane(ni, ci);
            for kh in 0..hf {
                for kw in 0..wf {
                    let row = &mut block[(kh * wf + kw) * nm + ni * ho * wo..][..ho * wo];
                    for oh in 0..ho {
                        let Some(ih) = tap(oh, kh, s, pad.top, hi) else {
                            continue;
                        };
                        for ow in 0..wo {
                            if let Some(iw) = tap(ow, kw, s, pad.left, wi) {
                                row[oh * wo + ow] = plane[ih * wi + iw];
                            }
                        }
                    }
                }
            }
        }
    }
    Ok(m)
}

/// Scatter-adds every column back onto the input plane it was read from.
pub fn col2im(cols: &Im2colMatrix, geom: &ConvGeometry) -> Result<TensorNchw> {
    let [n, c, hi, wi] = geom.input_shape();
    let (ho, wo, hf, wf, s) = (geom.ho(), geom.wo(), geom.hf(), geom.wf(), geom.stride());
    let nm = n * ho * wo;
    if cols.c() != c || cols.mm() != hf * wf || cols.nm() != nm {
        return Err(Error::ShapeMismatch(format!(
            "column matrix is {}x{}x{}, geometry expects {}x{}x{}",
            cols.c(),
            cols.mm(),
            cols.nm(),
            c,
            hf * wf,
            nm
        )));
    }
    let pad = geom.padding();
    let mut out = TensorNchw::zeros(n, c, hi, wi);
    let mut acc = vec![0.0f64; hi * wi];
    for ci in 0..c {
        let block = cols.channel(ci);
        for ni in 0..n {
            acc.fill(0.0);
            for kh in 0..hf {
                for kw in 0..wf {
                    let row = &block[(kh * wf + kw) * nm + ni * ho * wo..][..ho * wo];
                    for oh in 0..ho {
                        let Some(ih) = tap(oh, kh, s, pad.top, hi) else {
                            continue;
                        };
                        for ow in 0..wo {
                            if let Some(iw) = tap(ow, kw, s, pad.left, wi) {
                                acc[ih * wi + iw] += row[oh * wo + ow] as f64;
                            }
                        }
                    }
                }
            }
            for (d, a) in out.plane_mut(ni, ci).iter_mut().zip(&acc) {
                *d = *a as f32;
            }
        }
    }
    Ok(out)
}

/// Channel `c` of an NCHW tensor as one row of `n * h * w` values.
fn channel_row(t: &TensorNchw, c: usize) -> Vec<f32> {
    let mut row = Vec::with_capacity(t.n() * t.plane_len());
    for ni in 0..t.n() {
        row.extend_from_slice(t.plane(ni, c));
    }
    row
}

pub fn forward_gemm_baseline(input: &TensorNchw, filters: &FilterSet, geom: &ConvGeometry) -> Result<TensorNchw> {
    geom.check_filters(filters)?;
    let cols = im2col(input, geom)?;
    let [n, c, ho, wo] = geom.output_shape();
    let (mm, nm) = (cols.mm(), cols.nm());
    let mut out = TensorNchw::zeros(n, c, ho, wo);
    for ci in 0..c {
        // (1 x mm) * (mm x nm)
        let row = matmul(filters.channel(ci), cols.channel(ci), 1, mm, nm);
        for (ni, chunk) in row.chunks(ho * wo).enumerate() {
            out.plane_mut(ni, ci).copy_from_slice(chunk);
        }
    }
    Ok(out)
}

pub fn backward_gemm_baseline(dout: &TensorNchw, filters: &FilterSet, geom: &ConvGeometry) -> Result<TensorNchw> {
    geom.check_output(dout, "output gradient")?;
    geom.check_filters(filters)?;
    let c = geom.c();
    let mm = geom.hf() * geom.wf();
    let nm = geom.n() * geom.ho() * geom.wo();
    let mut cols = Im2colMatrix::zeros(c, mm, nm);
    for ci in 0..c {
        // (mm x 1) * (1 x nm)
        let block = matmul(filters.channel(ci), &channel_row(dout, ci), mm, 1, nm);
        cols.channel_mut(ci).copy_from_slice(&block);
    }
    col2im(&cols, geom)
}

pub fn wgrad_gemm_baseline(input: &TensorNchw, dout: &TensorNchw, geom: &ConvGeometry) -> Result<FilterSet> {
    geom.check_output(dout, "output gradient")?;
    let cols = im2col(input, geom)?;
    let (mm, nm) = (cols.mm(), cols.nm());
    let mut out = Vec::with_capacity(geom.c() * mm);
    for ci in 0..geom.c() {
        // (mm x nm) * (nm x 1)
        out.extend(matmul(cols.channel(ci), &channel_row(dout, ci), mm, nm, 1));
    }
    FilterSet::from_vec(geom.c(), geom.hf(), geom.wf(), out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::reference::{backward_naive, forward_naive, wgrad_naive};

    #[test]
    fn matmul_small() {
        let a = [1.0, 2.0, 3.0, 4.0, 5.0, 6.0];
        let b = [7.0, 8.0, 9.0, 10.0, 11.0, 12.0];
        assert_eq!(matmul(&a, &b, 2, 3, 2), vec![58.0, 64.0, 139.0, 154.0]);
    }

    #[test]
    fn im2col_window_columns() {
        let g = ConvGeometry::square3x3(1, 1, 3, 1, 1).unwrap();
        let t = TensorNchw::from_vec(1, 1, 3, 3, (1..=9).map(|v| v as f32).collect()).unwrap();
        let m = im2col(&t, &g).unwrap();
        assert_eq!((m.mm(), m.nm()), (9, 9));
        // column of the centre output is the whole grid
        let centre: Vec<f32> = (0..9).map(|r| m.channel(0)[r * 9 + 4]).collect();
        assert_eq!(centre, t.data());
        // top-left output sees padding in its first row and column
        let corner: Vec<f32> = (0..9).map(|r| m.channel(0)[r * 9]).collect();
        assert_eq!(corner, vec![0.0, 0.0, 0.0, 0.0, 1.0, 2.0, 0.0, 4.0, 5.0]);
    }

    #[test]
    fn baselines_replay_oracle_examples() {
        let g = ConvGeometry::square3x3(1, 1, 3, 1, 1).unwrap();
        let grid = TensorNchw::from_vec(1, 1, 3, 3, (1..=9).map(|v| v as f32).collect()).unwrap();
        let ones = FilterSet::from_vec(1, 3, 3, vec![1.0; 9]).unwrap();
        let centre = FilterSet::from_fn(1, 3, 3, |_, y, x| if (y, x) == (1, 1) { 1.0 } else { 0.0 });
        let zero = FilterSet::zeros(1, 3, 3);
        for f in [&ones, &centre, &zero] {
            assert_eq!(
                forward_gemm_baseline(&grid, f, &g).unwrap(),
                forward_naive(&grid, f, &g).unwrap()
            );
            assert_eq!(
                backward_gemm_baseline(&grid, f, &g).unwrap(),
                backward_naive(&grid, f, &g).unwrap()
            );
        }
        let mut delta = TensorNchw::zeros(1, 1, 3, 3);
        delta.set(0, 0, 0, 0, 1.0);
        assert_eq!(
            backward_gemm_baseline(&delta, &ones, &g).unwrap(),
            backward_naive(&delta, &ones, &g).unwrap()
        );
        let all_ones = TensorNchw::from_vec(1, 1, 3, 3, vec![1.0; 9]).unwrap();
        assert_eq!(
            wgrad_gemm_baseline(&all_ones, &all_ones, &g).unwrap().data(),
            &[4.0, 6.0, 4.0, 6.0, 9.0, 6.0, 4.0, 6.0, 4.0]
        );
        assert_eq!(
            wgrad_gemm_baseline(&grid, &TensorNchw::zeros(1, 1, 3, 3), &g).unwrap(),
            wgrad_naive(&grid, &TensorNchw::zeros(1, 1, 3, 3), &g).unwrap()
        );
        delta = TensorNchw::zeros(1, 1, 3, 3);
        delta.set(0, 0, 1, 1, 1.0);
        assert_eq!(wgrad_gemm_baseline(&grid, &delta, &g).unwrap().data(), grid.data());
    }
}
