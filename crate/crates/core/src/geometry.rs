//! Shape, stride and padding of one depthwise convolution.

use crate::error::{Error, Result};
use crate::tensor::{FilterSet, TensorNchw};

/// Zero padding on each side of the input plane.
///
/// Only `top` and `left` enter the index arithmetic; `bottom` and `right`
/// only decide how many output rows/columns exist.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub struct Padding {
    pub top: usize,
    pub bottom: usize,
    pub left: usize,
    pub right: usize,
}

impl Padding {
    pub const fn new(top: usize, bottom: usize, left: usize, right: usize) -> Self {
        Self {
            top,
            bottom,
            left,
            right,
        }
    }

    pub const fn uniform(p: usize) -> Self {
        Self::new(p, p, p, p)
    }
}

fn output_extent(input: usize, filter: usize, stride: usize, before: usize, after: usize) -> Option<usize> {
    let padded = input.checked_add(before)?.checked_add(after)?;
    if stride == 0 || filter == 0 || padded < filter {
        return None;
    }
    Some((padded - filter) / stride + 1)
}

/// Output height and width of a convolution, using floor division.
pub fn output_shape(
    hi: usize,
    wi: usize,
    hf: usize,
    wf: usize,
    stride: usize,
    padding: Padding,
) -> Result<(usize, usize)> {
    if stride == 0 {
        return Err(Error::InvalidGeometry("stride must be at least 1".into()));
    }
    let ho = output_extent(hi, hf, stride, padding.top, padding.bottom).ok_or_else(|| {
        Error::InvalidGeometry(format!(
            "padded height {} is smaller than filter height {hf}",
            hi.saturating_add(padding.top).saturating_add(padding.bottom)
        ))
    })?;
    let wo = output_extent(wi, wf, stride, padding.left, padding.right).ok_or_else(|| {
        Error::InvalidGeometry(format!(
            "padded width {} is smaller than filter width {wf}",
            wi.saturating_add(padding.left).saturating_add(padding.right)
        ))
    })?;
    Ok((ho, wo))
}

/// Validated description of a depthwise convolution problem.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct ConvGeometry {
    n: usize,
    c: usize,
    hi: usize,
    wi: usize,
    hf: usize,
    wf: usize,
    stride: usize,
    padding: Padding,
    ho: usize,
    wo: usize,
}

impl ConvGeometry {
    /// Builds a geometry from batch, channels, input `(h, w)`, filter `(h, w)`,
    /// stride and padding.
    pub fn new(
        n: usize,
        c: usize,
        input: (usize, usize),
        filter: (usize, usize),
        stride: usize,
        padding: Padding,
    ) -> Result<Self> {
        let (hi, wi) = input;
        let (hf, wf) = filter;
        if n == 0 || c == 0 || hi == 0 || wi == 0 || hf == 0 || wf == 0 {
            return Err(Error::InvalidGeometry(format!(
                "all extents must be positive (n={n} c={c} hi={hi} wi={wi} hf={hf} wf={wf})"
            )));
        }
        if padding.top >= hf || padding.bottom >= hf || padding.left >= wf || padding.right >= wf {
            return Err(Error::InvalidGeometry(format!(
                "padding {padding:?} must be smaller than the {hf}x{wf} filter"
            )));
        }
        let (ho, wo) = output_shape(hi, wi, hf, wf, stride, padding)?;
        let volume = |dims: [usize; 4]| dims.iter().try_fold(1usize, |acc, &d| acc.checked_mul(d));
        let fits = volume([n, c, hi, wi]).is_some()
            && volume([n, c, ho, wo])
                .and_then(|v| v.checked_mul(hf)?.checked_mul(wf))
                .is_some()
            && volume([c, hf, wf, 1]).is_some();
        if !fits {
            return Err(Error::InvalidGeometry("tensor element count overflows usize".into()));
        }
        Ok(Self {
            n,
            c,
            hi,
            wi,
            hf,
            wf,
            stride,
            padding,
            ho,
            wo,
        })
    }

    /// Shorthand for square 3x3 filters with the same padding on every side.
    pub fn square3x3(n: usize, c: usize, size: usize, stride: usize, pad: usize) -> Result<Self> {
        Self::new(n, c, (size, size), (3, 3), stride, Padding::uniform(pad))
    }

    /// Same problem with a different batch size.
    pub fn with_batch(&self, n: usize) -> Result<Self> {
        Self::new(
            n,
            self.c,
            (self.hi, self.wi),
            (self.hf, self.wf),
            self.stride,
            self.padding,
        )
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
    pub fn hi(&self) -> usize {
        self.hi
    }
    #[inline]
    pub fn wi(&self) -> usize {
        self.wi
    }
    #[inline]
    pub fn hf(&self) -> usize {
        self.hf
    }
    #[inline]
    pub fn wf(&self) -> usize {
        self.wf
    }
    #[inline]
    pub fn stride(&self) -> usize {
        self.stride
    }
    #[inline]
    pub fn padding(&self) -> Padding {
        self.padding
    }
    #[inline]
    pub fn ho(&self) -> usize {
        self.ho
    }
    #[inline]
    pub fn wo(&self) -> usize {
        self.wo
    }

    pub fn input_shape(&self) -> [usize; 4] {
        [self.n, self.c, self.hi, self.wi]
    }

    pub fn output_shape(&self) -> [usize; 4] {
        [self.n, self.c, self.ho, self.wo]
    }

    /// Multiply and add operations of one forward pass.
    pub fn flops(&self) -> u64 {
        2 * (self.n * self.c * self.ho * self.wo * self.hf * self.wf) as u64
    }

    pub fn is_3x3(&self) -> bool {
        self.hf == 3 && self.wf == 3
    }

    pub(crate) fn check_input(&self, t: &TensorNchw, what: &str) -> Result<()> {
        check_shape(t, self.input_shape(), what)
    }

    pub(crate) fn check_output(&self, t: &TensorNchw, what: &str) -> Result<()> {
        check_shape(t, self.output_shape(), what)
    }

    pub(crate) fn check_filters(&self, f: &FilterSet) -> Result<()> {
        if f.c() != self.c || f.hf() != self.hf || f.wf() != self.wf {
            return Err(Error::ShapeMismatch(format!(
                "filters are {}x{}x{}, geometry expects {}x{}x{}",
                f.c(),
                f.hf(),
                f.wf(),
                self.c,
                self.hf,
                self.wf
            )));
        }
        Ok(())
    }
}

fn check_shape(t: &TensorNchw, expected: [usize; 4], what: &str) -> Result<()> {
    if t.shape() != expected {
        return Err(Error::ShapeMismatch(format!(
            "{what} has shape {:?}, geometry expects {:?}",
            t.shape(),
            expected
        )));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn same_padding_stride_one_keeps_size() {
        assert_eq!(
            output_shape(112, 112, 3, 3, 1, Padding::uniform(1)).unwrap(),
            (112, 112)
        );
        assert_eq!(output_shape(7, 7, 3, 3, 1, Padding::uniform(1)).unwrap(), (7, 7));
    }

    #[test]
    fn stride_two_halves() {
        assert_eq!(output_shape(112, 112, 3, 3, 2, Padding::uniform(1)).unwrap(), (56, 56));
    }

    #[test]
    fn rejects_empty_output() {
        assert!(output_shape(1, 5, 3, 3, 1, Padding::default()).is_err());
        assert!(output_shape(4, 4, 3, 3, 0, Padding::default()).is_err());
    }

    #[test]
    fn rejects_padding_as_large_as_filter() {
        assert!(ConvGeometry::new(1, 1, (8, 8), (3, 3), 1, Padding::new(0, 3, 0, 0)).is_err());
        assert!(ConvGeometry::new(1, 1, (8, 8), (3, 3), 1, Padding::new(0, 0, 2, 0)).is_ok());
    }

    #[test]
    fn rejects_zero_extents() {
        assert!(ConvGeometry::new(0, 1, (8, 8), (3, 3), 1, Padding::default()).is_err());
        assert!(ConvGeometry::new(1, 1, (8, 0), (3, 3), 1, Padding::default()).is_err());
    }

    proptest! {
        #[test]
        fn construction_accepts_exactly_the_valid_inputs(
            n in 0usize..3, c in 0usize..3,
            hi in 0usize..20, wi in 0usize..20,
            hf in 0usize..6, wf in 0usize..6,
            s in 0usize..4,
            pt in 0usize..6, pb in 0usize..6, pl in 0usize..6, pr in 0usize..6,
        ) {
            let valid = n > 0 && c > 0 && hi > 0 && wi > 0 && hf > 0 && wf > 0 && s > 0
                && pt < hf && pb < hf && pl < wf && pr < wf
                && hi + pt + pb >= hf && wi + pl + pr >= wf;
            let g = ConvGeometry::new(n, c, (hi, wi), (hf, wf), s, Padding::new(pt, pb, pl, pr));
            prop_assert_eq!(g.is_ok(), valid);
            if let Ok(g) = g {
                prop_assert!(g.ho() >= 1 && g.wo() >= 1);
                // largest output index still starts inside the padded extent
                prop_assert!((g.ho() - 1) * s + hf <= hi + pt + pb);
                prop_assert!(g.ho() * s + hf > hi + pt + pb);
                prop_assert!((g.wo() - 1) * s + wf <= wi + pl + pr);
                prop_assert!(g.wo() * s + wf > wi + pl + pr);
            }
        }
    }
}
