use crate::analysis::TrafficCounter;
use crate::error::Result;
use crate::geometry::ConvGeometry;
use crate::tensor::{FilterSet, TensorNchw};

/// Input coordinate of tap `k` for output index `o`, if it lies inside `0..len`.
#[inline]
pub(crate) fn tap(o: usize, k: usize, stride: usize, pad: usize, len: usize) -> Option<usize> {
    (o * stride + k).checked_sub(pad).filter(|&i| i < len)
}

pub fn forward_naive(input: &TensorNchw, filters: &FilterSet, geom: &ConvGeometry) -> Result<TensorNchw> {
    forward_naive_counted(input, filters, geom, &mut crate::analysis::NoTraffic)
}

pub(crate) fn forward_naive_counted<T: TrafficCounter>(
    input: &TensorNchw,
    filters: &FilterSet,
    geom: &ConvGeometry,
    counter: &mut T,
) -> Result<TensorNchw> {
    geom.check_input(input, "input")?;
    geom.check_filters(filters)?;
    let [n, c, ho, wo] = geom.output_shape();
    let (hf, wf, s) = (geom.hf(), geom.wf(), geom.stride());
    let pad = geom.padding();
    let mut out = TensorNchw::zeros(n, c, ho, wo);
    for ni in 0..n {
        for ci in 0..c {
            let plane = input.plane(ni, ci);
            let filt = filters.channel(ci);
            let dst = out.plane_mut(ni, ci);
            for oh in 0..ho {
                for ow in 0..wo {
                    let mut acc = 0.0f64;
                    for kh in 0..hf {
                        for kw in 0..wf {
                            counter.load_input(1);
                            counter.load_filter(1);
                            let (Some(ih), Some(iw)) =
                                (tap(oh, kh, s, pad.top, geom.hi()), tap(ow, kw, s, pad.left, geom.wi()))
                            else {
                                continue;
                            };
                            acc += plane[ih * geom.wi() + iw] as f64 * filt[kh * wf + kw] as f64;
                        }
                    }
                    dst[oh * wo + ow] = acc as f32;
                    counter.store_output(1);
                }
            }
        }
    }
    Ok(out)
}

pub fn backward_naive(dout: &TensorNchw, filters: &FilterSet, geom: &ConvGeometry) -> Result<TensorNchw> {
    geom.check_output(dout, "output gradient")?;
    geom.check_filters(filters)?;
    let [n, c, hi, wi] = geom.input_shape();
    let (ho, wo, hf, wf, s) = (geom.ho(), geom.wo(), geom.hf(), geom.wf(), geom.stride());
    let pad = geom.padding();
    let mut acc = vec![0.0f64; hi * wi];
    let mut out = TensorNchw::zeros(n, c, hi, wi);
    for ni in 0..n {
        for ci in 0..c {
            acc.fill(0.0);
            let src = dout.plane(ni, ci);
            let filt = filters.channel(ci);
            for oh in 0..ho {
                for ow in 0..wo {
                    let g = src[oh * wo + ow] as f64;
                    for kh in 0..hf {
                        let Some(ih) = tap(oh, kh, s, pad.top, hi) else {
                            continue;
                        };
                        for kw in 0..wf {
                            let Some(iw) = tap(ow, kw, s, pad.left, wi) else {
                                continue;
                            };
                            acc[ih * wi + iw] += g * filt[kh * wf + kw] as f64;
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

pub fn wgrad_naive(input: &TensorNchw, dout: &TensorNchw, geom: &ConvGeometry) -> Result<FilterSet> {
    geom.check_input(input, "input")?;
    geom.check_output(dout, "output gradient")?;
    let [n, c, ho, wo] = geom.output_shape();
    let (hi, wi, hf, wf, s) = (geom.hi(), geom.wi(), geom.hf(), geom.wf(), geom.stride());
    let pad = geom.padding();
    let mut out = FilterSet::zeros(c, hf, wf);
    let mut acc = vec![0.0f64; hf * wf];
    for ci in 0..c {
        acc.fill(0.0);
        for ni in 0..n {
            let plane = input.plane(ni, ci);
            let grad = dout.plane(ni, ci);
            for oh in 0..ho {
                for ow in 0..wo {
                    let g = grad[oh * wo + ow] as f64;
                    for kh in 0..hf {
                        let Some(ih) = tap(oh, kh, s, pad.top, hi) else {
                            continue;
                        };
                        for kw in 0..wf {
                            let Some(iw) = tap(ow, kw, s, pad.left, wi) else {
                                continue;
                            };
                            acc[kh * wf + kw] += plane[ih * wi + iw] as f64 * g;
                        }
                    }
                }
            }
        }
        for (kh, row) in acc.chunks(wf).enumerate() {
            for (kw, v) in row.iter().enumerate() {
                out.set(ci, kh, kw, *v as f32);
            }
        }
    }
    Ok(out)
}

/// Forward pass entirely in `f64`, for gradient checks by finite differences.
///
/// `input` is NCHW with the geometry's input shape, `filters` is `[c][hf][wf]`.
pub fn forward_f64(input: &[f64], filters: &[f64], geom: &ConvGeometry) -> Vec<f64> {
    let [n, c, ho, wo] = geom.output_shape();
    let (hi, wi, hf, wf, s) = (geom.hi(), geom.wi(), geom.hf(), geom.wf(), geom.stride());
    let pad = geom.padding();
    assert_eq!(input.len(), n * c * hi * wi);
    assert_eq!(filters.len(), c * hf * wf);
    let mut out = vec![0.0; n * c * ho * wo];
    for ni in 0..n {
        for ci in 0..c {
            let plane = &input[(ni * c + ci) * hi * wi..][..hi * wi];
            let filt = &filters[ci * hf * wf..][..hf * wf];
            let dst = &mut out[(ni * c + ci) * ho * wo..][..ho * wo];
            for oh in 0..ho {
                for ow in 0..wo {
                    let mut acc = 0.0;
                    for kh in 0..hf {
                        let Some(ih) = tap(oh, kh, s, pad.top, hi) else {
                            continue;
                        };
                        for kw in 0..wf {
                            let Some(iw) = tap(ow, kw, s, pad.left, wi) else {
                                continue;
                            };
                            acc += plane[ih * wi + iw] * filt[kh * wf + kw];
                        }
                    }
                    dst[oh * wo + ow] = acc;
                }
            }
        }
    }
    out
}
