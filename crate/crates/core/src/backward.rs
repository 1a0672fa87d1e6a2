//! Input-gradient pass.
//!
//! At stride 1 the input gradient is a forward convolution of the output
//! gradient with the filter turned by 180 degrees and padding `hf - 1 - p`,
//! so it reuses the forward kernels. At stride 2 each input column takes
//! taps by parity: with top/left padding 1, even column `2m` gets
//! `dO[m] * F[.,1]` and odd column `2m+1` gets `dO[m] * F[.,2] + dO[m+1] * F[.,0]`,
//! and rows follow the same rule. The kernel tiles the input gradient, so
//! tiles never write into each other.

use std::ops::Deref;

use crate::analysis::{NoTraffic, TrafficCounter};
use crate::error::{Error, Result};
use crate::forward::{
    self, check_supported, check_tile, filter_rows, load_window, splat_filter, tile_table, PlaneIn, PlaneOut, KF,
};
use crate::geometry::{ConvGeometry, Padding};
use crate::lanes::{LaneVector, VL};
use crate::parallel::{self, OutputLayout, PassKind, PlaneRows};
use crate::reference;
use crate::schedule::{backward_s2_schedule, Block, PlaneSchedule, TilePolicy};
use crate::tensor::{FilterSet, TensorNchw};
use crate::ExecConfig;

/// A filter set turned by 180 degrees in both spatial dimensions.
#[derive(Debug, Clone, PartialEq)]
pub struct RotatedFilterSet(FilterSet);

impl RotatedFilterSet {
    pub fn into_inner(self) -> FilterSet {
        self.0
    }
}

impl Deref for RotatedFilterSet {
    type Target = FilterSet;

    fn deref(&self) -> &FilterSet {
        &self.0
    }
}

pub fn rotate_filter_180(filters: &FilterSet) -> RotatedFilterSet {
    let (hf, wf) = (filters.hf(), filters.wf());
    RotatedFilterSet(FilterSet::from_fn(filters.c(), hf, wf, |c, y, x| {
        filters.get(c, hf - 1 - y, wf - 1 - x)
    }))
}

/// Geometry of the stride-1 input gradient seen as a forward pass over the
/// output gradient.
fn transposed_geometry(geom: &ConvGeometry) -> Result<ConvGeometry> {
    let p = geom.padding();
    let (hf, wf) = (geom.hf(), geom.wf());
    let flipped = Padding::new(hf - 1 - p.top, hf - 1 - p.bottom, wf - 1 - p.left, wf - 1 - p.right);
    let t = ConvGeometry::new(geom.n(), geom.c(), (geom.ho(), geom.wo()), (hf, wf), 1, flipped)?;
    debug_assert_eq!((t.ho(), t.wo()), (geom.hi(), geom.wi()));
    Ok(t)
}

/// Stride-1 input gradient through the forward kernels.
pub fn backward_direct_s1(
    dout: &TensorNchw,
    filters: &FilterSet,
    geom: &ConvGeometry,
    cfg: &ExecConfig,
) -> Result<TensorNchw> {
    Ok(backward_s1_counted::<NoTraffic>(dout, filters, geom, cfg)?.0)
}

fn backward_s1_counted<T: TrafficCounter>(
    dout: &TensorNchw,
    filters: &FilterSet,
    geom: &ConvGeometry,
    cfg: &ExecConfig,
) -> Result<(TensorNchw, T)> {
    check_supported(geom)?;
    if geom.stride() != 1 {
        return Err(Error::Unsupported(format!(
            "stride {} is not the stride-1 pass",
            geom.stride()
        )));
    }
    geom.check_output(dout, "output gradient")?;
    geom.check_filters(filters)?;
    let t = transposed_geometry(geom)?;
    forward::forward_counted(dout, &rotate_filter_180(filters), &t, cfg)
}

/// Taps reaching input index `i` at stride 2: pairs `(o, k)` with
/// `2 * o + k == i + pad` and `o < len_o`.
pub fn parity_taps(i: usize, pad: usize, len_o: usize) -> impl Iterator<Item = (usize, usize)> {
    (0..KF).filter_map(move |k| {
        let shifted = (i + pad).checked_sub(k)?;
        (shifted % 2 == 0 && shifted / 2 < len_o).then_some((shifted / 2, k))
    })
}

struct BackwardArgs<'a> {
    dout: PlaneIn<'a>,
    filt: [[f32; KF]; KF],
    fv: [[LaneVector; KF]; KF],
}

type TileFn<T> = fn(&BackwardArgs<'_>, &mut PlaneOut<'_>, usize, usize, &mut T);

/// `HR x (2 * WP * VL)` block of the input gradient at `(hi0, wi0)`, `wi0`
/// even, top/left padding 1.
#[inline(always)]
fn backward_s2_tile<const HR: usize, const WN: usize, T: TrafficCounter>(
    a: &BackwardArgs<'_>,
    out: &mut PlaneOut<'_>,
    hi0: usize,
    wi0: usize,
    counter: &mut T,
) {
    // WN vectors per row, split evenly between even and odd columns
    let mut even = [[LaneVector::ZERO; WN]; HR];
    let mut odd = [[LaneVector::ZERO; WN]; HR];
    let wp = WN / 2;
    let m0 = (wi0 / 2) as isize;
    let len = wp * VL + 1;
    let mut buf = [0.0f32; forward::MAX_WINDOW];
    for ho in hi0 / 2..=(hi0 + HR) / 2 {
        counter.load_input(len);
        let Some(row) = a.dout.row(ho as isize) else { continue };
        load_window(row, m0, &mut buf[..len]);
        let mut here = [LaneVector::ZERO; WN];
        let mut next = [LaneVector::ZERO; WN];
        for w in 0..wp {
            here[w] = LaneVector::load(&buf[w * VL..]);
            next[w] = LaneVector::load(&buf[w * VL + 1..]);
        }
        for (kh, f) in a.fv.iter().enumerate() {
            // input row 2*ho - 1 + kh
            let Some(h) = (2 * ho + kh).checked_sub(1 + hi0).filter(|&h| h < HR) else {
                continue;
            };
            for w in 0..wp {
                even[h][w] = even[h][w].mul_add(here[w], f[1]);
                odd[h][w] = odd[h][w].mul_add(here[w], f[2]).mul_add(next[w], f[0]);
            }
        }
    }
    for h in 0..HR {
        let dst = out.at(hi0 + h, wi0);
        for w in 0..wp {
            even[h][w].store_strided(dst, 2 * w * VL, 2);
            odd[h][w].store_strided(dst, 2 * w * VL + 1, 2);
        }
    }
    counter.store_output(HR * WN * VL);
}

/// Per-element stride-2 path for any padding, by the parity rule.
fn backward_s2_edge<T: TrafficCounter>(
    a: &BackwardArgs<'_>,
    pad: Padding,
    out: &mut PlaneOut<'_>,
    block: &Block,
    counter: &mut T,
) {
    for ih in block.row0..block.row0 + block.rows {
        let dst = out.at(ih, 0);
        for iw in block.col0..block.col0 + block.cols {
            let mut acc = 0.0f32;
            let mut taps = 0;
            for (oh, kh) in parity_taps(ih, pad.top, a.dout.h) {
                let row = a.dout.row(oh as isize).expect("tap row is inside the plane");
                for (ow, kw) in parity_taps(iw, pad.left, a.dout.w) {
                    acc += row[ow] * a.filt[kh][kw];
                    taps += 1;
                }
            }
            counter.load_input(taps);
            dst[iw] = acc;
        }
    }
    counter.store_output(block.rows * block.cols);
}

fn tile_fn<T: TrafficCounter>(hr: usize, wn: usize) -> Option<TileFn<T>> {
    if !wn.is_multiple_of(2) {
        return None;
    }
    tile_table!(backward_s2_tile, [T], hr, wn)
}

fn backward_s2_plane<T: TrafficCounter>(
    a: &BackwardArgs<'_>,
    pad: Padding,
    schedule: &PlaneSchedule,
    out: &mut PlaneOut<'_>,
    counter: &mut T,
) {
    counter.load_filter(KF * KF);
    let rows = out.row0..out.row0 + out.data.len() / out.w.max(1);
    for block in schedule.blocks_in(rows) {
        if block.tiled {
            let f = tile_fn::<T>(block.rows, block.cols / VL).expect("schedule only emits compiled tiles");
            f(a, out, block.row0, block.col0, counter);
        } else {
            backward_s2_edge(a, pad, out, block, counter);
        }
    }
}

/// Stride-2 input gradient. Top/left padding 1 runs the parity kernel,
/// other paddings go through [`reference::backward_naive`].
pub fn backward_direct_s2(
    dout: &TensorNchw,
    filters: &FilterSet,
    geom: &ConvGeometry,
    cfg: &ExecConfig,
) -> Result<TensorNchw> {
    Ok(backward_s2_counted::<NoTraffic>(dout, filters, geom, cfg)?.0)
}

fn backward_s2_counted<T: TrafficCounter>(
    dout: &TensorNchw,
    filters: &FilterSet,
    geom: &ConvGeometry,
    cfg: &ExecConfig,
) -> Result<(TensorNchw, T)> {
    check_supported(geom)?;
    if geom.stride() != 2 {
        return Err(Error::Unsupported(format!(
            "stride {} is not the stride-2 pass",
            geom.stride()
        )));
    }
    check_tile(cfg.tile)?;
    if let TilePolicy::Fixed(t) = cfg.tile {
        if t.wr % (2 * VL) != 0 {
            return Err(Error::Unsupported(format!(
                "stride-2 backward tiles need a width divisible by {}, got {t}",
                2 * VL
            )));
        }
    }
    geom.check_output(dout, "output gradient")?;
    geom.check_filters(filters)?;
    let pad = geom.padding();
    if pad.top != 1 || pad.left != 1 {
        log::info!("backward: padding {pad:?} is outside the parity kernel's range, using the naive pass");
        return Ok((reference::backward_naive(dout, filters, geom)?, T::default()));
    }

    let schedule = backward_s2_schedule(geom.hi(), geom.wi(), cfg.tile);
    let threads = cfg.threads();
    let cb = cfg.cb.unwrap_or_else(|| parallel::default_cb(geom, threads));
    let plan = parallel::plan(geom, PassKind::Backward, threads, cb, geom.hi(), schedule.row_quantum);
    let layout = OutputLayout {
        batch: geom.n(),
        channels: geom.c(),
        rows: geom.hi(),
        cols: geom.wi(),
    };
    let mut din = TensorNchw::zeros(geom.n(), geom.c(), geom.hi(), geom.wi());
    let tallies = parallel::execute(&plan, layout, din.data_mut(), |_, views: &mut [PlaneRows<'_>]| {
        let mut counter = T::default();
        for v in views.iter_mut() {
            let filt = filter_rows(filters.channel(v.c));
            let a = BackwardArgs {
                dout: PlaneIn {
                    data: dout.plane(v.n, v.c),
                    h: geom.ho(),
                    w: geom.wo(),
                },
                fv: splat_filter(&filt),
                filt,
            };
            let mut po = PlaneOut {
                data: v.data,
                row0: v.row0,
                w: geom.wi(),
            };
            backward_s2_plane(&a, pad, &schedule, &mut po, &mut counter);
        }
        Ok(counter)
    })?;
    let mut total = T::default();
    for t in tallies {
        total.merge(t);
    }
    Ok((din, total))
}

/// Input gradient for a 3x3 filter at stride 1 or 2.
pub fn backward_direct(
    dout: &TensorNchw,
    filters: &FilterSet,
    geom: &ConvGeometry,
    cfg: &ExecConfig,
) -> Result<TensorNchw> {
    Ok(backward_counted::<NoTraffic>(dout, filters, geom, cfg)?.0)
}

pub(crate) fn backward_counted<T: TrafficCounter>(
    dout: &TensorNchw,
    filters: &FilterSet,
    geom: &ConvGeometry,
    cfg: &ExecConfig,
) -> Result<(TensorNchw, T)> {
    check_supported(geom)?;
    if geom.stride() == 1 {
        backward_s1_counted(dout, filters, geom, cfg)
    } else {
        backward_s2_counted(dout, filters, geom, cfg)
    }
}
