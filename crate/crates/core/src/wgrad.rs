//! Weight-gradient pass.
//!
//! Each channel owns one [`LaneAccumulator`]: three vectors, one per filter
//! row, with lane `q` collecting `dF[row][q]`. A kernel keeps an `HR x WR`
//! block of the output gradient in vectors, then walks the input rows the
//! block touches. Every output position `x` of the block turns its input
//! row into one vector of the three taps it sees (lane 3 zero) and adds it,
//! scaled by `dO[h][x]`, to the accumulator row of the filter row involved.
//! Channels run in parallel; within a channel samples and tiles are taken in
//! a fixed order, so results do not depend on the thread count.

use crate::analysis::{NoTraffic, TrafficCounter};
use crate::error::{Error, Result};
use crate::forward::{check_tile, load_window, tile_table, PlaneIn, KF, MAX_WINDOW};
use crate::geometry::ConvGeometry;
use crate::lanes::{LaneVector, VL};
use crate::parallel::{self, OutputLayout, PassKind, PlaneRows};
use crate::reference;
use crate::schedule::{wgrad_schedule, Block, PlaneSchedule, TileConfig};
use crate::tensor::{FilterSet, TensorNchw};
use crate::ExecConfig;

/// Per-channel filter-gradient accumulator, one vector per filter row.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct LaneAccumulator {
    rows: [LaneVector; KF],
}

impl LaneAccumulator {
    pub fn rows(&self) -> &[LaneVector; KF] {
        &self.rows
    }

    /// Lanes `0..3` of each row, row-major.
    pub fn finalize(&self) -> [f32; KF * KF] {
        let mut out = [0.0; KF * KF];
        for (dst, row) in out.chunks_mut(KF).zip(&self.rows) {
            dst.copy_from_slice(&row.0[..KF]);
        }
        out
    }
}

struct WgradArgs<'a> {
    input: PlaneIn<'a>,
    dout: PlaneIn<'a>,
    pt: isize,
    pl: isize,
}

type TileFn<T> = fn(&WgradArgs<'_>, usize, usize, &mut LaneAccumulator, &mut T);

/// The three taps of input row `buf` seen by output column offset `base`.
#[inline(always)]
fn taps(buf: &[f32], base: usize) -> LaneVector {
    LaneVector([buf[base], buf[base + 1], buf[base + 2], 0.0])
}

#[inline(always)]
fn wgrad_tile<const HR: usize, const WN: usize, const S: usize, T: TrafficCounter>(
    a: &WgradArgs<'_>,
    ho0: usize,
    wo0: usize,
    acc: &mut LaneAccumulator,
    counter: &mut T,
) {
    // the dO block stays in vectors until every input row has used it
    let mut vo = [[LaneVector::ZERO; WN]; HR];
    for (h, v) in vo.iter_mut().enumerate() {
        let row = a.dout.row((ho0 + h) as isize).expect("tile lies inside the output");
        for (w, lane) in v.iter_mut().enumerate() {
            *lane = LaneVector::load(&row[wo0 + w * VL..]);
        }
    }
    counter.load_output(HR * WN * VL);

    let hi0 = (ho0 * S) as isize - a.pt;
    let wi0 = (wo0 * S) as isize - a.pl;
    let len = (WN * VL - 1) * S + KF;
    let mut buf = [0.0f32; MAX_WINDOW];
    for r in 0..(HR - 1) * S + KF {
        counter.load_input(len);
        let Some(row) = a.input.row(hi0 + r as isize) else {
            continue;
        };
        load_window(row, wi0, &mut buf[..len]);
        for (h, vo_row) in vo.iter().enumerate() {
            let Some(kh) = r.checked_sub(h * S).filter(|&k| k < KF) else {
                continue;
            };
            let mut vf = acc.rows[kh];
            for (w, v) in vo_row.iter().enumerate() {
                for j in 0..VL {
                    vf = vf.mul_add_scalar(taps(&buf, (w * VL + j) * S), v[j]);
                }
            }
            acc.rows[kh] = vf;
        }
    }
}

fn wgrad_edge<T: TrafficCounter>(
    a: &WgradArgs<'_>,
    stride: usize,
    block: &Block,
    acc: &mut LaneAccumulator,
    counter: &mut T,
) {
    let s = stride as isize;
    let mut buf = [0.0f32; KF];
    for oh in block.row0..block.row0 + block.rows {
        let drow = a.dout.row(oh as isize).expect("block lies inside the output");
        for ow in block.col0..block.col0 + block.cols {
            let d = drow[ow];
            for (kh, vf) in acc.rows.iter_mut().enumerate() {
                let Some(row) = a.input.row(oh as isize * s - a.pt + kh as isize) else {
                    continue;
                };
                load_window(row, ow as isize * s - a.pl, &mut buf);
                *vf = vf.mul_add_scalar(taps(&buf, 0), d);
            }
            counter.load_input(KF * KF);
        }
    }
    counter.load_output(block.rows * block.cols);
}

fn tile_fn<T: TrafficCounter>(stride: usize, hr: usize, wn: usize) -> Option<TileFn<T>> {
    match stride {
        1 => tile_table!(wgrad_tile, [1, T], hr, wn),
        2 => tile_table!(wgrad_tile, [2, T], hr, wn),
        _ => None,
    }
}

fn wgrad_plane<T: TrafficCounter>(
    a: &WgradArgs<'_>,
    stride: usize,
    schedule: &PlaneSchedule,
    acc: &mut LaneAccumulator,
    counter: &mut T,
) {
    for block in &schedule.blocks {
        if block.tiled {
            let f = tile_fn::<T>(stride, block.rows, block.cols / VL).expect("schedule only emits compiled tiles");
            f(a, block.row0, block.col0, acc, counter);
        } else {
            wgrad_edge(a, stride, block, acc, counter);
        }
    }
}

fn args<'a>(input: &'a TensorNchw, dout: &'a TensorNchw, geom: &ConvGeometry, n: usize, c: usize) -> WgradArgs<'a> {
    WgradArgs {
        input: PlaneIn {
            data: input.plane(n, c),
            h: geom.hi(),
            w: geom.wi(),
        },
        dout: PlaneIn {
            data: dout.plane(n, c),
            h: geom.ho(),
            w: geom.wo(),
        },
        pt: geom.padding().top as isize,
        pl: geom.padding().left as isize,
    }
}

fn supported(geom: &ConvGeometry) -> bool {
    geom.is_3x3() && (geom.stride() == 1 || geom.stride() == 2)
}

/// Adds the contribution of one `tile` of the output gradient of plane
/// `(n, c)`, corner `(ho0, wo0)`, to `acc`.
#[allow(clippy::too_many_arguments)]
pub fn wgrad_kernel_tile(
    input: &TensorNchw,
    dout: &TensorNchw,
    geom: &ConvGeometry,
    tile: TileConfig,
    n: usize,
    c: usize,
    ho0: usize,
    wo0: usize,
    acc: &mut LaneAccumulator,
) -> Result<()> {
    if !supported(geom) {
        return Err(Error::Unsupported(format!(
            "weight-gradient kernels handle 3x3 filters at strides 1 and 2, got {}x{} at stride {}",
            geom.hf(),
            geom.wf(),
            geom.stride()
        )));
    }
    geom.check_input(input, "input")?;
    geom.check_output(dout, "output gradient")?;
    if n >= geom.n() || c >= geom.c() || ho0 + tile.hr > geom.ho() || wo0 + tile.wr > geom.wo() {
        return Err(Error::InvalidGeometry(format!(
            "tile {tile} at ({n}, {c}, {ho0}, {wo0}) is not inside the output"
        )));
    }
    let f = tile_fn::<NoTraffic>(geom.stride(), tile.hr, tile.wn())
        .ok_or_else(|| Error::Unsupported(format!("no compiled kernel for tile {tile}")))?;
    f(&args(input, dout, geom, n, c), ho0, wo0, acc, &mut NoTraffic);
    Ok(())
}

/// Filter gradient for a 3x3 filter at stride 1 or 2. Other filter sizes
/// and strides go through [`reference::wgrad_naive`].
pub fn wgrad_direct(input: &TensorNchw, dout: &TensorNchw, geom: &ConvGeometry, cfg: &ExecConfig) -> Result<FilterSet> {
    Ok(wgrad_counted::<NoTraffic>(input, dout, geom, cfg)?.0)
}

pub(crate) fn wgrad_counted<T: TrafficCounter>(
    input: &TensorNchw,
    dout: &TensorNchw,
    geom: &ConvGeometry,
    cfg: &ExecConfig,
) -> Result<(FilterSet, T)> {
    if !supported(geom) {
        log::info!(
            "weight gradient: {}x{} filter at stride {} has no tiled kernel, using the naive pass",
            geom.hf(),
            geom.wf(),
            geom.stride()
        );
        return Ok((reference::wgrad_naive(input, dout, geom)?, T::default()));
    }
    check_tile(cfg.tile)?;
    geom.check_input(input, "input")?;
    geom.check_output(dout, "output gradient")?;
    let schedule = wgrad_schedule(geom.ho(), geom.wo(), geom.stride(), cfg.tile);
    let plan = parallel::plan(geom, PassKind::WeightGradient, cfg.threads(), 1, KF, 1);
    let layout = OutputLayout {
        batch: 1,
        channels: geom.c(),
        rows: KF,
        cols: KF,
    };
    let mut grad = FilterSet::zeros(geom.c(), KF, KF);
    let tallies = parallel::execute(&plan, layout, grad.data_mut(), |item, views: &mut [PlaneRows<'_>]| {
        let mut counter = T::default();
        for v in views.iter_mut() {
            let mut acc = LaneAccumulator::default();
            for n in item.n.clone() {
                wgrad_plane(
                    &args(input, dout, geom, n, v.c),
                    geom.stride(),
                    &schedule,
                    &mut acc,
                    &mut counter,
                );
            }
            debug_assert!(
                acc.rows.iter().all(|r| r[VL - 1] == 0.0),
                "spare lane picked up a value"
            );
            v.data.copy_from_slice(&acc.finalize());
            counter.store_output(KF * KF);
        }
        Ok(counter)
    })?;
    let mut total = T::default();
    for t in tallies {
        total.merge(t);
    }
    Ok((grad, total))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::analysis::MeasuredTraffic;
    use crate::geometry::Padding;
    use crate::schedule::TilePolicy;

    #[test]
    fn ones_give_corner_edge_centre_pattern() {
        let g = ConvGeometry::square3x3(1, 1, 3, 1, 1).unwrap();
        let ones = TensorNchw::from_vec(1, 1, 3, 3, vec![1.0; 9]).unwrap();
        let df = wgrad_direct(&ones, &ones, &g, &ExecConfig::serial()).unwrap();
        assert_eq!(df.data(), &[4.0, 6.0, 4.0, 6.0, 9.0, 6.0, 4.0, 6.0, 4.0]);
    }

    #[test]
    fn zero_output_gradient() {
        let g = ConvGeometry::square3x3(2, 3, 10, 2, 1).unwrap();
        let input = TensorNchw::from_fn(2, 3, 10, 10, |n, c, h, w| (n + c + h * w) as f32);
        let dout = TensorNchw::zeros(2, 3, g.ho(), g.wo());
        let df = wgrad_direct(&input, &dout, &g, &ExecConfig::serial()).unwrap();
        assert!(df.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn single_tile_matches_oracle_rows() {
        let g = ConvGeometry::new(1, 1, (4, 6), (3, 3), 1, Padding::uniform(1)).unwrap();
        let input = TensorNchw::from_fn(1, 1, 4, 6, |_, _, h, w| (h * 6 + w) as f32 - 7.0);
        let dout = TensorNchw::from_fn(1, 1, 4, 6, |_, _, h, w| ((h + 2 * w) % 5) as f32);
        // 2x4 tiles cover columns 0..4 of a 4x6 plane; compare on a dO that is
        // zero outside them
        let mut masked = dout.clone();
        for h in 0..4 {
            for w in 4..6 {
                masked.set(0, 0, h, w, 0.0);
            }
        }
        let mut acc = LaneAccumulator::default();
        let tile = TileConfig::new(2, 4).unwrap();
        wgrad_kernel_tile(&input, &masked, &g, tile, 0, 0, 0, 0, &mut acc).unwrap();
        wgrad_kernel_tile(&input, &masked, &g, tile, 0, 0, 2, 0, &mut acc).unwrap();
        let want = reference::wgrad_naive(&input, &masked, &g).unwrap();
        assert_eq!(&acc.finalize()[..], want.data());
        assert!(acc.rows().iter().all(|r| r.lane(3) == 0.0));
    }

    #[test]
    fn tile_order_does_not_matter_for_exact_values() {
        let g = ConvGeometry::square3x3(1, 1, 8, 1, 1).unwrap();
        let input = TensorNchw::from_fn(1, 1, 8, 8, |_, _, h, w| ((h * 3 + w) % 7) as f32);
        let dout = TensorNchw::from_fn(1, 1, 8, 8, |_, _, h, w| ((h + w) % 3) as f32 - 1.0);
        let tile = TileConfig::new(4, 4).unwrap();
        let corners = [(0, 0), (0, 4), (4, 0), (4, 4)];
        let mut fwd = LaneAccumulator::default();
        for &(h, w) in &corners {
            wgrad_kernel_tile(&input, &dout, &g, tile, 0, 0, h, w, &mut fwd).unwrap();
        }
        let mut rev = LaneAccumulator::default();
        for &(h, w) in corners.iter().rev() {
            wgrad_kernel_tile(&input, &dout, &g, tile, 0, 0, h, w, &mut rev).unwrap();
        }
        assert_eq!(fwd, rev);
        let zero = TensorNchw::zeros(1, 1, 8, 8);
        let before = fwd;
        wgrad_kernel_tile(&input, &zero, &g, tile, 0, 0, 0, 0, &mut fwd).unwrap();
        assert_eq!(fwd, before);
    }

    #[test]
    fn output_gradient_is_loaded_once() {
        for (size, s) in [(9, 1), (13, 2), (8, 1)] {
            let g = ConvGeometry::square3x3(2, 3, size, s, 1).unwrap();
            let input = TensorNchw::zeros(2, 3, size, size);
            let dout = TensorNchw::zeros(2, 3, g.ho(), g.wo());
            let (_, t) = wgrad_counted::<MeasuredTraffic>(&input, &dout, &g, &ExecConfig::serial()).unwrap();
            assert_eq!(t.loads_o, (2 * 3 * g.ho() * g.wo()) as u64);
            assert_eq!(t.stores_o, 27);
        }
    }

    #[test]
    fn other_filters_fall_back() {
        let g = ConvGeometry::new(1, 2, (6, 6), (5, 5), 1, Padding::uniform(2)).unwrap();
        let input = TensorNchw::from_fn(1, 2, 6, 6, |_, c, h, w| (c + h + w) as f32);
        let dout = TensorNchw::from_fn(1, 2, 6, 6, |_, c, h, w| (c * h + w) as f32);
        let cfg = ExecConfig {
            tile: TilePolicy::Auto,
            ..ExecConfig::serial()
        };
        assert_eq!(
            wgrad_direct(&input, &dout, &g, &cfg).unwrap(),
            reference::wgrad_naive(&input, &dout, &g).unwrap()
        );
    }
}
