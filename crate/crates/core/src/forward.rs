//! Register-tiled direct forward pass for 3x3 filters at strides 1 and 2.
//!
//! Each micro-kernel owns an `HR x WR` block of the output in `HR * WN`
//! lane vectors and computes it completely before a single store. It walks
//! the `(HR - 1) * s + 3` input rows the block depends on; every row is read
//! from the tensor once into a short window, zero-filled where the window
//! leaves the plane (implicit padding), and then unpacked into `3 * WN`
//! shifted vectors, one per filter column. A row contributes to output row
//! `h` through filter row `r - h * s` whenever that lies in `0..3`.

use crate::analysis::{NoTraffic, TrafficCounter};
use crate::error::{Error, Result};
use crate::geometry::ConvGeometry;
use crate::lanes::{LaneVector, VL};
use crate::parallel::{self, OutputLayout, PassKind, PlaneRows};
use crate::reference;
use crate::schedule::{forward_schedule, Block, PlaneSchedule, TileConfig, TilePolicy};
use crate::tensor::{FilterSet, TensorNchw};
use crate::ExecConfig;

/// Filter taps handled by the kernels.
pub(crate) const KF: usize = 3;

/// Longest row window any compiled kernel reads.
pub(crate) const MAX_WINDOW: usize = 32;

/// One input plane plus what the kernels need to address it.
#[derive(Clone, Copy)]
pub(crate) struct PlaneIn<'a> {
    pub data: &'a [f32],
    pub h: usize,
    pub w: usize,
}

impl<'a> PlaneIn<'a> {
    #[inline(always)]
    pub fn row(&self, r: isize) -> Option<&'a [f32]> {
        if r < 0 || r as usize >= self.h {
            None
        } else {
            let r = r as usize;
            Some(&self.data[r * self.w..(r + 1) * self.w])
        }
    }
}

/// Rows of an output plane owned by the caller, starting at plane row `row0`.
pub(crate) struct PlaneOut<'a> {
    pub data: &'a mut [f32],
    pub row0: usize,
    pub w: usize,
}

impl PlaneOut<'_> {
    #[inline(always)]
    pub fn at(&mut self, row: usize, col: usize) -> &mut [f32] {
        let start = (row - self.row0) * self.w + col;
        &mut self.data[start..]
    }
}

/// Copies `buf.len()` elements of `row` starting at column `start`, writing
/// zeros for columns outside the row.
#[inline(always)]
pub(crate) fn load_window(row: &[f32], start: isize, buf: &mut [f32]) {
    let len = buf.len();
    let w = row.len() as isize;
    if start >= 0 && start + len as isize <= w {
        let s = start as usize;
        buf.copy_from_slice(&row[s..s + len]);
    } else {
        for (k, b) in buf.iter_mut().enumerate() {
            let x = start + k as isize;
            *b = if x >= 0 && x < w { row[x as usize] } else { 0.0 };
        }
    }
}

/// Unpacks one input row into the vectors a row of `count_out` outputs
/// needs: vector `w * wf + q`, lane `j` holds the input at column
/// `wi_start + (w * VL + j) * stride + q`, or zero outside `0..row.len()`.
/// `None` stands for a row above or below the plane.
pub fn extract_padded_row(
    row: Option<&[f32]>,
    wi_start: isize,
    count_out: usize,
    stride: usize,
    wf: usize,
) -> Result<Vec<LaneVector>> {
    if count_out == 0 || !count_out.is_multiple_of(VL) || stride == 0 || wf == 0 {
        return Err(Error::Unsupported(format!(
            "row extraction needs a positive multiple of {VL} outputs, got {count_out} (stride {stride}, wf {wf})"
        )));
    }
    let wn = count_out / VL;
    let mut vi = vec![LaneVector::ZERO; wn * wf];
    let Some(row) = row else { return Ok(vi) };
    let mut buf = vec![0.0; (count_out - 1) * stride + wf];
    load_window(row, wi_start, &mut buf);
    for w in 0..wn {
        for q in 0..wf {
            vi[w * wf + q] = LaneVector::load_strided(&buf, w * VL * stride + q, stride);
        }
    }
    Ok(vi)
}

/// Filter of one channel as rows of three taps.
#[inline(always)]
pub(crate) fn filter_rows(f: &[f32]) -> [[f32; KF]; KF] {
    [[f[0], f[1], f[2]], [f[3], f[4], f[5]], [f[6], f[7], f[8]]]
}

/// Filter taps broadcast across lanes.
#[inline(always)]
pub(crate) fn splat_filter(f: &[[f32; KF]; KF]) -> [[LaneVector; KF]; KF] {
    f.map(|row| row.map(LaneVector::splat))
}

pub(crate) struct ForwardArgs<'a> {
    pub input: PlaneIn<'a>,
    pub filt: [[f32; KF]; KF],
    pub fv: [[LaneVector; KF]; KF],
    pub pt: isize,
    pub pl: isize,
}

type TileFn<T> = fn(&ForwardArgs<'_>, &mut PlaneOut<'_>, usize, usize, &mut T);

/// `HR x (WN * VL)` output block with top-left corner `(ho0, wo0)`.
#[inline(always)]
fn forward_tile<const HR: usize, const WN: usize, const S: usize, T: TrafficCounter>(
    a: &ForwardArgs<'_>,
    out: &mut PlaneOut<'_>,
    ho0: usize,
    wo0: usize,
    counter: &mut T,
) {
    let mut acc = [[LaneVector::ZERO; WN]; HR];
    let hi0 = (ho0 * S) as isize - a.pt;
    let wi0 = (wo0 * S) as isize - a.pl;
    let len = (WN * VL - 1) * S + KF;
    let rows = (HR - 1) * S + KF;
    let interior = hi0 >= 0 && wi0 >= 0 && hi0 as usize + rows <= a.input.h && wi0 as usize + len <= a.input.w;
    let mut buf = [0.0f32; MAX_WINDOW];
    for r in 0..rows {
        // step 1: one load of the row window, padding zero-filled
        counter.load_input(len);
        let window: &[f32] = if interior {
            let start = (hi0 as usize + r) * a.input.w + wi0 as usize;
            &a.input.data[start..start + len]
        } else {
            let Some(row) = a.input.row(hi0 + r as isize) else {
                continue;
            };
            load_window(row, wi0, &mut buf[..len]);
            &buf[..len]
        };
        // step 2: unpack into one shifted vector per (vector, filter column)
        let mut vi = [[LaneVector::ZERO; KF]; WN];
        for (w, v) in vi.iter_mut().enumerate() {
            for (q, lane) in v.iter_mut().enumerate() {
                *lane = LaneVector::load_strided(window, w * VL * S + q, S);
            }
        }
        for (h, acc_row) in acc.iter_mut().enumerate() {
            let Some(kh) = r.checked_sub(h * S).filter(|&k| k < KF) else {
                continue;
            };
            let f = &a.fv[kh];
            for (accv, v) in acc_row.iter_mut().zip(&vi) {
                for q in 0..KF {
                    *accv = accv.mul_add(v[q], f[q]);
                }
            }
        }
    }
    for (h, acc_row) in acc.iter().enumerate() {
        let dst = out.at(ho0 + h, wo0);
        for (w, v) in acc_row.iter().enumerate() {
            v.store(&mut dst[w * VL..]);
        }
    }
    counter.store_output(HR * WN * VL);
}

/// Per-element path for blocks no kernel covers, same tap order as the
/// kernels.
pub(crate) fn forward_edge<T: TrafficCounter>(
    a: &ForwardArgs<'_>,
    stride: usize,
    out: &mut PlaneOut<'_>,
    block: &Block,
    counter: &mut T,
) {
    let s = stride as isize;
    for oh in block.row0..block.row0 + block.rows {
        let dst = out.at(oh, 0);
        for ow in block.col0..block.col0 + block.cols {
            let mut acc = 0.0f32;
            for (kh, frow) in a.filt.iter().enumerate() {
                let Some(row) = a.input.row(oh as isize * s - a.pt + kh as isize) else {
                    continue;
                };
                for (kw, &f) in frow.iter().enumerate() {
                    let iw = ow as isize * s - a.pl + kw as isize;
                    if iw >= 0 && (iw as usize) < row.len() {
                        acc += row[iw as usize] * f;
                    }
                }
            }
            counter.load_input(KF * KF);
            dst[ow] = acc;
        }
    }
    counter.store_output(block.rows * block.cols);
}

macro_rules! tile_table {
    ($kernel:ident, [$($rest:tt)*], $hr:expr, $wn:expr) => {
        match ($hr, $wn) {
            (1, 1) => Some($kernel::<1, 1, $($rest)*> as _),
            (1, 2) => Some($kernel::<1, 2, $($rest)*> as _),
            (2, 1) => Some($kernel::<2, 1, $($rest)*> as _),
            (2, 2) => Some($kernel::<2, 2, $($rest)*> as _),
            (3, 1) => Some($kernel::<3, 1, $($rest)*> as _),
            (3, 2) => Some($kernel::<3, 2, $($rest)*> as _),
            (4, 1) => Some($kernel::<4, 1, $($rest)*> as _),
            (4, 2) => Some($kernel::<4, 2, $($rest)*> as _),
            (5, 1) => Some($kernel::<5, 1, $($rest)*> as _),
            (5, 2) => Some($kernel::<5, 2, $($rest)*> as _),
            (6, 1) => Some($kernel::<6, 1, $($rest)*> as _),
            (6, 2) => Some($kernel::<6, 2, $($rest)*> as _),
            _ => None,
        }
    };
}
pub(crate) use tile_table;

fn tile_fn<T: TrafficCounter>(stride: usize, hr: usize, wn: usize) -> Option<TileFn<T>> {
    match stride {
        1 => tile_table!(forward_tile, [1, T], hr, wn),
        2 => tile_table!(forward_tile, [2, T], hr, wn),
        _ => None,
    }
}

/// Computes the rows of one output plane that lie in `out`, following
/// `schedule`.
pub(crate) fn forward_plane<T: TrafficCounter>(
    a: &ForwardArgs<'_>,
    stride: usize,
    schedule: &PlaneSchedule,
    out: &mut PlaneOut<'_>,
    counter: &mut T,
) {
    counter.load_filter(KF * KF);
    let rows = out.row0..out.row0 + out.data.len() / out.w.max(1);
    for block in schedule.blocks_in(rows) {
        if block.tiled {
            let f = tile_fn::<T>(stride, block.rows, block.cols / VL).expect("schedule only emits compiled tiles");
            f(a, out, block.row0, block.col0, counter);
        } else {
            forward_edge(a, stride, out, block, counter);
        }
    }
}

/// Computes one `tile` of outputs of plane `(n, c)` with top-left corner
/// `(ho0, wo0)`, row-major. The tile must lie inside the output.
#[allow(clippy::too_many_arguments)]
pub fn kernel_tile(
    input: &TensorNchw,
    filters: &FilterSet,
    geom: &ConvGeometry,
    tile: TileConfig,
    n: usize,
    c: usize,
    ho0: usize,
    wo0: usize,
) -> Result<Vec<f32>> {
    check_supported(geom)?;
    geom.check_input(input, "input")?;
    geom.check_filters(filters)?;
    if n >= geom.n() || c >= geom.c() || ho0 + tile.hr > geom.ho() || wo0 + tile.wr > geom.wo() {
        return Err(Error::InvalidGeometry(format!(
            "tile {tile} at ({n}, {c}, {ho0}, {wo0}) is not inside the output"
        )));
    }
    let f = tile_fn::<NoTraffic>(geom.stride(), tile.hr, tile.wn())
        .ok_or_else(|| Error::Unsupported(format!("no compiled kernel for tile {tile}")))?;
    let a = args(input, filters, geom, n, c);
    // kernels address columns absolutely
    let w = wo0 + tile.wr;
    let mut rows = vec![0.0; tile.hr * w];
    let mut view = PlaneOut {
        data: &mut rows,
        row0: ho0,
        w,
    };
    f(&a, &mut view, ho0, wo0, &mut NoTraffic);
    Ok(rows.chunks(w).flat_map(|r| r[wo0..].iter().copied()).collect())
}

fn args<'a>(input: &'a TensorNchw, filters: &FilterSet, geom: &ConvGeometry, n: usize, c: usize) -> ForwardArgs<'a> {
    let filt = filter_rows(filters.channel(c));
    ForwardArgs {
        input: PlaneIn {
            data: input.plane(n, c),
            h: geom.hi(),
            w: geom.wi(),
        },
        fv: splat_filter(&filt),
        filt,
        pt: geom.padding().top as isize,
        pl: geom.padding().left as isize,
    }
}

pub(crate) fn check_supported(geom: &ConvGeometry) -> Result<()> {
    if !geom.is_3x3() {
        return Err(Error::Unsupported(format!(
            "direct kernels handle 3x3 filters, got {}x{}",
            geom.hf(),
            geom.wf()
        )));
    }
    if geom.stride() != 1 && geom.stride() != 2 {
        return Err(Error::Unsupported(format!(
            "direct kernels handle strides 1 and 2, got {}",
            geom.stride()
        )));
    }
    Ok(())
}

pub(crate) fn check_tile(policy: TilePolicy) -> Result<()> {
    match policy {
        TilePolicy::Fixed(t) if !t.has_kernel() => Err(Error::Unsupported(format!("no compiled kernel for tile {t}"))),
        _ => Ok(()),
    }
}

/// Tiled forward pass.
///
/// 3x3 filters at stride 1 or 2 run the register-tiled kernels; other
/// filter sizes or strides are an [`Error::Unsupported`]. Top or left
/// padding above 1 is served by [`reference::forward_naive`].
pub fn forward_direct(
    input: &TensorNchw,
    filters: &FilterSet,
    geom: &ConvGeometry,
    cfg: &ExecConfig,
) -> Result<TensorNchw> {
    check_supported(geom)?;
    let pad = geom.padding();
    if pad.top > 1 || pad.left > 1 {
        log::info!("forward: padding {pad:?} is outside the tiled kernels' range, using the naive pass");
        return reference::forward_naive(input, filters, geom);
    }
    Ok(forward_counted::<NoTraffic>(input, filters, geom, cfg)?.0)
}

/// Forward pass through the tiled kernels without the padding restriction,
/// recording traffic into `T`.
pub(crate) fn forward_counted<T: TrafficCounter>(
    input: &TensorNchw,
    filters: &FilterSet,
    geom: &ConvGeometry,
    cfg: &ExecConfig,
) -> Result<(TensorNchw, T)> {
    check_supported(geom)?;
    check_tile(cfg.tile)?;
    geom.check_input(input, "input")?;
    geom.check_filters(filters)?;
    let schedule = forward_schedule(geom.ho(), geom.wo(), geom.stride(), cfg.tile);
    let threads = cfg.threads();
    let cb = cfg.cb.unwrap_or_else(|| parallel::default_cb(geom, threads));
    let plan = parallel::plan(geom, PassKind::Forward, threads, cb, geom.ho(), schedule.row_quantum);
    let layout = OutputLayout {
        batch: geom.n(),
        channels: geom.c(),
        rows: geom.ho(),
        cols: geom.wo(),
    };
    let mut out = TensorNchw::zeros(geom.n(), geom.c(), geom.ho(), geom.wo());
    let tallies = parallel::execute(&plan, layout, out.data_mut(), |_, views: &mut [PlaneRows<'_>]| {
        let mut counter = T::default();
        for v in views.iter_mut() {
            let a = args(input, filters, geom, v.n, v.c);
            let mut po = PlaneOut {
                data: v.data,
                row0: v.row0,
                w: geom.wo(),
            };
            forward_plane(&a, geom.stride(), &schedule, &mut po, &mut counter);
        }
        Ok(counter)
    })?;
    let mut total = T::default();
    for t in tallies {
        total.merge(t);
    }
    Ok((out, total))
}
