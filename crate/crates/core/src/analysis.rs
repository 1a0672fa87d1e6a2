//! Register/cache traffic accounting for the forward pass.
//!
//! Two views of the same quantity: closed-form byte counts derived from the
//! loop structure of the tiled kernel (and of the Tengine-style row kernel
//! it is compared against), and element counts recorded by running the real
//! kernels with a counting [`TrafficCounter`].

use crate::backward;
use crate::error::Result;
use crate::forward;
use crate::geometry::ConvGeometry;
use crate::parallel::PassKind;
use crate::schedule::{TileConfig, TilePolicy};
use crate::tensor::{FilterSet, TensorNchw};
use crate::wgrad;
use crate::ExecConfig;

/// Bytes per single-precision element.
pub const ELEM_BYTES: u64 = 4;

/// Sink for element transfers between tensors and registers.
///
/// Kernels are generic over this trait; [`NoTraffic`] compiles to nothing.
pub trait TrafficCounter: Default + Send {
    fn load_input(&mut self, elems: usize);
    fn load_filter(&mut self, elems: usize);
    fn load_output(&mut self, elems: usize);
    fn store_output(&mut self, elems: usize);
    fn merge(&mut self, other: Self);
}

#[derive(Debug, Clone, Copy, Default)]
pub struct NoTraffic;

impl TrafficCounter for NoTraffic {
    #[inline(always)]
    fn load_input(&mut self, _: usize) {}
    #[inline(always)]
    fn load_filter(&mut self, _: usize) {}
    #[inline(always)]
    fn load_output(&mut self, _: usize) {}
    #[inline(always)]
    fn store_output(&mut self, _: usize) {}
    #[inline(always)]
    fn merge(&mut self, _: Self) {}
}

/// Element transfers recorded by an instrumented run.
///
/// Per pass, "input" is the tensor the kernel streams in (I for forward and
/// weight gradient, dO for backward), "output" is what it produces (O, dI or
/// dF). For the weight gradient `loads_o` counts dO loads.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct MeasuredTraffic {
    pub loads_i: u64,
    pub loads_f: u64,
    pub loads_o: u64,
    pub stores_o: u64,
}

impl MeasuredTraffic {
    pub fn bytes(&self) -> u64 {
        (self.loads_i + self.loads_f + self.loads_o + self.stores_o) * ELEM_BYTES
    }
}

impl TrafficCounter for MeasuredTraffic {
    #[inline]
    fn load_input(&mut self, elems: usize) {
        self.loads_i += elems as u64;
    }
    #[inline]
    fn load_filter(&mut self, elems: usize) {
        self.loads_f += elems as u64;
    }
    #[inline]
    fn load_output(&mut self, elems: usize) {
        self.loads_o += elems as u64;
    }
    #[inline]
    fn store_output(&mut self, elems: usize) {
        self.stores_o += elems as u64;
    }
    fn merge(&mut self, other: Self) {
        self.loads_i += other.loads_i;
        self.loads_f += other.loads_f;
        self.loads_o += other.loads_o;
        self.stores_o += other.stores_o;
    }
}

/// Arithmetic and traffic totals of one forward pass.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrafficReport {
    /// Arithmetic operations (a multiply-add counts as two).
    pub ta: u64,
    pub tc_f: u64,
    pub tc_o: u64,
    pub tc_i: u64,
    pub tc_total: u64,
    /// Operations per byte.
    pub ai: f64,
    /// Set when tiles do not divide the output and kernel invocations were
    /// rounded up.
    pub approximate: bool,
}

impl TrafficReport {
    fn new(ta: u64, tc_f: u64, tc_o: u64, tc_i: u64, approximate: bool) -> Self {
        let tc_total = tc_f + tc_o + tc_i;
        Self {
            ta,
            tc_f,
            tc_o,
            tc_i,
            tc_total,
            ai: ta as f64 / tc_total as f64,
            approximate,
        }
    }
}

/// Input elements one `hr x wr` kernel invocation loads.
pub fn kernel_input_elems(geom: &ConvGeometry, tile: &TileConfig) -> u64 {
    let s = geom.stride();
    (((tile.wr - 1) * s + geom.wf()) * ((tile.hr - 1) * s + geom.hf())) as u64
}

/// Traffic of the register-tiled forward kernel with an `hr x wr` tile.
///
/// Filters are loaded once per (n, c), outputs stored once, and every
/// kernel invocation loads its full input window.
pub fn traffic_ours(geom: &ConvGeometry, tile: &TileConfig) -> TrafficReport {
    let (n, c) = (geom.n() as u64, geom.c() as u64);
    let (ho, wo) = (geom.ho() as u64, geom.wo() as u64);
    let (hf, wf) = (geom.hf() as u64, geom.wf() as u64);
    let (hr, wr) = (tile.hr as u64, tile.wr as u64);
    let approximate = ho % hr != 0 || wo % wr != 0;
    let kernels = n * c * ho.div_ceil(hr) * wo.div_ceil(wr);
    let ta = 2 * n * c * ho * wo * hf * wf;
    let tc_f = ELEM_BYTES * n * c * hf * wf;
    let tc_o = ELEM_BYTES * n * c * ho * wo;
    let tc_i = ELEM_BYTES * kernels * kernel_input_elems(geom, tile);
    TrafficReport::new(ta, tc_f, tc_o, tc_i, approximate)
}

/// Traffic of a row-streaming kernel that loads each input row once but
/// reloads and restores partial output rows for every filter row.
pub fn traffic_tengine(geom: &ConvGeometry) -> TrafficReport {
    let (n, c) = (geom.n() as u64, geom.c() as u64);
    let (hi, wi) = (geom.hi() as u64, geom.wi() as u64);
    let (ho, wo) = (geom.ho() as u64, geom.wo() as u64);
    let (hf, wf) = (geom.hf() as u64, geom.wf() as u64);
    let ta = 2 * n * c * ho * wo * hf * wf;
    let tc_f = ELEM_BYTES * n * c * hf * wf;
    let tc_o = ELEM_BYTES * 5 * n * c * ho * wo;
    let tc_i = ELEM_BYTES * n * c * hi * wi;
    TrafficReport::new(ta, tc_f, tc_o, tc_i, false)
}

/// Runs the direct kernel of `pass` single-threaded with a counting shim and
/// returns the recorded element transfers. Tensor contents are zeros.
pub fn measure_traffic(pass: PassKind, geom: &ConvGeometry, tile: TilePolicy) -> Result<MeasuredTraffic> {
    measure_traffic_threaded(pass, geom, tile, 1)
}

/// As [`measure_traffic`], with per-work-item tallies merged after a
/// parallel run.
pub fn measure_traffic_threaded(
    pass: PassKind,
    geom: &ConvGeometry,
    tile: TilePolicy,
    threads: usize,
) -> Result<MeasuredTraffic> {
    let cfg = ExecConfig {
        tile,
        threads,
        cb: None,
    };
    let input = TensorNchw::zeros(geom.n(), geom.c(), geom.hi(), geom.wi());
    let dout = TensorNchw::zeros(geom.n(), geom.c(), geom.ho(), geom.wo());
    let filters = FilterSet::zeros(geom.c(), geom.hf(), geom.wf());
    let traffic = match pass {
        PassKind::Forward => forward::forward_counted::<MeasuredTraffic>(&input, &filters, geom, &cfg)?.1,
        PassKind::Backward => backward::backward_counted::<MeasuredTraffic>(&dout, &filters, geom, &cfg)?.1,
        PassKind::WeightGradient => wgrad::wgrad_counted::<MeasuredTraffic>(&input, &dout, geom, &cfg)?.1,
    };
    Ok(traffic)
}

/// Traffic of the naive forward oracle, which reloads every tap.
pub fn measure_naive_forward_traffic(geom: &ConvGeometry) -> Result<MeasuredTraffic> {
    let input = TensorNchw::zeros(geom.n(), geom.c(), geom.hi(), geom.wi());
    let filters = FilterSet::zeros(geom.c(), geom.hf(), geom.wf());
    let mut counter = MeasuredTraffic::default();
    crate::reference::forward_naive_counted(&input, &filters, geom, &mut counter)?;
    Ok(counter)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn geom(n: usize, size: usize, s: usize) -> ConvGeometry {
        ConvGeometry::square3x3(n, 1, size, s, 1).unwrap()
    }

    #[test]
    fn ours_small_example() {
        let g = geom(1, 8, 1);
        let r = traffic_ours(&g, &TileConfig::new(4, 4).unwrap());
        assert_eq!(kernel_input_elems(&g, &TileConfig::new(4, 4).unwrap()), 36);
        assert_eq!((r.tc_i, r.tc_o, r.tc_f, r.ta), (576, 256, 36, 1152));
        assert_eq!(r.tc_total, 868);
        assert!((r.ai - 1152.0 / 868.0).abs() < 1e-12);
        assert!(!r.approximate);
    }

    #[test]
    fn stride_two_kernel_window() {
        let g = geom(1, 16, 2);
        assert_eq!(kernel_input_elems(&g, &TileConfig::new(1, 4).unwrap()), 27);
    }

    #[test]
    fn batch_scales_linearly() {
        let t = TileConfig::new(4, 4).unwrap();
        let a = traffic_ours(&geom(1, 16, 1), &t);
        let b = traffic_ours(&geom(2, 16, 1), &t);
        assert_eq!(
            (2 * a.ta, 2 * a.tc_f, 2 * a.tc_o, 2 * a.tc_i),
            (b.ta, b.tc_f, b.tc_o, b.tc_i)
        );
        assert_eq!(a.ai, b.ai);
    }

    #[test]
    fn non_divisible_is_flagged() {
        let r = traffic_ours(&geom(1, 7, 1), &TileConfig::new(4, 4).unwrap());
        assert!(r.approximate);
    }

    #[test]
    fn tengine_example() {
        let r = traffic_tengine(&geom(1, 112, 1));
        assert_eq!(r.tc_total, 301_092);
    }
}
