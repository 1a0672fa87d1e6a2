//! Register tile shapes and how they cover an output plane.

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::lanes::VL;

/// Vector registers available to a micro-kernel.
pub const VECTOR_REGISTERS: usize = 32;

/// Largest tile height with a compiled kernel.
pub const MAX_TILE_HEIGHT: usize = 6;
/// Largest tile width, in vectors, with a compiled kernel.
pub const MAX_TILE_VECTORS: usize = 2;

/// An `hr x wr` block of outputs held in registers, `wr` a multiple of `vl`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct TileConfig {
    pub hr: usize,
    pub wr: usize,
    pub vl: usize,
}

impl TileConfig {
    /// A tile for the build's lane count, checked against the register
    /// budget of a 3x3 filter.
    pub fn new(hr: usize, wr: usize) -> Result<Self> {
        Self::with_lanes(hr, wr, VL)
    }

    pub fn with_lanes(hr: usize, wr: usize, vl: usize) -> Result<Self> {
        let tile = Self { hr, wr, vl };
        let fail = |reason: &str| {
            Err(Error::InvalidTile {
                hr,
                wr,
                vl,
                reason: reason.to_string(),
            })
        };
        if vl != VL {
            return fail(&format!("this build uses {VL} lanes per vector"));
        }
        if hr == 0 || wr == 0 {
            return fail("tile extents must be positive");
        }
        if !wr.is_multiple_of(vl) {
            return fail("width must be a multiple of the vector length");
        }
        if !tile.fits_register_budget(3, 3) {
            return fail("accumulators, input vectors and filter rows exceed the register file");
        }
        Ok(tile)
    }

    /// Vectors per tile row.
    pub fn wn(&self) -> usize {
        self.wr / self.vl
    }

    /// Output accumulators plus one extracted input row plus filter rows.
    pub fn registers_needed(&self, hf: usize, wf: usize) -> usize {
        self.hr * self.wn() + wf * self.wn() + hf
    }

    pub fn fits_register_budget(&self, hf: usize, wf: usize) -> bool {
        self.registers_needed(hf, wf) <= VECTOR_REGISTERS
    }

    pub(crate) fn has_kernel(&self) -> bool {
        self.hr <= MAX_TILE_HEIGHT && self.wn() <= MAX_TILE_VECTORS
    }
}

impl fmt::Display for TileConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}x{}", self.hr, self.wr)
    }
}

impl FromStr for TileConfig {
    type Err = Error;

    /// Parses `HxW`, e.g. `4x4` or `2x8`.
    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::Parse {
            line: 1,
            message: format!("tile `{s}` is not of the form HxW"),
        };
        let (h, w) = s.trim().split_once(['x', 'X']).ok_or_else(bad)?;
        let hr = h.trim().parse().map_err(|_| bad())?;
        let wr = w.trim().parse().map_err(|_| bad())?;
        Self::new(hr, wr)
    }
}

/// Tile choice for a pass.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum TilePolicy {
    /// Per-pass defaults: forward 4x4 (2x8 for short remainders) at stride 1
    /// and 1x4 at stride 2, backward stride 2 6x8, weight gradient 2x4 /
    /// 1x4.
    #[default]
    Auto,
    Fixed(TileConfig),
}

/// A rectangle of the plane. Tiled blocks are computed by a micro-kernel of
/// exactly `rows x cols`; the rest go through the per-element edge path.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Block {
    pub row0: usize,
    pub col0: usize,
    pub rows: usize,
    pub cols: usize,
    pub tiled: bool,
}

/// Disjoint blocks covering a `rows x cols` plane in row-band order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PlaneSchedule {
    pub rows: usize,
    pub cols: usize,
    /// Height of the main row band. Bands of later heights only start at
    /// multiples of this, so splitting at multiples never cuts a block.
    pub row_quantum: usize,
    pub main: TileConfig,
    pub blocks: Vec<Block>,
}

impl PlaneSchedule {
    fn new(rows: usize, cols: usize, main: TileConfig) -> Self {
        Self {
            rows,
            cols,
            row_quantum: main.hr,
            main,
            blocks: Vec::new(),
        }
    }

    /// One band of `height` rows starting at `row0`: greedy tiles of each
    /// width in turn, then an edge block for the leftover columns.
    fn band(&mut self, row0: usize, height: usize, widths: &[usize], tiled: bool) {
        let mut col = 0;
        if tiled {
            for &w in widths {
                while col + w <= self.cols {
                    self.blocks.push(Block {
                        row0,
                        col0: col,
                        rows: height,
                        cols: w,
                        tiled: true,
                    });
                    col += w;
                }
            }
        }
        if col < self.cols {
            self.blocks.push(Block {
                row0,
                col0: col,
                rows: height,
                cols: self.cols - col,
                tiled: false,
            });
        }
    }

    /// Main bands of `main.hr`, then one reduced-height band at the same
    /// widths for the remainder.
    fn uniform(rows: usize, cols: usize, main: TileConfig, widths: &[usize]) -> Self {
        let mut s = Self::new(rows, cols, main);
        let mut row = 0;
        while row + main.hr <= rows {
            s.band(row, main.hr, widths, true);
            row += main.hr;
        }
        if row < rows {
            s.band(row, rows - row, widths, true);
        }
        s
    }

    pub fn tiles(&self) -> impl Iterator<Item = &Block> {
        self.blocks.iter().filter(|b| b.tiled)
    }

    /// Elements left to the edge path.
    pub fn edge_elements(&self) -> usize {
        self.blocks.iter().filter(|b| !b.tiled).map(|b| b.rows * b.cols).sum()
    }

    /// Blocks whose first row lies in `rows`.
    pub fn blocks_in(&self, rows: std::ops::Range<usize>) -> impl Iterator<Item = &Block> {
        self.blocks.iter().filter(move |b| rows.contains(&b.row0))
    }
}

/// Main width first, then single-step tiles for the leftover.
fn widths_for(wr: usize, step: usize) -> Vec<usize> {
    if wr > step {
        vec![wr, step]
    } else {
        vec![wr]
    }
}

fn tile(hr: usize, wr: usize) -> TileConfig {
    TileConfig::new(hr, wr).expect("built-in tile is valid")
}

/// Main forward tile for a stride.
pub fn select_tile(stride: usize) -> TileConfig {
    if stride == 1 {
        tile(4, 4)
    } else {
        tile(1, 4)
    }
}

/// Tile schedule of the forward output plane.
///
/// Stride 1 with the default policy uses 4x4 tiles, a 2-row band of 2x8
/// (then 2x4) tiles for a remainder of two or three rows, and the edge path
/// for anything left. Stride 2 uses 1x4 tiles. A fixed tile uses main bands
/// of its own height and one reduced-height band for the remainder.
pub fn forward_schedule(ho: usize, wo: usize, stride: usize, policy: TilePolicy) -> PlaneSchedule {
    match policy {
        TilePolicy::Fixed(t) => PlaneSchedule::uniform(ho, wo, t, &widths_for(t.wr, VL)),
        TilePolicy::Auto if stride == 1 => {
            let main = tile(4, 4);
            let mut s = PlaneSchedule::new(ho, wo, main);
            let mut row = 0;
            while row + 4 <= ho {
                s.band(row, 4, &[4], true);
                row += 4;
            }
            if row + 2 <= ho {
                s.band(row, 2, &[8, 4], true);
                row += 2;
            }
            if row < ho {
                s.band(row, ho - row, &[], false);
            }
            s
        }
        TilePolicy::Auto => PlaneSchedule::uniform(ho, wo, tile(1, 4), &[4]),
    }
}

/// Tile schedule of the input-gradient plane for the stride-2 kernel.
/// Widths are multiples of `2 * VL` so each tile splits into an even and an
/// odd column vector set.
pub fn backward_s2_schedule(hi: usize, wi: usize, policy: TilePolicy) -> PlaneSchedule {
    let main = match policy {
        TilePolicy::Fixed(t) => t,
        TilePolicy::Auto => tile(6, 8),
    };
    PlaneSchedule::uniform(hi, wi, main, &widths_for(main.wr, 2 * VL))
}

/// Tile schedule over output-gradient blocks for the weight gradient.
pub fn wgrad_schedule(ho: usize, wo: usize, stride: usize, policy: TilePolicy) -> PlaneSchedule {
    let main = match policy {
        TilePolicy::Fixed(t) => t,
        TilePolicy::Auto if stride == 1 => tile(2, 4),
        TilePolicy::Auto => tile(1, 4),
    };
    PlaneSchedule::uniform(ho, wo, main, &widths_for(main.wr, VL))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn coverage(s: &PlaneSchedule) -> Vec<u32> {
        let mut hits = vec![0u32; s.rows * s.cols];
        for b in &s.blocks {
            for r in b.row0..b.row0 + b.rows {
                for c in b.col0..b.col0 + b.cols {
                    hits[r * s.cols + c] += 1;
                }
            }
        }
        hits
    }

    fn assert_partition(s: &PlaneSchedule) {
        assert!(coverage(s).iter().all(|&h| h == 1), "{s:?}");
        for b in s.tiles() {
            assert!(b.row0 + b.rows <= s.rows && b.col0 + b.cols <= s.cols);
        }
    }

    #[test]
    fn tile_validation() {
        assert!(TileConfig::new(4, 4).is_ok());
        assert!(TileConfig::new(2, 8).is_ok());
        assert!(TileConfig::new(6, 8).is_ok());
        assert!(TileConfig::new(4, 6).is_err());
        assert!(TileConfig::new(0, 4).is_err());
        assert!(TileConfig::new(8, 16).is_err());
        assert!(TileConfig::with_lanes(4, 8, 8).is_err());
        assert_eq!(TileConfig::new(4, 4).unwrap().registers_needed(3, 3), 4 + 3 + 3);
    }

    #[test]
    fn tile_parsing() {
        assert_eq!("2x8".parse::<TileConfig>().unwrap(), TileConfig::new(2, 8).unwrap());
        assert_eq!(" 6X8 ".parse::<TileConfig>().unwrap(), TileConfig::new(6, 8).unwrap());
        assert!("4".parse::<TileConfig>().is_err());
        assert!("ax4".parse::<TileConfig>().is_err());
        assert!("4x5".parse::<TileConfig>().is_err());
    }

    #[test]
    fn stride_one_112_is_all_main_tiles() {
        let s = forward_schedule(112, 112, 1, TilePolicy::Auto);
        assert_eq!(s.edge_elements(), 0);
        assert!(s.tiles().all(|b| (b.rows, b.cols) == (4, 4)));
        assert_eq!(s.tiles().count(), 28 * 28);
    }

    #[test]
    fn stride_one_7x7_schedule() {
        let s = forward_schedule(7, 7, 1, TilePolicy::Auto);
        assert_partition(&s);
        let tiles: Vec<_> = s.tiles().map(|b| (b.row0, b.col0, b.rows, b.cols)).collect();
        assert_eq!(tiles, vec![(0, 0, 4, 4), (4, 0, 2, 4)]);
        // row 6 and the column tails go to the edge path
        assert_eq!(s.edge_elements(), 4 * 3 + 2 * 3 + 7);
    }

    #[test]
    fn short_heights_prefer_2x8() {
        let s = forward_schedule(3, 20, 1, TilePolicy::Auto);
        assert_partition(&s);
        let shapes: Vec<_> = s.tiles().map(|b| (b.rows, b.cols)).collect();
        assert_eq!(shapes, vec![(2, 8), (2, 8), (2, 4)]);
    }

    #[test]
    fn stride_two_uses_1x4() {
        let s = forward_schedule(56, 56, 2, TilePolicy::Auto);
        assert!(s.tiles().all(|b| (b.rows, b.cols) == (1, 4)));
        assert_eq!(s.edge_elements(), 0);
    }

    #[test]
    fn backward_default_is_6x8() {
        let s = backward_s2_schedule(112, 112, TilePolicy::Auto);
        assert_partition(&s);
        assert_eq!(s.main, TileConfig::new(6, 8).unwrap());
        assert!(s.tiles().all(|b| b.cols == 8 && b.col0 % 8 == 0));
    }

    #[test]
    fn wgrad_defaults() {
        assert_eq!(
            wgrad_schedule(10, 10, 1, TilePolicy::Auto).main,
            TileConfig::new(2, 4).unwrap()
        );
        assert_eq!(
            wgrad_schedule(10, 10, 2, TilePolicy::Auto).main,
            TileConfig::new(1, 4).unwrap()
        );
    }

    proptest! {
        #[test]
        fn schedules_partition_the_plane(
            rows in 1usize..60, cols in 1usize..60, stride in 1usize..3,
            hr in 1usize..=6, wide in any::<bool>(),
        ) {
            let fixed = TilePolicy::Fixed(TileConfig::new(hr, if wide { 8 } else { 4 }).unwrap());
            for policy in [TilePolicy::Auto, fixed] {
                for s in [
                    forward_schedule(rows, cols, stride, policy),
                    wgrad_schedule(rows, cols, stride, policy),
                ] {
                    prop_assert!(coverage(&s).iter().all(|&h| h == 1));
                    for b in &s.blocks {
                        prop_assert!(b.row0 % s.row_quantum == 0 || b.row0 >= rows / s.row_quantum * s.row_quantum);
                    }
                }
            }
            let bwd = TilePolicy::Fixed(TileConfig::new(hr, 8).unwrap());
            for policy in [TilePolicy::Auto, bwd] {
                let s = backward_s2_schedule(rows, cols, policy);
                prop_assert!(coverage(&s).iter().all(|&h| h == 1));
                prop_assert!(s.tiles().all(|b| b.cols % 8 == 0 && b.col0 % 2 == 0));
            }
        }
    }
}
