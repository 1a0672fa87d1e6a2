//! Direct depthwise convolution for NCHW single-precision tensors.
//!
//! The tiled passes in [`forward`], [`backward`] and [`wgrad`] handle 3x3
//! filters at strides 1 and 2 without ever materialising a padded copy of
//! their input. [`reference`] holds the slow oracles and lowered baselines
//! they are checked against, and [`analysis`] models their memory traffic.
//!
//! ```
//! use dwconv::{forward_direct, ConvGeometry, ExecConfig, FilterSet, TensorNchw};
//!
//! let geom = ConvGeometry::square3x3(1, 1, 3, 1, 1).unwrap();
//! let input = TensorNchw::from_vec(1, 1, 3, 3, (1..=9).map(|v| v as f32).collect()).unwrap();
//! let ones = FilterSet::from_vec(1, 3, 3, vec![1.0; 9]).unwrap();
//! let out = forward_direct(&input, &ones, &geom, &ExecConfig::serial()).unwrap();
//! assert_eq!(out.data(), &[12.0, 21.0, 16.0, 27.0, 45.0, 33.0, 24.0, 39.0, 28.0]);
//! ```

#![allow(clippy::needless_range_loop)]

pub mod analysis;
pub mod backward;
pub mod error;
pub mod forward;
pub mod geometry;
pub mod lanes;
pub mod layers;
pub mod metrics;
pub mod parallel;
pub mod reference;
pub mod schedule;
pub mod tensor;
pub mod wgrad;

pub use analysis::{measure_traffic, traffic_ours, traffic_tengine, MeasuredTraffic, TrafficReport};
pub use backward::{backward_direct, backward_direct_s1, backward_direct_s2, rotate_filter_180};
pub use error::{Error, Result};
pub use forward::forward_direct;
pub use geometry::{ConvGeometry, Padding};
pub use layers::{mobilenet_layer_suite, parse_layer_file, LayerConfig};
pub use parallel::PassKind;
pub use schedule::{TileConfig, TilePolicy};
pub use tensor::{FilterSet, TensorNchw};
pub use wgrad::wgrad_direct;

/// How a direct pass runs.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ExecConfig {
    pub tile: TilePolicy,
    /// Worker threads; 0 is treated as 1.
    pub threads: usize,
    /// Channel block size, or the default for the geometry and thread count.
    pub cb: Option<usize>,
}

impl ExecConfig {
    /// Default tiles on the calling thread only.
    pub fn serial() -> Self {
        Self::with_threads(1)
    }

    pub fn with_threads(threads: usize) -> Self {
        Self {
            tile: TilePolicy::Auto,
            threads,
            cb: None,
        }
    }

    pub fn threads(&self) -> usize {
        self.threads.max(1)
    }
}

impl Default for ExecConfig {
    /// Default tiles on [`parallel::default_threads`] workers.
    fn default() -> Self {
        Self::with_threads(parallel::default_threads())
    }
}
