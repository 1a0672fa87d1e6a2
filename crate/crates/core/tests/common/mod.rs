#![allow(dead_code)]

use dwconv::{ConvGeometry, FilterSet, Padding, TensorNchw};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// 3x3 geometry with strides 1-2, paddings 0-1 per side, spatial 3..40,
/// C 1..8, N 1..3.
pub fn random_geometry(rng: &mut impl Rng) -> ConvGeometry {
    let mut p = || rng.gen_range(0..=1usize);
    let pad = Padding::new(p(), p(), p(), p());
    ConvGeometry::new(
        rng.gen_range(1..=3),
        rng.gen_range(1..=8),
        (rng.gen_range(3..=40), rng.gen_range(3..=40)),
        (3, 3),
        rng.gen_range(1..=2),
        pad,
    )
    .unwrap()
}

/// Any filter size up to 5x5, paddings 0-2, spatial 1..16; `None` when the
/// draw has no output.
pub fn random_general_geometry(rng: &mut impl Rng) -> Option<ConvGeometry> {
    let hf = rng.gen_range(1..=5);
    let wf = rng.gen_range(1..=5);
    let mut p = |f: usize| rng.gen_range(0..=2usize.min(f - 1));
    let pad = Padding::new(p(hf), p(hf), p(wf), p(wf));
    ConvGeometry::new(
        rng.gen_range(1..=2),
        rng.gen_range(1..=4),
        (rng.gen_range(1..=16), rng.gen_range(1..=16)),
        (hf, wf),
        rng.gen_range(1..=2),
        pad,
    )
    .ok()
}

pub fn random_tensor(rng: &mut impl Rng, [n, c, h, w]: [usize; 4]) -> TensorNchw {
    TensorNchw::from_fn(n, c, h, w, |_, _, _, _| rng.gen_range(-1.0f32..1.0))
}

pub fn random_filters(rng: &mut impl Rng, c: usize, hf: usize, wf: usize) -> FilterSet {
    FilterSet::from_fn(c, hf, wf, |_, _, _| rng.gen_range(-1.0f32..1.0))
}

/// Input, filters and output gradient for `g`.
pub fn random_problem(rng: &mut impl Rng, g: &ConvGeometry) -> (TensorNchw, FilterSet, TensorNchw) {
    let input = random_tensor(rng, g.input_shape());
    let filters = random_filters(rng, g.c(), g.hf(), g.wf());
    let dout = random_tensor(rng, g.output_shape());
    (input, filters, dout)
}
