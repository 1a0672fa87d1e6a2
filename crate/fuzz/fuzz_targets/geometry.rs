#![no_main]

use dwconv::reference::forward_naive;
use dwconv::{forward_direct, ConvGeometry, ExecConfig, FilterSet, Padding, TensorNchw};
use libfuzzer_sys::fuzz_target;

// 12 bytes: n, c, hi, wi, hf, wf, stride, pt, pb, pl, pr, seed
fuzz_target!(|data: &[u8]| {
    let Some(b) = data.get(..12) else { return };
    let d = |i: usize| b[i] as usize;
    let pad = Padding {
        top: d(7),
        bottom: d(8),
        left: d(9),
        right: d(10),
    };
    let Ok(g) = ConvGeometry::new(d(0), d(1), (d(2), d(3)), (d(4), d(5)), d(6), pad) else { return };
    assert!(g.ho() > 0 && g.wo() > 0);
    let span = g.hi() + pad.top + pad.bottom;
    assert!((g.ho() - 1) * g.stride() + g.hf() <= span && span < g.ho() * g.stride() + g.hf());
    if g.n() * g.c() * g.hi() * g.wi() > 1 << 14 {
        return;
    }
    let seed = b[11] as f32;
    let [n, c, hi, wi] = g.input_shape();
    let input = TensorNchw::from_fn(n, c, hi, wi, |n, c, h, w| ((n * 7 + c * 5 + h * 3 + w) as f32 + seed).sin());
    let filters = FilterSet::from_fn(c, g.hf(), g.wf(), |c, h, w| ((c + h * 2 + w) as f32 - seed).cos());
    let want = forward_naive(&input, &filters, &g).unwrap();
    if let Ok(got) = forward_direct(&input, &filters, &g, &ExecConfig::serial()) {
        assert!(dwconv::metrics::max_rel_err(got.data(), want.data()) < 1e-4);
    }
});
