use std::error::Error;
use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::time::Instant;

use dwconv::analysis::{measure_naive_forward_traffic, measure_traffic};
use dwconv::metrics::max_rel_err;
use dwconv::parallel::default_threads;
use dwconv::reference::{
    backward_gemm_baseline, backward_naive, forward_gemm_baseline, forward_naive, wgrad_gemm_baseline, wgrad_naive,
};
use dwconv::schedule::select_tile;
use dwconv::{
    backward_direct, forward_direct, mobilenet_layer_suite, parse_layer_file, traffic_ours, traffic_tengine,
    wgrad_direct, ConvGeometry, ExecConfig, FilterSet, LayerConfig, PassKind, TensorNchw, TilePolicy,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::args::{Args, Impl};
use crate::report::{median, BenchRecord, CsvSink, Traffic};

#[derive(Debug, Default)]
pub struct Summary {
    pub rows: usize,
    pub skipped: usize,
    pub failed_checks: usize,
}

struct Problem {
    geom: ConvGeometry,
    input: TensorNchw,
    filters: FilterSet,
    dout: TensorNchw,
}

impl Problem {
    fn new(geom: ConvGeometry, rng: &mut impl Rng) -> Self {
        let mut fill =
            |[n, c, h, w]: [usize; 4]| TensorNchw::from_fn(n, c, h, w, |_, _, _, _| rng.gen_range(-1.0..1.0));
        let input = fill(geom.input_shape());
        let dout = fill(geom.output_shape());
        let filters = FilterSet::from_fn(geom.c(), geom.hf(), geom.wf(), |_, _, _| rng.gen_range(-1.0..1.0));
        Self {
            geom,
            input,
            filters,
            dout,
        }
    }
}

fn tolerance(pass: PassKind) -> f64 {
    match pass {
        PassKind::Forward | PassKind::Backward => 1e-5,
        PassKind::WeightGradient => 1e-4,
    }
}

fn execute(pass: PassKind, imp: Impl, p: &Problem, cfg: &ExecConfig) -> dwconv::Result<Vec<f32>> {
    let g = &p.geom;
    Ok(match (pass, imp) {
        (PassKind::Forward, Impl::Direct) => forward_direct(&p.input, &p.filters, g, cfg)?.into_vec(),
        (PassKind::Forward, Impl::Naive) => forward_naive(&p.input, &p.filters, g)?.into_vec(),
        (PassKind::Forward, Impl::Gemm) => forward_gemm_baseline(&p.input, &p.filters, g)?.into_vec(),
        (PassKind::Backward, Impl::Direct) => backward_direct(&p.dout, &p.filters, g, cfg)?.into_vec(),
        (PassKind::Backward, Impl::Naive) => backward_naive(&p.dout, &p.filters, g)?.into_vec(),
        (PassKind::Backward, Impl::Gemm) => backward_gemm_baseline(&p.dout, &p.filters, g)?.into_vec(),
        (PassKind::WeightGradient, Impl::Direct) => wgrad_direct(&p.input, &p.dout, g, cfg)?.into_vec(),
        (PassKind::WeightGradient, Impl::Naive) => wgrad_naive(&p.input, &p.dout, g)?.into_vec(),
        (PassKind::WeightGradient, Impl::Gemm) => wgrad_gemm_baseline(&p.input, &p.dout, g)?.into_vec(),
    })
}

fn load_layers(args: &Args) -> Result<Vec<LayerConfig>, Box<dyn Error>> {
    let mut layers = match &args.layers {
        Some(path) => {
            let text = std::fs::read_to_string(path).map_err(|e| format!("cannot read {}: {e}", path.display()))?;
            parse_layer_file(&text, &path.display().to_string()).map_err(|e| format!("{}: {e}", path.display()))?
        }
        None => mobilenet_layer_suite(),
    };
    if let Some(n) = args.batch {
        for l in &mut layers {
            l.geometry = l.geometry.with_batch(n)?;
        }
    }
    Ok(layers)
}

fn traffic(pass: PassKind, imp: Impl, g: &ConvGeometry, tile: TilePolicy) -> dwconv::Result<Option<Traffic>> {
    Ok(match (pass, imp) {
        (PassKind::Forward, Impl::Direct) => {
            let main = match tile {
                TilePolicy::Fixed(t) => t,
                TilePolicy::Auto => select_tile(g.stride()),
            };
            Some(Traffic::from(&traffic_ours(g, &main)))
        }
        (_, Impl::Direct) => Some(Traffic::measured(&measure_traffic(pass, g, tile)?, g.flops())),
        (PassKind::Forward, Impl::Naive) => Some(Traffic::measured(&measure_naive_forward_traffic(g)?, g.flops())),
        _ => None,
    })
}

/// Prints the forward arithmetic intensity of the tiled kernel next to the
/// row-streaming model.
fn print_traffic_comparison(layers: &[LayerConfig], tile: TilePolicy) {
    eprintln!("{:<24} {:>10} {:>10} {:>12}", "layer", "ai_ours", "ai_tg", "tc_tg");
    for l in layers {
        let g = &l.geometry;
        if !g.is_3x3() {
            continue;
        }
        let main = match tile {
            TilePolicy::Fixed(t) => t,
            TilePolicy::Auto => select_tile(g.stride()),
        };
        let ours = traffic_ours(g, &main);
        let tg = traffic_tengine(g);
        let flag = if ours.approximate { " ~" } else { "" };
        eprintln!(
            "{:<24} {:>10.4} {:>10.4} {:>12}{flag}",
            l.name, ours.ai, tg.ai, tg.tc_total
        );
    }
}

pub fn run(args: &Args) -> Result<Summary, Box<dyn Error>> {
    let layers = load_layers(args)?;
    let tile = args.tile.map_or(TilePolicy::Auto, TilePolicy::Fixed);
    let cfg = ExecConfig {
        tile,
        threads: args.threads.unwrap_or_else(default_threads),
        cb: args.cb.map(|c| c as usize),
    };
    let out: Box<dyn Write> = match &args.csv {
        Some(path) => Box::new(BufWriter::new(
            File::create(path).map_err(|e| format!("cannot create {}: {e}", path.display()))?,
        )),
        None => Box::new(io::stdout().lock()),
    };
    let mut sink = CsvSink::new(out, args.seed)?;
    let mut rng = ChaCha8Rng::seed_from_u64(args.seed);
    let mut summary = Summary::default();
    let baseline = [Impl::Gemm, Impl::Naive].into_iter().find(|b| args.impls.contains(b));

    for layer in &layers {
        let problem = Problem::new(layer.geometry, &mut rng);
        let g = &problem.geom;
        for pass in args.op.passes() {
            let oracle = if args.check {
                Some(execute(pass, Impl::Naive, &problem, &cfg)?)
            } else {
                None
            };
            let mut records = Vec::new();
            let mut baseline_seconds = None;
            for &imp in &args.impls {
                let first = match execute(pass, imp, &problem, &cfg) {
                    Ok(v) => v,
                    Err(e @ dwconv::Error::Unsupported(_)) => {
                        eprintln!("skipping {} {} {}: {e}", layer.name, pass.label(), imp.label());
                        summary.skipped += 1;
                        continue;
                    }
                    Err(e) => return Err(e.into()),
                };
                let err = oracle.as_ref().map(|o| max_rel_err(&first, o));
                if let Some(e) = err.filter(|&e| e.is_nan() || e > tolerance(pass)) {
                    log::error!(
                        "{} {} {}: max relative error {e:.3e} exceeds {:.0e}",
                        layer.name,
                        pass.label(),
                        imp.label(),
                        tolerance(pass)
                    );
                    summary.failed_checks += 1;
                }
                let mut times: Vec<f64> = (0..args.iters)
                    .map(|_| {
                        let t = Instant::now();
                        let r = execute(pass, imp, &problem, &cfg);
                        let elapsed = t.elapsed().as_secs_f64();
                        drop(r);
                        elapsed
                    })
                    .collect();
                let seconds = median(&mut times);
                if Some(imp) == baseline {
                    baseline_seconds = Some(seconds);
                }
                records.push(BenchRecord {
                    name: layer.name.clone(),
                    pass: pass.label(),
                    imp: imp.label(),
                    threads: if imp == Impl::Direct { cfg.threads() } else { 1 },
                    batch: g.n(),
                    seconds_median: seconds,
                    gflops: g.flops() as f64 / seconds / 1e9,
                    speedup: None,
                    max_rel_err: err,
                    traffic: if args.traffic {
                        traffic(pass, imp, g, tile)?
                    } else {
                        None
                    },
                });
            }
            for mut r in records {
                r.speedup = baseline_seconds.map(|b| b / r.seconds_median);
                sink.write(&r)?;
                summary.rows += 1;
            }
        }
    }
    if args.traffic {
        print_traffic_comparison(&layers, tile);
    }
    Ok(summary)
}
