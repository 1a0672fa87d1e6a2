//! Thread-level work distribution for the direct passes.
//!
//! Forward and backward passes split over (sample, channel block) and, when
//! that gives fewer items than threads, over bands of output rows. The
//! weight gradient splits over channels only, so every channel accumulates
//! in a fixed order whatever the thread count.

use std::collections::HashMap;
use std::ops::Range;
use std::sync::{Arc, Mutex, OnceLock};

use rayon::prelude::*;
use rayon::ThreadPool;

use crate::error::{Error, Result};
use crate::geometry::ConvGeometry;

/// Environment variable overriding the default worker count.
pub const THREADS_ENV: &str = "DWCONV_NUM_THREADS";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum PassKind {
    Forward,
    Backward,
    WeightGradient,
}

impl PassKind {
    pub fn label(&self) -> &'static str {
        match self {
            PassKind::Forward => "fwd",
            PassKind::Backward => "bwd",
            PassKind::WeightGradient => "wgrad",
        }
    }
}

/// A rectangular share of the output: samples × channels × plane rows.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WorkItem {
    pub n: Range<usize>,
    pub c: Range<usize>,
    pub rows: Range<usize>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WorkPlan {
    pub items: Vec<WorkItem>,
    pub cb: usize,
    pub threads: usize,
}

/// Worker count from `DWCONV_NUM_THREADS`, else the machine's parallelism.
pub fn default_threads() -> usize {
    std::env::var(THREADS_ENV)
        .ok()
        .and_then(|v| v.trim().parse().ok())
        .filter(|&t: &usize| t >= 1)
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()))
}

/// `min(C, max(1, C*N / (4*threads)))`, rounded down to a power of two.
pub fn default_cb(geom: &ConvGeometry, threads: usize) -> usize {
    let c = geom.c();
    let raw = (c * geom.n() / (4 * threads.max(1))).clamp(1, c);
    1 << raw.ilog2()
}

/// Splits a pass into work items.
///
/// `rows` is the height of the plane the pass writes (`ho` forward, `hi`
/// backward) and `row_quantum` the height of its main tile band; row splits
/// only fall on multiples of it.
pub fn plan(
    geom: &ConvGeometry,
    pass: PassKind,
    threads: usize,
    cb: usize,
    rows: usize,
    row_quantum: usize,
) -> WorkPlan {
    let threads = threads.max(1);
    let cb = cb.clamp(1, geom.c());
    if pass == PassKind::WeightGradient {
        let items = (0..geom.c())
            .map(|c| WorkItem {
                n: 0..geom.n(),
                c: c..c + 1,
                rows: 0..rows,
            })
            .collect();
        return WorkPlan { items, cb: 1, threads };
    }

    let c_blocks: Vec<Range<usize>> = (0..geom.c())
        .step_by(cb)
        .map(|c0| c0..(c0 + cb).min(geom.c()))
        .collect();
    let base = geom.n() * c_blocks.len();
    let quantum = row_quantum.max(1);
    let bands = rows.div_ceil(quantum).max(1);
    let splits = if base >= threads {
        1
    } else {
        threads.div_ceil(base).min(bands)
    };
    // band index boundaries, spread evenly; the last block takes the tail rows
    let row_blocks: Vec<Range<usize>> = (0..splits)
        .map(|i| {
            let b0 = i * bands / splits;
            let b1 = (i + 1) * bands / splits;
            let r1 = if i + 1 == splits { rows } else { b1 * quantum };
            b0 * quantum..r1
        })
        .collect();

    let mut items = Vec::with_capacity(base * splits);
    for n in 0..geom.n() {
        for c in &c_blocks {
            for r in &row_blocks {
                items.push(WorkItem {
                    n: n..n + 1,
                    c: c.clone(),
                    rows: r.clone(),
                });
            }
        }
    }
    WorkPlan { items, cb, threads }
}

/// Shape of the tensor a plan writes into.
#[derive(Debug, Clone, Copy)]
pub struct OutputLayout {
    /// Number of samples, or 1 when the output has no batch axis (filters).
    pub batch: usize,
    pub channels: usize,
    pub rows: usize,
    pub cols: usize,
}

/// Rows `row0..` of one (n, c) plane owned by a work item.
#[derive(Debug)]
pub struct PlaneRows<'a> {
    pub n: usize,
    pub c: usize,
    pub row0: usize,
    pub data: &'a mut [f32],
}

/// Hands out disjoint mutable views of `out`, one list per work item.
fn split_output<'a>(plan: &WorkPlan, layout: OutputLayout, out: &'a mut [f32]) -> Result<Vec<Vec<PlaneRows<'a>>>> {
    let plane_len = layout.rows * layout.cols;
    if out.len() != layout.batch * layout.channels * plane_len {
        return Err(Error::ShapeMismatch(format!(
            "output has {} elements, layout needs {}",
            out.len(),
            layout.batch * layout.channels * plane_len
        )));
    }
    let planes = layout.batch * layout.channels;
    let mut owners: Vec<Vec<(usize, usize)>> = vec![Vec::new(); planes];
    for (idx, item) in plan.items.iter().enumerate() {
        if item.rows.end > layout.rows || item.c.end > layout.channels {
            return Err(Error::InvalidGeometry(format!("work item {item:?} exceeds the output")));
        }
        let samples = if layout.batch == 1 { 0..1 } else { item.n.clone() };
        for n in samples {
            for c in item.c.clone() {
                owners[n * layout.channels + c].push((item.rows.start, idx));
            }
        }
    }

    let mut views: Vec<Vec<PlaneRows<'a>>> = (0..plan.items.len()).map(|_| Vec::new()).collect();
    if plane_len == 0 {
        return Ok(views);
    }
    for (p, plane) in out.chunks_mut(plane_len).enumerate() {
        let owners = &mut owners[p];
        owners.sort_unstable();
        let mut rest = plane;
        let mut next_row = 0;
        for (k, &(row0, idx)) in owners.iter().enumerate() {
            let end = plan.items[idx].rows.end;
            if row0 != next_row {
                return Err(Error::InvalidGeometry(format!(
                    "plane {p}: rows {next_row}..{row0} are not owned by exactly one work item"
                )));
            }
            let take = if k + 1 == owners.len() {
                rest.len()
            } else {
                (end - row0) * layout.cols
            };
            let (mine, tail) = std::mem::take(&mut rest).split_at_mut(take);
            rest = tail;
            views[idx].push(PlaneRows {
                n: p / layout.channels,
                c: p % layout.channels,
                row0,
                data: mine,
            });
            next_row = end;
        }
        if next_row != layout.rows {
            return Err(Error::InvalidGeometry(format!(
                "plane {p}: rows from {next_row} have no owner"
            )));
        }
    }
    Ok(views)
}

fn pool(threads: usize) -> Result<Arc<ThreadPool>> {
    static POOLS: OnceLock<Mutex<HashMap<usize, Arc<ThreadPool>>>> = OnceLock::new();
    let mut pools = POOLS
        .get_or_init(Default::default)
        .lock()
        .unwrap_or_else(|e| e.into_inner());
    if let Some(p) = pools.get(&threads) {
        return Ok(p.clone());
    }
    let p = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .thread_name(|i| format!("dwconv-{i}"))
        .build()
        .map_err(|e| Error::Unsupported(format!("cannot start {threads} worker threads: {e}")))?;
    let p = Arc::new(p);
    pools.insert(threads, p.clone());
    Ok(p)
}

/// Runs `work` once per item, in parallel when the plan has more than one
/// thread, each call receiving exclusive views of the rows its item owns.
///
/// Results come back in item order. If any item fails, the first failure in
/// item order is returned once all items have finished.
pub fn execute<R, F>(plan: &WorkPlan, layout: OutputLayout, out: &mut [f32], work: F) -> Result<Vec<R>>
where
    R: Send,
    F: Fn(&WorkItem, &mut [PlaneRows<'_>]) -> Result<R> + Sync,
{
    let views = split_output(plan, layout, out)?;
    let results: Vec<Result<R>> = if plan.threads <= 1 || plan.items.len() <= 1 {
        plan.items
            .iter()
            .zip(views)
            .map(|(item, mut v)| work(item, &mut v))
            .collect()
    } else {
        pool(plan.threads)?.install(|| {
            plan.items
                .par_iter()
                .zip(views.into_par_iter())
                .map(|(item, mut v)| work(item, &mut v))
                .collect()
        })
    };
    results.into_iter().collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn geom(n: usize, c: usize, size: usize) -> ConvGeometry {
        ConvGeometry::square3x3(n, c, size, 1, 1).unwrap()
    }

    fn layout(g: &ConvGeometry) -> OutputLayout {
        OutputLayout {
            batch: g.n(),
            channels: g.c(),
            rows: g.ho(),
            cols: g.wo(),
        }
    }

    #[test]
    fn large_batch_needs_no_row_split() {
        let g = geom(256, 32, 112);
        let p = plan(&g, PassKind::Forward, 16, 8, g.ho(), 4);
        assert_eq!(p.items.len(), 256 * 4);
        assert!(p.items.iter().all(|i| i.rows == (0..112)));
    }

    #[test]
    fn few_planes_split_rows() {
        let g = geom(1, 8, 112);
        let p = plan(&g, PassKind::Forward, 48, 1, g.ho(), 4);
        assert_eq!(p.items.len(), 48);
        for item in &p.items {
            assert_eq!(item.rows.start % 4, 0);
        }
        // a 7-row plane has two bands at most
        let g = geom(1, 8, 7);
        let p = plan(&g, PassKind::Forward, 48, 1, g.ho(), 4);
        assert_eq!(p.items.len(), 16);
    }

    #[test]
    fn wgrad_plans_one_item_per_channel() {
        let g = geom(3, 5, 9);
        let p = plan(&g, PassKind::WeightGradient, 8, 4, g.ho(), 2);
        assert_eq!(p.items.len(), 5);
        assert!(p.items.iter().all(|i| i.n == (0..3) && i.c.len() == 1));
    }

    #[test]
    fn default_cb_is_power_of_two() {
        assert_eq!(default_cb(&geom(1, 32, 8), 1), 8);
        assert_eq!(default_cb(&geom(1, 24, 8), 1), 4);
        assert_eq!(default_cb(&geom(1, 3, 8), 16), 1);
        assert_eq!(default_cb(&geom(64, 8, 8), 1), 8);
    }

    #[test]
    fn every_element_has_one_owner() {
        for (n, c, size, threads, cb) in [(1, 3, 9, 7, 1), (2, 5, 13, 3, 2), (1, 1, 30, 16, 1), (4, 4, 5, 1, 4)] {
            let g = geom(n, c, size);
            let p = plan(&g, PassKind::Forward, threads, cb, g.ho(), 4);
            let mut owner = vec![-1.0f32; n * c * g.ho() * g.wo()];
            execute(&p, layout(&g), &mut owner, |item, views| {
                let id = p.items.iter().position(|i| i == item).unwrap() as f32;
                for v in views.iter_mut() {
                    for x in v.data.iter_mut() {
                        assert_eq!(*x, -1.0, "written twice");
                        *x = id;
                    }
                }
                Ok(())
            })
            .unwrap();
            assert!(owner.iter().all(|&v| v >= 0.0));
        }
    }

    #[test]
    fn empty_plan_is_a_no_op() {
        let p = WorkPlan {
            items: vec![],
            cb: 1,
            threads: 4,
        };
        let l = OutputLayout {
            batch: 0,
            channels: 0,
            rows: 0,
            cols: 0,
        };
        let out: Vec<()> = execute(&p, l, &mut [], |_, _| Ok(())).unwrap();
        assert!(out.is_empty());
    }

    #[test]
    fn first_failure_in_item_order_is_reported() {
        let g = geom(1, 4, 8);
        let p = plan(&g, PassKind::Forward, 4, 1, g.ho(), 4);
        let mut out = vec![0.0; 4 * 64];
        let err = execute(&p, layout(&g), &mut out, |item, _| {
            if item.c.start >= 1 {
                Err(Error::Unsupported(format!("channel {}", item.c.start)))
            } else {
                Ok(())
            }
        })
        .unwrap_err();
        assert_eq!(err, Error::Unsupported("channel 1".into()));
    }

    #[test]
    fn overlapping_items_are_rejected() {
        let g = geom(1, 1, 8);
        let p = WorkPlan {
            items: vec![
                WorkItem {
                    n: 0..1,
                    c: 0..1,
                    rows: 0..5,
                },
                WorkItem {
                    n: 0..1,
                    c: 0..1,
                    rows: 4..8,
                },
            ],
            cb: 1,
            threads: 1,
        };
        let mut out = vec![0.0; 64];
        assert!(execute(&p, layout(&g), &mut out, |_, _| Ok(())).is_err());
    }
}
