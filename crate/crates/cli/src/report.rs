use std::io::Write;

use dwconv::{MeasuredTraffic, TrafficReport};

pub const HEADER: [&str; 14] = [
    "name",
    "pass",
    "impl",
    "threads",
    "batch",
    "seconds_median",
    "gflops",
    "speedup_vs_baseline",
    "max_rel_err",
    "tc_f",
    "tc_o",
    "tc_i",
    "tc_total",
    "ai",
];

/// Traffic in bytes plus arithmetic intensity.
#[derive(Debug, Clone, Copy)]
pub struct Traffic {
    pub tc_f: u64,
    pub tc_o: u64,
    pub tc_i: u64,
    pub tc_total: u64,
    pub ai: f64,
}

impl From<&TrafficReport> for Traffic {
    fn from(r: &TrafficReport) -> Self {
        Self {
            tc_f: r.tc_f,
            tc_o: r.tc_o,
            tc_i: r.tc_i,
            tc_total: r.tc_total,
            ai: r.ai,
        }
    }
}

impl Traffic {
    pub fn measured(m: &MeasuredTraffic, ops: u64) -> Self {
        let (tc_f, tc_o, tc_i) = (4 * m.loads_f, 4 * (m.loads_o + m.stores_o), 4 * m.loads_i);
        let tc_total = tc_f + tc_o + tc_i;
        Self {
            tc_f,
            tc_o,
            tc_i,
            tc_total,
            ai: ops as f64 / tc_total as f64,
        }
    }
}

#[derive(Debug, Clone)]
pub struct BenchRecord {
    pub name: String,
    pub pass: &'static str,
    pub imp: &'static str,
    pub threads: usize,
    pub batch: usize,
    pub seconds_median: f64,
    pub gflops: f64,
    pub speedup: Option<f64>,
    pub max_rel_err: Option<f64>,
    pub traffic: Option<Traffic>,
}

impl BenchRecord {
    fn fields(&self) -> Vec<String> {
        let opt = |v: Option<String>| v.unwrap_or_default();
        let t = self.traffic;
        vec![
            self.name.clone(),
            self.pass.to_string(),
            self.imp.to_string(),
            self.threads.to_string(),
            self.batch.to_string(),
            format!("{:.6e}", self.seconds_median),
            format!("{:.3}", self.gflops),
            opt(self.speedup.map(|s| format!("{s:.3}"))),
            opt(self.max_rel_err.map(|e| format!("{e:.3e}"))),
            opt(t.map(|t| t.tc_f.to_string())),
            opt(t.map(|t| t.tc_o.to_string())),
            opt(t.map(|t| t.tc_i.to_string())),
            opt(t.map(|t| t.tc_total.to_string())),
            opt(t.map(|t| format!("{:.4}", t.ai))),
        ]
    }
}

pub fn median(times: &mut [f64]) -> f64 {
    times.sort_by(f64::total_cmp);
    let mid = times.len() / 2;
    if times.len() % 2 == 1 {
        times[mid]
    } else {
        (times[mid - 1] + times[mid]) / 2.0
    }
}

/// `# seed=N` line, header, then one line per record.
pub struct CsvSink<W: Write> {
    out: csv::Writer<W>,
}

impl<W: Write> CsvSink<W> {
    pub fn new(mut inner: W, seed: u64) -> csv::Result<Self> {
        writeln!(inner, "# seed={seed}")?;
        let mut out = csv::Writer::from_writer(inner);
        out.write_record(HEADER)?;
        Ok(Self { out })
    }

    pub fn write(&mut self, r: &BenchRecord) -> csv::Result<()> {
        self.out.write_record(r.fields())?;
        self.out.flush()?;
        Ok(())
    }
}
