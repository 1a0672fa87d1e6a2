use std::path::PathBuf;

use clap::{Parser, ValueEnum};
use dwconv::{PassKind, TileConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Op {
    Fwd,
    Bwd,
    Wgrad,
    All,
}

impl Op {
    pub fn passes(self) -> Vec<PassKind> {
        match self {
            Op::Fwd => vec![PassKind::Forward],
            Op::Bwd => vec![PassKind::Backward],
            Op::Wgrad => vec![PassKind::WeightGradient],
            Op::All => vec![PassKind::Forward, PassKind::Backward, PassKind::WeightGradient],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Impl {
    Direct,
    Naive,
    Gemm,
}

impl Impl {
    pub fn label(self) -> &'static str {
        match self {
            Impl::Direct => "direct",
            Impl::Naive => "naive",
            Impl::Gemm => "gemm",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Suite {
    Mobilenet,
}

/// Check and time depthwise convolution passes over a layer suite.
#[derive(Debug, Parser)]
#[command(name = "dwconv-bench", version)]
pub struct Args {
    /// Pass to run.
    #[arg(long, value_enum, default_value = "all")]
    pub op: Op,

    /// Implementations to run, comma separated.
    #[arg(
        long = "impl",
        value_enum,
        value_delimiter = ',',
        default_value = "direct,gemm,naive"
    )]
    pub impls: Vec<Impl>,

    /// Built-in layer suite.
    #[arg(long, value_enum, conflicts_with = "layers")]
    pub suite: Option<Suite>,

    /// Layer file: `name,N,C,Hi,Wi,Hf,Wf,s,pt,pb,pl,pr` per line, `#` comments.
    #[arg(long, value_name = "FILE")]
    pub layers: Option<PathBuf>,

    /// Batch size replacing each layer's N.
    #[arg(long)]
    pub batch: Option<usize>,

    /// Worker threads for the direct passes.
    #[arg(long)]
    pub threads: Option<usize>,

    /// Timed iterations per row; the median is reported.
    #[arg(long, default_value_t = 10, value_parser = clap::value_parser!(u32).range(1..))]
    pub iters: u32,

    /// Register tile for the direct passes, e.g. 4x4 or 6x8.
    #[arg(long, value_name = "HxW")]
    pub tile: Option<TileConfig>,

    /// Channel block size for the direct passes.
    #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
    pub cb: Option<u64>,

    /// Compare every result against the naive oracle; fail on excess error.
    #[arg(long)]
    pub check: bool,

    /// Fill the traffic columns and print the traffic comparison.
    #[arg(long)]
    pub traffic: bool,

    /// Write the CSV here instead of standard output.
    #[arg(long, value_name = "PATH")]
    pub csv: Option<PathBuf>,

    /// Seed for the input tensors.
    #[arg(long, default_value_t = 42)]
    pub seed: u64,
}
