use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{ArgGroup, Parser, ValueEnum};

use slabhash::bench::{run_bench, BenchConfig, BenchMode, OperationDistribution, Sizing};
use slabhash::SlabLayout;

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Mode {
    BulkBuild,
    BulkSearch,
    Incremental,
    Concurrent,
}

impl From<Mode> for BenchMode {
    fn from(m: Mode) -> Self {
        match m {
            Mode::BulkBuild => BenchMode::BulkBuild,
            Mode::BulkSearch => BenchMode::BulkSearch,
            Mode::Incremental => BenchMode::Incremental,
            Mode::Concurrent => BenchMode::Concurrent,
        }
    }
}

/// Slab hash benchmarks. Writes CSV to --out or stdout.
#[derive(Debug, Parser)]
#[command(name = "slabhash-bench", version)]
#[command(group(ArgGroup::new("sizing").args(["buckets", "util"])))]
#[command(group(ArgGroup::new("layout").args(["mode_kv", "mode_key_only"])))]
struct Cli {
    #[arg(long, value_enum)]
    mode: Mode,
    /// Table size(s); comma-separated list allowed.
    #[arg(long, value_delimiter = ',')]
    n: Vec<u64>,
    /// Bucket count(s).
    #[arg(long, value_delimiter = ',')]
    buckets: Vec<u32>,
    /// Target memory utilization(s) in (0, 0.9375].
    #[arg(long, value_delimiter = ',')]
    util: Vec<f64>,
    /// Operation mix a,b,c,d (inserts, deletes, existing searches, absent
    /// searches). Repeat to run several mixes.
    #[arg(long)]
    dist: Vec<OperationDistribution>,
    /// Ops per batch (incremental, concurrent); comma-separated list allowed
    #[arg(long = "batch-size", value_delimiter = ',')]
    batch_size: Vec<usize>,
    /// Batches per trial (concurrent)
    #[arg(long)]
    batches: Option<usize>,
    /// Worker threads, one emulated warp each
    #[arg(long)]
    warps: Option<usize>,
    /// Seed for hash parameters and workloads
    #[arg(long)]
    seed: Option<u64>,
    /// Trials averaged per row
    #[arg(long)]
    trials: Option<usize>,
    /// Key-value slabs (15 pairs per slab). The default.
    #[arg(long = "mode-kv")]
    mode_kv: bool,
    /// Key-only slabs (30 keys per slab).
    #[arg(long = "mode-key-only")]
    mode_key_only: bool,
    /// CSV output file (default: stdout)
    #[arg(long)]
    out: Option<PathBuf>,
}

impl Cli {
    fn config(&self) -> BenchConfig {
        let mut cfg = BenchConfig::defaults(self.mode.into());
        if !self.n.is_empty() {
            cfg.n = self.n.clone();
        }
        if !self.buckets.is_empty() {
            cfg.sizing = Sizing::Buckets(self.buckets.clone());
        } else if !self.util.is_empty() {
            cfg.sizing = Sizing::Utilization(self.util.clone());
        }
        if !self.dist.is_empty() {
            cfg.dists = self.dist.clone();
        }
        if !self.batch_size.is_empty() {
            cfg.batch_sizes = self.batch_size.clone();
        }
        cfg.warps = self.warps.unwrap_or(cfg.warps);
        if self.batch_size.is_empty() && cfg.mode == BenchMode::Concurrent {
            cfg.batch_sizes = vec![32 * cfg.warps];
        }
        cfg.batches = self.batches.unwrap_or(cfg.batches);
        cfg.seed = self.seed.unwrap_or(cfg.seed);
        cfg.trials = self.trials.unwrap_or(cfg.trials);
        if self.mode_key_only {
            cfg.layout = SlabLayout::KeyOnly;
        }
        cfg
    }
}

fn run(cli: &Cli) -> Result<()> {
    let cfg = cli.config();
    let rows = match &cli.out {
        Some(path) => {
            let file = File::create(path).with_context(|| format!("cannot create {}", path.display()))?;
            let mut w = BufWriter::new(file);
            let rows = run_bench(&cfg, &mut w)?;
            w.flush()?;
            rows
        }
        None => run_bench(&cfg, io::stdout().lock())?,
    };
    if let Some(path) = &cli.out {
        eprintln!("wrote {rows} rows to {}", path.display());
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("slabhash-bench: {e:#}");
            ExitCode::from(2)
        }
    }
}
