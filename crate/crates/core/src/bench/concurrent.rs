//! Mixed insert/delete/search batches against a pre-built table.

use std::sync::Arc;
use std::time::Instant;

use serde::Serialize;

use super::model::buckets_for_utilization;
use super::workload::{gen_workload, value_for, KeyState, OperationDistribution};
use super::{bench_allocator, BenchConfig, BenchError, Sizing};
use crate::alloc::SlabAlloc;
use crate::list::{Op, OpKind, OpOutcome, SlabLayout};
use crate::table::SlabHashTable;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConcurrentRow {
    pub dist: String,
    pub initial_util: f64,
    pub num_warps: usize,
    pub ops_per_sec: f64,
    pub mean_probes: f64,
    pub allocator_retries: u64,
}

#[derive(Debug, Clone, Copy)]
pub struct ConcurrentParams {
    pub dist: OperationDistribution,
    pub initial_n: u64,
    pub buckets: u32,
    pub batch_size: usize,
    pub batches: usize,
    pub warps: usize,
    pub layout: SlabLayout,
    pub seed: u64,
}

#[derive(Debug, Clone, Default)]
pub struct ConcurrentTrial {
    pub ops: u64,
    pub secs: f64,
    pub probe_sum: u64,
    pub allocator_retries: u64,
    /// Utilization right after the initial build.
    pub initial_util: f64,
    /// Every op after the build, with its outcome, when recording.
    pub log: Option<(Vec<Op>, Vec<OpOutcome>)>,
}

impl ConcurrentTrial {
    pub fn ops_per_sec(&self) -> f64 {
        self.ops as f64 / self.secs
    }

    pub fn mean_probes(&self) -> f64 {
        self.probe_sum as f64 / self.ops.max(1) as f64
    }
}

/// Keys and values of the initial build for these parameters.
pub fn initial_pairs(p: &ConcurrentParams) -> Result<(KeyState, Vec<(u32, u32)>), BenchError> {
    let mut keys = KeyState::new(p.seed);
    let initial = keys.preload(p.initial_n as usize)?;
    Ok((keys, initial.iter().map(|&k| (k, value_for(k))).collect()))
}

/// Builds the initial table, then times `batches` generated batches.
///
/// Afterwards the live count must equal the initial size plus acknowledged
/// inserts minus deletes that found a key, both by bookkeeping and by a
/// full scan.
pub fn run_concurrent_trial(p: &ConcurrentParams, record: bool) -> Result<ConcurrentTrial, BenchError> {
    let (mut keys, pairs) = initial_pairs(p)?;
    let alloc = Arc::new(SlabAlloc::new(bench_allocator())?);
    let table = SlabHashTable::new(p.buckets, p.layout, p.seed, Arc::clone(&alloc))?;
    table.bulk_build(&pairs, p.warps)?;
    let initial_util = table.stats()?.utilization;

    let retries_before = alloc.stats().cas_failures;
    let mut trial = ConcurrentTrial { initial_util, log: record.then(Default::default), ..Default::default() };
    let (mut inserted, mut deleted) = (0u64, 0u64);
    for batch in 0..p.batches {
        let seed = p.seed ^ (batch as u64 + 1).wrapping_mul(0xA076_1D64_78BD_642F);
        let ops = gen_workload(seed, &p.dist, p.batch_size, &mut keys)?;
        let start = Instant::now();
        let report = table.execute_batch(&ops, p.warps)?;
        trial.secs += start.elapsed().as_secs_f64();
        keys.commit();

        trial.ops += ops.len() as u64;
        trial.probe_sum += report.probes.iter().map(|&x| x as u64).sum::<u64>();
        for (op, outcome) in ops.iter().zip(&report.outcomes) {
            match (op.kind, outcome) {
                (OpKind::Insert, OpOutcome::Stored { .. }) => inserted += 1,
                (OpKind::Delete, OpOutcome::Deleted(n)) => deleted += *n as u64,
                (_, OpOutcome::Failed(e)) => return Err(BenchError::Check(format!("{op} failed: {e}"))),
                _ => {}
            }
        }
        if let Some((log_ops, log_out)) = trial.log.as_mut() {
            log_ops.extend_from_slice(&ops);
            log_out.extend(report.outcomes);
        }
    }
    trial.allocator_retries = alloc.stats().cas_failures - retries_before;

    let expected = p.initial_n + inserted - deleted;
    let scanned = table.scan_live()?;
    if scanned != expected || table.live_count() != expected as i64 {
        return Err(BenchError::Check(format!(
            "live count mismatch: expected {expected}, scan {scanned}, bookkeeping {}",
            table.live_count()
        )));
    }
    Ok(trial)
}

pub fn run_concurrent_bench(cfg: &BenchConfig) -> Result<Vec<ConcurrentRow>, BenchError> {
    let mut rows = Vec::new();
    let initial_n = cfg.n[0];
    let points: Vec<(u32, f64)> = match &cfg.sizing {
        Sizing::Utilization(us) => us
            .iter()
            .map(|&u| {
                buckets_for_utilization(initial_n, u, cfg.layout)
                    .map(|b| (b, u))
                    .ok_or_else(|| BenchError::Config(format!("utilization {u} is infeasible")))
            })
            .collect::<Result<_, _>>()?,
        Sizing::Buckets(bs) => bs.iter().map(|&b| (b, f64::NAN)).collect(),
    };
    for &(buckets, target) in &points {
        for dist in &cfg.dists {
            let (mut secs, mut ops, mut probes, mut retries, mut util) = (0.0, 0u64, 0u64, 0u64, 0.0);
            for t in 0..cfg.trials {
                let p = ConcurrentParams {
                    dist: *dist,
                    initial_n,
                    buckets,
                    batch_size: cfg.batch_sizes[0],
                    batches: cfg.batches,
                    warps: cfg.warps,
                    layout: cfg.layout,
                    seed: cfg.seed.wrapping_add(t as u64),
                };
                let trial = run_concurrent_trial(&p, false)?;
                secs += trial.secs;
                ops += trial.ops;
                probes += trial.probe_sum;
                retries += trial.allocator_retries;
                util += trial.initial_util;
            }
            rows.push(ConcurrentRow {
                dist: dist.to_string(),
                initial_util: if target.is_nan() { util / cfg.trials as f64 } else { target },
                num_warps: cfg.warps,
                ops_per_sec: ops as f64 / secs,
                mean_probes: probes as f64 / ops.max(1) as f64,
                allocator_retries: retries,
            });
        }
    }
    Ok(rows)
}
