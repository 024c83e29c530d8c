//! Incremental batch insertion versus rebuilding from scratch.
//!
//! Both sides see the same batches. The incremental table inserts each new
//! batch; the baseline builds a fresh table (and allocator) holding every
//! element seen so far.

use std::sync::Arc;
use std::time::Instant;

use serde::Serialize;

use super::model::buckets_for_utilization;
use super::workload::{value_for, KeyState};
use super::{bench_allocator, BenchConfig, BenchError, Sizing};
use crate::alloc::SlabAlloc;
use crate::list::{Op, SlabLayout};
use crate::table::SlabHashTable;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IncrementalRow {
    pub batch_size: usize,
    pub batch_index: usize,
    pub cumulative_n: u64,
    pub t_incremental: f64,
    pub t_rebuild: f64,
    pub cumulative_speedup: f64,
}

#[derive(Debug, Clone, Copy)]
pub struct IncrementalParams {
    pub final_n: u64,
    pub batch_size: usize,
    pub final_util: f64,
    pub layout: SlabLayout,
    pub seed: u64,
    pub warps: usize,
}

fn build_fresh(buckets: u32, layout: SlabLayout, seed: u64, pairs: &[(u32, u32)], warps: usize) -> Result<SlabHashTable, BenchError> {
    let alloc = Arc::new(SlabAlloc::new(bench_allocator())?);
    let table = SlabHashTable::new(buckets, layout, seed, alloc)?;
    table.bulk_build(pairs, warps)?;
    Ok(table)
}

/// One row per batch. `buckets` overrides the utilization-derived size.
pub fn run_incremental(p: &IncrementalParams, buckets: Option<u32>) -> Result<Vec<IncrementalRow>, BenchError> {
    let buckets = match buckets {
        Some(b) => b,
        None => buckets_for_utilization(p.final_n, p.final_util, p.layout)
            .ok_or_else(|| BenchError::Config(format!("utilization {} is infeasible", p.final_util)))?,
    };
    let keys = KeyState::new(p.seed).preload(p.final_n as usize)?;
    let pairs: Vec<(u32, u32)> = keys.iter().map(|&k| (k, value_for(k))).collect();

    let alloc = Arc::new(SlabAlloc::new(bench_allocator())?);
    let table = SlabHashTable::new(buckets, p.layout, p.seed, alloc)?;
    let (mut sum_inc, mut sum_rebuild) = (0.0, 0.0);
    let mut rows = Vec::new();
    for (i, batch) in pairs.chunks(p.batch_size).enumerate() {
        let ops: Vec<Op> = batch.iter().map(|&(k, v)| Op::insert(k, v)).collect();
        let start = Instant::now();
        let report = table.execute_batch(&ops, p.warps)?;
        let t_inc = start.elapsed().as_secs_f64();
        if let Some((j, e)) = report.failures().next() {
            return Err(BenchError::Check(format!("insert of key {} failed: {e}", ops[j].key)));
        }

        let upto = i * p.batch_size + batch.len();
        let start = Instant::now();
        let rebuilt = build_fresh(buckets, p.layout, p.seed, &pairs[..upto], p.warps)?;
        let t_rebuild = start.elapsed().as_secs_f64();
        drop(rebuilt);

        sum_inc += t_inc;
        sum_rebuild += t_rebuild;
        rows.push(IncrementalRow {
            batch_size: p.batch_size,
            batch_index: i + 1,
            cumulative_n: upto as u64,
            t_incremental: t_inc,
            t_rebuild,
            cumulative_speedup: sum_rebuild / sum_inc,
        });
    }
    Ok(rows)
}

pub fn run_incremental_bench(cfg: &BenchConfig) -> Result<Vec<IncrementalRow>, BenchError> {
    let mut rows = Vec::new();
    for &final_n in &cfg.n {
        for &batch_size in &cfg.batch_sizes {
            let (final_util, buckets) = match &cfg.sizing {
                Sizing::Utilization(u) => (u[0], None),
                Sizing::Buckets(b) => (f64::NAN, Some(b[0])),
            };
            let p = IncrementalParams { final_n, batch_size, final_util, layout: cfg.layout, seed: cfg.seed, warps: cfg.warps };
            rows.extend(run_incremental(&p, buckets)?);
        }
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_batch_is_even() {
        let p = IncrementalParams { final_n: 4096, batch_size: 4096, final_util: 0.65, layout: SlabLayout::KeyValue, seed: 1, warps: 1 };
        let rows = run_incremental(&p, None).unwrap();
        assert_eq!(rows.len(), 1);
        assert_eq!(rows[0].cumulative_n, 4096);
        // same work on both sides, only constant factors differ
        assert!(rows[0].cumulative_speedup > 0.2 && rows[0].cumulative_speedup < 5.0, "{rows:?}");
    }

    #[test]
    fn rows_accumulate() {
        let p = IncrementalParams { final_n: 5000, batch_size: 1024, final_util: 0.65, layout: SlabLayout::KeyOnly, seed: 2, warps: 2 };
        let rows = run_incremental(&p, None).unwrap();
        assert_eq!(rows.len(), 5);
        assert_eq!(rows.last().unwrap().cumulative_n, 5000);
        assert!(rows.windows(2).all(|w| w[1].cumulative_n > w[0].cumulative_n));
    }
}
