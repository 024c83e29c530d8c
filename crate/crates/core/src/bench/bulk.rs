//! Bulk build and bulk search over a sweep of table sizes or utilizations.

use std::sync::Arc;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::model::buckets_for_utilization;
use super::workload::{value_for, KeyState};
use super::{absent_keys_per_bucket, bench_allocator, BenchConfig, BenchError, Sizing};
use crate::alloc::SlabAlloc;
use crate::list::{Op, OpOutcome, SlabLayout};
use crate::table::{SlabHashTable, TableStats};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BulkRow {
    pub n: u64,
    #[serde(rename = "B")]
    pub buckets: u32,
    pub beta: f64,
    pub target_util: Option<f64>,
    pub measured_util: f64,
    pub build_rate: f64,
    pub search_all_rate: f64,
    pub search_none_rate: f64,
    pub mean_probes: f64,
}

/// One build plus two search passes.
#[derive(Debug, Clone)]
pub struct BulkTrial {
    pub stats: TableStats,
    pub build_secs: f64,
    pub search_all_secs: f64,
    pub search_none_secs: f64,
    pub queries_all: usize,
    pub queries_none: usize,
    /// Mean slabs read by the absent-key queries.
    pub mean_probes: f64,
    /// Per-bucket chain lengths after the build.
    pub slab_counts: Vec<u32>,
    /// Units the allocator reports live after the build.
    pub allocated_units: u64,
}

/// Builds a table of `n` distinct keys, then searches every key and one
/// equal-sized batch of absent keys spread evenly over the buckets.
///
/// Fails if a stored key is missed, an absent key is found, or the absent
/// mean probe count differs from `sum(k_i)/B`.
pub fn bulk_trial(n: u64, buckets: u32, layout: SlabLayout, seed: u64, warps: usize) -> Result<BulkTrial, BenchError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut keys = KeyState::new(seed).preload(n as usize)?;
    let pairs: Vec<(u32, u32)> = keys.iter().map(|&k| (k, value_for(k))).collect();
    let alloc = Arc::new(SlabAlloc::new(bench_allocator())?);

    let start = Instant::now();
    let table = SlabHashTable::new(buckets, layout, seed, alloc)?;
    table.bulk_build(&pairs, warps)?;
    let build_secs = start.elapsed().as_secs_f64();

    keys.shuffle(&mut rng);
    let start = Instant::now();
    let found = table.bulk_search(&keys, warps)?;
    let search_all_secs = start.elapsed().as_secs_f64();
    if let Some(i) = found.iter().position(Option::is_none) {
        return Err(BenchError::Check(format!("stored key {} not found", keys[i])));
    }

    let per_bucket = (n.div_ceil(buckets as u64)).max(1) as u32;
    let absent = absent_keys_per_bucket(table.params(), per_bucket, &mut rng)?;
    let ops: Vec<Op> = absent.iter().map(|&k| Op::search(k)).collect();
    let start = Instant::now();
    let report = table.execute_batch(&ops, warps)?;
    let search_none_secs = start.elapsed().as_secs_f64();
    if let Some(i) = report.outcomes.iter().position(|o| *o != OpOutcome::NotFound) {
        return Err(BenchError::Check(format!("absent key {} reported {}", absent[i], report.outcomes[i])));
    }

    let stats = table.stats()?;
    let probe_sum: u64 = report.probes.iter().map(|&p| p as u64).sum();
    let mean_probes = probe_sum as f64 / absent.len() as f64;
    if mean_probes != stats.mean_chain_length() {
        return Err(BenchError::Check(format!(
            "absent mean probes {mean_probes} != sum(k_i)/B {}",
            stats.mean_chain_length()
        )));
    }
    Ok(BulkTrial {
        stats,
        build_secs,
        search_all_secs,
        search_none_secs,
        queries_all: keys.len(),
        queries_none: absent.len(),
        mean_probes,
        slab_counts: table.slab_counts()?,
        allocated_units: table.allocator().live_units(),
    })
}

fn rate(ops: usize, secs: f64) -> f64 {
    if secs > 0.0 {
        ops as f64 / secs
    } else {
        f64::INFINITY
    }
}

/// Averages `trials` bulk trials per sweep point.
pub fn run_bulk_bench(cfg: &BenchConfig) -> Result<Vec<BulkRow>, BenchError> {
    let mut rows = Vec::new();
    for &n in &cfg.n {
        let points: Vec<(u32, Option<f64>)> = match &cfg.sizing {
            Sizing::Buckets(bs) => bs.iter().map(|&b| (b, None)).collect(),
            Sizing::Utilization(us) => us
                .iter()
                .map(|&u| {
                    buckets_for_utilization(n, u, cfg.layout)
                        .map(|b| (b, Some(u)))
                        .ok_or_else(|| BenchError::Config(format!("utilization {u} is infeasible for n = {n}")))
                })
                .collect::<Result<_, _>>()?,
        };
        for (buckets, target_util) in points {
            let mut acc = BulkRow {
                n,
                buckets,
                beta: 0.0,
                target_util,
                measured_util: 0.0,
                build_rate: 0.0,
                search_all_rate: 0.0,
                search_none_rate: 0.0,
                mean_probes: 0.0,
            };
            for t in 0..cfg.trials {
                let seed = cfg.seed.wrapping_add(t as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ n;
                let trial = bulk_trial(n, buckets, cfg.layout, seed, cfg.warps)?;
                acc.beta = trial.stats.beta;
                acc.measured_util += trial.stats.utilization;
                acc.build_rate += rate(n as usize, trial.build_secs);
                acc.search_all_rate += rate(trial.queries_all, trial.search_all_secs);
                acc.search_none_rate += rate(trial.queries_none, trial.search_none_secs);
                acc.mean_probes += trial.mean_probes;
            }
            let k = cfg.trials as f64;
            acc.measured_util /= k;
            acc.build_rate /= k;
            acc.search_all_rate /= k;
            acc.search_none_rate /= k;
            acc.mean_probes /= k;
            rows.push(acc);
        }
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bench::BenchMode;

    #[test]
    fn trial_checks_hold() {
        let t = bulk_trial(3000, 64, SlabLayout::KeyValue, 7, 2).unwrap();
        assert_eq!(t.stats.n, 3000);
        let total: u64 = t.slab_counts.iter().map(|&k| k as u64).sum();
        assert_eq!(t.stats.total_slabs, total);
        assert_eq!(t.mean_probes, total as f64 / 64.0);
    }

    #[test]
    fn key_only_trial() {
        let t = bulk_trial(2000, 16, SlabLayout::KeyOnly, 1, 1).unwrap();
        assert_eq!(t.stats.elements_per_slab, 30);
    }

    #[test]
    fn sweep_rows() {
        let mut cfg = BenchConfig::defaults(BenchMode::BulkBuild);
        cfg.n = vec![4096];
        cfg.sizing = Sizing::Utilization(vec![0.3, 0.7]);
        cfg.trials = 2;
        let rows = run_bulk_bench(&cfg).unwrap();
        assert_eq!(rows.len(), 2);
        assert!(rows[0].buckets > rows[1].buckets);
        assert!(rows.iter().all(|r| r.measured_util <= 0.9375));
    }
}
