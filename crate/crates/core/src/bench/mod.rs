//! Workload generation and benchmark drivers.
//!
//! Three families are provided: bulk build/search sweeps ([`bulk`]),
//! incremental insertion against a rebuild baseline ([`incremental`]) and
//! mixed concurrent batches ([`concurrent`]). Each produces CSV rows with a
//! fixed header.

pub mod bulk;
pub mod concurrent;
pub mod incremental;
pub mod model;
pub mod workload;

use std::fmt;
use std::io::Write;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use thiserror::Error;

use crate::alloc::{AllocError, AllocatorConfig};
use crate::list::SlabLayout;
use crate::table::{HashParams, TableError};

pub use workload::{gen_workload, KeyState, OperationDistribution, WorkloadError};

#[derive(Debug, Error)]
pub enum BenchError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error(transparent)]
    Workload(#[from] WorkloadError),
    #[error(transparent)]
    Table(#[from] TableError),
    #[error(transparent)]
    Alloc(#[from] AllocError),
    #[error("check failed: {0}")]
    Check(String),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BenchMode {
    BulkBuild,
    BulkSearch,
    Incremental,
    Concurrent,
}

impl BenchMode {
    pub const ALL: [BenchMode; 4] = [BenchMode::BulkBuild, BenchMode::BulkSearch, BenchMode::Incremental, BenchMode::Concurrent];

    pub fn name(self) -> &'static str {
        match self {
            BenchMode::BulkBuild => "bulk-build",
            BenchMode::BulkSearch => "bulk-search",
            BenchMode::Incremental => "incremental",
            BenchMode::Concurrent => "concurrent",
        }
    }
}

impl fmt::Display for BenchMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for BenchMode {
    type Err = BenchError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        BenchMode::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| BenchError::Config(format!("unknown mode {s:?}")))
    }
}

/// How the bucket count is chosen.
#[derive(Debug, Clone, PartialEq)]
pub enum Sizing {
    Buckets(Vec<u32>),
    /// Target utilizations, inverted to bucket counts with the occupancy model.
    Utilization(Vec<f64>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchConfig {
    pub mode: BenchMode,
    /// Table sizes. For `incremental` the final size, for `concurrent` the
    /// initial size.
    pub n: Vec<u64>,
    pub sizing: Sizing,
    pub dists: Vec<OperationDistribution>,
    pub batch_sizes: Vec<usize>,
    pub batches: usize,
    pub warps: usize,
    pub seed: u64,
    pub trials: usize,
    pub layout: SlabLayout,
}

impl BenchConfig {
    /// Defaults for `mode`, sized to finish in seconds on a desktop.
    pub fn defaults(mode: BenchMode) -> Self {
        let (n, sizing) = match mode {
            BenchMode::BulkBuild => (vec![1 << 16], Sizing::Utilization(vec![0.2, 0.3, 0.4, 0.5, 0.6, 0.65, 0.7, 0.75, 0.8, 0.85, 0.9])),
            BenchMode::BulkSearch => (vec![1 << 12, 1 << 14, 1 << 16, 1 << 18], Sizing::Utilization(vec![0.6])),
            BenchMode::Incremental => (vec![1 << 18], Sizing::Utilization(vec![0.65])),
            BenchMode::Concurrent => (vec![1 << 16], Sizing::Utilization(vec![0.3, 0.45, 0.6, 0.75, 0.9])),
        };
        BenchConfig {
            mode,
            n,
            sizing,
            dists: vec![OperationDistribution::GAMMA0, OperationDistribution::GAMMA1, OperationDistribution::GAMMA2],
            batch_sizes: match mode {
                BenchMode::Incremental => vec![8192],
                _ => vec![32 * 8],
            },
            batches: 64,
            warps: 8,
            seed: 0,
            trials: 5,
            layout: SlabLayout::KeyValue,
        }
    }

    pub fn validate(&self) -> Result<(), BenchError> {
        let bad = |m: &str| Err(BenchError::Config(m.to_string()));
        if self.n.is_empty() || self.n.contains(&0) {
            return bad("--n must list positive sizes");
        }
        if self.n.iter().any(|&n| n >= workload::FRESH_LIMIT as u64) {
            return bad("--n exceeds the key space");
        }
        match &self.sizing {
            Sizing::Buckets(b) if b.is_empty() || b.contains(&0) => return bad("--buckets must list positive counts"),
            Sizing::Utilization(u) if u.is_empty() => return bad("--util needs at least one value"),
            Sizing::Utilization(u) => {
                let max = crate::table::max_utilization(self.layout);
                if let Some(x) = u.iter().find(|&&x| !(x > 0.0 && x <= max)) {
                    return Err(BenchError::Config(format!(
                        "target utilization {x} is infeasible (must be in (0, {max}])"
                    )));
                }
            }
            _ => {}
        }
        if self.batch_sizes.is_empty() || self.batch_sizes.contains(&0) {
            return bad("--batch-size must be positive");
        }
        if self.trials == 0 || self.warps == 0 || self.batches == 0 {
            return bad("--trials, --warps and --batches must be positive");
        }
        if self.mode == BenchMode::Concurrent && self.dists.is_empty() {
            return bad("--dist needs at least one distribution");
        }
        Ok(())
    }
}

/// Runs the configured benchmark and writes CSV to `out`. Returns the
/// number of data rows.
pub fn run_bench<W: Write>(cfg: &BenchConfig, out: W) -> Result<usize, BenchError> {
    cfg.validate()?;
    let mut writer = csv::Writer::from_writer(out);
    let rows = match cfg.mode {
        BenchMode::BulkBuild | BenchMode::BulkSearch => write_rows(&mut writer, bulk::run_bulk_bench(cfg)?)?,
        BenchMode::Incremental => write_rows(&mut writer, incremental::run_incremental_bench(cfg)?)?,
        BenchMode::Concurrent => write_rows(&mut writer, concurrent::run_concurrent_bench(cfg)?)?,
    };
    writer.flush().map_err(csv::Error::from)?;
    Ok(rows)
}

fn write_rows<W: Write, R: Serialize>(writer: &mut csv::Writer<W>, rows: Vec<R>) -> Result<usize, BenchError> {
    for row in &rows {
        writer.serialize(row)?;
    }
    Ok(rows.len())
}

/// Allocator used by benchmark tables: one super block, growing on demand.
pub(crate) fn bench_allocator() -> AllocatorConfig {
    AllocatorConfig::new(1, 256)
}

/// `per_bucket` absent keys for every bucket, built by inverting the hash.
/// Querying all of them probes each chain equally often.
pub fn absent_keys_per_bucket(params: &HashParams, per_bucket: u32, rng: &mut ChaCha8Rng) -> Result<Vec<u32>, BenchError> {
    let p = params.p() as u64;
    let a = params.a() as u64 % p;
    if a == 0 {
        return Err(BenchError::Config("hash multiplier is zero".into()));
    }
    let a_inv = mod_pow(a, p - 2, p);
    let buckets = params.buckets() as u64;
    let b = params.b() as u64 % p;
    let mut keys = Vec::with_capacity(buckets as usize * per_bucket as usize);
    for t in 0..buckets {
        let mut found = 0;
        let mut r = t;
        while found < per_bucket {
            if r >= p {
                return Err(BenchError::Config(format!("bucket {t} has too few absent preimages")));
            }
            let k = (a_inv * ((r + p - b) % p) % p) as u32;
            if (workload::ABSENT_BASE..workload::ABSENT_LIMIT).contains(&k) {
                debug_assert_eq!(params.bucket(k) as u64, t);
                keys.push(k);
                found += 1;
            }
            r += buckets;
        }
    }
    keys.shuffle(rng);
    Ok(keys)
}

fn mod_pow(mut base: u64, mut exp: u64, m: u64) -> u64 {
    let mut acc = 1u64;
    base %= m;
    while exp > 0 {
        if exp & 1 == 1 {
            acc = ((acc as u128 * base as u128) % m as u128) as u64;
        }
        base = ((base as u128 * base as u128) % m as u128) as u64;
        exp >>= 1;
    }
    acc
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    #[test]
    fn absent_keys_cover_every_bucket() {
        let params = HashParams::seeded(37, 4).unwrap();
        let keys = absent_keys_per_bucket(&params, 3, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
        let mut per = vec![0; 37];
        for &k in &keys {
            assert!(k >= workload::ABSENT_BASE && k < workload::ABSENT_LIMIT);
            per[params.bucket(k) as usize] += 1;
        }
        assert!(per.iter().all(|&c| c == 3));
    }

    #[test]
    fn modes_round_trip() {
        for m in BenchMode::ALL {
            assert_eq!(m.name().parse::<BenchMode>().unwrap(), m);
        }
        assert!("bulk".parse::<BenchMode>().is_err());
    }

    #[test]
    fn infeasible_utilization_rejected() {
        let mut cfg = BenchConfig::defaults(BenchMode::BulkBuild);
        cfg.sizing = Sizing::Utilization(vec![0.95]);
        assert!(matches!(cfg.validate(), Err(BenchError::Config(_))));
        cfg.sizing = Sizing::Utilization(vec![0.9375]);
        assert!(cfg.validate().is_ok());
    }
}
