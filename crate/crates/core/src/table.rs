//! The slab hash: `B` slab lists behind a universal hash.
//!
//! Operations are executed in batches. A batch is cut into groups of 32
//! consecutive operations, one group per warp slot, and `num_warps` worker
//! threads pull warp slots until the batch is done. Inside a slot the lanes
//! are drained in work-queue order; across slots everything is concurrent.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::sync::atomic::{AtomicI64, AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::alloc::{AllocError, AllocatorConfig, SlabAlloc};
use crate::list::{
    chain_addresses, chain_elements, dump_chain, flush_chain, is_reserved_key, BucketStore, FlushReport, ListError, Op,
    OpOutcome, RunStats, SlabLayout, WarpRun,
};
use crate::slab::{Slab, SLAB_BYTES};
use crate::warp::{WarpContext, WARP_SIZE};

/// Largest prime below 2^32.
pub const DEFAULT_PRIME: u32 = 4_294_967_291;
/// Bytes per slab spent on the auxiliary and address lanes.
pub const OVERHEAD_BYTES: u32 = 8;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum TableError {
    #[error("a table needs at least one bucket")]
    ZeroBuckets,
    #[error("invalid hash parameters: {0}")]
    InvalidParams(String),
    #[error("key {0:#010x} is reserved (EMPTY_KEY / DELETED_KEY)")]
    ReservedKey(u32),
    #[error(transparent)]
    Alloc(#[from] AllocError),
}

impl From<ListError> for TableError {
    fn from(e: ListError) -> Self {
        match e {
            ListError::ReservedKey(k) => TableError::ReservedKey(k),
            ListError::Alloc(a) => TableError::Alloc(a),
            ListError::TooManyOps(n) => TableError::InvalidParams(format!("{n} ops in one warp")),
        }
    }
}

/// `h(k) = ((a*k + b) mod p) mod B`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct HashParams {
    a: u32,
    b: u32,
    p: u32,
    buckets: u32,
}

impl HashParams {
    pub fn new(a: u32, b: u32, p: u32, buckets: u32) -> Result<Self, TableError> {
        if buckets == 0 {
            return Err(TableError::ZeroBuckets);
        }
        if p < 2 || a == 0 || a >= p || b >= p {
            return Err(TableError::InvalidParams(format!("need 0 < a < p and b < p (a={a}, b={b}, p={p})")));
        }
        Ok(HashParams { a, b, p, buckets })
    }

    /// `a` and `b` drawn from a seeded generator; `p` fixed.
    pub fn seeded(buckets: u32, seed: u64) -> Result<Self, TableError> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a = rng.random_range(1..DEFAULT_PRIME);
        let b = rng.random_range(0..DEFAULT_PRIME);
        Self::new(a, b, DEFAULT_PRIME, buckets)
    }

    pub fn a(&self) -> u32 {
        self.a
    }

    pub fn b(&self) -> u32 {
        self.b
    }

    pub fn p(&self) -> u32 {
        self.p
    }

    pub fn buckets(&self) -> u32 {
        self.buckets
    }

    #[inline]
    pub fn bucket(&self, key: u32) -> u32 {
        // a, b < p < 2^32 keeps a*k + b below 2^64
        let h = (self.a as u64 * key as u64 + self.b as u64) % self.p as u64;
        (h % self.buckets as u64) as u32
    }
}

/// Occupancy summary. `utilization = x*n / ((M*x + y) * total_slabs)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TableStats {
    pub n: u64,
    pub buckets: u32,
    pub elements_per_slab: u32,
    pub element_bytes: u32,
    /// `n / (M*B)`.
    pub beta: f64,
    /// Base slabs plus allocated slabs.
    pub total_slabs: u64,
    pub utilization: f64,
}

impl TableStats {
    pub fn compute(n: u64, buckets: u32, layout: SlabLayout, total_slabs: u64) -> Self {
        let m = layout.elements_per_slab();
        let x = layout.element_bytes();
        TableStats {
            n,
            buckets,
            elements_per_slab: m,
            element_bytes: x,
            beta: n as f64 / (m as f64 * buckets as f64),
            total_slabs,
            utilization: utilization(n, layout, total_slabs),
        }
    }

    /// Slabs read by an unsuccessful search, averaged over buckets.
    pub fn mean_chain_length(&self) -> f64 {
        self.total_slabs as f64 / self.buckets as f64
    }
}

pub fn utilization(n: u64, layout: SlabLayout, total_slabs: u64) -> f64 {
    if total_slabs == 0 {
        return 0.0;
    }
    let x = layout.element_bytes() as f64;
    let m = layout.elements_per_slab() as f64;
    (x * n as f64) / ((m * x + OVERHEAD_BYTES as f64) * total_slabs as f64)
}

/// Upper bound on utilization for a layout (every slab full).
pub fn max_utilization(layout: SlabLayout) -> f64 {
    let x = layout.element_bytes() as f64;
    let m = layout.elements_per_slab() as f64;
    m * x / (m * x + OVERHEAD_BYTES as f64)
}

/// Outcomes of a batch, aligned with its input.
#[derive(Debug, Clone, Default)]
pub struct BatchReport {
    pub outcomes: Vec<OpOutcome>,
    /// Slabs read per operation.
    pub probes: Vec<u32>,
    pub stats: RunStats,
}

impl BatchReport {
    pub fn failures(&self) -> impl Iterator<Item = (usize, &AllocError)> {
        self.outcomes.iter().enumerate().filter_map(|(i, o)| match o {
            OpOutcome::Failed(e) => Some((i, e)),
            _ => None,
        })
    }
}

struct Buckets {
    params: HashParams,
    layout: SlabLayout,
    base: Box<[Slab]>,
    alloc: Arc<SlabAlloc>,
}

impl BucketStore for Buckets {
    fn layout(&self) -> SlabLayout {
        self.layout
    }

    #[inline]
    fn bucket_of(&self, key: u32) -> u32 {
        self.params.bucket(key)
    }

    #[inline]
    fn base_slab(&self, bucket: u32) -> &Slab {
        &self.base[bucket as usize]
    }

    fn allocator(&self) -> &SlabAlloc {
        &self.alloc
    }
}

pub struct SlabHashTable {
    inner: Buckets,
    live: AtomicI64,
    warps: Mutex<Vec<WarpContext>>,
}

impl SlabHashTable {
    pub fn new(buckets: u32, layout: SlabLayout, seed: u64, alloc: Arc<SlabAlloc>) -> Result<Self, TableError> {
        Self::with_params(HashParams::seeded(buckets, seed)?, layout, alloc)
    }

    pub fn with_params(params: HashParams, layout: SlabLayout, alloc: Arc<SlabAlloc>) -> Result<Self, TableError> {
        let base = (0..params.buckets).map(|_| Slab::empty()).collect();
        Ok(SlabHashTable {
            inner: Buckets { params, layout, base, alloc },
            live: AtomicI64::new(0),
            warps: Mutex::new(Vec::new()),
        })
    }

    /// Table with a private allocator.
    pub fn with_allocator(buckets: u32, layout: SlabLayout, seed: u64, config: AllocatorConfig) -> Result<Self, TableError> {
        Self::new(buckets, layout, seed, Arc::new(SlabAlloc::new(config)?))
    }

    pub fn params(&self) -> &HashParams {
        &self.inner.params
    }

    pub fn layout(&self) -> SlabLayout {
        self.inner.layout
    }

    pub fn buckets(&self) -> u32 {
        self.inner.params.buckets
    }

    pub fn allocator(&self) -> &Arc<SlabAlloc> {
        &self.inner.alloc
    }

    pub fn bucket_of(&self, key: u32) -> u32 {
        self.inner.params.bucket(key)
    }

    /// Live elements according to acknowledged outcomes.
    pub fn live_count(&self) -> i64 {
        self.live.load(Ordering::Acquire)
    }

    /// A warp over at most 32 ops, for callers that drive the steps themselves.
    pub fn warp_run<'t>(&'t self, ops: &[Op]) -> Result<WarpRun<'t, impl BucketStore + 't>, TableError> {
        Ok(WarpRun::new(&self.inner, ops)?)
    }

    /// Folds outcomes produced outside [`execute_batch`](Self::execute_batch) into the live count.
    pub fn acknowledge(&self, outcomes: &[OpOutcome]) {
        let delta: i64 = outcomes.iter().map(OpOutcome::live_delta).sum();
        self.live.fetch_add(delta, Ordering::AcqRel);
    }

    fn take_warps(&self, n: usize) -> Vec<WarpContext> {
        let mut pool = self.warps.lock().unwrap_or_else(|p| p.into_inner());
        while pool.len() < n {
            let id = pool.len() as u32;
            pool.push(WarpContext::new(id));
        }
        pool.drain(..n).collect()
    }

    fn return_warps(&self, mut used: Vec<WarpContext>) {
        let mut pool = self.warps.lock().unwrap_or_else(|p| p.into_inner());
        used.append(&mut pool);
        used.sort_by_key(WarpContext::warp_id);
        *pool = used;
    }

    fn run_slot(&self, ctx: &mut WarpContext, ops: &[Op]) -> (Vec<OpOutcome>, Vec<u32>, RunStats) {
        let mut run = WarpRun::new(&self.inner, ops).expect("batch validated before dispatch");
        run.run(ctx);
        run.finish()
    }

    /// Applies a batch with `num_warps` concurrent warps.
    pub fn execute_batch(&self, ops: &[Op], num_warps: usize) -> Result<BatchReport, TableError> {
        if let Some(op) = ops.iter().find(|op| is_reserved_key(op.key)) {
            return Err(TableError::ReservedKey(op.key));
        }
        let slots: Vec<&[Op]> = ops.chunks(WARP_SIZE).collect();
        let workers = num_warps.clamp(1, slots.len().max(1));
        let mut warps = self.take_warps(workers);
        let mut report = BatchReport {
            outcomes: Vec::with_capacity(ops.len()),
            probes: Vec::with_capacity(ops.len()),
            stats: RunStats::default(),
        };

        if workers == 1 {
            for slot in &slots {
                let (o, p, s) = self.run_slot(&mut warps[0], slot);
                report.outcomes.extend(o);
                report.probes.extend(p);
                report.stats.merge(&s);
            }
        } else {
            let cursor = AtomicUsize::new(0);
            let mut done: Vec<(usize, (Vec<OpOutcome>, Vec<u32>, RunStats))> = std::thread::scope(|scope| {
                let handles: Vec<_> = warps
                    .iter_mut()
                    .map(|ctx| {
                        let (cursor, slots) = (&cursor, &slots);
                        scope.spawn(move || {
                            let mut mine = Vec::new();
                            loop {
                                let i = cursor.fetch_add(1, Ordering::Relaxed);
                                let Some(slot) = slots.get(i) else { break };
                                mine.push((i, self.run_slot(ctx, slot)));
                            }
                            mine
                        })
                    })
                    .collect();
                handles
                    .into_iter()
                    .flat_map(|h| h.join().expect("warp worker panicked"))
                    .collect()
            });
            done.sort_by_key(|(i, _)| *i);
            for (_, (o, p, s)) in done {
                report.outcomes.extend(o);
                report.probes.extend(p);
                report.stats.merge(&s);
            }
        }
        self.return_warps(warps);
        self.acknowledge(&report.outcomes);
        Ok(report)
    }

    /// Replaces every pair (uniqueness kept). The first failure is returned.
    pub fn bulk_build(&self, pairs: &[(u32, u32)], num_warps: usize) -> Result<(), TableError> {
        let ops: Vec<Op> = pairs.iter().map(|&(k, v)| Op::replace(k, v)).collect();
        let report = self.execute_batch(&ops, num_warps)?;
        let first = report.failures().next().map(|(_, e)| e.clone());
        match first {
            Some(e) => Err(TableError::Alloc(e)),
            None => Ok(()),
        }
    }

    pub fn bulk_search(&self, queries: &[u32], num_warps: usize) -> Result<Vec<Option<u32>>, TableError> {
        let ops: Vec<Op> = queries.iter().map(|&k| Op::search(k)).collect();
        Ok(self
            .execute_batch(&ops, num_warps)?
            .outcomes
            .into_iter()
            .map(|o| match o {
                OpOutcome::Found(v) => Some(v),
                _ => None,
            })
            .collect())
    }

    /// Slabs per bucket (`k_i`), base slab included.
    pub fn slab_counts(&self) -> Result<Vec<u32>, TableError> {
        self.inner
            .base
            .iter()
            .map(|head| Ok(chain_addresses(head, &self.inner.alloc)?.len() as u32 + 1))
            .collect()
    }

    /// Live elements of one bucket, head-to-tail.
    pub fn bucket_elements(&self, bucket: u32) -> Result<Vec<(u32, u32)>, TableError> {
        Ok(chain_elements(self.inner.base_slab(bucket), &self.inner.alloc, self.inner.layout)?)
    }

    /// Full scan: key -> values in chain order.
    pub fn contents(&self) -> Result<BTreeMap<u32, Vec<u32>>, TableError> {
        let mut map: BTreeMap<u32, Vec<u32>> = BTreeMap::new();
        for b in 0..self.buckets() {
            for (k, v) in self.bucket_elements(b)? {
                map.entry(k).or_default().push(v);
            }
        }
        Ok(map)
    }

    /// Live elements counted by scanning every chain.
    pub fn scan_live(&self) -> Result<u64, TableError> {
        (0..self.buckets()).try_fold(0u64, |acc, b| Ok(acc + self.bucket_elements(b)?.len() as u64))
    }

    /// Keys found in a bucket they do not hash to.
    pub fn misplaced_keys(&self) -> Result<Vec<(u32, u32)>, TableError> {
        let mut bad = Vec::new();
        for b in 0..self.buckets() {
            for (k, _) in self.bucket_elements(b)? {
                if self.bucket_of(k) != b {
                    bad.push((b, k));
                }
            }
        }
        Ok(bad)
    }

    /// Occupancy statistics from a full scan. Expects a quiescent table.
    pub fn stats(&self) -> Result<TableStats, TableError> {
        let n = self.scan_live()?;
        let total: u64 = self.slab_counts()?.iter().map(|&k| k as u64).sum();
        Ok(TableStats::compute(n, self.buckets(), self.layout(), total))
    }

    /// Bytes held: base slabs plus allocated slabs.
    pub fn memory_bytes(&self) -> Result<u64, TableError> {
        Ok(self.stats()?.total_slabs * SLAB_BYTES as u64)
    }

    pub fn flush_bucket(&mut self, bucket: u32) -> Result<FlushReport, TableError> {
        Ok(flush_chain(self.inner.base_slab(bucket), &self.inner.alloc, self.inner.layout)?)
    }

    pub fn flush_all(&mut self) -> Result<FlushReport, TableError> {
        let mut total = FlushReport::default();
        for b in 0..self.buckets() {
            total.merge(&self.flush_bucket(b)?);
        }
        Ok(total)
    }

    pub fn dump_bucket(&self, bucket: u32) -> String {
        dump_chain(&format!("BASE[{bucket}]"), self.inner.base_slab(bucket), &self.inner.alloc, self.inner.layout)
    }

    pub fn dump(&self) -> String {
        let mut out = String::new();
        for b in 0..self.buckets() {
            let _ = write!(out, "{}", self.dump_bucket(b));
        }
        out
    }

    /// Overwrites one lane of a base slab. Only for fault-injection tests.
    #[doc(hidden)]
    pub fn corrupt_base_lane(&mut self, bucket: u32, lane: usize, word: u32) {
        self.inner.base[bucket as usize].store_lane(lane, word);
    }
}

impl std::fmt::Debug for SlabHashTable {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("SlabHashTable")
            .field("params", &self.inner.params)
            .field("layout", &self.inner.layout)
            .field("live", &self.live_count())
            .finish()
    }
}
