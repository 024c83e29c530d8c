//! Browser playground for the slab hash.
//!
//! [`Playground`] holds all logic and is plain Rust so it can be tested
//! natively; [`DemoTable`] and [`utilization_curve`] are the thin
//! `wasm-bindgen` surface used by `www/index.html`.

use std::fmt::Write as _;

use wasm_bindgen::prelude::*;

use slabhash::bench::model::{expected_slabs_per_bucket, expected_utilization};
use slabhash::oracle::random_trace;
use slabhash::{AllocatorConfig, Op, OpKind, SlabHashTable, SlabLayout};

/// Blocks reserved per super block in the demo allocator.
const DEMO_BLOCKS: u32 = 16;

fn layout_for(key_only: bool) -> SlabLayout {
    if key_only {
        SlabLayout::KeyOnly
    } else {
        SlabLayout::KeyValue
    }
}

/// Parses `insert 5 50`, `replace 5 7`, `delete 5`, `delete_all 5`,
/// `search 5` or `search_all 5`.
pub fn parse_op(text: &str) -> Result<Op, String> {
    let words: Vec<&str> = text.split_whitespace().collect();
    let num = |i: usize| -> Result<u32, String> {
        let w = words.get(i).ok_or_else(|| format!("{text:?}: missing argument"))?;
        w.parse::<u32>().map_err(|e| format!("{w:?}: {e}"))
    };
    let kind = match words.first().copied() {
        Some("insert") => OpKind::Insert,
        Some("replace") => OpKind::Replace,
        Some("delete") => OpKind::Delete,
        Some("delete_all") => OpKind::DeleteAll,
        Some("search") => OpKind::Search,
        Some("search_all") => OpKind::SearchAll,
        _ => return Err(format!("{text:?}: unknown operation")),
    };
    let value = match kind {
        OpKind::Insert | OpKind::Replace => num(2)?,
        _ => 0,
    };
    Ok(Op::new(kind, num(1)?, value))
}

pub struct Playground {
    table: SlabHashTable,
}

impl Playground {
    pub fn new(buckets: u32, key_only: bool, seed: u64) -> Result<Self, String> {
        let table = SlabHashTable::with_allocator(buckets, layout_for(key_only), seed, AllocatorConfig::new(1, DEMO_BLOCKS))
            .map_err(|e| e.to_string())?;
        Ok(Playground { table })
    }

    /// Runs `;`-separated ops as one batch and reports each outcome.
    pub fn apply(&self, script: &str) -> Result<String, String> {
        let ops = script
            .split([';', '\n'])
            .map(str::trim)
            .filter(|s| !s.is_empty())
            .map(parse_op)
            .collect::<Result<Vec<_>, _>>()?;
        let report = self.table.execute_batch(&ops, 1).map_err(|e| e.to_string())?;
        let mut out = String::new();
        for ((op, outcome), probes) in ops.iter().zip(&report.outcomes).zip(&report.probes) {
            let _ = writeln!(out, "{op} -> {outcome}  [bucket {}, {probes} slab reads]", self.table.bucket_of(op.key));
        }
        Ok(out)
    }

    /// Applies a seeded random mix of all six operations.
    pub fn random_ops(&self, count: u32, universe: u32, seed: u64) -> Result<String, String> {
        let ops = random_trace(seed, count as usize, universe.max(1));
        let ops: Vec<Op> = ops.into_iter().filter(|op| op.key < universe.max(1)).collect();
        let report = self.table.execute_batch(&ops, 1).map_err(|e| e.to_string())?;
        let reads: u64 = report.probes.iter().map(|&p| p as u64).sum();
        Ok(format!("{} ops, {reads} slab reads", ops.len()))
    }

    pub fn flush(&mut self) -> Result<String, String> {
        let r = self.table.flush_all().map_err(|e| e.to_string())?;
        Ok(format!(
            "flushed: {} live elements, slabs {} -> {}, {} returned to the allocator",
            r.live, r.slabs_before, r.slabs_after, r.freed
        ))
    }

    pub fn dump(&self) -> String {
        self.table.dump()
    }

    pub fn stats(&self) -> Result<String, String> {
        let s = self.table.stats().map_err(|e| e.to_string())?;
        Ok(format!(
            "n = {}, B = {}, beta = {:.3}, slabs = {}, utilization = {:.4}, mean chain = {:.3}",
            s.n,
            s.buckets,
            s.beta,
            s.total_slabs,
            s.utilization,
            s.mean_chain_length()
        ))
    }

    /// Live units per memory block of the first super block.
    pub fn block_popcounts(&self) -> Vec<u32> {
        let alloc = self.table.allocator();
        (0..alloc.config().blocks_per_super).map(|b| alloc.block_popcount(0, b)).collect()
    }

    /// The 32-word allocation bitmap of one block of the first super block.
    pub fn block_bitmap(&self, block: u32) -> Vec<u32> {
        self.table.allocator().block_bitmap(0, block % DEMO_BLOCKS).to_vec()
    }
}

/// Builds tables of `n` random keys at `points` average slab counts between
/// 0.1 and 3.0 and returns rows of
/// `[beta, measured_util, model_util, mean_chain, model_chain]`, flattened.
pub fn curve(n: u32, points: u32, key_only: bool, seed: u64) -> Result<Vec<f64>, String> {
    let layout = layout_for(key_only);
    let m = layout.elements_per_slab() as f64;
    let points = points.max(2);
    let mut keys = slabhash::bench::KeyState::new(seed);
    let pairs: Vec<(u32, u32)> = keys.preload(n as usize).map_err(|e| e.to_string())?.into_iter().map(|k| (k, !k)).collect();
    let mut out = Vec::with_capacity(points as usize * 5);
    for i in 0..points {
        let beta = 0.1 + 2.9 * i as f64 / (points - 1) as f64;
        let buckets = ((n as f64 / (m * beta)).round() as u32).max(1);
        let table = SlabHashTable::with_allocator(buckets, layout, seed + i as u64, AllocatorConfig::new(1, DEMO_BLOCKS))
            .map_err(|e| e.to_string())?;
        table.bulk_build(&pairs, 1).map_err(|e| e.to_string())?;
        let s = table.stats().map_err(|e| e.to_string())?;
        out.extend([
            s.beta,
            s.utilization,
            expected_utilization(n as u64, buckets, layout),
            s.mean_chain_length(),
            expected_slabs_per_bucket(n as u64, buckets, layout.elements_per_slab()),
        ]);
    }
    Ok(out)
}

#[wasm_bindgen]
pub struct DemoTable(Playground);

#[wasm_bindgen]
impl DemoTable {
    #[wasm_bindgen(constructor)]
    pub fn new(buckets: u32, key_only: bool, seed: u32) -> Result<DemoTable, String> {
        Playground::new(buckets, key_only, seed as u64).map(DemoTable)
    }

    pub fn apply(&self, script: &str) -> Result<String, String> {
        self.0.apply(script)
    }

    pub fn random_ops(&self, count: u32, universe: u32, seed: u32) -> Result<String, String> {
        self.0.random_ops(count, universe, seed as u64)
    }

    pub fn flush(&mut self) -> Result<String, String> {
        self.0.flush()
    }

    pub fn dump(&self) -> String {
        self.0.dump()
    }

    pub fn stats(&self) -> Result<String, String> {
        self.0.stats()
    }

    pub fn block_popcounts(&self) -> Vec<u32> {
        self.0.block_popcounts()
    }

    pub fn block_bitmap(&self, block: u32) -> Vec<u32> {
        self.0.block_bitmap(block)
    }
}

#[wasm_bindgen]
pub fn utilization_curve(n: u32, points: u32, key_only: bool, seed: u32) -> Result<Vec<f64>, String> {
    curve(n, points, key_only, seed as u64)
}
