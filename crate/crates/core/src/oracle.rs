//! Sequential reference model and checkers built on it.
//!
//! [`OracleMap`] is an ordered multimap where each key keeps its values
//! oldest first. `delete` and `search` act on the oldest instance,
//! `replace` drops every instance before appending.

use std::collections::{BTreeMap, VecDeque};
use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::alloc::AllocatorConfig;
use crate::list::{Op, OpKind, OpOutcome, SlabLayout};
use crate::table::{SlabHashTable, TableError};
use crate::warp::WarpContext;

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct OracleMap {
    entries: BTreeMap<u32, VecDeque<u32>>,
    len: usize,
}

impl OracleMap {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn apply(&mut self, op: &Op) -> OpOutcome {
        let k = op.key;
        match op.kind {
            OpKind::Insert => {
                self.entries.entry(k).or_default().push_back(op.value);
                self.len += 1;
                OpOutcome::Stored { displaced: 0 }
            }
            OpKind::Replace => {
                let old = self.entries.insert(k, VecDeque::from([op.value])).map_or(0, |v| v.len());
                self.len = self.len + 1 - old;
                OpOutcome::Stored { displaced: old as u32 }
            }
            OpKind::Delete => match self.entries.get_mut(&k).and_then(VecDeque::pop_front) {
                Some(_) => {
                    self.len -= 1;
                    self.prune(k);
                    OpOutcome::Deleted(1)
                }
                None => OpOutcome::Deleted(0),
            },
            OpKind::DeleteAll => {
                let n = self.entries.remove(&k).map_or(0, |v| v.len());
                self.len -= n;
                OpOutcome::Deleted(n as u32)
            }
            OpKind::Search => match self.entries.get(&k).and_then(|v| v.front()) {
                Some(&v) => OpOutcome::Found(v),
                None => OpOutcome::NotFound,
            },
            OpKind::SearchAll => OpOutcome::FoundAll(self.entries.get(&k).map_or_else(Vec::new, |v| v.iter().copied().collect())),
        }
    }

    fn prune(&mut self, k: u32) {
        if self.entries.get(&k).is_some_and(VecDeque::is_empty) {
            self.entries.remove(&k);
        }
    }

    /// Key -> values, oldest first.
    pub fn contents(&self) -> BTreeMap<u32, Vec<u32>> {
        self.entries.iter().map(|(k, v)| (*k, v.iter().copied().collect())).collect()
    }
}

/// Outcome equality, with `FoundAll` compared as a multiset.
pub fn outcomes_agree(expected: &OpOutcome, observed: &OpOutcome) -> bool {
    match (expected, observed) {
        (OpOutcome::FoundAll(a), OpOutcome::FoundAll(b)) => {
            let (mut a, mut b) = (a.clone(), b.clone());
            a.sort_unstable();
            b.sort_unstable();
            a == b
        }
        _ => expected == observed,
    }
}

#[derive(Debug, Clone)]
pub struct TraceConfig {
    pub buckets: u32,
    pub layout: SlabLayout,
    pub seed: u64,
    pub alloc: AllocatorConfig,
    /// Flush every chain after this many operations (rounded up to a warp).
    pub flush_every: Option<usize>,
    /// Corruption to apply mid-trace, for checking the checker.
    pub fault: Option<Fault>,
}

/// Overwrites one word of a bucket's base slab once `after_ops` operations
/// have been replayed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Fault {
    pub after_ops: usize,
    pub bucket: u32,
    pub lane: usize,
    pub word: u32,
}

impl TraceConfig {
    pub fn new(buckets: u32, layout: SlabLayout) -> Self {
        TraceConfig {
            buckets,
            layout,
            seed: 0,
            alloc: AllocatorConfig::new(1, 64),
            flush_every: None,
            fault: None,
        }
    }
}

/// First point where the table and the oracle disagree.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Divergence {
    /// Index of the offending op, or the trace length for a final-state mismatch.
    pub index: usize,
    pub op: Option<Op>,
    pub expected: String,
    pub observed: String,
    /// Ops that reproduce the divergence.
    pub counterexample: Vec<Op>,
}

impl fmt::Display for Divergence {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "counterexample ({} ops):", self.counterexample.len())?;
        for (i, op) in self.counterexample.iter().enumerate() {
            writeln!(f, "{i:>6}: {op}")?;
        }
        match &self.op {
            Some(op) => writeln!(f, "divergence at op {} ({op}):", self.index)?,
            None => writeln!(f, "final contents diverge after {} ops:", self.index)?,
        }
        writeln!(f, "  expected: {}", self.expected)?;
        write!(f, "  observed: {}", self.observed)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TraceReport {
    pub ops_checked: usize,
    pub divergence: Option<Divergence>,
}

impl TraceReport {
    pub fn passed(&self) -> bool {
        self.divergence.is_none()
    }
}

/// Lock-step replay of one trace through a single-warp table and the oracle.
pub struct Replay {
    table: SlabHashTable,
    oracle: OracleMap,
    history: Vec<Op>,
    flush_every: Option<usize>,
    since_flush: usize,
}

impl Replay {
    pub fn new(cfg: &TraceConfig) -> Result<Self, TableError> {
        Ok(Replay {
            table: SlabHashTable::with_allocator(cfg.buckets, cfg.layout, cfg.seed, cfg.alloc)?,
            oracle: OracleMap::new(),
            history: Vec::new(),
            flush_every: cfg.flush_every,
            since_flush: 0,
        })
    }

    pub fn table(&self) -> &SlabHashTable {
        &self.table
    }

    /// For fault injection.
    pub fn table_mut(&mut self) -> &mut SlabHashTable {
        &mut self.table
    }

    pub fn oracle(&self) -> &OracleMap {
        &self.oracle
    }

    /// Runs up to 32 ops as one warp and checks each outcome.
    pub fn apply_warp(&mut self, ops: &[Op]) -> Result<Option<Divergence>, TableError> {
        let layout = self.table.layout();
        let report = self.table.execute_batch(ops, 1)?;
        for (op, observed) in ops.iter().zip(&report.outcomes) {
            let op = op.normalized(layout);
            let expected = self.oracle.apply(&op);
            self.history.push(op);
            if !outcomes_agree(&expected, observed) {
                return Ok(Some(Divergence {
                    index: self.history.len() - 1,
                    op: Some(op),
                    expected: expected.to_string(),
                    observed: observed.to_string(),
                    counterexample: self.history.clone(),
                }));
            }
        }
        self.since_flush += ops.len();
        if self.flush_every.is_some_and(|every| self.since_flush >= every) {
            self.table.flush_all()?;
            self.since_flush = 0;
        }
        Ok(None)
    }

    /// Compares the whole table against the oracle state.
    pub fn check_contents(&self) -> Result<Option<Divergence>, TableError> {
        let observed = self.table.contents()?;
        let expected = self.oracle.contents();
        if observed == expected {
            return Ok(None);
        }
        let first_bad = expected
            .iter()
            .find(|(k, v)| observed.get(k) != Some(v))
            .map(|(k, _)| *k)
            .or_else(|| observed.keys().find(|k| !expected.contains_key(k)).copied());
        let show = |m: &BTreeMap<u32, Vec<u32>>| match first_bad {
            Some(k) => format!("key {k} -> {:?} ({} keys total)", m.get(&k), m.len()),
            None => format!("{} keys", m.len()),
        };
        Ok(Some(Divergence {
            index: self.history.len(),
            op: None,
            expected: show(&expected),
            observed: show(&observed),
            counterexample: self.history.clone(),
        }))
    }
}

fn run_trace(ops: &[Op], cfg: &TraceConfig) -> Result<TraceReport, TableError> {
    let mut replay = Replay::new(cfg)?;
    let split = cfg.fault.map_or(ops.len(), |f| f.after_ops.min(ops.len()));
    let (before, after) = ops.split_at(split);
    for (i, part) in [before, after].into_iter().enumerate() {
        if i == 1 {
            if let Some(f) = cfg.fault {
                replay.table_mut().corrupt_base_lane(f.bucket, f.lane, f.word);
            }
        }
        for chunk in part.chunks(32) {
            if let Some(d) = replay.apply_warp(chunk)? {
                return Ok(TraceReport { ops_checked: d.index + 1, divergence: Some(d) });
            }
        }
    }
    Ok(TraceReport {
        ops_checked: ops.len(),
        divergence: replay.check_contents()?,
    })
}

/// Prefixes up to this length are shrunk op by op.
const MINIMIZE_LIMIT: usize = 512;

/// Replays `ops` through a single-warp slab hash and the oracle. On
/// divergence the counterexample is the failing prefix, greedily shrunk by
/// dropping ops that are not needed to reproduce the same mismatch.
pub fn compare_trace(ops: &[Op], cfg: &TraceConfig) -> Result<TraceReport, TableError> {
    let mut report = run_trace(ops, cfg)?;
    if let Some(d) = report.divergence.as_mut() {
        if d.counterexample.len() <= MINIMIZE_LIMIT {
            let mut shrunk = d.counterexample.clone();
            let mut i = 0;
            while i < shrunk.len() {
                let mut candidate = shrunk.clone();
                candidate.remove(i);
                let same = run_trace(&candidate, cfg)?
                    .divergence
                    .is_some_and(|c| c.op == d.op && c.expected == d.expected && c.observed == d.observed);
                if same {
                    shrunk = candidate;
                } else {
                    i += 1;
                }
            }
            d.counterexample = shrunk;
        }
    }
    Ok(report)
}

/// Ops one warp executed, in its drain order, with what each observed.
#[derive(Debug, Clone, Default)]
pub struct WarpHistory {
    pub ops: Vec<Op>,
    pub outcomes: Vec<OpOutcome>,
    /// Optional `(first step, last step)` per op on a global clock. When
    /// present, an op that ended before another began must precede it.
    pub spans: Vec<(u64, u64)>,
}

impl WarpHistory {
    fn span(&self, i: usize) -> Option<(u64, u64)> {
        self.spans.get(i).copied()
    }
}

/// Random mixed trace over keys `[0, universe)` using all six op kinds,
/// with an occasional extreme key.
pub fn random_trace(seed: u64, len: usize, universe: u32) -> Vec<Op> {
    const EXTREME: [u32; 3] = [0, 0x8000_0000, 0xFFFF_FFFD];
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..len)
        .map(|_| {
            let key = if rng.random_ratio(1, 100) {
                EXTREME[rng.random_range(0..EXTREME.len())]
            } else {
                rng.random_range(0..universe.max(1))
            };
            let kind = match rng.random_range(0..100) {
                0..25 => OpKind::Insert,
                25..40 => OpKind::Replace,
                40..55 => OpKind::Delete,
                55..60 => OpKind::DeleteAll,
                60..85 => OpKind::Search,
                _ => OpKind::SearchAll,
            };
            Op::new(kind, key, rng.random())
        })
        .collect()
}

/// Runs one warp per op list on `table`, advancing a randomly chosen warp
/// by one half-step at a time (seeded), and records each op's span.
pub fn run_interleaved(table: &SlabHashTable, warps: &[Vec<Op>], seed: u64) -> Result<Vec<WarpHistory>, TableError> {
    let layout = table.layout();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut runs = warps.iter().map(|ops| table.warp_run(ops)).collect::<Result<Vec<_>, _>>()?;
    let mut ctxs: Vec<WarpContext> = (0..warps.len() as u32).map(WarpContext::new).collect();
    let mut spans: Vec<Vec<(u64, u64)>> = vec![Vec::new(); warps.len()];
    let mut starts = vec![0u64; warps.len()];
    let mut live: Vec<usize> = (0..warps.len()).collect();
    let mut clock = 0u64;
    while !live.is_empty() {
        let pick = rng.random_range(0..live.len());
        let w = live[pick];
        let before = runs[w].queue();
        if !runs[w].step(&mut ctxs[w]) {
            live.swap_remove(pick);
            continue;
        }
        if runs[w].queue() != before {
            spans[w].push((starts[w], clock));
            starts[w] = clock + 1;
        }
        clock += 1;
    }
    let mut out = Vec::with_capacity(warps.len());
    for ((run, ops), spans) in runs.into_iter().zip(warps).zip(spans) {
        let (outcomes, _, _) = run.finish();
        table.acknowledge(&outcomes);
        out.push(WarpHistory { ops: ops.iter().map(|op| op.normalized(layout)).collect(), outcomes, spans });
    }
    Ok(out)
}

/// Searches every interleaving of the warp histories (each warp keeps its
/// own order, and recorded spans fix real-time order) for one that the
/// oracle, started from `initial`, explains.
/// When `final_contents` is given the interleaving must also end in that
/// state. Returns the warp index picked at each position.
pub fn find_linearization(
    initial: &OracleMap,
    warps: &[WarpHistory],
    final_contents: Option<&BTreeMap<u32, Vec<u32>>>,
) -> Option<Vec<usize>> {
    fn dfs(
        state: &OracleMap,
        warps: &[WarpHistory],
        cursor: &mut Vec<usize>,
        order: &mut Vec<usize>,
        final_contents: Option<&BTreeMap<u32, Vec<u32>>>,
    ) -> bool {
        if cursor.iter().zip(warps).all(|(&c, w)| c == w.ops.len()) {
            return final_contents.is_none_or(|f| state.contents() == *f);
        }
        for w in 0..warps.len() {
            let c = cursor[w];
            if c == warps[w].ops.len() {
                continue;
            }
            if let Some((start, _)) = warps[w].span(c) {
                let blocked = (0..warps.len()).any(|v| {
                    v != w && warps[v].span(cursor[v]).is_some_and(|(_, end)| cursor[v] < warps[v].ops.len() && end < start)
                });
                if blocked {
                    continue;
                }
            }
            let mut next = state.clone();
            let expected = next.apply(&warps[w].ops[c]);
            if !outcomes_agree(&expected, &warps[w].outcomes[c]) {
                continue;
            }
            cursor[w] += 1;
            order.push(w);
            if dfs(&next, warps, cursor, order, final_contents) {
                return true;
            }
            order.pop();
            cursor[w] -= 1;
        }
        false
    }

    let mut cursor = vec![0; warps.len()];
    let mut order = Vec::new();
    dfs(initial, warps, &mut cursor, &mut order, final_contents).then_some(order)
}
