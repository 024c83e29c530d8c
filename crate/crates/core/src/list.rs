//! Slab lists and the warp-cooperative operations on them.
//!
//! Every lane of a warp may carry one request. The warp drains them one at
//! a time: a ballot over the pending lanes forms the work queue, the
//! highest-priority lane's key is broadcast, the whole warp reads one slab
//! (each lane its own word), and a ballot over the slab words decides the
//! next move. The loop restarts at the base slab whenever the work queue
//! changes. [`WarpRun`] is that loop as an explicit state machine so that
//! several warps can be interleaved step by step.
//!
//! Slot lifecycle: a key word only moves `EMPTY_KEY -> key -> DELETED_KEY`
//! outside of [`flush`](SlabList::flush). Insertions always claim the first
//! `EMPTY_KEY` slot, so the occupied slots of a chain form a prefix in
//! head-to-tail, lane order and that order is the insertion order.

use std::fmt::{self, Write as _};
use std::sync::Arc;

use thiserror::Error;

use crate::alloc::{AllocError, SlabAddress, SlabAlloc};
use crate::slab::{pair, Slab, ADDRESS_LANE, BASE_SLAB, DELETED_KEY, EMPTY_ADDRESS, EMPTY_KEY, EMPTY_PAIR};
use crate::warp::{ballot, ballot_by, next_prior, shuffle_from, LaneId, Lanes, WarpContext, WARP_SIZE};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ListError {
    #[error("key {0:#010x} is reserved (EMPTY_KEY / DELETED_KEY)")]
    ReservedKey(u32),
    #[error("a warp carries at most 32 operations, got {0}")]
    TooManyOps(usize),
    #[error(transparent)]
    Alloc(#[from] AllocError),
}

/// How data elements are laid out in lanes 0..30.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SlabLayout {
    /// 15 pairs: keys in even lanes, values in the following odd lane.
    KeyValue,
    /// 30 keys.
    KeyOnly,
}

impl SlabLayout {
    pub const fn elements_per_slab(self) -> u32 {
        match self {
            SlabLayout::KeyValue => 15,
            SlabLayout::KeyOnly => 30,
        }
    }

    /// Lanes that hold keys.
    pub const fn valid_key_mask(self) -> u32 {
        match self {
            SlabLayout::KeyValue => 0x1555_5555,
            SlabLayout::KeyOnly => 0x3FFF_FFFF,
        }
    }

    pub const fn element_bytes(self) -> u32 {
        match self {
            SlabLayout::KeyValue => 8,
            SlabLayout::KeyOnly => 4,
        }
    }

    fn key_lanes(self) -> impl Iterator<Item = usize> {
        let mask = self.valid_key_mask();
        (0..WARP_SIZE).filter(move |l| mask >> l & 1 == 1)
    }
}

pub fn is_reserved_key(key: u32) -> bool {
    key == EMPTY_KEY || key == DELETED_KEY
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum OpKind {
    Insert,
    Replace,
    Delete,
    DeleteAll,
    Search,
    SearchAll,
}

impl OpKind {
    pub const ALL: [OpKind; 6] = [
        OpKind::Insert,
        OpKind::Replace,
        OpKind::Delete,
        OpKind::DeleteAll,
        OpKind::Search,
        OpKind::SearchAll,
    ];
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Op {
    pub kind: OpKind,
    pub key: u32,
    pub value: u32,
}

impl Op {
    pub fn new(kind: OpKind, key: u32, value: u32) -> Self {
        Op { kind, key, value }
    }

    pub fn insert(key: u32, value: u32) -> Self {
        Op::new(OpKind::Insert, key, value)
    }

    pub fn replace(key: u32, value: u32) -> Self {
        Op::new(OpKind::Replace, key, value)
    }

    pub fn delete(key: u32) -> Self {
        Op::new(OpKind::Delete, key, 0)
    }

    pub fn delete_all(key: u32) -> Self {
        Op::new(OpKind::DeleteAll, key, 0)
    }

    pub fn search(key: u32) -> Self {
        Op::new(OpKind::Search, key, 0)
    }

    pub fn search_all(key: u32) -> Self {
        Op::new(OpKind::SearchAll, key, 0)
    }

    /// Key-only tables store no value; they report the key itself.
    pub fn normalized(self, layout: SlabLayout) -> Self {
        match layout {
            SlabLayout::KeyOnly => Op { value: self.key, ..self },
            SlabLayout::KeyValue => self,
        }
    }
}

impl fmt::Display for Op {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.kind {
            OpKind::Insert => write!(f, "insert({}, {})", self.key, self.value),
            OpKind::Replace => write!(f, "replace({}, {})", self.key, self.value),
            OpKind::Delete => write!(f, "delete({})", self.key),
            OpKind::DeleteAll => write!(f, "delete_all({})", self.key),
            OpKind::Search => write!(f, "search({})", self.key),
            OpKind::SearchAll => write!(f, "search_all({})", self.key),
        }
    }
}

/// What a single operation reported back to its lane.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum OpOutcome {
    /// Insert or replace landed; `displaced` previous instances of the key
    /// were overwritten or removed (always 0 for insert).
    Stored { displaced: u32 },
    /// Number of instances removed (0 when the key was absent).
    Deleted(u32),
    Found(u32),
    NotFound,
    /// Every matching value, head-to-tail.
    FoundAll(Vec<u32>),
    Failed(AllocError),
}

impl OpOutcome {
    /// Change in the number of live elements.
    pub fn live_delta(&self) -> i64 {
        match self {
            OpOutcome::Stored { displaced } => 1 - *displaced as i64,
            OpOutcome::Deleted(n) => -(*n as i64),
            _ => 0,
        }
    }
}

impl fmt::Display for OpOutcome {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            OpOutcome::Stored { displaced } => write!(f, "stored (displaced {displaced})"),
            OpOutcome::Deleted(n) => write!(f, "deleted {n}"),
            OpOutcome::Found(v) => write!(f, "found {v}"),
            OpOutcome::NotFound => f.write_str("not found"),
            OpOutcome::FoundAll(vs) => write!(f, "found all {vs:?}"),
            OpOutcome::Failed(e) => write!(f, "failed: {e}"),
        }
    }
}

/// Where a warp finds slabs: bucket heads plus the allocator.
pub trait BucketStore: Sync {
    fn layout(&self) -> SlabLayout;
    fn bucket_of(&self, key: u32) -> u32;
    fn base_slab(&self, bucket: u32) -> &Slab;
    fn allocator(&self) -> &SlabAlloc;

    /// Resolves a `next` word: [`BASE_SLAB`] means the bucket's head.
    #[inline]
    fn slab(&self, next: u32, bucket: u32) -> Result<&Slab, AllocError> {
        if next == BASE_SLAB {
            Ok(self.base_slab(bucket))
        } else {
            self.allocator().resolve_raw(next)
        }
    }
}

/// Counters collected while a warp drains its queue.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct RunStats {
    pub slab_reads: u64,
    /// Slabs appended to a chain.
    pub slabs_linked: u64,
    /// Address-lane CAS losses (the extra slab was given back).
    pub link_losses: u64,
    /// Slot CAS failures that forced a re-read.
    pub slot_retries: u64,
}

impl RunStats {
    pub fn merge(&mut self, other: &RunStats) {
        self.slab_reads += other.slab_reads;
        self.slabs_linked += other.slabs_linked;
        self.link_losses += other.link_losses;
        self.slot_retries += other.slot_retries;
    }
}

#[derive(Debug, Clone)]
enum Progress {
    Fresh,
    Collect(Vec<u32>),
    Count(u32),
    /// Replace overwrote an existing pair at `(slab, lane)`; remaining
    /// instances further down are being removed.
    Purge { slab: u32, lane: usize, displaced: u32 },
}

#[derive(Debug, Clone)]
struct Lane {
    op: Option<Op>,
    active: bool,
    probes: u32,
    progress: Progress,
    outcome: Option<OpOutcome>,
}

struct Pending<'s> {
    src: LaneId,
    slab: &'s Slab,
    read: Lanes<u32>,
}

/// One warp draining up to 32 lane requests against a [`BucketStore`].
pub struct WarpRun<'s, S: BucketStore + ?Sized> {
    store: &'s S,
    lanes: [Lane; WARP_SIZE],
    keys: Lanes<u32>,
    queue: u32,
    last_queue: u32,
    next: u32,
    pending: Option<Pending<'s>>,
    stats: RunStats,
}

impl<'s, S: BucketStore + ?Sized> WarpRun<'s, S> {
    /// Lane `i` takes `ops[i]`; lanes beyond `ops.len()` stay inactive.
    pub fn new(store: &'s S, ops: &[Op]) -> Result<Self, ListError> {
        if ops.len() > WARP_SIZE {
            return Err(ListError::TooManyOps(ops.len()));
        }
        if let Some(op) = ops.iter().find(|op| is_reserved_key(op.key)) {
            return Err(ListError::ReservedKey(op.key));
        }
        let layout = store.layout();
        let lanes: [Lane; WARP_SIZE] = std::array::from_fn(|i| {
            let op = ops.get(i).map(|op| op.normalized(layout));
            Lane {
                active: op.is_some(),
                op,
                probes: 0,
                progress: Progress::Fresh,
                outcome: None,
            }
        });
        let keys = std::array::from_fn(|i| lanes[i].op.map_or(EMPTY_KEY, |op| op.key));
        let queue = ballot(&std::array::from_fn(|i| lanes[i].active));
        Ok(WarpRun {
            store,
            lanes,
            keys,
            queue,
            last_queue: queue,
            next: BASE_SLAB,
            pending: None,
            stats: RunStats::default(),
        })
    }

    /// Current work queue.
    pub fn queue(&self) -> u32 {
        self.queue
    }

    /// The slab the warp will read next (`BASE_SLAB` for the bucket head).
    pub fn next_slab(&self) -> u32 {
        self.next
    }

    /// Whether the next step acts on a slab already read.
    pub fn is_mid_step(&self) -> bool {
        self.pending.is_some()
    }

    /// Advances one half-iteration: either the slab read or the action on
    /// what was read. Returns `false` once the work queue is empty.
    pub fn step(&mut self, ctx: &mut WarpContext) -> bool {
        match self.pending.take() {
            None => {
                if self.queue == 0 {
                    return false;
                }
                if self.queue != self.last_queue {
                    self.next = BASE_SLAB;
                    self.last_queue = self.queue;
                }
                let src = next_prior(self.queue).expect("non-empty queue");
                let key = shuffle_from(&self.keys, src);
                let bucket = self.store.bucket_of(key);
                match self.store.slab(self.next, bucket) {
                    Ok(slab) => {
                        let read = slab.read();
                        self.lanes[src.index()].probes += 1;
                        self.stats.slab_reads += 1;
                        self.pending = Some(Pending { src, slab, read });
                    }
                    Err(e) => {
                        self.resolve(src, OpOutcome::Failed(e));
                        self.reballot();
                    }
                }
            }
            Some(p) => {
                self.act(p, ctx);
                self.reballot();
            }
        }
        true
    }

    /// Runs to completion.
    pub fn run(&mut self, ctx: &mut WarpContext) {
        while self.step(ctx) {}
    }

    fn reballot(&mut self) {
        self.queue = ballot(&std::array::from_fn(|i| self.lanes[i].active));
    }

    fn resolve(&mut self, src: LaneId, outcome: OpOutcome) {
        let lane = &mut self.lanes[src.index()];
        lane.outcome = Some(outcome);
        lane.active = false;
    }

    /// Follows the address lane, or finishes with `at_tail` when there is none.
    fn follow(&mut self, src: LaneId, read: &Lanes<u32>, at_tail: impl FnOnce(&mut Self) -> OpOutcome) {
        let next_ptr = read[ADDRESS_LANE];
        if next_ptr == EMPTY_ADDRESS {
            let outcome = at_tail(self);
            self.resolve(src, outcome);
        } else {
            self.next = next_ptr;
        }
    }

    /// Allocates a slab and tries to hang it off the tail. Either way the
    /// warp re-reads the same slab next.
    fn extend(&mut self, src: LaneId, tail: &Slab, ctx: &mut WarpContext) {
        let alloc = self.store.allocator();
        match alloc.warp_allocate(ctx) {
            Ok(addr) => {
                let fresh = alloc.resolve(addr).expect("allocator returned an unmapped address");
                fresh.reset();
                match tail.cas_lane(ADDRESS_LANE, EMPTY_ADDRESS, addr.raw()) {
                    Ok(()) => self.stats.slabs_linked += 1,
                    Err(_) => {
                        self.stats.link_losses += 1;
                        alloc.deallocate(addr).expect("unpublished slab is live");
                    }
                }
            }
            Err(e) => self.resolve(src, OpOutcome::Failed(e)),
        }
    }

    fn claim_empty(&self, slab: &Slab, lane: usize, op: &Op) -> bool {
        match self.store.layout() {
            SlabLayout::KeyValue => slab.cas_pair(lane, EMPTY_PAIR, pair(op.key, op.value)).is_ok(),
            SlabLayout::KeyOnly => slab.cas_lane(lane, EMPTY_KEY, op.key).is_ok(),
        }
    }

    /// Marks every lane in `matches` deleted. Returns (removed, any CAS lost).
    fn tombstone(&mut self, slab: &Slab, key: u32, matches: u32) -> (u32, bool) {
        let mut removed = 0;
        let mut lost = false;
        let mut rest = matches;
        while let Some(l) = next_prior(rest) {
            rest &= rest - 1;
            match slab.cas_lane(l.index(), key, DELETED_KEY) {
                Ok(()) => removed += 1,
                Err(_) => lost = true,
            }
        }
        if lost {
            self.stats.slot_retries += 1;
        }
        (removed, lost)
    }

    fn act(&mut self, p: Pending<'s>, ctx: &mut WarpContext) {
        let Pending { src, slab, read } = p;
        let layout = self.store.layout();
        let valid = layout.valid_key_mask();
        let op = self.lanes[src.index()].op.expect("active lane has an op");
        let key = op.key;
        let matches = ballot_by(|l| read[l] == key) & valid;

        match op.kind {
            OpKind::Search => {
                if let Some(found) = next_prior(matches) {
                    let value = value_at(layout, &read, found.index(), key);
                    self.resolve(src, OpOutcome::Found(value));
                } else {
                    self.follow(src, &read, |_| OpOutcome::NotFound);
                }
            }
            OpKind::SearchAll => {
                let found: Vec<u32> = iter_lanes(matches).map(|l| value_at(layout, &read, l, key)).collect();
                let lane = &mut self.lanes[src.index()];
                let mut acc = match std::mem::replace(&mut lane.progress, Progress::Fresh) {
                    Progress::Collect(v) => v,
                    _ => Vec::new(),
                };
                acc.extend(found);
                if read[ADDRESS_LANE] == EMPTY_ADDRESS {
                    self.resolve(src, OpOutcome::FoundAll(acc));
                } else {
                    self.lanes[src.index()].progress = Progress::Collect(acc);
                    self.next = read[ADDRESS_LANE];
                }
            }
            OpKind::Delete => {
                if let Some(dest) = next_prior(matches) {
                    if slab.cas_lane(dest.index(), key, DELETED_KEY).is_ok() {
                        self.resolve(src, OpOutcome::Deleted(1));
                    } else {
                        self.stats.slot_retries += 1;
                    }
                } else {
                    self.follow(src, &read, |_| OpOutcome::Deleted(0));
                }
            }
            OpKind::DeleteAll => {
                let (removed, lost) = self.tombstone(slab, key, matches);
                let lane = &mut self.lanes[src.index()];
                let total = match lane.progress {
                    Progress::Count(n) => n,
                    _ => 0,
                } + removed;
                lane.progress = Progress::Count(total);
                if !lost {
                    self.follow(src, &read, |_| OpOutcome::Deleted(total));
                }
            }
            OpKind::Insert => {
                let empties = ballot_by(|l| read[l] == EMPTY_KEY) & valid;
                if let Some(dest) = next_prior(empties) {
                    if self.claim_empty(slab, dest.index(), &op) {
                        self.resolve(src, OpOutcome::Stored { displaced: 0 });
                    } else {
                        self.stats.slot_retries += 1;
                    }
                } else if read[ADDRESS_LANE] == EMPTY_ADDRESS {
                    self.extend(src, slab, ctx);
                } else {
                    self.next = read[ADDRESS_LANE];
                }
            }
            OpKind::Replace => self.act_replace(src, slab, &read, &op, matches, ctx),
        }
    }

    fn act_replace(&mut self, src: LaneId, slab: &'s Slab, read: &Lanes<u32>, op: &Op, matches: u32, ctx: &mut WarpContext) {
        let layout = self.store.layout();
        let valid = layout.valid_key_mask();
        let key = op.key;

        let (skip, displaced) = match self.lanes[src.index()].progress {
            Progress::Purge { slab: s, lane, displaced } => {
                let skip = if s == self.next { 1u32 << lane } else { 0 };
                (skip, displaced)
            }
            _ => {
                let candidates = ballot_by(|l| read[l] == EMPTY_KEY || read[l] == key) & valid;
                let Some(dest) = next_prior(candidates) else {
                    if read[ADDRESS_LANE] == EMPTY_ADDRESS {
                        self.extend(src, slab, ctx);
                    } else {
                        self.next = read[ADDRESS_LANE];
                    }
                    return;
                };
                let d = dest.index();
                if read[d] == EMPTY_KEY {
                    // occupied slots form a prefix: nothing with this key lies beyond
                    if self.claim_empty(slab, d, op) {
                        self.resolve(src, OpOutcome::Stored { displaced: 0 });
                    } else {
                        self.stats.slot_retries += 1;
                    }
                    return;
                }
                let swapped = match layout {
                    SlabLayout::KeyValue => slab.cas_pair(d, pair(key, read[d + 1]), pair(key, op.value)).is_ok(),
                    SlabLayout::KeyOnly => true,
                };
                if !swapped {
                    self.stats.slot_retries += 1;
                    return;
                }
                (1u32 << d, 1)
            }
        };

        // Remove any other instance of the key left by duplicate-permitting inserts.
        let (removed, lost) = self.tombstone(slab, key, matches & !skip);
        let displaced = displaced + removed;
        let here = self.next;
        let lane_of_skip = if skip != 0 { skip.trailing_zeros() as usize } else { 0 };
        let progress = match self.lanes[src.index()].progress {
            Progress::Purge { slab, lane, .. } => Progress::Purge { slab, lane, displaced },
            _ => Progress::Purge { slab: here, lane: lane_of_skip, displaced },
        };
        self.lanes[src.index()].progress = progress;
        if !lost {
            self.follow(src, read, |_| OpOutcome::Stored { displaced });
        }
    }

    pub fn stats(&self) -> &RunStats {
        &self.stats
    }

    /// Outcomes and slab reads per lane, for the lanes that carried ops.
    pub fn finish(self) -> (Vec<OpOutcome>, Vec<u32>, RunStats) {
        let mut outcomes = Vec::new();
        let mut probes = Vec::new();
        for lane in self.lanes {
            if lane.op.is_some() {
                outcomes.push(lane.outcome.expect("finish called before the queue drained"));
                probes.push(lane.probes);
            }
        }
        (outcomes, probes, self.stats)
    }
}

#[inline]
fn value_at(layout: SlabLayout, read: &Lanes<u32>, key_lane: usize, key: u32) -> u32 {
    match layout {
        SlabLayout::KeyValue => read[key_lane + 1],
        SlabLayout::KeyOnly => key,
    }
}

fn iter_lanes(mut mask: u32) -> impl Iterator<Item = usize> {
    std::iter::from_fn(move || {
        let l = next_prior(mask)?;
        mask &= mask - 1;
        Some(l.index())
    })
}

/// Allocated slabs of a chain, head excluded, in order.
pub(crate) fn chain_addresses(head: &Slab, alloc: &SlabAlloc) -> Result<Vec<SlabAddress>, AllocError> {
    let mut out = Vec::new();
    let mut next = head.load_lane(ADDRESS_LANE);
    while next != EMPTY_ADDRESS {
        let addr = SlabAddress::from_raw(next)?;
        out.push(addr);
        next = alloc.resolve(addr)?.load_lane(ADDRESS_LANE);
    }
    Ok(out)
}

/// Live `(key, value)` elements of a chain, head-to-tail.
pub(crate) fn chain_elements(head: &Slab, alloc: &SlabAlloc, layout: SlabLayout) -> Result<Vec<(u32, u32)>, AllocError> {
    let mut out = Vec::new();
    let mut slab = head;
    loop {
        let read = slab.read();
        for l in layout.key_lanes() {
            if !is_reserved_key(read[l]) {
                out.push((read[l], value_at(layout, &read, l, read[l])));
            }
        }
        if read[ADDRESS_LANE] == EMPTY_ADDRESS {
            return Ok(out);
        }
        slab = alloc.resolve_raw(read[ADDRESS_LANE])?;
    }
}

/// Result of compacting one chain.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct FlushReport {
    pub live: u64,
    pub slabs_before: u64,
    pub slabs_after: u64,
    pub freed: u64,
}

impl FlushReport {
    pub fn merge(&mut self, other: &FlushReport) {
        self.live += other.live;
        self.slabs_before += other.slabs_before;
        self.slabs_after += other.slabs_after;
        self.freed += other.freed;
    }
}

/// Repacks live elements into the fewest slabs, keeping their order, and
/// frees the emptied tail. Callers must hold the chain exclusively.
pub(crate) fn flush_chain(head: &Slab, alloc: &SlabAlloc, layout: SlabLayout) -> Result<FlushReport, AllocError> {
    let elements = chain_elements(head, alloc, layout)?;
    let chain = chain_addresses(head, alloc)?;
    let per_slab = layout.elements_per_slab() as usize;
    let needed = elements.len().div_ceil(per_slab).max(1);

    let slabs: Vec<&Slab> = std::iter::once(Ok(head))
        .chain(chain.iter().take(needed - 1).map(|a| alloc.resolve(*a)))
        .collect::<Result<_, _>>()?;
    for (i, (slab, chunk)) in slabs.iter().zip(elements.chunks(per_slab).chain(std::iter::repeat(&[][..]))).enumerate() {
        slab.reset();
        for (j, &(k, v)) in chunk.iter().enumerate() {
            match layout {
                SlabLayout::KeyValue => slab.store_pair(2 * j, pair(k, v)),
                SlabLayout::KeyOnly => slab.store_lane(j, k),
            }
        }
        if i + 1 < needed {
            slab.store_lane(ADDRESS_LANE, chain[i].raw());
        }
    }
    let freed = &chain[needed - 1..];
    for addr in freed {
        alloc.deallocate(*addr)?;
    }
    Ok(FlushReport {
        live: elements.len() as u64,
        slabs_before: chain.len() as u64 + 1,
        slabs_after: needed as u64,
        freed: freed.len() as u64,
    })
}

/// Text dump: one line per slab with its address, key lanes and successor.
/// `.` is an empty slot, `x` a deleted one.
pub(crate) fn dump_chain(label: &str, head: &Slab, alloc: &SlabAlloc, layout: SlabLayout) -> String {
    let mut out = String::new();
    let mut name = label.to_string();
    let mut slab = head;
    loop {
        let read = slab.read();
        let cells: Vec<String> = layout
            .key_lanes()
            .map(|l| match read[l] {
                EMPTY_KEY => ".".to_string(),
                DELETED_KEY => "x".to_string(),
                k => match layout {
                    SlabLayout::KeyValue => format!("{k}:{}", read[l + 1]),
                    SlabLayout::KeyOnly => k.to_string(),
                },
            })
            .collect();
        let next = read[ADDRESS_LANE];
        let target = if next == EMPTY_ADDRESS { "EMPTY".to_string() } else { format!("{next:#010x}") };
        let _ = writeln!(out, "{name} [{}] -> {target}", cells.join(" "));
        if next == EMPTY_ADDRESS {
            return out;
        }
        match alloc.resolve_raw(next) {
            Ok(s) => slab = s,
            Err(e) => {
                let _ = writeln!(out, "<unresolvable successor: {e}>");
                return out;
            }
        }
        name = format!("{next:#010x}");
    }
}

/// A single slab list: one base slab plus allocated successors.
pub struct SlabList {
    head: Slab,
    layout: SlabLayout,
    alloc: Arc<SlabAlloc>,
}

impl BucketStore for SlabList {
    fn layout(&self) -> SlabLayout {
        self.layout
    }

    fn bucket_of(&self, _key: u32) -> u32 {
        0
    }

    fn base_slab(&self, _bucket: u32) -> &Slab {
        &self.head
    }

    fn allocator(&self) -> &SlabAlloc {
        &self.alloc
    }
}

impl SlabList {
    pub fn new(layout: SlabLayout, alloc: Arc<SlabAlloc>) -> Self {
        SlabList {
            head: Slab::empty(),
            layout,
            alloc,
        }
    }

    pub fn layout(&self) -> SlabLayout {
        self.layout
    }

    /// Runs up to 32 lane requests through one warp.
    pub fn run(&self, ops: &[Op], ctx: &mut WarpContext) -> Result<(Vec<OpOutcome>, Vec<u32>), ListError> {
        let mut run = WarpRun::new(self, ops)?;
        run.run(ctx);
        let (outcomes, probes, _) = run.finish();
        Ok((outcomes, probes))
    }

    fn run_one(&self, op: Op, ctx: &mut WarpContext) -> Result<OpOutcome, ListError> {
        let (mut outcomes, _) = self.run(&[op], ctx)?;
        Ok(outcomes.pop().expect("one op, one outcome"))
    }

    pub fn search(&self, key: u32, ctx: &mut WarpContext) -> Result<Option<u32>, ListError> {
        Ok(match self.run_one(Op::search(key), ctx)? {
            OpOutcome::Found(v) => Some(v),
            _ => None,
        })
    }

    pub fn search_all(&self, key: u32, ctx: &mut WarpContext) -> Result<Vec<u32>, ListError> {
        Ok(match self.run_one(Op::search_all(key), ctx)? {
            OpOutcome::FoundAll(v) => v,
            _ => Vec::new(),
        })
    }

    pub fn insert(&self, key: u32, value: u32, ctx: &mut WarpContext) -> Result<(), ListError> {
        self.store(Op::insert(key, value), ctx)
    }

    pub fn replace(&self, key: u32, value: u32, ctx: &mut WarpContext) -> Result<(), ListError> {
        self.store(Op::replace(key, value), ctx)
    }

    fn store(&self, op: Op, ctx: &mut WarpContext) -> Result<(), ListError> {
        match self.run_one(op, ctx)? {
            OpOutcome::Failed(e) => Err(e.into()),
            _ => Ok(()),
        }
    }

    /// Removes the least recently inserted instance. Returns whether one existed.
    pub fn delete(&self, key: u32, ctx: &mut WarpContext) -> Result<bool, ListError> {
        Ok(self.run_one(Op::delete(key), ctx)? == OpOutcome::Deleted(1))
    }

    pub fn delete_all(&self, key: u32, ctx: &mut WarpContext) -> Result<u32, ListError> {
        Ok(match self.run_one(Op::delete_all(key), ctx)? {
            OpOutcome::Deleted(n) => n,
            _ => 0,
        })
    }

    /// Lane words of the head (`BASE_SLAB`) or an allocated slab.
    pub fn read_slab(&self, next: u32) -> Result<Lanes<u32>, AllocError> {
        Ok(self.slab(next, 0)?.read())
    }

    /// Allocated successors of the head, in order.
    pub fn chain(&self) -> Result<Vec<SlabAddress>, AllocError> {
        chain_addresses(&self.head, &self.alloc)
    }

    pub fn elements(&self) -> Result<Vec<(u32, u32)>, AllocError> {
        chain_elements(&self.head, &self.alloc, self.layout)
    }

    /// Exclusive compaction; `&mut self` keeps other warps out.
    pub fn flush(&mut self) -> Result<FlushReport, AllocError> {
        flush_chain(&self.head, &self.alloc, self.layout)
    }

    pub fn dump(&self) -> String {
        dump_chain("BASE", &self.head, &self.alloc, self.layout)
    }
}
