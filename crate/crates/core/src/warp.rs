//! Emulated 32-lane SIMT warp.
//!
//! A warp is driven by a single execution agent that walks its 32 lane
//! registers in order, so every lane observes the same state at each
//! synchronization point. Warp-wide primitives (`ballot`, `shuffle`,
//! `next_prior`) are plain functions over per-lane register arrays.
//!
//! Cross-warp communication never happens here; it goes through atomic
//! words in slab storage and allocator bitmaps.

use std::fmt;

use thiserror::Error;

use crate::alloc::AllocCounters;

/// Number of lanes in a warp.
pub const WARP_SIZE: usize = 32;

/// Ballot mask with every lane set.
pub const FULL_MASK: u32 = u32::MAX;

/// One register per lane.
pub type Lanes<T> = [T; WARP_SIZE];

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum WarpError {
    #[error("lane index {0} is outside the warp (must be < 32)")]
    LaneOutOfRange(u32),
}

/// Index of a lane inside a warp.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct LaneId(u8);

impl LaneId {
    pub fn new(index: u32) -> Result<Self, WarpError> {
        if (index as usize) < WARP_SIZE {
            Ok(LaneId(index as u8))
        } else {
            Err(WarpError::LaneOutOfRange(index))
        }
    }

    #[inline]
    pub fn index(self) -> usize {
        self.0 as usize
    }

    /// All lanes in ascending order.
    pub fn all() -> impl Iterator<Item = LaneId> {
        (0..WARP_SIZE as u8).map(LaneId)
    }
}

impl fmt::Display for LaneId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "lane {}", self.0)
    }
}

/// Bit `i` set iff lane `i` still has a pending operation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct WorkQueue(pub u32);

impl WorkQueue {
    pub fn from_active(active: &Lanes<bool>) -> Self {
        WorkQueue(ballot(active))
    }

    #[inline]
    pub fn is_empty(self) -> bool {
        self.0 == 0
    }

    #[inline]
    pub fn len(self) -> u32 {
        self.0.count_ones()
    }

    #[inline]
    pub fn next_prior(self) -> Option<LaneId> {
        next_prior(self.0)
    }
}

/// Warp-wide vote: bit `i` of the result is lane `i`'s predicate.
#[inline]
pub fn ballot(predicates: &Lanes<bool>) -> u32 {
    ballot_by(|lane| predicates[lane])
}

/// Ballot over a predicate evaluated once per lane, in lane order.
#[inline]
pub fn ballot_by(mut predicate: impl FnMut(usize) -> bool) -> u32 {
    let mut mask = 0u32;
    for lane in 0..WARP_SIZE {
        if predicate(lane) {
            mask |= 1 << lane;
        }
    }
    mask
}

/// Broadcast lane `src_lane`'s register to the whole warp.
pub fn shuffle(values: &Lanes<u32>, src_lane: u32) -> Result<u32, WarpError> {
    let lane = LaneId::new(src_lane)?;
    Ok(shuffle_from(values, lane))
}

#[inline]
pub fn shuffle_from<T: Copy>(values: &Lanes<T>, src_lane: LaneId) -> T {
    values[src_lane.index()]
}

/// Highest-priority lane in a work queue: the least significant set bit.
#[inline]
pub fn next_prior(mask: u32) -> Option<LaneId> {
    if mask == 0 {
        None
    } else {
        Some(LaneId(mask.trailing_zeros() as u8))
    }
}

/// Where a warp currently allocates from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Resident {
    pub super_block: u32,
    pub block: u32,
}

/// Per-warp state that outlives a single operation: identity plus the
/// allocator's resident block and its register-cached bitmap.
#[derive(Debug, Clone)]
pub struct WarpContext {
    warp_id: u32,
    pub(crate) resident: Option<Resident>,
    /// Lane `i` caches bitmap word `i` of the resident block (units `32i..32i+32`).
    pub(crate) bitmap_cache: Lanes<u32>,
    pub(crate) resident_change_count: u32,
    pub(crate) counters: AllocCounters,
}

impl WarpContext {
    pub fn new(warp_id: u32) -> Self {
        WarpContext {
            warp_id,
            resident: None,
            bitmap_cache: [0; WARP_SIZE],
            resident_change_count: 0,
            counters: AllocCounters::default(),
        }
    }

    pub fn warp_id(&self) -> u32 {
        self.warp_id
    }

    pub fn resident(&self) -> Option<Resident> {
        self.resident
    }

    pub fn bitmap_cache(&self) -> &Lanes<u32> {
        &self.bitmap_cache
    }

    pub fn resident_change_count(&self) -> u32 {
        self.resident_change_count
    }

    /// Allocation counters accumulated by this warp.
    pub fn counters(&self) -> &AllocCounters {
        &self.counters
    }
}
