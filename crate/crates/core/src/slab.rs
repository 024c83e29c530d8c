//! The 128-byte slab: 32 lanes of 32-bit words.
//!
//! Lanes `0..30` carry data, lane 30 is auxiliary and lane 31 holds the
//! packed address of the successor slab. Storage is sixteen naturally
//! aligned 64-bit atomics so that a key-value pair (even lane key, odd
//! lane value) can be claimed with one 64-bit compare-and-swap. Single
//! lane updates are 32-bit compare-and-swaps emulated on the containing
//! 64-bit word.

use std::sync::atomic::{AtomicU64, Ordering};

use crate::warp::{Lanes, WARP_SIZE};

/// Key word marking a never-used slot.
pub const EMPTY_KEY: u32 = 0xFFFF_FFFF;
/// Key word marking a logically deleted slot.
pub const DELETED_KEY: u32 = 0xFFFF_FFFE;
/// Value word of an unused pair.
pub const EMPTY_VALUE: u32 = 0xFFFF_FFFF;
/// Both words of an unused key-value pair.
pub const EMPTY_PAIR: u64 = 0xFFFF_FFFF_FFFF_FFFF;
/// Successor lane content of a tail slab.
pub const EMPTY_ADDRESS: u32 = 0xFFFF_FFFF;
/// `next` value meaning "the bucket's base slab".
pub const BASE_SLAB: u32 = 0xFFFF_FFFE;

pub const AUX_LANE: usize = 30;
pub const ADDRESS_LANE: usize = 31;
pub const SLAB_BYTES: usize = 128;

const WORDS: usize = WARP_SIZE / 2;

/// Packs a key and value into the 64-bit word shared by lanes `2j` and `2j+1`.
#[inline]
pub const fn pair(key: u32, value: u32) -> u64 {
    key as u64 | (value as u64) << 32
}

#[repr(C, align(128))]
pub struct Slab {
    words: [AtomicU64; WORDS],
}

// SAFETY: an all-zero bit pattern is a valid `[AtomicU64; 16]`.
unsafe impl crate::alloc::Zeroable for Slab {}

impl Slab {
    /// A slab with every data lane empty, aux zero and no successor.
    pub fn empty() -> Self {
        let slab = Slab {
            words: std::array::from_fn(|_| AtomicU64::new(0)),
        };
        slab.reset();
        slab
    }

    /// Writes the empty pattern. Only valid while the slab is unpublished
    /// or the owning list is in an exclusive phase.
    pub fn reset(&self) {
        for w in 0..WORDS - 1 {
            self.words[w].store(EMPTY_PAIR, Ordering::Relaxed);
        }
        // lane 30 = 0, lane 31 = EMPTY_ADDRESS
        self.words[WORDS - 1].store(pair(0, EMPTY_ADDRESS), Ordering::Release);
    }

    /// Every lane reads its own word.
    #[inline]
    pub fn read(&self) -> Lanes<u32> {
        let mut lanes = [0u32; WARP_SIZE];
        for (w, word) in self.words.iter().enumerate() {
            let v = word.load(Ordering::Acquire);
            lanes[2 * w] = v as u32;
            lanes[2 * w + 1] = (v >> 32) as u32;
        }
        lanes
    }

    #[inline]
    pub fn load_lane(&self, lane: usize) -> u32 {
        let v = self.words[lane / 2].load(Ordering::Acquire);
        (v >> (32 * (lane % 2))) as u32
    }

    /// 32-bit compare-and-swap on one lane. Returns the observed word on failure.
    pub fn cas_lane(&self, lane: usize, expected: u32, new: u32) -> Result<(), u32> {
        let shift = 32 * (lane % 2);
        let mask = 0xFFFF_FFFFu64 << shift;
        let word = &self.words[lane / 2];
        let mut current = word.load(Ordering::Acquire);
        loop {
            let seen = (current >> shift) as u32;
            if seen != expected {
                return Err(seen);
            }
            let replaced = (current & !mask) | (new as u64) << shift;
            match word.compare_exchange_weak(current, replaced, Ordering::AcqRel, Ordering::Acquire) {
                Ok(_) => return Ok(()),
                // the other half may have changed; re-check ours
                Err(actual) => current = actual,
            }
        }
    }

    /// 64-bit compare-and-swap on the pair at lanes `2j, 2j+1`.
    #[inline]
    pub fn cas_pair(&self, key_lane: usize, expected: u64, new: u64) -> Result<(), u64> {
        debug_assert!(key_lane % 2 == 0);
        self.words[key_lane / 2]
            .compare_exchange(expected, new, Ordering::AcqRel, Ordering::Acquire)
            .map(|_| ())
    }

    /// Plain store for exclusive phases (initialization, flush).
    pub(crate) fn store_lane(&self, lane: usize, value: u32) {
        let shift = 32 * (lane % 2);
        let mask = 0xFFFF_FFFFu64 << shift;
        let word = &self.words[lane / 2];
        let current = word.load(Ordering::Relaxed);
        word.store((current & !mask) | (value as u64) << shift, Ordering::Release);
    }

    pub(crate) fn store_pair(&self, key_lane: usize, value: u64) {
        self.words[key_lane / 2].store(value, Ordering::Release);
    }
}

impl std::fmt::Debug for Slab {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_list().entries(self.read().iter().map(|w| format!("{w:08x}"))).finish()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn geometry() {
        assert_eq!(std::mem::size_of::<Slab>(), SLAB_BYTES);
        assert_eq!(std::mem::align_of::<Slab>(), SLAB_BYTES);
    }

    #[test]
    fn empty_slab_layout() {
        let lanes = Slab::empty().read();
        assert!(lanes[..30].iter().all(|&w| w == EMPTY_KEY));
        assert_eq!(lanes[AUX_LANE], 0);
        assert_eq!(lanes[ADDRESS_LANE], EMPTY_ADDRESS);
    }

    #[test]
    fn lane_cas_leaves_neighbour_alone() {
        let slab = Slab::empty();
        slab.cas_lane(3, EMPTY_KEY, 77).unwrap();
        assert_eq!(slab.cas_lane(3, EMPTY_KEY, 78), Err(77));
        let lanes = slab.read();
        assert_eq!(lanes[2], EMPTY_KEY);
        assert_eq!(lanes[3], 77);
        slab.cas_pair(2, pair(EMPTY_KEY, 77), pair(5, 6)).unwrap();
        assert_eq!(slab.load_lane(2), 5);
        assert_eq!(slab.load_lane(3), 6);
        slab.cas_lane(ADDRESS_LANE, EMPTY_ADDRESS, 0x0200_0C05).unwrap();
        assert_eq!(slab.load_lane(AUX_LANE), 0);
        assert_eq!(slab.load_lane(ADDRESS_LANE), 0x0200_0C05);
    }
}
