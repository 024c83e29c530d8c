//! SlabAlloc: a warp-synchronous allocator for fixed 128-byte slabs.
//!
//! Memory is organised as super blocks, each holding `blocks_per_super`
//! memory blocks of 1024 units. Every block has a 1024-bit bitmap stored as
//! 32 words; during allocation lane `i` of a warp owns word `i`. A warp
//! allocates from its *resident* block until the block is full, then picks
//! another one with a pair of hashes of `(warp id, resident changes)`.
//! After `rehash_threshold` consecutive full picks, a new super block is
//! appended (up to `max_super_blocks`); once growth is exhausted a linear
//! sweep looks for any block with a free unit before reporting
//! [`AllocError::OutOfMemory`].
//!
//! Bitmaps are segregated from slab storage: each super block keeps one
//! contiguous slab array and one contiguous bitmap array.

mod address;

use std::alloc::Layout;
use std::ptr::NonNull;
use std::fmt::{self, Write as _};
use std::sync::atomic::{AtomicU32, AtomicU64, Ordering};
use std::sync::OnceLock;

use thiserror::Error;

pub use address::{is_sentinel, unpack_address, SlabAddress, BLOCK_BITS, SUPER_BITS, UNIT_BITS};

use crate::slab::{Slab, SLAB_BYTES};
use crate::warp::{ballot_by, next_prior, Resident, WarpContext, WARP_SIZE};

pub const UNITS_PER_BLOCK: u32 = 1024;
pub const UNIT_BYTES: usize = SLAB_BYTES;
/// Super block index 255 is reserved so sentinels never decode to a live unit.
pub const MAX_SUPER_BLOCKS: u32 = 255;
pub const MAX_BLOCKS_PER_SUPER: u32 = 1 << BLOCK_BITS;
const BITMAP_WORDS: usize = (UNITS_PER_BLOCK / 32) as usize;
/// Consecutive failed bitmap CASes after which a block is treated as full.
const MAX_CAS_FAILURES: u32 = 32;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum AllocError {
    #[error("invalid allocator configuration: {0}")]
    InvalidConfig(String),
    #[error("could not reserve {bytes} bytes of slab storage")]
    Reservation { bytes: usize },
    #[error("address fields out of range (unit {unit}, block {block}, super block {super_block})")]
    AddressOutOfRange { unit: u32, block: u32, super_block: u32 },
    #[error("{0:#010x} is a reserved sentinel, not a slab address")]
    Sentinel(u32),
    #[error("{0} refers to storage that is not part of this allocator")]
    Unmapped(SlabAddress),
    #[error("double free of {0}")]
    DoubleFree(SlabAddress),
    #[error("out of slab memory")]
    OutOfMemory,
}

/// Marker for types whose all-zero bit pattern is a valid value.
///
/// # Safety
/// Implementors must be valid when every byte is zero.
pub(crate) unsafe trait Zeroable: Sized {}

unsafe impl Zeroable for AtomicU32 {}

/// Zero-filled slice. The OS hands out zero pages lazily, so large
/// reservations only cost what is touched.
///
/// The allocation itself asks for 16-byte alignment and is offset by hand:
/// the system allocator zeroes over-aligned requests eagerly.
pub(crate) struct ZeroedSlice<T> {
    base: NonNull<u8>,
    layout: Layout,
    data: NonNull<T>,
    len: usize,
}

// SAFETY: ZeroedSlice owns its elements like a Box<[T]>.
unsafe impl<T: Send> Send for ZeroedSlice<T> {}
unsafe impl<T: Sync> Sync for ZeroedSlice<T> {}

impl<T: Zeroable> ZeroedSlice<T> {
    const BASE_ALIGN: usize = 16;

    pub(crate) fn new(len: usize) -> Option<Self> {
        let bytes = std::mem::size_of::<T>().checked_mul(len)?;
        let pad = std::mem::align_of::<T>().saturating_sub(Self::BASE_ALIGN);
        let layout = Layout::from_size_align(bytes.checked_add(pad)?.max(1), Self::BASE_ALIGN).ok()?;
        // SAFETY: non-zero layout; T: Zeroable makes zeroed memory a valid T,
        // and the offset keeps `len` elements inside the allocation.
        unsafe {
            let base = NonNull::new(std::alloc::alloc_zeroed(layout))?;
            let offset = base.as_ptr().align_offset(std::mem::align_of::<T>());
            debug_assert!(offset <= pad);
            let data = NonNull::new(base.as_ptr().add(offset) as *mut T)?;
            Some(ZeroedSlice { base, layout, data, len })
        }
    }
}

impl<T> std::ops::Deref for ZeroedSlice<T> {
    type Target = [T];

    fn deref(&self) -> &[T] {
        // SAFETY: `data` points at `len` initialized elements owned by self.
        unsafe { std::slice::from_raw_parts(self.data.as_ptr(), self.len) }
    }
}

impl<T> Drop for ZeroedSlice<T> {
    fn drop(&mut self) {
        // SAFETY: every element is dropped once, then the block is freed
        // with the layout it was allocated with.
        unsafe {
            std::ptr::drop_in_place(std::ptr::slice_from_raw_parts_mut(self.data.as_ptr(), self.len));
            std::alloc::dealloc(self.base.as_ptr(), self.layout);
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AllocatorConfig {
    /// Super blocks reserved up front (`N_S`).
    pub num_super_blocks: u32,
    /// Upper bound for growth.
    pub max_super_blocks: u32,
    /// Memory blocks per super block (`N_M`).
    pub blocks_per_super: u32,
    /// Consecutive full resident picks tolerated before growing.
    pub rehash_threshold: u32,
}

impl AllocatorConfig {
    pub const DEFAULT_REHASH_THRESHOLD: u32 = 32;

    /// `num_super_blocks` up front, growable to the addressable maximum.
    pub fn new(num_super_blocks: u32, blocks_per_super: u32) -> Self {
        AllocatorConfig {
            num_super_blocks,
            max_super_blocks: MAX_SUPER_BLOCKS,
            blocks_per_super,
            rehash_threshold: Self::DEFAULT_REHASH_THRESHOLD,
        }
    }

    /// Like [`new`](Self::new) but without growth.
    pub fn fixed(num_super_blocks: u32, blocks_per_super: u32) -> Self {
        AllocatorConfig {
            max_super_blocks: num_super_blocks,
            ..Self::new(num_super_blocks, blocks_per_super)
        }
    }

    /// 32 super blocks of 256 blocks: 8M slabs, 1 GiB.
    pub fn benchmark() -> Self {
        Self::fixed(32, 256)
    }

    pub fn validate(&self) -> Result<(), AllocError> {
        let bad = |msg: String| Err(AllocError::InvalidConfig(msg));
        if self.num_super_blocks == 0 || self.num_super_blocks > MAX_SUPER_BLOCKS {
            return bad(format!("num_super_blocks must be in 1..={MAX_SUPER_BLOCKS}, got {}", self.num_super_blocks));
        }
        if self.max_super_blocks < self.num_super_blocks || self.max_super_blocks > MAX_SUPER_BLOCKS {
            return bad(format!(
                "max_super_blocks must be in {}..={MAX_SUPER_BLOCKS}, got {}",
                self.num_super_blocks, self.max_super_blocks
            ));
        }
        if self.blocks_per_super == 0 || self.blocks_per_super > MAX_BLOCKS_PER_SUPER {
            return bad(format!(
                "blocks_per_super must be in 1..={MAX_BLOCKS_PER_SUPER}, got {}",
                self.blocks_per_super
            ));
        }
        if self.rehash_threshold == 0 {
            return bad("rehash_threshold must be positive".into());
        }
        Ok(())
    }

    pub fn slabs_per_super(&self) -> u64 {
        self.blocks_per_super as u64 * UNITS_PER_BLOCK as u64
    }

    /// Slabs available without growth.
    pub fn capacity_slabs(&self) -> u64 {
        self.num_super_blocks as u64 * self.slabs_per_super()
    }

    pub fn capacity_bytes(&self) -> u64 {
        self.capacity_slabs() * UNIT_BYTES as u64
    }
}

impl Default for AllocatorConfig {
    fn default() -> Self {
        Self::new(1, 256)
    }
}

struct SuperBlock {
    slabs: ZeroedSlice<Slab>,
    /// `blocks_per_super * 32` words; block `b` owns `[32b, 32b+32)`.
    bitmaps: ZeroedSlice<AtomicU32>,
}

impl SuperBlock {
    fn reserve(blocks: u32) -> Result<Self, AllocError> {
        let units = blocks as usize * UNITS_PER_BLOCK as usize;
        let slabs = ZeroedSlice::<Slab>::new(units).ok_or(AllocError::Reservation { bytes: units * SLAB_BYTES })?;
        let bitmaps = ZeroedSlice::<AtomicU32>::new(blocks as usize * BITMAP_WORDS)
            .ok_or(AllocError::Reservation { bytes: blocks as usize * 128 })?;
        Ok(SuperBlock { slabs, bitmaps })
    }

    #[inline]
    fn block_bitmap(&self, block: u32) -> &[AtomicU32] {
        let start = block as usize * BITMAP_WORDS;
        &self.bitmaps[start..start + BITMAP_WORDS]
    }
}

/// Per-warp allocation counters.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct AllocCounters {
    pub allocations: u64,
    pub cas_successes: u64,
    pub cas_failures: u64,
    pub resident_changes: u64,
}

#[derive(Default)]
struct SharedCounters {
    allocations: AtomicU64,
    deallocations: AtomicU64,
    double_frees: AtomicU64,
    cas_failures: AtomicU64,
    resident_changes: AtomicU64,
    growths: AtomicU64,
}

pub struct SlabAlloc {
    config: AllocatorConfig,
    supers: Box<[OnceLock<SuperBlock>]>,
    active_supers: AtomicU32,
    counters: SharedCounters,
}

impl SlabAlloc {
    pub fn new(config: AllocatorConfig) -> Result<Self, AllocError> {
        config.validate()?;
        let supers: Box<[OnceLock<SuperBlock>]> = (0..config.max_super_blocks).map(|_| OnceLock::new()).collect();
        for slot in supers.iter().take(config.num_super_blocks as usize) {
            let sb = SuperBlock::reserve(config.blocks_per_super)?;
            let _ = slot.set(sb);
        }
        Ok(SlabAlloc {
            config,
            supers,
            active_supers: AtomicU32::new(config.num_super_blocks),
            counters: SharedCounters::default(),
        })
    }

    pub fn config(&self) -> &AllocatorConfig {
        &self.config
    }

    pub fn active_super_blocks(&self) -> u32 {
        self.active_supers.load(Ordering::Acquire)
    }

    /// Slabs addressable right now (grows with super blocks).
    pub fn capacity_slabs(&self) -> u64 {
        self.active_super_blocks() as u64 * self.config.slabs_per_super()
    }

    fn super_block(&self, index: u32) -> &SuperBlock {
        self.supers[index as usize].get_or_init(|| {
            SuperBlock::reserve(self.config.blocks_per_super)
                .unwrap_or_else(|_| std::alloc::handle_alloc_error(Layout::new::<Slab>()))
        })
    }

    /// Packs an address after checking it against this allocator's ranges.
    pub fn pack_address(&self, unit: u32, block: u32, super_block: u32) -> Result<SlabAddress, AllocError> {
        if unit >= UNITS_PER_BLOCK || block >= self.config.blocks_per_super || super_block >= self.config.max_super_blocks {
            return Err(AllocError::AddressOutOfRange { unit, block, super_block });
        }
        SlabAddress::pack(unit, block, super_block)
    }

    fn check(&self, addr: SlabAddress) -> Result<&SuperBlock, AllocError> {
        if addr.block() >= self.config.blocks_per_super || addr.super_block() >= self.active_super_blocks() {
            return Err(AllocError::Unmapped(addr));
        }
        Ok(self.super_block(addr.super_block()))
    }

    /// The slab behind a live address.
    #[inline]
    pub fn resolve(&self, addr: SlabAddress) -> Result<&Slab, AllocError> {
        let sb = self.check(addr)?;
        Ok(&sb.slabs[addr.block() as usize * UNITS_PER_BLOCK as usize + addr.unit() as usize])
    }

    pub fn resolve_raw(&self, raw: u32) -> Result<&Slab, AllocError> {
        self.resolve(SlabAddress::from_raw(raw)?)
    }

    /// Whether the address's bitmap bit is set.
    pub fn is_live(&self, addr: SlabAddress) -> Result<bool, AllocError> {
        let sb = self.check(addr)?;
        let word = sb.block_bitmap(addr.block())[(addr.unit() / 32) as usize].load(Ordering::Acquire);
        Ok(word >> (addr.unit() % 32) & 1 == 1)
    }

    /// The resident block a warp picks on its `count`-th resident change.
    pub fn resident_for(&self, warp_id: u32, count: u32) -> Resident {
        let (h1, h2) = resident_hashes(warp_id, count);
        Resident {
            super_block: h1 % self.active_super_blocks(),
            block: h2 % self.config.blocks_per_super,
        }
    }

    /// Moves the warp to a new resident block and reloads its bitmap cache.
    pub fn rehash_resident(&self, ctx: &mut WarpContext) {
        let resident = self.resident_for(ctx.warp_id(), ctx.resident_change_count);
        self.set_resident(ctx, resident);
    }

    fn set_resident(&self, ctx: &mut WarpContext, resident: Resident) {
        ctx.resident_change_count = ctx.resident_change_count.wrapping_add(1);
        ctx.resident = Some(resident);
        self.refresh_cache(ctx);
        ctx.counters.resident_changes += 1;
        self.counters.resident_changes.fetch_add(1, Ordering::Relaxed);
    }

    /// One pass over the resident bitmap: lane `i` loads word `i`.
    fn refresh_cache(&self, ctx: &mut WarpContext) {
        let Some(r) = ctx.resident else { return };
        let bitmap = self.super_block(r.super_block).block_bitmap(r.block);
        for (lane, word) in bitmap.iter().enumerate() {
            ctx.bitmap_cache[lane] = word.load(Ordering::Acquire);
        }
    }

    /// Allocates one slab for the warp. The returned unit's bit went 0 -> 1
    /// through exactly one successful compare-and-swap.
    pub fn warp_allocate(&self, ctx: &mut WarpContext) -> Result<SlabAddress, AllocError> {
        if ctx.resident.is_none() {
            self.rehash_resident(ctx);
        }
        let mut full_picks = 0u32;
        let mut cas_failures = 0u32;
        loop {
            let resident = ctx.resident.expect("resident assigned above");
            let free_lanes = ballot_by(|lane| ctx.bitmap_cache[lane] != u32::MAX);
            let Some(lane) = next_prior(free_lanes).filter(|_| cas_failures < MAX_CAS_FAILURES) else {
                full_picks += 1;
                cas_failures = 0;
                if full_picks > self.config.rehash_threshold {
                    full_picks = 0;
                    if let Some(fresh) = self.grow(ctx.warp_id(), ctx.resident_change_count) {
                        self.set_resident(ctx, fresh);
                    } else if !self.sweep(ctx) {
                        return Err(AllocError::OutOfMemory);
                    }
                } else {
                    self.rehash_resident(ctx);
                }
                continue;
            };
            let lane = lane.index();
            let seen = ctx.bitmap_cache[lane];
            let bit = (!seen).trailing_zeros();
            let word = &self.super_block(resident.super_block).block_bitmap(resident.block)[lane];
            match word.compare_exchange(seen, seen | 1 << bit, Ordering::AcqRel, Ordering::Acquire) {
                Ok(_) => {
                    ctx.bitmap_cache[lane] = seen | 1 << bit;
                    ctx.counters.cas_successes += 1;
                    ctx.counters.allocations += 1;
                    self.counters.allocations.fetch_add(1, Ordering::Relaxed);
                    let unit = lane as u32 * 32 + bit;
                    return SlabAddress::pack(unit, resident.block, resident.super_block);
                }
                Err(actual) => {
                    ctx.bitmap_cache[lane] = actual;
                    cas_failures += 1;
                    ctx.counters.cas_failures += 1;
                    self.counters.cas_failures.fetch_add(1, Ordering::Relaxed);
                }
            }
        }
    }

    /// Appends a super block if allowed and returns a resident block in it.
    /// Concurrent growers that lose the race reuse the winner's super block.
    fn grow(&self, warp_id: u32, count: u32) -> Option<Resident> {
        let current = self.active_super_blocks();
        if current >= self.config.max_super_blocks {
            return None;
        }
        let newest = match self.active_supers.compare_exchange(current, current + 1, Ordering::AcqRel, Ordering::Acquire) {
            Ok(_) => {
                self.counters.growths.fetch_add(1, Ordering::Relaxed);
                current
            }
            Err(now) => now - 1,
        };
        self.super_block(newest);
        let (_, h2) = resident_hashes(warp_id, count);
        Some(Resident {
            super_block: newest,
            block: h2 % self.config.blocks_per_super,
        })
    }

    /// Last resort before out-of-memory: first block with any clear bit.
    fn sweep(&self, ctx: &mut WarpContext) -> bool {
        for s in 0..self.active_super_blocks() {
            let sb = self.super_block(s);
            for b in 0..self.config.blocks_per_super {
                if sb.block_bitmap(b).iter().any(|w| w.load(Ordering::Acquire) != u32::MAX) {
                    self.set_resident(ctx, Resident { super_block: s, block: b });
                    return true;
                }
            }
        }
        false
    }

    /// Atomically clears the address's bit. A clear bit reports
    /// [`AllocError::DoubleFree`] and leaves the bitmap untouched.
    pub fn deallocate(&self, addr: SlabAddress) -> Result<(), AllocError> {
        let sb = self.check(addr)?;
        let mask = 1u32 << (addr.unit() % 32);
        let prev = sb.block_bitmap(addr.block())[(addr.unit() / 32) as usize].fetch_and(!mask, Ordering::AcqRel);
        if prev & mask == 0 {
            self.counters.double_frees.fetch_add(1, Ordering::Relaxed);
            return Err(AllocError::DoubleFree(addr));
        }
        self.counters.deallocations.fetch_add(1, Ordering::Relaxed);
        Ok(())
    }

    /// Live units per active super block.
    pub fn popcounts(&self) -> Vec<u64> {
        (0..self.active_super_blocks())
            .map(|s| {
                self.super_block(s)
                    .bitmaps
                    .iter()
                    .map(|w| w.load(Ordering::Acquire).count_ones() as u64)
                    .sum()
            })
            .collect()
    }

    pub fn live_units(&self) -> u64 {
        self.popcounts().iter().sum()
    }

    /// Popcount of one block's bitmap.
    pub fn block_popcount(&self, super_block: u32, block: u32) -> u32 {
        self.super_block(super_block)
            .block_bitmap(block)
            .iter()
            .map(|w| w.load(Ordering::Acquire).count_ones())
            .sum()
    }

    /// Snapshot of a block's 32 bitmap words.
    pub fn block_bitmap(&self, super_block: u32, block: u32) -> [u32; WARP_SIZE] {
        let words = self.super_block(super_block).block_bitmap(block);
        std::array::from_fn(|i| words[i].load(Ordering::Acquire))
    }

    pub fn stats(&self) -> AllocatorStats {
        let c = &self.counters;
        AllocatorStats {
            super_popcounts: self.popcounts(),
            capacity_slabs: self.capacity_slabs(),
            allocations: c.allocations.load(Ordering::Relaxed),
            deallocations: c.deallocations.load(Ordering::Relaxed),
            double_frees: c.double_frees.load(Ordering::Relaxed),
            cas_failures: c.cas_failures.load(Ordering::Relaxed),
            resident_changes: c.resident_changes.load(Ordering::Relaxed),
            growths: c.growths.load(Ordering::Relaxed),
        }
    }
}

impl fmt::Debug for SlabAlloc {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("SlabAlloc")
            .field("config", &self.config)
            .field("active_super_blocks", &self.active_super_blocks())
            .finish()
    }
}

fn fmix32(mut h: u32) -> u32 {
    h ^= h >> 16;
    h = h.wrapping_mul(0x85EB_CA6B);
    h ^= h >> 13;
    h = h.wrapping_mul(0xC2B2_AE35);
    h ^ (h >> 16)
}

/// The two resident-block hashes (super block, memory block).
pub fn resident_hashes(warp_id: u32, count: u32) -> (u32, u32) {
    let h1 = fmix32(warp_id.wrapping_mul(0x9E37_79B1) ^ count.wrapping_mul(0x7FEB_352D));
    let h2 = fmix32(warp_id.wrapping_mul(0x846C_A68B) ^ count.wrapping_mul(0x2C1B_3C6D).wrapping_add(0x1656_67B1));
    (h1, h2)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AllocatorStats {
    pub super_popcounts: Vec<u64>,
    pub capacity_slabs: u64,
    pub allocations: u64,
    pub deallocations: u64,
    pub double_frees: u64,
    pub cas_failures: u64,
    pub resident_changes: u64,
    pub growths: u64,
}

impl AllocatorStats {
    pub fn live_units(&self) -> u64 {
        self.super_popcounts.iter().sum()
    }

    /// One row per super block, then the counter totals.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("super_block,live_units\n");
        for (i, n) in self.super_popcounts.iter().enumerate() {
            let _ = writeln!(out, "{i},{n}");
        }
        out.push_str("counter,value\n");
        for (name, v) in self.counter_rows() {
            let _ = writeln!(out, "{name},{v}");
        }
        out
    }

    fn counter_rows(&self) -> [(&'static str, u64); 8] {
        [
            ("capacity_slabs", self.capacity_slabs),
            ("live_units", self.live_units()),
            ("allocations", self.allocations),
            ("deallocations", self.deallocations),
            ("double_frees", self.double_frees),
            ("cas_retries", self.cas_failures),
            ("resident_changes", self.resident_changes),
            ("super_block_growths", self.growths),
        ]
    }
}

impl fmt::Display for AllocatorStats {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, n) in self.super_popcounts.iter().enumerate() {
            writeln!(f, "super block {i:>3}: {n} live units")?;
        }
        for (name, v) in self.counter_rows() {
            writeln!(f, "{name}: {v}")?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::HashSet;

    fn small(ns: u32, nm: u32) -> SlabAlloc {
        SlabAlloc::new(AllocatorConfig::fixed(ns, nm)).unwrap()
    }

    #[test]
    fn capacity_arithmetic() {
        let cfg = AllocatorConfig::benchmark();
        assert_eq!(cfg.capacity_slabs(), 8_388_608);
        assert_eq!(cfg.capacity_bytes(), 32 * 256 * 1024 * 128);
        assert_eq!(cfg.capacity_bytes(), 1 << 30);
        assert_eq!(AllocatorConfig::fixed(1, 1).capacity_slabs(), 1024);
    }

    #[test]
    fn benchmark_config_reserves_lazily() {
        let alloc = SlabAlloc::new(AllocatorConfig::benchmark()).unwrap();
        assert_eq!(alloc.capacity_slabs(), 8_388_608);
        assert_eq!(alloc.live_units(), 0);
    }

    #[test]
    fn rejects_reserved_super_index() {
        assert!(matches!(
            SlabAlloc::new(AllocatorConfig::fixed(256, 1)),
            Err(AllocError::InvalidConfig(_))
        ));
        assert!(SlabAlloc::new(AllocatorConfig::fixed(0, 1)).is_err());
        assert!(SlabAlloc::new(AllocatorConfig::fixed(1, 0)).is_err());
        assert!(SlabAlloc::new(AllocatorConfig::fixed(1, (1 << 14) + 1)).is_err());
    }

    #[test]
    fn first_allocation_lands_in_resident_block() {
        let alloc = small(2, 8);
        let mut ctx = WarpContext::new(3);
        let addr = alloc.warp_allocate(&mut ctx).unwrap();
        let r = ctx.resident().unwrap();
        assert_eq!((addr.super_block(), addr.block()), (r.super_block, r.block));
        // least indexed free unit of an empty block
        assert_eq!(addr.unit(), 0);
        assert_eq!(alloc.block_popcount(r.super_block, r.block), 1);
        assert_eq!(alloc.live_units(), 1);
    }

    #[test]
    fn block_exhausts_at_1024() {
        let alloc = small(1, 4);
        let mut ctx = WarpContext::new(0);
        let first = alloc.warp_allocate(&mut ctx).unwrap();
        let mut units = HashSet::from([first.unit()]);
        for _ in 1..1024 {
            let a = alloc.warp_allocate(&mut ctx).unwrap();
            assert_eq!(a.block(), first.block());
            units.insert(a.unit());
        }
        assert_eq!(units.len(), 1024);
        assert_eq!(ctx.resident_change_count(), 1);
        let next = alloc.warp_allocate(&mut ctx).unwrap();
        assert!(ctx.resident_change_count() >= 2);
        assert_ne!(next.block(), first.block());
    }

    #[test]
    fn single_cas_fast_path() {
        let alloc = small(1, 4);
        let mut ctx = WarpContext::new(0);
        for i in 1..=100u64 {
            alloc.warp_allocate(&mut ctx).unwrap();
            assert_eq!(ctx.counters().cas_successes, i);
            assert_eq!(ctx.counters().cas_failures, 0);
        }
    }

    #[test]
    fn full_allocator_reports_oom() {
        let alloc = small(1, 1);
        let mut ctx = WarpContext::new(9);
        for _ in 0..1024 {
            alloc.warp_allocate(&mut ctx).unwrap();
        }
        assert_eq!(alloc.warp_allocate(&mut ctx), Err(AllocError::OutOfMemory));
        assert_eq!(alloc.live_units(), 1024);
    }

    #[test]
    fn growth_adds_super_blocks() {
        let mut cfg = AllocatorConfig::new(1, 1);
        cfg.max_super_blocks = 3;
        cfg.rehash_threshold = 2;
        let alloc = SlabAlloc::new(cfg).unwrap();
        let mut ctx = WarpContext::new(0);
        let mut seen = HashSet::new();
        for _ in 0..3 * 1024 {
            assert!(seen.insert(alloc.warp_allocate(&mut ctx).unwrap()));
        }
        assert_eq!(alloc.active_super_blocks(), 3);
        assert_eq!(alloc.warp_allocate(&mut ctx), Err(AllocError::OutOfMemory));
    }

    #[test]
    fn resident_hash_is_deterministic() {
        let alloc = small(4, 256);
        let picks: Vec<_> = (0..3).map(|c| alloc.resident_for(7, c)).collect();
        let again: Vec<_> = (0..3).map(|c| alloc.resident_for(7, c)).collect();
        assert_eq!(picks, again);
        for (c, r) in picks.iter().enumerate() {
            let (h1, h2) = resident_hashes(7, c as u32);
            assert_eq!(r.super_block, h1 % 4);
            assert_eq!(r.block, h2 % 256);
        }
        assert!(picks[0] != picks[1] || picks[1] != picks[2]);
    }

    #[test]
    fn cache_refresh_places_bits_per_lane() {
        let alloc = small(1, 1);
        let mut ctx = WarpContext::new(0);
        // units 0..34 allocated, then free all but {0, 33}
        let addrs: Vec<_> = (0..34).map(|_| alloc.warp_allocate(&mut ctx).unwrap()).collect();
        for a in &addrs {
            if a.unit() != 0 && a.unit() != 33 {
                alloc.deallocate(*a).unwrap();
            }
        }
        alloc.rehash_resident(&mut ctx);
        let oracle = |unit: u32, lane: usize| if unit as usize / 32 == lane { 1u32 << (unit % 32) } else { 0 };
        assert_eq!(ctx.bitmap_cache()[0], oracle(0, 0) | oracle(33, 0));
        assert_eq!(ctx.bitmap_cache()[0], 0x1);
        assert_eq!(ctx.bitmap_cache()[1], 0x2);
        assert!(ctx.bitmap_cache()[2..].iter().all(|&w| w == 0));
    }

    #[test]
    fn deallocate_round_trip_and_double_free() {
        let alloc = small(1, 2);
        let mut ctx = WarpContext::new(0);
        let a = alloc.warp_allocate(&mut ctx).unwrap();
        alloc.deallocate(a).unwrap();
        assert_eq!(alloc.live_units(), 0);
        assert_eq!(alloc.deallocate(a), Err(AllocError::DoubleFree(a)));
        assert_eq!(alloc.live_units(), 0);
        assert_eq!(alloc.stats().double_frees, 1);
    }

    #[test]
    fn freed_unit_is_reusable() {
        let alloc = small(1, 1);
        let mut ctx = WarpContext::new(0);
        let all: Vec<_> = (0..1024).map(|_| alloc.warp_allocate(&mut ctx).unwrap()).collect();
        alloc.deallocate(all[1]).unwrap();
        assert!(!alloc.is_live(all[1]).unwrap());
        let again = alloc.warp_allocate(&mut ctx).unwrap();
        assert_eq!(again, all[1]);
    }

    #[test]
    fn resolve_offsets() {
        let alloc = small(3, 4);
        let base = alloc.resolve(SlabAddress::pack(0, 0, 0).unwrap()).unwrap() as *const Slab as usize;
        let origin2 = alloc.resolve(SlabAddress::pack(0, 0, 2).unwrap()).unwrap() as *const Slab as usize;
        let addr = SlabAddress::pack(5, 3, 2).unwrap();
        let p = alloc.resolve(addr).unwrap() as *const Slab as usize;
        assert_eq!(p - origin2, (3 * 1024 + 5) * 128);
        assert_eq!(p - origin2, addr.byte_offset());
        assert_eq!(base % 128, 0);
        assert_eq!(alloc.resolve_raw(0xFFFF_FFFF).unwrap_err(), AllocError::Sentinel(0xFFFF_FFFF));
        assert!(matches!(
            alloc.resolve(SlabAddress::pack(0, 4, 0).unwrap()),
            Err(AllocError::Unmapped(_))
        ));
        assert!(alloc.pack_address(0, 4, 0).is_err());
    }

    #[test]
    fn stats_dump() {
        let alloc = small(2, 2);
        let mut ctx = WarpContext::new(0);
        alloc.warp_allocate(&mut ctx).unwrap();
        let csv = alloc.stats().to_csv();
        assert!(csv.starts_with("super_block,live_units\n"));
        assert!(csv.contains("allocations,1\n"));
        assert!(alloc.stats().to_string().contains("live_units: 1"));
    }
}
