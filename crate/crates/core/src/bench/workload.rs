//! Seeded operation streams for the mixed-operation benchmarks.

use std::fmt;
use std::str::FromStr;

use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::list::Op;

/// Keys handed out as fresh inserts live in `[1, FRESH_LIMIT)`.
pub const FRESH_LIMIT: u32 = 1 << 31;
/// Keys used for absent searches come from `[ABSENT_BASE, ABSENT_LIMIT)`,
/// disjoint from every fresh key.
pub const ABSENT_BASE: u32 = 1 << 31;
pub const ABSENT_LIMIT: u32 = 0xFFFF_FFFE;

const TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum WorkloadError {
    #[error("invalid distribution: {0}")]
    InvalidDistribution(String),
    #[error("workload needs {needed} live keys for deletes and searches but only {live} exist")]
    NotEnoughLiveKeys { needed: usize, live: usize },
    #[error("fresh key space exhausted")]
    KeySpaceExhausted,
}

/// Γ = (a, b, c, d): fractions of inserts, deletes of live keys, searches
/// for live keys and searches for absent keys.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OperationDistribution {
    pub insert: f64,
    pub delete: f64,
    pub search_existing: f64,
    pub search_absent: f64,
}

impl OperationDistribution {
    /// All updates.
    pub const GAMMA0: Self = Self::raw(0.5, 0.5, 0.0, 0.0);
    pub const GAMMA1: Self = Self::raw(0.2, 0.2, 0.3, 0.3);
    /// Mostly searches.
    pub const GAMMA2: Self = Self::raw(0.1, 0.1, 0.4, 0.4);

    const fn raw(a: f64, b: f64, c: f64, d: f64) -> Self {
        OperationDistribution { insert: a, delete: b, search_existing: c, search_absent: d }
    }

    pub fn new(a: f64, b: f64, c: f64, d: f64) -> Result<Self, WorkloadError> {
        let dist = Self::raw(a, b, c, d);
        let parts = dist.fractions();
        if parts.iter().any(|p| !p.is_finite() || *p < 0.0) {
            return Err(WorkloadError::InvalidDistribution(format!("negative or non-finite fraction in {dist}")));
        }
        let sum: f64 = parts.iter().sum();
        if (sum - 1.0).abs() > TOLERANCE {
            return Err(WorkloadError::InvalidDistribution(format!("fractions sum to {sum}, not 1")));
        }
        Ok(dist)
    }

    pub fn fractions(&self) -> [f64; 4] {
        [self.insert, self.delete, self.search_existing, self.search_absent]
    }

    /// Per-kind counts for `count` ops using largest-remainder rounding.
    pub fn counts(&self, count: usize) -> [usize; 4] {
        let exact = self.fractions().map(|f| f * count as f64);
        let mut counts = exact.map(|e| e.floor() as usize);
        let assigned: usize = counts.iter().sum();
        let mut order = [0usize, 1, 2, 3];
        // Stable sort keeps ties in a-b-c-d order.
        order.sort_by(|&i, &j| (exact[j] - exact[j].floor()).total_cmp(&(exact[i] - exact[i].floor())));
        for &i in order.iter().take(count.saturating_sub(assigned)) {
            counts[i] += 1;
        }
        counts
    }
}

impl fmt::Display for OperationDistribution {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{},{},{},{}", self.insert, self.delete, self.search_existing, self.search_absent)
    }
}

impl FromStr for OperationDistribution {
    type Err = WorkloadError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let parts: Vec<f64> = s
            .split(',')
            .map(|p| p.trim().parse::<f64>())
            .collect::<Result<_, _>>()
            .map_err(|e| WorkloadError::InvalidDistribution(format!("{s:?}: {e}")))?;
        match parts[..] {
            [a, b, c, d] => Self::new(a, b, c, d),
            _ => Err(WorkloadError::InvalidDistribution(format!("{s:?}: expected four comma-separated fractions"))),
        }
    }
}

const MASK31: u32 = FRESH_LIMIT - 1;

/// Bijection on 31-bit integers (xorshifts and odd multiplies), so a
/// counter maps to distinct keys without the regular spacing that a linear
/// hash would turn into suspiciously even buckets.
fn scramble31(mut x: u32) -> u32 {
    x &= MASK31;
    x ^= x >> 16;
    x = x.wrapping_mul(0x7FEB_352D) & MASK31;
    x ^= x >> 15;
    x = x.wrapping_mul(0x46F2_A2E5) & MASK31;
    x ^= x >> 16;
    x
}

/// Live key set plus a never-repeating source of fresh keys.
///
/// Keys inserted by a workload only become live after [`KeyState::commit`],
/// mirroring batches that are applied as a whole.
#[derive(Debug, Clone)]
pub struct KeyState {
    live: Vec<u32>,
    pending: Vec<u32>,
    counter: u64,
    offset: u64,
}

impl KeyState {
    pub fn new(seed: u64) -> Self {
        let offset = ChaCha8Rng::seed_from_u64(seed ^ 0x6b65_7973).random::<u32>() as u64;
        KeyState { live: Vec::new(), pending: Vec::new(), counter: 0, offset }
    }

    pub fn live(&self) -> &[u32] {
        &self.live
    }

    pub fn pending(&self) -> &[u32] {
        &self.pending
    }

    /// Next key never handed out before, in `[1, FRESH_LIMIT)`.
    pub fn fresh_key(&mut self) -> Result<u32, WorkloadError> {
        loop {
            if self.counter >= FRESH_LIMIT as u64 {
                return Err(WorkloadError::KeySpaceExhausted);
            }
            let k = scramble31((self.counter + self.offset) as u32);
            self.counter += 1;
            if k != 0 {
                return Ok(k);
            }
        }
    }

    /// `count` fresh keys that are live immediately.
    pub fn preload(&mut self, count: usize) -> Result<Vec<u32>, WorkloadError> {
        let keys = (0..count).map(|_| self.fresh_key()).collect::<Result<Vec<_>, _>>()?;
        self.live.extend_from_slice(&keys);
        Ok(keys)
    }

    /// Makes pending inserts live.
    pub fn commit(&mut self) {
        self.live.append(&mut self.pending);
    }
}

/// Value stored alongside a benchmark key.
pub fn value_for(key: u32) -> u32 {
    !key
}

/// Exactly `counts(count)` ops of each kind in seeded random order.
///
/// Deletes draw distinct live keys (so every delete finds its key) and
/// remove them from the live set; existing searches draw from what remains.
/// Inserts use fresh keys that stay pending until `commit`.
pub fn gen_workload(
    seed: u64,
    dist: &OperationDistribution,
    count: usize,
    keys: &mut KeyState,
) -> Result<Vec<Op>, WorkloadError> {
    let [inserts, deletes, existing, absent] = dist.counts(count);
    let needs_live = deletes > 0 || existing > 0;
    if needs_live && (keys.live.is_empty() || deletes > keys.live.len() || (existing > 0 && deletes == keys.live.len())) {
        return Err(WorkloadError::NotEnoughLiveKeys { needed: deletes + existing.min(1), live: keys.live.len() });
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut ops = Vec::with_capacity(count);
    for _ in 0..inserts {
        let k = keys.fresh_key()?;
        keys.pending.push(k);
        ops.push(Op::insert(k, value_for(k)));
    }
    for _ in 0..deletes {
        let i = rng.random_range(0..keys.live.len());
        ops.push(Op::delete(keys.live.swap_remove(i)));
    }
    for _ in 0..existing {
        let k = *keys.live.choose(&mut rng).expect("checked non-empty");
        ops.push(Op::search(k));
    }
    for _ in 0..absent {
        ops.push(Op::search(rng.random_range(ABSENT_BASE..ABSENT_LIMIT)));
    }
    ops.shuffle(&mut rng);
    Ok(ops)
}
