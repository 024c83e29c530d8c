//! Expected chain lengths under random bucket occupancy.
//!
//! With `n` keys hashed uniformly into `B` buckets, a bucket's load is
//! `N ~ Binomial(n, 1/B)` and its chain holds `max(1, ceil(N/M))` slabs.

use statrs::distribution::{Binomial, DiscreteCDF};

use crate::list::SlabLayout;
use crate::table::{max_utilization, OVERHEAD_BYTES};

/// Tail terms below this are dropped.
const TAIL_EPS: f64 = 1e-16;

/// `E[max(1, ceil(N/M))] = 1 + sum_{j>=1} P(N > j*M)`.
pub fn expected_slabs_per_bucket(n: u64, buckets: u32, m: u32) -> f64 {
    if n == 0 || buckets == 0 {
        return 1.0;
    }
    if buckets == 1 {
        return (n.div_ceil(m as u64)).max(1) as f64;
    }
    let dist = Binomial::new(1.0 / buckets as f64, n).expect("valid binomial parameters");
    let mean = n as f64 / buckets as f64;
    let mut total = 1.0;
    let mut j = 1u64;
    while j * (m as u64) < n {
        let tail = dist.sf(j * m as u64);
        total += tail;
        if tail < TAIL_EPS && (j * m as u64) as f64 > mean {
            break;
        }
        j += 1;
    }
    total
}

/// Predicted utilization for `n` keys in `buckets` buckets.
pub fn expected_utilization(n: u64, buckets: u32, layout: SlabLayout) -> f64 {
    let m = layout.elements_per_slab() as f64;
    let x = layout.element_bytes() as f64;
    let slabs = buckets as f64 * expected_slabs_per_bucket(n, buckets, layout.elements_per_slab());
    x * n as f64 / ((m * x + OVERHEAD_BYTES as f64) * slabs)
}

/// Bucket count whose predicted utilization is closest to `target`.
///
/// Utilization is not monotone in `B` (it wiggles where the mean load
/// crosses a multiple of `M`), so candidates are scanned on a geometric
/// grid and the best one is refined over neighbouring integers.
///
/// Returns `None` when the target is not in `(0, max_utilization]` or no
/// bucket count comes within `0.05` of it (tiny `n`).
pub fn buckets_for_utilization(n: u64, target: f64, layout: SlabLayout) -> Option<u32> {
    if n == 0 || !(target > 0.0 && target <= max_utilization(layout)) {
        return None;
    }
    // E[k] >= 1 bounds the useful range from above.
    let m = layout.elements_per_slab() as f64;
    let x = layout.element_bytes() as f64;
    let ceiling = (x * n as f64 / ((m * x + OVERHEAD_BYTES as f64) * target)).ceil().clamp(1.0, u32::MAX as f64) as u32;
    let err = |b: u32| (expected_utilization(n, b, layout) - target).abs();

    let mut grid = Vec::new();
    let mut b = 1.0f64;
    while (b as u32) < ceiling {
        grid.push(b as u32);
        b = (b * GRID_RATIO).max(b + 1.0);
    }
    grid.push(ceiling);
    grid.dedup();
    let best_grid = grid.iter().copied().min_by(|&a, &b| err(a).total_cmp(&err(b)))?;

    let radius = ((best_grid as f64 * (GRID_RATIO - 1.0)).ceil() as u32).min(MAX_REFINE);
    let lo = best_grid.saturating_sub(radius).max(1);
    let hi = best_grid.saturating_add(radius).min(ceiling);
    let best = (lo..=hi).min_by(|&a, &b| err(a).total_cmp(&err(b)))?;
    (err(best) < 0.05).then_some(best)
}

const GRID_RATIO: f64 = 1.01;
const MAX_REFINE: u32 = 512;
