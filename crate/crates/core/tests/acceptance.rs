//! Acceptance suite. Runs every criterion in sequence (timing-sensitive
//! criteria must not share the CPU with other tests) and prints one
//! PASS/FAIL line each. Exits non-zero if any criterion fails.

use std::collections::{BTreeMap, HashSet};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::sync::atomic::{AtomicU32, Ordering};
use std::sync::Arc;
use std::time::{Duration, Instant};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use slabhash::bench::bulk::bulk_trial;
use slabhash::bench::concurrent::{run_concurrent_trial, ConcurrentParams};
use slabhash::bench::incremental::{run_incremental, IncrementalParams};
use slabhash::bench::model::{buckets_for_utilization, expected_slabs_per_bucket, expected_utilization};
use slabhash::bench::OperationDistribution;
use slabhash::oracle::{find_linearization, random_trace, run_interleaved, OracleMap};
use slabhash::table::max_utilization;
use slabhash::{
    compare_trace, AllocError, AllocatorConfig, Op, OpOutcome, SlabAddress, SlabAlloc, SlabHashTable, SlabLayout, SlabList,
    TraceConfig, WarpContext,
};

type Verdict = Result<String, String>;

fn check(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn oracle_equivalence() -> Verdict {
    let start = Instant::now();
    let mut total = 0;
    for layout in [SlabLayout::KeyValue, SlabLayout::KeyOnly] {
        for (i, buckets) in [1u32, 16, 1024].into_iter().enumerate() {
            let universe = match buckets {
                1 => 256,
                16 => 2048,
                _ => 50_000,
            };
            let ops = random_trace(1000 + i as u64, 100_000, universe);
            let mut cfg = TraceConfig::new(buckets, layout);
            cfg.seed = 42 + i as u64;
            cfg.flush_every = Some(2048);
            let report = compare_trace(&ops, &cfg).map_err(|e| e.to_string())?;
            if let Some(d) = report.divergence {
                return Err(format!("{layout:?} B={buckets}:\n{d}"));
            }
            total += report.ops_checked;
        }
    }
    let elapsed = start.elapsed();
    check(elapsed < Duration::from_secs(60), || format!("took {elapsed:?}"))?;
    Ok(format!("{total} ops, 0 divergences, {elapsed:.2?}"))
}

fn bounded_linearizability() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let scenarios = 300;
    for s in 0..scenarios {
        let layout = if s % 4 == 3 { SlabLayout::KeyOnly } else { SlabLayout::KeyValue };
        let buckets = [1u32, 1, 2][s % 3];
        let table = SlabHashTable::with_allocator(buckets, layout, s as u64, AllocatorConfig::new(1, 4)).map_err(|e| e.to_string())?;
        // Prefill near a slab boundary so concurrent appends race to link.
        let prefill: Vec<Op> = (0..rng.random_range(0..=layout.elements_per_slab() + 2))
            .map(|_| Op::insert(rng.random_range(0..8), rng.random_range(0..100)))
            .collect();
        let mut initial = OracleMap::new();
        for chunk in prefill.chunks(32) {
            table.execute_batch(chunk, 1).map_err(|e| e.to_string())?;
        }
        for op in &prefill {
            initial.apply(&op.normalized(layout));
        }

        let warps = rng.random_range(2..=3);
        let active = rng.random_range(warps..=8);
        let mut lists = vec![Vec::new(); warps];
        for i in 0..active {
            let w = if i < warps { i } else { rng.random_range(0..warps) };
            lists[w].push(random_trace(rng.random(), 1, 8)[0]);
        }
        let history = run_interleaved(&table, &lists, rng.random()).map_err(|e| e.to_string())?;
        let fin = table.contents().map_err(|e| e.to_string())?;
        if find_linearization(&initial, &history, Some(&fin)).is_none() {
            return Err(format!("scenario {s}: no linearization for {history:#?}\nfinal {fin:?}"));
        }
    }
    Ok(format!("{scenarios} scenarios linearizable"))
}

fn concurrent_durability() -> Verdict {
    let warps = 8;
    let per_warp = 4096u32;
    let n = warps * per_warp;
    let buckets = buckets_for_utilization(n as u64, 0.6, SlabLayout::KeyValue).ok_or("sizing")?;
    let table = SlabHashTable::with_allocator(buckets, SlabLayout::KeyValue, 3, AllocatorConfig::new(1, 64)).map_err(|e| e.to_string())?;
    // Warp w owns keys congruent to w mod 8: disjoint across warps.
    let mut ops = Vec::with_capacity(n as usize);
    for i in 0..per_warp {
        for w in 0..warps {
            let key = 1 + i * warps + w;
            ops.push(Op::replace(key, key.wrapping_mul(7)));
        }
    }
    let report = table.execute_batch(&ops, warps as usize).map_err(|e| e.to_string())?;
    check(report.failures().next().is_none(), || "a replace failed".into())?;

    let keys: Vec<u32> = (1..=n).collect();
    let found = table.bulk_search(&keys, warps as usize).map_err(|e| e.to_string())?;
    let hits = keys.iter().zip(&found).filter(|(k, v)| **v == Some(k.wrapping_mul(7))).count();
    check(hits == n as usize, || format!("found {hits}/{n}"))?;

    let deletes: Vec<Op> = keys.iter().map(|&k| Op::delete(k)).collect();
    let report = table.execute_batch(&deletes, warps as usize).map_err(|e| e.to_string())?;
    let removed = report.outcomes.iter().filter(|o| **o == OpOutcome::Deleted(1)).count();
    check(removed == n as usize, || format!("deleted {removed}/{n}"))?;
    let found = table.bulk_search(&keys, warps as usize).map_err(|e| e.to_string())?;
    let misses = found.iter().filter(|v| v.is_none()).count();
    check(misses == n as usize, || format!("{misses}/{n} absent after delete"))?;
    check(table.scan_live().map_err(|e| e.to_string())? == 0, || "table not empty".into())?;
    Ok(format!("{n} found, {n} deleted, {n} absent"))
}

fn unit_index(a: SlabAddress, blocks_per_super: u32) -> usize {
    ((a.super_block() * blocks_per_super + a.block()) * 1024 + a.unit()) as usize
}

fn allocator_uniqueness() -> Verdict {
    let start = Instant::now();
    const WARPS: u32 = 8;
    const TOTAL: usize = 1_000_000;
    let per = TOTAL / WARPS as usize;
    let cfg = AllocatorConfig::fixed(8, 256);
    let units = cfg.capacity_slabs() as usize;

    // Churn: every warp allocates and frees a random half of what it holds as
    // it goes. A shared ownership bitmap catches any unit handed out twice
    // while still held.
    let alloc = SlabAlloc::new(cfg).map_err(|e| e.to_string())?;
    let owned: Vec<AtomicU32> = (0..units / 32).map(|_| AtomicU32::new(0)).collect();
    let churn: Result<Vec<Vec<SlabAddress>>, String> = std::thread::scope(|s| {
        let handles: Vec<_> = (0..WARPS)
            .map(|w| {
                let (alloc, owned) = (&alloc, &owned);
                s.spawn(move || {
                    let mut rng = ChaCha8Rng::seed_from_u64(w as u64);
                    let mut ctx = WarpContext::new(w);
                    let mut held: Vec<SlabAddress> = Vec::new();
                    for _ in 0..per / 4 {
                        let a = alloc.warp_allocate(&mut ctx).map_err(|e| e.to_string())?;
                        let i = unit_index(a, cfg.blocks_per_super);
                        if owned[i / 32].fetch_or(1 << (i % 32), Ordering::Relaxed) & (1 << (i % 32)) != 0 {
                            return Err(format!("{a:?} handed out while held"));
                        }
                        held.push(a);
                        if held.len() >= 64 {
                            held.shuffle(&mut rng);
                            for a in held.drain(..32) {
                                let i = unit_index(a, cfg.blocks_per_super);
                                owned[i / 32].fetch_and(!(1 << (i % 32)), Ordering::Relaxed);
                                alloc.deallocate(a).map_err(|e| e.to_string())?;
                            }
                        }
                    }
                    Ok(held)
                })
            })
            .collect();
        handles.into_iter().map(|h| h.join().unwrap()).collect()
    });
    let still_held: usize = churn?.iter().map(Vec::len).sum();
    check(alloc.live_units() == still_held as u64, || "churn bookkeeping".into())?;

    // A million simultaneous allocations must be distinct.
    let alloc = SlabAlloc::new(cfg).map_err(|e| e.to_string())?;
    let addrs: Vec<Vec<SlabAddress>> = std::thread::scope(|s| {
        let handles: Vec<_> = (0..WARPS)
            .map(|w| {
                let alloc = &alloc;
                s.spawn(move || {
                    let mut ctx = WarpContext::new(w);
                    (0..per).map(|_| alloc.warp_allocate(&mut ctx).expect("capacity")).collect()
                })
            })
            .collect();
        handles.into_iter().map(|h| h.join().unwrap()).collect()
    });
    let distinct: HashSet<u32> = addrs.iter().flatten().map(|a| a.raw()).collect();
    check(distinct.len() == TOTAL, || format!("{} distinct of {TOTAL}", distinct.len()))?;

    // Each warp frees a random half of its own, concurrently.
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let mut gone = Vec::new();
    let mut kept = Vec::new();
    let plans: Vec<Vec<SlabAddress>> = addrs
        .iter()
        .map(|mine| {
            let mut mine = mine.clone();
            mine.shuffle(&mut rng);
            let (g, k) = mine.split_at(mine.len() / 2);
            kept.extend_from_slice(k);
            gone.extend_from_slice(g);
            g.to_vec()
        })
        .collect();
    std::thread::scope(|s| {
        for plan in &plans {
            let alloc = &alloc;
            s.spawn(move || plan.iter().for_each(|&a| alloc.deallocate(a).expect("live")));
        }
    });

    let mut per_block: BTreeMap<(u32, u32), u32> = BTreeMap::new();
    for a in &kept {
        *per_block.entry((a.super_block(), a.block())).or_default() += 1;
    }
    for sb in 0..cfg.num_super_blocks {
        for b in 0..cfg.blocks_per_super {
            let want = per_block.get(&(sb, b)).copied().unwrap_or(0);
            let got = alloc.block_popcount(sb, b);
            check(got == want, || format!("block ({sb},{b}): popcount {got}, expected {want}"))?;
        }
    }
    check(alloc.live_units() == kept.len() as u64, || "live units".into())?;

    let detected = gone.iter().filter(|&&a| matches!(alloc.deallocate(a), Err(AllocError::DoubleFree(_)))).count();
    check(detected == gone.len(), || format!("double free detected {detected}/{}", gone.len()))?;
    check(alloc.live_units() == kept.len() as u64, || "double free changed bookkeeping".into())?;

    let elapsed = start.elapsed();
    check(elapsed < Duration::from_secs(30), || format!("took {elapsed:?}"))?;
    Ok(format!(
        "{TOTAL} distinct, per-block popcounts exact after freeing {}, {} double frees refused, {elapsed:.2?}",
        gone.len(),
        detected
    ))
}

fn utilization_bound() -> Verdict {
    let buckets = 1024u32;
    let layout = SlabLayout::KeyValue;
    let (m, x, y) = (15.0, 8.0, 8.0);
    let mut shape = Vec::new();
    let mut max_seen: f64 = 0.0;
    for step in 1..=20 {
        let beta = step as f64 * 0.1;
        let n = (beta * m * buckets as f64).round() as u64;
        let mut mean = 0.0;
        for seed in 0..5 {
            let t = bulk_trial(n, buckets, layout, seed * 31 + step, 1).map_err(|e| e.to_string())?;
            // Independent slab count: every allocated unit plus one base slab per bucket.
            let slabs = buckets as f64 + t.allocated_units as f64;
            let formula = x * n as f64 / ((m * x + y) * slabs);
            check(t.stats.utilization == formula, || format!("beta {beta}: {} != {formula}", t.stats.utilization))?;
            check(t.stats.utilization <= 0.9375, || format!("beta {beta}: {}", t.stats.utilization))?;
            max_seen = max_seen.max(t.stats.utilization);
            mean += t.stats.utilization / 5.0;
        }
        let model = expected_utilization(n, buckets, layout);
        check((mean - model).abs() / model < 0.03, || format!("beta {beta}: measured {mean}, model {model}"))?;
        shape.push((beta, mean));
    }
    check(shape[0].1 < shape[9].1 && shape[9].1 < shape[19].1, || format!("{shape:?}"))?;
    check(max_utilization(layout) == 0.9375, || "ceiling".into())?;
    Ok(format!(
        "100 runs exact, max {max_seen:.4} <= 0.9375, u(0.1)={:.3} u(1.0)={:.3} u(2.0)={:.3}",
        shape[0].1, shape[9].1, shape[19].1
    ))
}

fn probe_identity() -> Verdict {
    let buckets = 2048u32;
    let mut points = Vec::new();
    for beta in [0.5, 0.8, 0.9, 1.0, 1.1, 1.2, 1.5] {
        let n = (beta * 15.0 * buckets as f64).round() as u64;
        let mut mean = 0.0;
        for seed in 0..3 {
            let t = bulk_trial(n, buckets, SlabLayout::KeyValue, 500 + seed, 2).map_err(|e| e.to_string())?;
            let sum_k: u64 = t.slab_counts.iter().map(|&k| k as u64).sum();
            let identity = sum_k as f64 / buckets as f64;
            check(t.mean_probes == identity, || format!("beta {beta}: {} != {identity}", t.mean_probes))?;
            mean += t.mean_probes / 3.0;
        }
        let model = expected_slabs_per_bucket(n, buckets, 15);
        check((mean - model).abs() / model < 0.05, || format!("beta {beta}: measured {mean}, model {model}"))?;
        points.push((beta, mean, model));
    }
    let low = points[0].1;
    let high = points[6].1;
    check(low < 1.05 && high > 1.9, || format!("no jump: {points:?}"))?;
    let at = |b: f64| points.iter().find(|p| p.0 == b).unwrap().1;
    Ok(format!(
        "identity exact in 21 runs; probes 0.5:{:.3} 0.9:{:.3} 1.0:{:.3} 1.1:{:.3} 1.5:{:.3} (model within 5%)",
        at(0.5),
        at(0.9),
        at(1.0),
        at(1.1),
        at(1.5)
    ))
}

fn incremental_trend() -> Verdict {
    let mut finals = Vec::new();
    for batch_size in [2048usize, 4096, 8192] {
        let p = IncrementalParams {
            final_n: 1 << 18,
            batch_size,
            final_util: 0.65,
            layout: SlabLayout::KeyValue,
            seed: 7,
            warps: 8,
        };
        let rows = run_incremental(&p, None).map_err(|e| e.to_string())?;
        let winning = rows.iter().filter(|r| r.cumulative_speedup > 1.0).count();
        check(winning >= 16, || format!("batch {batch_size}: incremental ahead in only {winning} batches"))?;
        finals.push((batch_size, rows.last().unwrap().cumulative_speedup));
    }
    check(finals[0].1 > finals[1].1 && finals[1].1 > finals[2].1, || format!("{finals:?}"))?;
    Ok(format!(
        "final speedup 2k:{:.1}x > 4k:{:.1}x > 8k:{:.1}x",
        finals[0].1, finals[1].1, finals[2].1
    ))
}

fn concurrent_ordering() -> Verdict {
    let dists = [OperationDistribution::GAMMA0, OperationDistribution::GAMMA1, OperationDistribution::GAMMA2];
    let utils = [0.6, 0.9];
    let n = 1u64 << 16;
    let trials = 3;
    // rates[trial][util][dist]
    let mut rates = vec![[[0.0f64; 3]; 2]; trials];
    for (t, trial) in rates.iter_mut().enumerate() {
        for (u, &util) in utils.iter().enumerate() {
            let buckets = buckets_for_utilization(n, util, SlabLayout::KeyValue).ok_or("sizing")?;
            for (d, dist) in dists.iter().enumerate() {
                let p = ConcurrentParams {
                    dist: *dist,
                    initial_n: n,
                    buckets,
                    batch_size: 16384,
                    batches: 8,
                    warps: 8,
                    layout: SlabLayout::KeyValue,
                    seed: 100 + t as u64,
                };
                trial[u][d] = run_concurrent_trial(&p, false).map_err(|e| e.to_string())?.ops_per_sec();
            }
        }
    }
    // A violation counts when it shows up in a majority of trials.
    let mut violations = Vec::new();
    let mut require = |name: String, holds: &dyn Fn(&[[f64; 3]; 2]) -> bool| {
        let bad = rates.iter().filter(|r| !holds(r)).count();
        if bad * 2 > trials {
            violations.push(format!("{name} violated in {bad}/{trials} trials"));
        }
    };
    require("G0 <= G1 at 60%".into(), &|r| r[0][0] <= r[0][1]);
    require("G1 <= G2 at 60%".into(), &|r| r[0][1] <= r[0][2]);
    for d in 0..3 {
        require(format!("G{d}: 90% < 60%"), &|r| r[1][d] < r[0][d]);
    }
    let mean = |u: usize, d: usize| rates.iter().map(|r| r[u][d]).sum::<f64>() / trials as f64 / 1e6;
    let summary = format!(
        "Mops/s at 60%: {:.2} <= {:.2} <= {:.2}; at 90%: {:.2}, {:.2}, {:.2}",
        mean(0, 0),
        mean(0, 1),
        mean(0, 2),
        mean(1, 0),
        mean(1, 1),
        mean(1, 2)
    );
    if violations.is_empty() {
        Ok(summary)
    } else {
        Err(format!("{}; {summary}", violations.join(", ")))
    }
}

fn flush_correctness() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let rounds = 400;
    let mut freed_total = 0u64;
    for layout in [SlabLayout::KeyValue, SlabLayout::KeyOnly] {
        let m = layout.elements_per_slab() as usize;
        // One block: 1024 units, far fewer than the rounds allocate in total.
        let alloc = Arc::new(SlabAlloc::new(AllocatorConfig::fixed(1, 1)).map_err(|e| e.to_string())?);
        let mut ctx = WarpContext::new(0);
        for round in 0..rounds {
            let mut list = SlabList::new(layout, Arc::clone(&alloc));
            let fill = rng.random_range(0..=10 * m);
            let mut oracle = OracleMap::new();
            let mut ops: Vec<Op> = (0..fill).map(|_| Op::insert(rng.random_range(0..40), rng.random())).collect();
            // Delete patterns: random keys, a contiguous key range, or everything.
            match round % 3 {
                0 => ops.extend((0..rng.random_range(0..=fill)).map(|_| Op::delete(rng.random_range(0..40)))),
                1 => {
                    let lo = rng.random_range(0..40);
                    ops.extend((lo..(lo + rng.random_range(0..20)).min(40)).map(Op::delete_all));
                }
                _ => ops.extend((0..40).filter(|_| rng.random_bool(0.8)).map(Op::delete_all)),
            }
            for chunk in ops.chunks(32) {
                list.run(chunk, &mut ctx).map_err(|e| e.to_string())?;
            }
            for op in &ops {
                oracle.apply(&op.normalized(layout));
            }
            let chain_before = list.chain().map_err(|e| e.to_string())?;
            check(chain_before.len() < 10, || format!("chain of {} slabs", chain_before.len() + 1))?;

            let before_units = alloc.live_units();
            let report = list.flush().map_err(|e| e.to_string())?;
            let live = oracle.len();
            let want = (live.div_ceil(m)).saturating_sub(1);
            let after = list.chain().map_err(|e| e.to_string())?;
            check(after.len() == want, || format!("round {round}: {} slabs after flush, want {want}", after.len()))?;
            check(alloc.live_units() == want as u64, || "allocator disagrees".into())?;
            check(before_units - alloc.live_units() == report.freed, || "freed count".into())?;
            for a in chain_before.iter().filter(|a| !after.contains(a)) {
                check(!alloc.is_live(*a).map_err(|e| e.to_string())?, || format!("{a:?} still live"))?;
            }
            let mut got: Vec<(u32, u32)> = list.elements().map_err(|e| e.to_string())?;
            let mut want_elems: Vec<(u32, u32)> = oracle.contents().into_iter().flat_map(|(k, vs)| vs.into_iter().map(move |v| (k, v))).collect();
            got.sort_unstable();
            want_elems.sort_unstable();
            check(got == want_elems, || format!("round {round}: contents changed"))?;
            freed_total += report.freed;

            // Release everything for the next round.
            for op in (0..40).map(Op::delete_all).collect::<Vec<_>>().chunks(32) {
                list.run(op, &mut ctx).map_err(|e| e.to_string())?;
            }
            let rest = list.flush().map_err(|e| e.to_string())?;
            freed_total += rest.freed;
            check(alloc.live_units() == 0, || "leak".into())?;
        }
    }
    check(freed_total > 1024, || format!("only {freed_total} slabs recycled"))?;
    Ok(format!("{} rounds, {freed_total} slabs freed and reused within a 1024-slab pool", 2 * rounds))
}

fn main() {
    let criteria: [(&str, fn() -> Verdict); 9] = [
        ("oracle equivalence", oracle_equivalence),
        ("bounded linearizability", bounded_linearizability),
        ("concurrent durability", concurrent_durability),
        ("allocator uniqueness and conservation", allocator_uniqueness),
        ("utilization bound and formula", utilization_bound),
        ("probe-count identity and occupancy jump", probe_identity),
        ("incremental vs rebuild trend", incremental_trend),
        ("concurrent mix ordering", concurrent_ordering),
        ("flush correctness", flush_correctness),
    ];
    let filter: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let mut failed = 0;
    for (i, (name, f)) in criteria.iter().enumerate() {
        let id = i + 1;
        if !filter.is_empty() && !filter.iter().any(|f| f == &id.to_string()) {
            continue;
        }
        let start = Instant::now();
        let verdict = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|p| {
            Err(p.downcast_ref::<String>().cloned().or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string())).unwrap_or_default())
        });
        let secs = start.elapsed().as_secs_f64();
        match verdict {
            Ok(detail) => println!("PASS {id}. {name} ({secs:.1}s): {detail}"),
            Err(why) => {
                failed += 1;
                println!("FAIL {id}. {name} ({secs:.1}s): {why}");
            }
        }
    }
    if failed > 0 {
        println!("{failed} criteria failed");
        std::process::exit(1);
    }
}
