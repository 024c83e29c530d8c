use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use slabhash::oracle::{find_linearization, random_trace, run_interleaved, OracleMap};
use slabhash::{AllocatorConfig, Op, OpKind, OpOutcome, SlabAlloc, SlabHashTable, SlabLayout};

/// Several threads drive whole batches at once against one table.
#[test]
fn overlapping_batches_keep_accounting() {
    let alloc = Arc::new(SlabAlloc::new(AllocatorConfig::new(1, 32)).unwrap());
    let table = SlabHashTable::new(8, SlabLayout::KeyValue, 1, alloc).unwrap();
    let outcomes: Vec<(Vec<Op>, Vec<OpOutcome>)> = std::thread::scope(|s| {
        let handles: Vec<_> = (0..4u64)
            .map(|t| {
                let table = &table;
                s.spawn(move || {
                    let mut rng = ChaCha8Rng::seed_from_u64(t);
                    let mut log = (Vec::new(), Vec::new());
                    for _ in 0..20 {
                        let ops: Vec<Op> = (0..256)
                            .map(|_| {
                                let k = rng.random_range(0..300);
                                match rng.random_range(0..4) {
                                    0 | 1 => Op::insert(k, t as u32),
                                    2 => Op::delete(k),
                                    _ => Op::search(k),
                                }
                            })
                            .collect();
                        let report = table.execute_batch(&ops, 4).unwrap();
                        log.0.extend(ops);
                        log.1.extend(report.outcomes);
                    }
                    log
                })
            })
            .collect();
        handles.into_iter().map(|h| h.join().unwrap()).collect()
    });
    let mut net = 0i64;
    for (ops, outs) in &outcomes {
        for (op, out) in ops.iter().zip(outs) {
            match (op.kind, out) {
                (OpKind::Insert, OpOutcome::Stored { .. }) => net += 1,
                (OpKind::Delete, OpOutcome::Deleted(n)) => net -= *n as i64,
                (_, OpOutcome::Failed(e)) => panic!("{e}"),
                _ => {}
            }
        }
    }
    assert_eq!(table.scan_live().unwrap() as i64, net);
    assert_eq!(table.live_count(), net);
    assert!(table.misplaced_keys().unwrap().is_empty());
}

/// Replaces of one key racing from many warps leave exactly one instance.
#[test]
fn racing_replaces_keep_one_instance() {
    for round in 0..20 {
        let table = SlabHashTable::with_allocator(1, SlabLayout::KeyValue, round, AllocatorConfig::new(1, 4)).unwrap();
        // Pre-fill so the key sits mid-chain and appends cross slab borders.
        let fill: Vec<Op> = (0..40).map(|k| Op::insert(1000 + k, 0)).collect();
        table.execute_batch(&fill, 1).unwrap();
        let ops: Vec<Op> = (0..256).map(|i| Op::replace(7, i)).collect();
        table.execute_batch(&ops, 8).unwrap();
        let contents = table.contents().unwrap();
        assert_eq!(contents[&7].len(), 1, "round {round}");
        assert_eq!(table.scan_live().unwrap(), 41);
    }
}

/// Inserts that all overflow the same chain race to link new slabs.
#[test]
fn concurrent_chain_extension() {
    let table = SlabHashTable::with_allocator(1, SlabLayout::KeyOnly, 2, AllocatorConfig::new(1, 4)).unwrap();
    let ops: Vec<Op> = (0..3000).map(|k| Op::insert(k, k)).collect();
    let report = table.execute_batch(&ops, 8).unwrap();
    assert!(report.failures().next().is_none());
    let contents = table.contents().unwrap();
    assert_eq!(contents.len(), 3000);
    // 3000 keys at 30 per slab: a dense chain, no holes left by lost links.
    assert_eq!(table.slab_counts().unwrap(), vec![100]);
    assert_eq!(table.allocator().live_units(), 99);
}

#[test]
fn stepwise_interleavings_linearize() {
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    for s in 0..150u64 {
        let table = SlabHashTable::with_allocator(1, SlabLayout::KeyValue, s, AllocatorConfig::new(1, 4)).unwrap();
        let prefill = random_trace(s, 14, 4);
        let mut initial = OracleMap::new();
        table.execute_batch(&prefill, 1).unwrap();
        for op in &prefill {
            initial.apply(op);
        }
        let warps: Vec<Vec<Op>> = (0..3).map(|_| random_trace(rng.random(), rng.random_range(1..=3), 4)).collect();
        let hist = run_interleaved(&table, &warps, rng.random()).unwrap();
        let fin = table.contents().unwrap();
        assert!(find_linearization(&initial, &hist, Some(&fin)).is_some(), "scenario {s}: {hist:#?}");
    }
}
