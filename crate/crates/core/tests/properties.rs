use proptest::prelude::*;

use pairing_audit::audit;
use pairing_audit::key::Strategy as Variant;
use pairing_audit::oracle;
use pairing_audit::workload::{self, execute, Op, Outcome, Workload};
use pairing_audit::{Forest, HeapId, ItemId, Trace, TraceMeta};

/// Raw draws turned into a valid op sequence, using a traced forest as the
/// model so ties resolve exactly as they will on replay. With `distinct`,
/// every key carries a unique low tag so no two items ever share a key.
fn build(draws: &[(u8, u16, i16)], strategy: Variant, distinct: bool) -> Workload {
    let mut model = Forest::new(TraceMeta::new(strategy));
    let mut ops = vec![Op::MakeHeap { strategy: None }];
    model.make_heap(strategy);
    let mut items: Vec<ItemId> = Vec::new();
    let mut tag = 0i64;
    let mut key_for = |value: i64| {
        tag += 1;
        if distinct {
            (value << 16) | tag
        } else {
            value
        }
    };
    for &(sel, pick, raw) in draws {
        let heaps: Vec<HeapId> = model.live_heaps().collect();
        let h = heaps[pick as usize % heaps.len()];
        items.retain(|&i| model.heap_of(i).is_some());
        let op = match sel % 8 {
            0 | 1 => Op::Insert { heap: h, key: key_for(raw as i64) },
            2 => Op::DeleteMin { heap: h },
            3 => Op::FindMin { heap: h },
            4 | 5 if !items.is_empty() => {
                let item = items[pick as usize % items.len()];
                let current = model.key_of(item).unwrap();
                let drop = (raw as i64).abs() % 20 + distinct as i64;
                let key = if drop == 0 {
                    current
                } else if distinct {
                    key_for((current >> 16) - drop)
                } else {
                    current - drop
                };
                Op::DecreaseKey { heap: model.heap_of(item).unwrap(), item, key }
            }
            6 if !items.is_empty() => {
                let item = items[pick as usize % items.len()];
                Op::Delete { heap: model.heap_of(item).unwrap(), item }
            }
            7 if heaps.len() >= 2 => Op::Meld { heap: h, heap2: heaps[(pick as usize + 1) % heaps.len()] },
            _ => Op::MakeHeap { strategy: None },
        };
        if let Outcome::Item(item) = execute(&mut model, &op, strategy).expect("model accepts op") {
            items.push(item);
        }
        ops.push(op);
    }
    Workload::from_ops(ops)
}

fn variants() -> impl Strategy<Value = Variant> {
    prop_oneof![Just(Variant::TwoPass), Just(Variant::Multipass)]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn matches_reference_and_stays_ordered(
        draws in prop::collection::vec((any::<u8>(), any::<u16>(), -60i16..60), 0..300),
        strategy in variants(),
    ) {
        let w = build(&draws, strategy, true);
        prop_assert!(w.has_distinct_keys());
        let d = oracle::run_both(&w, strategy);
        prop_assert!(d.is_clean(), "{:?}", d.divergence);

        let mut forest = Forest::new(TraceMeta::new(strategy));
        for op in &w.ops {
            execute(&mut forest, op, strategy).unwrap();
            let heaps: Vec<_> = forest.live_heaps().collect();
            for h in heaps {
                prop_assert!(forest.validate(h).is_ok(), "{:?}", forest.validate(h));
            }
        }
    }

    #[test]
    fn audit_passes_on_arbitrary_workloads(
        draws in prop::collection::vec((any::<u8>(), any::<u16>(), -60i16..60), 0..300),
        strategy in variants(),
    ) {
        let w = build(&draws, strategy, false);
        let trace = workload::run(&w, strategy).unwrap();
        let report = audit::audit_trace(&trace);
        let failed: Vec<_> = report.failures().map(|c| c.name.clone()).collect();
        prop_assert!(report.pass, "{failed:?}");
    }

    #[test]
    fn trace_round_trips(
        draws in prop::collection::vec((any::<u8>(), any::<u16>(), -60i16..60), 0..200),
        strategy in variants(),
    ) {
        let w = build(&draws, strategy, false);
        let trace = workload::run(&w, strategy).unwrap();
        let bytes = trace.to_jsonl_bytes();
        let back = Trace::from_jsonl_slice(&bytes).unwrap();
        prop_assert_eq!(&back, &trace);
        prop_assert_eq!(back.to_jsonl_bytes(), bytes);
    }

    #[test]
    fn log_inequality_holds(a in 1u32..=1_000_000, b in 1u32..=1_000_000) {
        prop_assert!(audit::check_log_inequality(a as f64, b as f64));
    }
}
