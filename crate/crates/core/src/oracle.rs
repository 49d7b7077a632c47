//! A reference priority queue with the forest's API, and a differential
//! runner that drives both side by side.

use std::collections::BTreeSet;

use serde::Serialize;

use crate::heap::{Forest, HeapError};
use crate::key::{HeapId, ItemId, Strategy};
use crate::trace::TraceMeta;
use crate::workload::{execute, HeapOps, Op, Outcome, Workload};

/// Sorted-set heaps. Ties among equal keys go to the smallest item id.
/// Ids are assigned exactly as [`Forest`] assigns them.
#[derive(Clone, Debug, Default)]
pub struct RefHeap {
    heaps: Vec<Option<BTreeSet<(i64, ItemId)>>>,
    strategies: Vec<Strategy>,
    items: Vec<Option<(HeapId, i64)>>,
}

impl RefHeap {
    pub fn new() -> Self {
        RefHeap::default()
    }

    fn set(&self, h: HeapId) -> Result<&BTreeSet<(i64, ItemId)>, HeapError> {
        match self.heaps.get(h.index()) {
            None => Err(HeapError::UnknownHeap(h)),
            Some(None) => Err(HeapError::DeadHeap(h)),
            Some(Some(s)) => Ok(s),
        }
    }

    fn set_mut(&mut self, h: HeapId) -> Result<&mut BTreeSet<(i64, ItemId)>, HeapError> {
        match self.heaps.get_mut(h.index()) {
            None => Err(HeapError::UnknownHeap(h)),
            Some(None) => Err(HeapError::DeadHeap(h)),
            Some(Some(s)) => Ok(s),
        }
    }

    fn member(&self, h: HeapId, item: ItemId) -> Result<i64, HeapError> {
        self.set(h)?;
        match self.items.get(item.index()) {
            None => Err(HeapError::UnknownItem(item)),
            Some(Some((home, key))) if *home == h => Ok(*key),
            Some(_) => Err(HeapError::NotInHeap { item, heap: h }),
        }
    }

    /// How many items of `h` hold its minimum key (0 when empty).
    pub fn min_multiplicity(&self, h: HeapId) -> Result<usize, HeapError> {
        let set = self.set(h)?;
        Ok(match set.first() {
            None => 0,
            Some(&(k, _)) => set.range((k, ItemId(0))..=(k, ItemId(u64::MAX))).take(2).count(),
        })
    }

    pub fn heap_of(&self, item: ItemId) -> Option<HeapId> {
        self.items.get(item.index()).copied().flatten().map(|(h, _)| h)
    }

    pub fn key_of(&self, item: ItemId) -> Option<i64> {
        self.items.get(item.index()).copied().flatten().map(|(_, k)| k)
    }

    pub fn live_heaps(&self) -> impl Iterator<Item = HeapId> + '_ {
        self.heaps.iter().enumerate().filter(|(_, s)| s.is_some()).map(|(i, _)| HeapId(i as u64))
    }

    fn remove(&mut self, h: HeapId, entry: (i64, ItemId)) {
        self.heaps[h.index()].as_mut().unwrap().remove(&entry);
        self.items[entry.1.index()] = None;
    }
}

impl HeapOps for RefHeap {
    fn make_heap(&mut self, strategy: Strategy) -> HeapId {
        self.heaps.push(Some(BTreeSet::new()));
        self.strategies.push(strategy);
        HeapId(self.heaps.len() as u64 - 1)
    }

    fn find_min(&mut self, h: HeapId) -> Result<Option<(ItemId, i64)>, HeapError> {
        Ok(self.set(h)?.first().map(|&(k, i)| (i, k)))
    }

    fn insert(&mut self, h: HeapId, key: i64) -> Result<ItemId, HeapError> {
        let item = ItemId(self.items.len() as u64);
        self.set_mut(h)?.insert((key, item));
        self.items.push(Some((h, key)));
        Ok(item)
    }

    fn meld(&mut self, h1: HeapId, h2: HeapId) -> Result<HeapId, HeapError> {
        if h1 == h2 {
            self.set(h1)?;
            return Err(HeapError::SelfMeld(h1));
        }
        self.set(h1)?;
        self.set(h2)?;
        let (s1, s2) = (self.strategies[h1.index()], self.strategies[h2.index()]);
        if s1 != s2 {
            return Err(HeapError::StrategyMismatch { a: h1, a_strategy: s1, b: h2, b_strategy: s2 });
        }
        let mut a = self.heaps[h1.index()].take().unwrap();
        let b = self.heaps[h2.index()].take().unwrap();
        a.extend(b);
        let out = HeapId(self.heaps.len() as u64);
        for &(_, item) in &a {
            self.items[item.index()] = Some((out, self.items[item.index()].unwrap().1));
        }
        self.heaps.push(Some(a));
        self.strategies.push(s1);
        Ok(out)
    }

    fn decrease_key(&mut self, h: HeapId, item: ItemId, key: i64) -> Result<(), HeapError> {
        let current = self.member(h, item)?;
        if key > current {
            return Err(HeapError::KeyIncrease { item, current: current.into(), new: key.into() });
        }
        let set = self.set_mut(h)?;
        set.remove(&(current, item));
        set.insert((key, item));
        self.items[item.index()] = Some((h, key));
        Ok(())
    }

    fn delete_min(&mut self, h: HeapId) -> Result<Option<(ItemId, i64)>, HeapError> {
        let first = self.set(h)?.first().copied();
        Ok(first.map(|entry| {
            self.remove(h, entry);
            (entry.1, entry.0)
        }))
    }

    fn delete(&mut self, h: HeapId, item: ItemId) -> Result<(), HeapError> {
        let key = self.member(h, item)?;
        self.remove(h, (key, item));
        Ok(())
    }
}

/// First disagreement between the forest and the reference.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct Divergence {
    pub op_index: usize,
    pub what: String,
    pub expected: Option<i64>,
    pub actual: Option<i64>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct DivergenceReport {
    pub ops: usize,
    pub removals: usize,
    pub item_comparisons: usize,
    pub divergence: Option<Divergence>,
}

impl DivergenceReport {
    pub fn is_clean(&self) -> bool {
        self.divergence.is_none()
    }
}

/// Runs `workload` against a traced [`Forest`] and a [`RefHeap`].
///
/// After every operation the minimum keys of the touched heap are compared,
/// and every removal is compared by key. Items are compared too when every
/// key the workload assigns is distinct; with repeated keys the removal
/// order among equals legitimately depends on the heap's shape.
pub fn run_both(workload: &Workload, strategy: Strategy) -> DivergenceReport {
    let mut forest = Forest::new(TraceMeta::new(strategy));
    let mut reference = RefHeap::new();
    let mut report = DivergenceReport { ops: 0, removals: 0, item_comparisons: 0, divergence: None };

    let unique_min = workload.has_distinct_keys();
    for (op_index, op) in workload.ops.iter().enumerate() {
        report.ops += 1;
        let expected = execute(&mut reference, op, strategy);
        let actual = execute(&mut forest, op, strategy);
        let diverge =
            |what: String, expected: Option<i64>, actual: Option<i64>| Divergence { op_index, what, expected, actual };

        let found = match (&expected, &actual) {
            (Err(e), Err(a)) if e == a => None,
            (Err(e), Err(a)) => Some(diverge(format!("errors differ: {e} vs {a}"), None, None)),
            (Err(e), Ok(_)) => Some(diverge(format!("reference failed ({e}), forest succeeded"), None, None)),
            (Ok(_), Err(a)) => Some(diverge(format!("forest failed ({a}), reference succeeded"), None, None)),
            (Ok(e), Ok(a)) => compare_outcomes(op, e, a, unique_min, &mut report).map(|(w, x, y)| diverge(w, x, y)),
        };
        if found.is_some() {
            report.divergence = found;
            return report;
        }

        // minimum of every heap the operation left behind
        let touched = match (op, &actual) {
            (Op::Meld { .. }, Ok(Outcome::Heap(out))) => Some(*out),
            (Op::MakeHeap { .. }, Ok(Outcome::Heap(out))) => Some(*out),
            _ => op.heap().filter(|h| forest.is_live(*h)),
        };
        if let Some(h) = touched {
            let e = reference.set(h).ok().and_then(|s| s.first().map(|&(k, _)| k));
            let a = forest.peek_min(h).ok().flatten().map(|(_, k)| k);
            if e != a {
                report.divergence = Some(diverge(format!("minimum of {h} after operation"), e, a));
                return report;
            }
        }
    }
    report
}

fn compare_outcomes(
    op: &Op,
    expected: &Outcome,
    actual: &Outcome,
    unique_min: bool,
    report: &mut DivergenceReport,
) -> Option<(String, Option<i64>, Option<i64>)> {
    match (expected, actual) {
        (Outcome::Min(e), Outcome::Min(a)) => {
            let removal = matches!(op, Op::DeleteMin { .. });
            if removal && e.is_some() {
                report.removals += 1;
            }
            let (ek, ak) = (e.map(|x| x.1), a.map(|x| x.1));
            if ek != ak {
                let what = if removal { "removed key" } else { "find-min key" };
                return Some((what.to_string(), ek, ak));
            }
            if unique_min && e.is_some() {
                report.item_comparisons += 1;
                if e.map(|x| x.0) != a.map(|x| x.0) {
                    return Some((format!("item differs: {:?} vs {:?}", e.map(|x| x.0), a.map(|x| x.0)), ek, ak));
                }
            }
            None
        }
        (e, a) if e == a => {
            if matches!(op, Op::Delete { .. }) {
                report.removals += 1;
            }
            None
        }
        (e, a) => Some((format!("outcomes differ: {e:?} vs {a:?}"), None, None)),
    }
}
