//! Seeded workload generation, execution and trace replay.
//!
//! A workload is a list of abstract operations. Items are referenced by
//! birth order and heaps by creation order, which is exactly how both the
//! forest and the reference assign ids. All generators keep keys distinct,
//! so removal order never depends on tie-breaking.

use std::collections::HashSet;
use std::fmt;
use std::io::{self, BufRead, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::heap::{Forest, HeapError};
use crate::key::{HeapId, ItemId, Key, Strategy};
use crate::oracle::RefHeap;
use crate::rng::WorkloadRng;
use crate::trace::{OpKind, Trace, TraceError, TraceEvent, TraceMeta};

/// The public operation set shared by [`Forest`] and [`RefHeap`].
pub trait HeapOps {
    fn make_heap(&mut self, strategy: Strategy) -> HeapId;
    fn find_min(&mut self, h: HeapId) -> Result<Option<(ItemId, i64)>, HeapError>;
    fn insert(&mut self, h: HeapId, key: i64) -> Result<ItemId, HeapError>;
    fn meld(&mut self, h1: HeapId, h2: HeapId) -> Result<HeapId, HeapError>;
    fn decrease_key(&mut self, h: HeapId, item: ItemId, key: i64) -> Result<(), HeapError>;
    fn delete_min(&mut self, h: HeapId) -> Result<Option<(ItemId, i64)>, HeapError>;
    fn delete(&mut self, h: HeapId, item: ItemId) -> Result<(), HeapError>;
}

impl HeapOps for Forest {
    fn make_heap(&mut self, strategy: Strategy) -> HeapId {
        Forest::make_heap(self, strategy)
    }
    fn find_min(&mut self, h: HeapId) -> Result<Option<(ItemId, i64)>, HeapError> {
        Forest::find_min(self, h)
    }
    fn insert(&mut self, h: HeapId, key: i64) -> Result<ItemId, HeapError> {
        Forest::insert(self, h, key)
    }
    fn meld(&mut self, h1: HeapId, h2: HeapId) -> Result<HeapId, HeapError> {
        Forest::meld(self, h1, h2)
    }
    fn decrease_key(&mut self, h: HeapId, item: ItemId, key: i64) -> Result<(), HeapError> {
        Forest::decrease_key(self, h, item, key)
    }
    fn delete_min(&mut self, h: HeapId) -> Result<Option<(ItemId, i64)>, HeapError> {
        Forest::delete_min(self, h)
    }
    fn delete(&mut self, h: HeapId, item: ItemId) -> Result<(), HeapError> {
        Forest::delete(self, h, item)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "snake_case")]
pub enum Op {
    MakeHeap {
        /// `None` means the run's strategy.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        strategy: Option<Strategy>,
    },
    Insert {
        heap: HeapId,
        key: i64,
    },
    FindMin {
        heap: HeapId,
    },
    DeleteMin {
        heap: HeapId,
    },
    Meld {
        heap: HeapId,
        heap2: HeapId,
    },
    DecreaseKey {
        heap: HeapId,
        item: ItemId,
        key: i64,
    },
    Delete {
        heap: HeapId,
        item: ItemId,
    },
}

impl Op {
    /// The (first) heap an operation names.
    pub fn heap(&self) -> Option<HeapId> {
        match *self {
            Op::MakeHeap { .. } => None,
            Op::Insert { heap, .. }
            | Op::FindMin { heap }
            | Op::DeleteMin { heap }
            | Op::Meld { heap, .. }
            | Op::DecreaseKey { heap, .. }
            | Op::Delete { heap, .. } => Some(heap),
        }
    }

    pub fn kind(&self) -> OpKind {
        match self {
            Op::MakeHeap { .. } => OpKind::MakeHeap,
            Op::Insert { .. } => OpKind::Insert,
            Op::FindMin { .. } => OpKind::FindMin,
            Op::DeleteMin { .. } => OpKind::DeleteMin,
            Op::Meld { .. } => OpKind::Meld,
            Op::DecreaseKey { .. } => OpKind::DecreaseKey,
            Op::Delete { .. } => OpKind::Delete,
        }
    }

    /// Recovers the operation recorded by a trace event.
    pub fn from_event(event: &TraceEvent) -> Result<Op, String> {
        let heap = || event.heap.ok_or_else(|| format!("op {}: missing heap", event.op));
        let item = || event.item.ok_or_else(|| format!("op {}: missing item", event.op));
        let key = || match event.key {
            Some(Key::Finite(k)) => Ok(k),
            _ => Err(format!("op {}: missing finite key", event.op)),
        };
        Ok(match event.kind {
            OpKind::MakeHeap => Op::MakeHeap { strategy: event.strategy },
            OpKind::Insert => Op::Insert { heap: heap()?, key: key()? },
            OpKind::FindMin => Op::FindMin { heap: heap()? },
            OpKind::DeleteMin => Op::DeleteMin { heap: heap()? },
            OpKind::Meld => {
                Op::Meld { heap: heap()?, heap2: event.heap2.ok_or_else(|| format!("op {}: missing heap2", event.op))? }
            }
            OpKind::DecreaseKey => Op::DecreaseKey { heap: heap()?, item: item()?, key: key()? },
            OpKind::Delete => Op::Delete { heap: heap()?, item: item()? },
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Outcome {
    Heap(HeapId),
    Item(ItemId),
    Min(Option<(ItemId, i64)>),
    Done,
}

pub fn execute<H: HeapOps>(heaps: &mut H, op: &Op, strategy: Strategy) -> Result<Outcome, HeapError> {
    Ok(match *op {
        Op::MakeHeap { strategy: s } => Outcome::Heap(heaps.make_heap(s.unwrap_or(strategy))),
        Op::Insert { heap, key } => Outcome::Item(heaps.insert(heap, key)?),
        Op::FindMin { heap } => Outcome::Min(heaps.find_min(heap)?),
        Op::DeleteMin { heap } => Outcome::Min(heaps.delete_min(heap)?),
        Op::Meld { heap, heap2 } => Outcome::Heap(heaps.meld(heap, heap2)?),
        Op::DecreaseKey { heap, item, key } => {
            heaps.decrease_key(heap, item, key)?;
            Outcome::Done
        }
        Op::Delete { heap, item } => {
            heaps.delete(heap, item)?;
            Outcome::Done
        }
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Generator {
    /// `size` inserts of a shuffled `0..size`, then `size` delete-mins.
    Sorting,
    /// `size` operations drawn from the op mix across several heaps.
    RandomMixed,
    /// Shortest-path style: extract the minimum, then relax a few
    /// neighbours by insertion or decrease-key, until `size` insertions.
    DijkstraLike,
    /// `size` items spread over many small heaps that are melded down to one.
    MeldHeavy,
}

impl Generator {
    pub fn as_str(self) -> &'static str {
        match self {
            Generator::Sorting => "sorting",
            Generator::RandomMixed => "random_mixed",
            Generator::DijkstraLike => "dijkstra_like",
            Generator::MeldHeavy => "meld_heavy",
        }
    }
}

impl fmt::Display for Generator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Generator {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.replace('-', "_").as_str() {
            "sorting" => Ok(Generator::Sorting),
            "random_mixed" | "randommixed" => Ok(Generator::RandomMixed),
            "dijkstra_like" | "dijkstralike" | "dijkstra" => Ok(Generator::DijkstraLike),
            "meld_heavy" | "meldheavy" => Ok(Generator::MeldHeavy),
            other => Err(format!("unknown generator `{other}`")),
        }
    }
}

/// Operation probabilities for [`Generator::RandomMixed`].
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct OpMix {
    pub insert: f64,
    pub delete_min: f64,
    pub decrease_key: f64,
    pub delete: f64,
    pub meld: f64,
    pub make_heap: f64,
    pub find_min: f64,
}

impl Default for OpMix {
    fn default() -> Self {
        OpMix {
            insert: 0.36,
            delete_min: 0.20,
            decrease_key: 0.20,
            delete: 0.05,
            meld: 0.04,
            make_heap: 0.05,
            find_min: 0.10,
        }
    }
}

impl OpMix {
    fn weights(&self) -> [f64; 7] {
        [self.insert, self.delete_min, self.decrease_key, self.delete, self.meld, self.make_heap, self.find_min]
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WorkloadSpec {
    pub generator: Generator,
    pub size: usize,
    pub seed: u64,
    pub strategy: Strategy,
    /// Append delete-min until every live heap is empty.
    #[serde(default)]
    pub drain_tail: bool,
    #[serde(default)]
    pub mix: OpMix,
}

impl WorkloadSpec {
    pub fn new(generator: Generator, size: usize, seed: u64) -> Self {
        WorkloadSpec { generator, size, seed, strategy: Strategy::TwoPass, drain_tail: false, mix: OpMix::default() }
    }

    pub fn with_strategy(mut self, strategy: Strategy) -> Self {
        self.strategy = strategy;
        self
    }

    pub fn with_drain_tail(mut self, drain_tail: bool) -> Self {
        self.drain_tail = drain_tail;
        self
    }

    pub fn validate(&self) -> Result<(), SpecError> {
        if self.size == 0 {
            return Err(SpecError::ZeroSize);
        }
        let weights = self.mix.weights();
        if weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(SpecError::BadProbability);
        }
        let total: f64 = weights.iter().sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(SpecError::ProbabilitySum(total));
        }
        Ok(())
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum SpecError {
    #[error("workload size must be positive")]
    ZeroSize,
    #[error("operation probabilities must be finite and non-negative")]
    BadProbability,
    #[error("operation probabilities sum to {0}, expected 1")]
    ProbabilitySum(f64),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Workload {
    /// Absent for hand-built workloads.
    pub spec: Option<WorkloadSpec>,
    pub ops: Vec<Op>,
}

#[derive(Debug, Error)]
pub enum WorkloadError {
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
}

/// Header line of a serialized workload.
#[derive(Serialize, Deserialize)]
struct WorkloadHeader {
    format: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    spec: Option<WorkloadSpec>,
}

const WORKLOAD_FORMAT: &str = "pairing-workload";

impl Workload {
    pub fn from_ops(ops: Vec<Op>) -> Self {
        Workload { spec: None, ops }
    }

    /// True when no key value is assigned twice by inserts or decrease-keys.
    pub fn has_distinct_keys(&self) -> bool {
        let mut seen = HashSet::new();
        self.ops.iter().all(|op| match op {
            Op::Insert { key, .. } | Op::DecreaseKey { key, .. } => seen.insert(*key),
            _ => true,
        })
    }

    pub fn write_jsonl<W: Write>(&self, mut w: W) -> io::Result<()> {
        let header = WorkloadHeader { format: WORKLOAD_FORMAT.into(), spec: self.spec.clone() };
        serde_json::to_writer(&mut w, &header)?;
        w.write_all(b"\n")?;
        for op in &self.ops {
            serde_json::to_writer(&mut w, op)?;
            w.write_all(b"\n")?;
        }
        w.flush()
    }

    pub fn read_jsonl<R: BufRead>(r: R) -> Result<Workload, WorkloadError> {
        let mut header: Option<WorkloadHeader> = None;
        let mut ops = Vec::new();
        for (idx, line) in r.lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let parse_err = |e: serde_json::Error| WorkloadError::Parse { line: idx + 1, message: e.to_string() };
            if header.is_none() {
                let h: WorkloadHeader = serde_json::from_str(&line).map_err(parse_err)?;
                if h.format != WORKLOAD_FORMAT {
                    return Err(WorkloadError::Parse {
                        line: idx + 1,
                        message: format!("unexpected format `{}`", h.format),
                    });
                }
                header = Some(h);
            } else {
                ops.push(serde_json::from_str(&line).map_err(parse_err)?);
            }
        }
        let header = header.ok_or(WorkloadError::Parse { line: 1, message: "missing header".into() })?;
        Ok(Workload { spec: header.spec, ops })
    }
}

const KEY_SPACE: i64 = 1 << 40;
const DIJKSTRA_TIE_BITS: u32 = 20;

/// Generator state: the reference heap doubles as the model of which items
/// are live, where they are, and what their keys are.
struct Builder {
    rng: WorkloadRng,
    model: RefHeap,
    strategy: Strategy,
    ops: Vec<Op>,
    used_keys: HashSet<i64>,
    live_items: Vec<ItemId>,
    live_pos: Vec<usize>,
    heaps: Vec<HeapId>,
}

impl Builder {
    fn new(spec: &WorkloadSpec) -> Self {
        Builder {
            rng: WorkloadRng::new(spec.seed),
            model: RefHeap::new(),
            strategy: spec.strategy,
            ops: Vec::new(),
            used_keys: HashSet::new(),
            live_items: Vec::new(),
            live_pos: Vec::new(),
            heaps: Vec::new(),
        }
    }

    fn push(&mut self, op: Op) -> Outcome {
        let outcome = execute(&mut self.model, &op, self.strategy).expect("generator produced an invalid operation");
        self.ops.push(op);
        match (op, outcome) {
            (Op::MakeHeap { .. }, Outcome::Heap(h)) => self.heaps.push(h),
            (Op::Meld { heap, heap2 }, Outcome::Heap(h)) => {
                self.heaps.retain(|x| *x != heap && *x != heap2);
                self.heaps.push(h);
            }
            (Op::Insert { .. }, Outcome::Item(item)) => {
                debug_assert_eq!(item.index(), self.live_pos.len());
                self.live_pos.push(self.live_items.len());
                self.live_items.push(item);
            }
            (Op::DeleteMin { .. }, Outcome::Min(Some((item, _)))) => self.forget(item),
            (Op::Delete { item, .. }, _) => self.forget(item),
            _ => {}
        }
        outcome
    }

    fn forget(&mut self, item: ItemId) {
        let pos = self.live_pos[item.index()];
        let last = *self.live_items.last().unwrap();
        self.live_items.swap_remove(pos);
        if last != item {
            self.live_pos[last.index()] = pos;
        }
        self.live_pos[item.index()] = usize::MAX;
    }

    fn make_heap(&mut self) -> HeapId {
        match self.push(Op::MakeHeap { strategy: None }) {
            Outcome::Heap(h) => h,
            _ => unreachable!(),
        }
    }

    fn insert(&mut self, heap: HeapId, key: i64) -> ItemId {
        let fresh = self.used_keys.insert(key);
        debug_assert!(fresh, "key {key} reused");
        match self.push(Op::Insert { heap, key }) {
            Outcome::Item(i) => i,
            _ => unreachable!(),
        }
    }

    fn delete_min(&mut self, heap: HeapId) -> Option<(ItemId, i64)> {
        match self.push(Op::DeleteMin { heap }) {
            Outcome::Min(m) => m,
            _ => unreachable!(),
        }
    }

    fn decrease_key(&mut self, item: ItemId, key: i64) {
        let heap = self.model.heap_of(item).expect("live item");
        self.used_keys.insert(key);
        self.push(Op::DecreaseKey { heap, item, key });
    }

    fn fresh_key(&mut self) -> i64 {
        loop {
            let k = self.rng.below(KEY_SPACE as u64) as i64;
            if !self.used_keys.contains(&k) {
                return k;
            }
        }
    }

    /// A fresh key strictly below `current`.
    fn lower_key(&mut self, current: i64) -> i64 {
        loop {
            let k = current - 1 - self.rng.below(1 << 20) as i64;
            if !self.used_keys.contains(&k) {
                return k;
            }
        }
    }

    fn random_heap(&mut self) -> HeapId {
        self.heaps[self.rng.below(self.heaps.len() as u64) as usize]
    }

    fn random_item(&mut self) -> Option<ItemId> {
        if self.live_items.is_empty() {
            None
        } else {
            Some(self.live_items[self.rng.below(self.live_items.len() as u64) as usize])
        }
    }

    fn drain(&mut self) {
        for h in self.heaps.clone() {
            while self.delete_min(h).is_some() {}
        }
    }

    fn sorting(&mut self, n: usize) {
        let h = self.make_heap();
        let mut keys: Vec<i64> = (0..n as i64).collect();
        self.rng.shuffle(&mut keys);
        for k in keys {
            self.insert(h, k);
        }
        for _ in 0..n {
            self.delete_min(h);
        }
    }

    fn random_mixed(&mut self, n: usize, mix: &OpMix) {
        self.make_heap();
        let weights = mix.weights();
        while self.ops.len() < n {
            let u = self.rng.unit();
            let mut acc = 0.0;
            let mut choice = weights.len() - 1;
            for (i, w) in weights.iter().enumerate() {
                acc += w;
                if u < acc {
                    choice = i;
                    break;
                }
            }
            match choice {
                1 => {
                    let h = self.random_heap();
                    self.delete_min(h);
                }
                2 => match self.random_item() {
                    Some(item) => {
                        let cur = self.model.key_of(item).unwrap();
                        let k = self.lower_key(cur);
                        self.decrease_key(item, k);
                    }
                    None => self.random_insert(),
                },
                3 => match self.random_item() {
                    Some(item) => {
                        let heap = self.model.heap_of(item).unwrap();
                        self.push(Op::Delete { heap, item });
                    }
                    None => self.random_insert(),
                },
                4 if self.heaps.len() >= 2 => {
                    let a = self.rng.below(self.heaps.len() as u64) as usize;
                    let mut b = self.rng.below(self.heaps.len() as u64 - 1) as usize;
                    if b >= a {
                        b += 1;
                    }
                    let (heap, heap2) = (self.heaps[a], self.heaps[b]);
                    self.push(Op::Meld { heap, heap2 });
                }
                4 | 5 => {
                    self.make_heap();
                }
                6 => {
                    let heap = self.random_heap();
                    self.push(Op::FindMin { heap });
                }
                _ => self.random_insert(),
            }
        }
    }

    fn random_insert(&mut self) {
        let h = self.random_heap();
        let k = self.fresh_key();
        self.insert(h, k);
    }

    fn dijkstra_key(&mut self, dist: i64) -> i64 {
        loop {
            let k = (dist << DIJKSTRA_TIE_BITS) | self.rng.below(1 << DIJKSTRA_TIE_BITS) as i64;
            if !self.used_keys.contains(&k) {
                return k;
            }
        }
    }

    fn dijkstra_like(&mut self, n: usize) {
        let h = self.make_heap();
        let mut inserted = 0usize;
        let mut last_dist = 0i64;
        while inserted < n {
            let Some((_, key)) = self.delete_min(h) else {
                // disconnected: start a new source
                let k = self.dijkstra_key(last_dist);
                self.insert(h, k);
                inserted += 1;
                continue;
            };
            let dist = key >> DIJKSTRA_TIE_BITS;
            last_dist = dist;
            let degree = 1 + self.rng.below(6);
            for _ in 0..degree {
                let relaxed = dist + 1 + self.rng.below(100) as i64;
                let reuse = !self.live_items.is_empty() && self.rng.chance(0.5);
                if reuse {
                    let v = self.random_item().unwrap();
                    let cur = self.model.key_of(v).unwrap();
                    if relaxed < cur >> DIJKSTRA_TIE_BITS {
                        let k = self.dijkstra_key(relaxed);
                        self.decrease_key(v, k);
                    }
                } else if inserted < n {
                    let k = self.dijkstra_key(relaxed);
                    self.insert(h, k);
                    inserted += 1;
                }
            }
        }
    }

    fn meld_heavy(&mut self, n: usize) {
        let mut inserted = 0usize;
        while inserted < n {
            let h = self.make_heap();
            if self.rng.chance(0.1) {
                continue;
            }
            let count = 1 + self.rng.below(4) as usize;
            for _ in 0..count.min(n - inserted) {
                let k = self.fresh_key();
                self.insert(h, k);
                inserted += 1;
            }
        }
        while self.heaps.len() > 1 {
            let a = self.rng.below(self.heaps.len() as u64) as usize;
            let mut b = self.rng.below(self.heaps.len() as u64 - 1) as usize;
            if b >= a {
                b += 1;
            }
            let (heap, heap2) = (self.heaps[a], self.heaps[b]);
            let out = match self.push(Op::Meld { heap, heap2 }) {
                Outcome::Heap(o) => o,
                _ => unreachable!(),
            };
            if self.rng.chance(0.2) {
                self.delete_min(out);
            }
            if self.rng.chance(0.1) {
                if let Some(item) = self.random_item() {
                    let cur = self.model.key_of(item).unwrap();
                    let k = self.lower_key(cur);
                    self.decrease_key(item, k);
                }
            }
        }
    }
}

/// Builds the workload a spec describes. Equal specs give equal workloads.
pub fn generate(spec: &WorkloadSpec) -> Result<Workload, SpecError> {
    spec.validate()?;
    let mut b = Builder::new(spec);
    match spec.generator {
        Generator::Sorting => b.sorting(spec.size),
        Generator::RandomMixed => b.random_mixed(spec.size, &spec.mix),
        Generator::DijkstraLike => b.dijkstra_like(spec.size),
        Generator::MeldHeavy => b.meld_heavy(spec.size),
    }
    if spec.drain_tail {
        b.drain();
    }
    Ok(Workload { spec: Some(spec.clone()), ops: b.ops })
}

#[derive(Debug, Error, PartialEq)]
#[error("operation {op_index} failed: {source}")]
pub struct RunError {
    pub op_index: usize,
    pub source: HeapError,
}

/// Executes a workload on a fresh traced forest.
pub fn run(workload: &Workload, strategy: Strategy) -> Result<Trace, RunError> {
    let mut meta = TraceMeta::new(strategy);
    if let Some(spec) = &workload.spec {
        meta.seed = Some(spec.seed);
        meta.generator = Some(spec.generator.as_str().to_string());
    }
    let mut forest = Forest::new(meta);
    for (op_index, op) in workload.ops.iter().enumerate() {
        execute(&mut forest, op, strategy).map_err(|source| RunError { op_index, source })?;
    }
    Ok(forest.into_trace())
}

#[derive(Debug, Error)]
pub enum ReplayError {
    #[error("cannot recover operation: {0}")]
    Unrecoverable(String),
    #[error(transparent)]
    Run(#[from] RunError),
    #[error("replay diverges from the recorded trace at op {op_index}")]
    Mismatch { op_index: usize },
    #[error("replay has {replayed} events, trace has {recorded}")]
    Length { recorded: usize, replayed: usize },
    #[error(transparent)]
    Trace(#[from] TraceError),
}

/// Re-executes the operations recorded in `trace`.
pub fn replay(trace: &Trace) -> Result<Trace, ReplayError> {
    let ops =
        trace.events.iter().map(Op::from_event).collect::<Result<Vec<_>, _>>().map_err(ReplayError::Unrecoverable)?;
    let strategy = trace.meta.strategy;
    let mut forest = Forest::new(trace.meta.clone());
    for (op_index, op) in ops.iter().enumerate() {
        execute(&mut forest, op, strategy).map_err(|source| RunError { op_index, source })?;
    }
    Ok(forest.into_trace())
}

/// Checks that replaying `trace` reproduces it event for event.
pub fn verify_replay(trace: &Trace) -> Result<(), ReplayError> {
    let again = replay(trace)?;
    if let Some(op_index) = trace.events.iter().zip(&again.events).position(|(a, b)| a != b) {
        return Err(ReplayError::Mismatch { op_index });
    }
    if again.events.len() != trace.events.len() {
        return Err(ReplayError::Length { recorded: trace.events.len(), replayed: again.events.len() });
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn count(w: &Workload, kind: OpKind) -> usize {
        w.ops.iter().filter(|o| o.kind() == kind).count()
    }

    #[test]
    fn sorting_shape() {
        let w = generate(&WorkloadSpec::new(Generator::Sorting, 4, 0)).unwrap();
        assert_eq!(w.ops.len(), 9);
        assert_eq!(count(&w, OpKind::Insert), 4);
        assert_eq!(count(&w, OpKind::DeleteMin), 4);
        let t = run(&w, Strategy::TwoPass).unwrap();
        assert_eq!(t.events.iter().filter(|e| e.kind == OpKind::Insert).count(), 4);
    }

    #[test]
    fn first_sorting_deletion_cuts_all_but_root() {
        // every insert links to the running minimum; the first deletion
        // sees the other n - 1 items as children of the root
        for n in [4usize, 16, 100] {
            let w = generate(&WorkloadSpec::new(Generator::Sorting, n, 3)).unwrap();
            let t = run(&w, Strategy::TwoPass).unwrap();
            let first = t.events.iter().find(|e| e.kind == OpKind::DeleteMin).unwrap();
            let total_children: usize = first.cuts.len();
            assert!(total_children < n);
            assert_eq!(first.links.len(), total_children.saturating_sub(1));
        }
        // with the minimum inserted first, every later insert is its child
        let n = 4;
        let mut ops = vec![Op::MakeHeap { strategy: None }];
        ops.extend((0..n).map(|key| Op::Insert { heap: HeapId(0), key }));
        ops.extend((0..n).map(|_| Op::DeleteMin { heap: HeapId(0) }));
        let t = run(&Workload::from_ops(ops), Strategy::TwoPass).unwrap();
        let first = t.events.iter().find(|e| e.kind == OpKind::DeleteMin).unwrap();
        assert_eq!(first.cuts.len(), n as usize - 1);
        assert_eq!(first.links.len(), n as usize - 2);
    }

    #[test]
    fn deterministic() {
        for g in [Generator::Sorting, Generator::RandomMixed, Generator::DijkstraLike, Generator::MeldHeavy] {
            let spec = WorkloadSpec::new(g, 300, 42).with_drain_tail(true);
            assert_eq!(generate(&spec).unwrap(), generate(&spec).unwrap());
            let other = WorkloadSpec::new(g, 300, 43).with_drain_tail(true);
            assert_ne!(generate(&spec).unwrap().ops, generate(&other).unwrap().ops);
        }
    }

    #[test]
    fn spec_validation() {
        assert_eq!(WorkloadSpec::new(Generator::Sorting, 0, 0).validate(), Err(SpecError::ZeroSize));
        let mut s = WorkloadSpec::new(Generator::RandomMixed, 10, 0);
        s.mix.insert += 0.1;
        assert!(matches!(s.validate(), Err(SpecError::ProbabilitySum(_))));
        s.mix.insert = -0.1;
        assert_eq!(s.validate(), Err(SpecError::BadProbability));
    }

    #[test]
    fn random_mixed_follows_mix() {
        let n = 1000;
        let w = generate(&WorkloadSpec::new(Generator::RandomMixed, n, 7)).unwrap();
        assert_eq!(w.ops.len(), n);
        let mix = OpMix::default();
        // find-min never falls back, so its count is binomial(n, p)
        let within = |observed: usize, p: f64| {
            let mean = n as f64 * p;
            let sd = (n as f64 * p * (1.0 - p)).sqrt();
            (observed as f64 - mean).abs() <= 5.0 * sd
        };
        assert!(within(count(&w, OpKind::FindMin), mix.find_min));
        assert!(within(count(&w, OpKind::DeleteMin), mix.delete_min));
        assert!(within(count(&w, OpKind::DecreaseKey), mix.decrease_key));
        assert!(count(&w, OpKind::Meld) > 0);
    }

    #[test]
    fn distinct_keys() {
        for g in [Generator::RandomMixed, Generator::DijkstraLike, Generator::MeldHeavy] {
            let w = generate(&WorkloadSpec::new(g, 2000, 5)).unwrap();
            let mut seen = HashSet::new();
            for op in &w.ops {
                if let Op::Insert { key, .. } | Op::DecreaseKey { key, .. } = op {
                    assert!(seen.insert(*key), "{g}: key {key} repeated");
                }
            }
        }
    }

    #[test]
    fn drain_tail_empties_everything() {
        for g in [Generator::RandomMixed, Generator::DijkstraLike, Generator::MeldHeavy] {
            let w = generate(&WorkloadSpec::new(g, 500, 1).with_drain_tail(true)).unwrap();
            let mut r = RefHeap::new();
            for op in &w.ops {
                execute(&mut r, op, Strategy::TwoPass).unwrap();
            }
            let live: Vec<HeapId> = r.live_heaps().collect();
            assert!(live.iter().all(|h| r.find_min(*h).unwrap().is_none()), "{g}");
        }
    }

    #[test]
    fn workload_file_round_trip() {
        let w = generate(&WorkloadSpec::new(Generator::MeldHeavy, 50, 2)).unwrap();
        let mut buf = Vec::new();
        w.write_jsonl(&mut buf).unwrap();
        assert_eq!(Workload::read_jsonl(&buf[..]).unwrap(), w);
        assert!(Workload::read_jsonl(&buf[..buf.len() - 5]).is_err());
    }

    #[test]
    fn replay_reproduces_trace() {
        let w = generate(&WorkloadSpec::new(Generator::RandomMixed, 2000, 11)).unwrap();
        for s in [Strategy::TwoPass, Strategy::Multipass] {
            let t = run(&w, s).unwrap();
            verify_replay(&t).unwrap();
            assert_eq!(replay(&t).unwrap().to_jsonl_bytes(), t.to_jsonl_bytes());
        }
    }

    #[test]
    fn run_reports_failing_op() {
        let w = Workload::from_ops(vec![Op::MakeHeap { strategy: None }, Op::DeleteMin { heap: HeapId(3) }]);
        let err = run(&w, Strategy::TwoPass).unwrap_err();
        assert_eq!(err.op_index, 1);
        assert_eq!(err.source, HeapError::UnknownHeap(HeapId(3)));
    }

    #[test]
    fn empty_workload_gives_header_only_trace() {
        let t = run(&Workload::from_ops(vec![]), Strategy::TwoPass).unwrap();
        assert!(t.events.is_empty());
        assert_eq!(t.to_jsonl_bytes().iter().filter(|b| **b == b'\n').count(), 1);
    }
}
