//! Post-hoc labelling of a finished trace.
//!
//! A node is temporary if some deletion in the trace removes it, permanent
//! otherwise. A link is a d-link, k-link or f-link according to whether a
//! deletion cuts it, a decrease-key cuts it, or nothing does. A link is real
//! when both ends are temporary and it is not a k-link; every other link is
//! phantom.
//!
//! Sizes and masses are computed by replaying the links and cuts onto a
//! mirror of the forest. The size of a temporary node counts the nodes
//! reachable from it through real links, itself included. The mass of a
//! real child is recorded twice: once as its parent's size right after the
//! link, and once as one plus the sizes of all the parent's real children.

use std::collections::{BTreeMap, HashMap};
use std::io::{self, Write};

use serde::Serialize;

use crate::key::{HeapId, ItemId};
use crate::trace::{CutCause, LinkContext, LinkId, OpKind, Orientation, Step, Trace};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Fate {
    Temporary,
    Permanent,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub enum LinkFate {
    #[serde(rename = "d")]
    DLink,
    #[serde(rename = "k")]
    KLink,
    #[serde(rename = "f")]
    FLink,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Reality {
    Real,
    Phantom,
}

pub type NodeFates = BTreeMap<ItemId, Fate>;

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct LinkAnnotation {
    pub link: LinkId,
    pub op: u64,
    pub winner: ItemId,
    pub loser: ItemId,
    pub ctx: LinkContext,
    pub orient: Orientation,
    pub fate: LinkFate,
    pub reality: Reality,
}

/// Temporary-node count of the heap(s) an operation works on, taken at the
/// start of the operation.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct OpContext {
    pub op: u64,
    pub n_raw: u64,
    pub n_clamped: u64,
}

/// Minimum `n` at which the logarithmic bounds are evaluated.
pub const MIN_N: u64 = 4;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct SizeRecord {
    pub item: ItemId,
    pub op: u64,
    /// The link or cut that changed the size; absent for the initial record.
    pub link: Option<LinkId>,
    pub size: u64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct MassRecord {
    pub item: ItemId,
    pub parent: ItemId,
    pub link: LinkId,
    pub op: u64,
    pub by_parent_size: u64,
    pub by_sibling_sum: u64,
}

impl MassRecord {
    pub fn agrees(&self) -> bool {
        self.by_parent_size == self.by_sibling_sum
    }
}

/// Every item inserted in the trace, labelled by whether a deletion
/// removes it before the trace ends.
pub fn node_fates(trace: &Trace) -> NodeFates {
    let mut fates = NodeFates::new();
    for event in &trace.events {
        match event.kind {
            OpKind::Insert => {
                if let Some(item) = event.item {
                    fates.entry(item).or_insert(Fate::Permanent);
                }
            }
            OpKind::DeleteMin | OpKind::Delete => {
                if let Some(item) = event.item {
                    fates.insert(item, Fate::Temporary);
                }
            }
            _ => {}
        }
    }
    fates
}

fn fate_of(fates: &NodeFates, item: ItemId) -> Fate {
    fates.get(&item).copied().unwrap_or(Fate::Permanent)
}

pub fn annotate_links(trace: &Trace, fates: &NodeFates) -> Vec<LinkAnnotation> {
    let mut cut_by: HashMap<LinkId, CutCause> = HashMap::new();
    for cut in trace.cuts() {
        cut_by.entry(cut.cut_link).or_insert(cut.cause);
    }
    trace
        .events
        .iter()
        .flat_map(|e| e.links.iter().map(move |l| (e.op, l)))
        .map(|(op, l)| {
            let fate = match cut_by.get(&l.id) {
                Some(CutCause::Deletion) => LinkFate::DLink,
                Some(CutCause::DecreaseKey) => LinkFate::KLink,
                None => LinkFate::FLink,
            };
            let both_temporary =
                fate_of(fates, l.winner) == Fate::Temporary && fate_of(fates, l.loser) == Fate::Temporary;
            let reality = if both_temporary && fate != LinkFate::KLink { Reality::Real } else { Reality::Phantom };
            LinkAnnotation {
                link: l.id,
                op,
                winner: l.winner,
                loser: l.loser,
                ctx: l.ctx,
                orient: l.orient,
                fate,
                reality,
            }
        })
        .collect()
}

/// One context per event, from replayed heap membership.
pub fn op_contexts(trace: &Trace, fates: &NodeFates) -> Vec<OpContext> {
    let mut temps: HashMap<HeapId, u64> = HashMap::new();
    let count = |temps: &HashMap<HeapId, u64>, h: Option<HeapId>| h.and_then(|h| temps.get(&h).copied()).unwrap_or(0);
    trace
        .events
        .iter()
        .map(|event| {
            let n_raw = match event.kind {
                OpKind::MakeHeap => {
                    if let Some(h) = event.heap {
                        temps.insert(h, 0);
                    }
                    0
                }
                OpKind::Meld => {
                    let n = count(&temps, event.heap) + count(&temps, event.heap2);
                    for h in [event.heap, event.heap2].into_iter().flatten() {
                        temps.remove(&h);
                    }
                    if let Some(out) = event.result {
                        temps.insert(out, n);
                    }
                    n
                }
                OpKind::Insert => {
                    let n = count(&temps, event.heap);
                    if let (Some(h), Some(item)) = (event.heap, event.item) {
                        if fate_of(fates, item) == Fate::Temporary {
                            *temps.entry(h).or_insert(0) += 1;
                        }
                    }
                    n
                }
                _ => {
                    let n = count(&temps, event.heap);
                    if event.is_deletion() {
                        if let Some(h) = event.heap {
                            let c = temps.entry(h).or_insert(0);
                            *c = c.saturating_sub(1);
                        }
                    }
                    n
                }
            };
            OpContext { op: event.op, n_raw, n_clamped: n_raw.max(MIN_N) }
        })
        .collect()
}

/// Replayed three-reference structure, indexed by item.
#[derive(Default)]
struct Mirror {
    child: Vec<Option<ItemId>>,
    right: Vec<Option<ItemId>>,
    left_parent: Vec<Option<ItemId>>,
    parent_link: Vec<Option<LinkId>>,
    /// Whether the link holding the node is real.
    real: Vec<bool>,
    /// Size of each temporary node still present; zero otherwise.
    size: Vec<u64>,
}

impl Mirror {
    fn ensure(&mut self, item: ItemId) {
        let need = item.index() + 1;
        if self.child.len() < need {
            self.child.resize(need, None);
            self.right.resize(need, None);
            self.left_parent.resize(need, None);
            self.parent_link.resize(need, None);
            self.real.resize(need, false);
            self.size.resize(need, 0);
        }
    }

    fn is_root(&self, item: ItemId) -> bool {
        self.left_parent.get(item.index()).is_none_or(|p| p.is_none())
    }

    fn link(&mut self, winner: ItemId, loser: ItemId, id: LinkId, real: bool) -> bool {
        self.ensure(winner);
        self.ensure(loser);
        if winner == loser || !self.is_root(winner) || !self.is_root(loser) {
            return false;
        }
        let old = self.child[winner.index()];
        if let Some(c) = old {
            self.left_parent[c.index()] = Some(loser);
        }
        self.right[loser.index()] = old;
        self.left_parent[loser.index()] = Some(winner);
        self.parent_link[loser.index()] = Some(id);
        self.real[loser.index()] = real;
        self.child[winner.index()] = Some(loser);
        true
    }

    fn cut(&mut self, loser: ItemId, id: LinkId) -> bool {
        self.ensure(loser);
        if self.parent_link[loser.index()] != Some(id) {
            return false;
        }
        let lp = self.left_parent[loser.index()].expect("held node has a left/parent");
        let right = self.right[loser.index()];
        if self.child[lp.index()] == Some(loser) {
            self.child[lp.index()] = right;
        } else {
            self.right[lp.index()] = right;
        }
        if let Some(r) = right {
            self.left_parent[r.index()] = Some(lp);
        }
        self.left_parent[loser.index()] = None;
        self.right[loser.index()] = None;
        self.parent_link[loser.index()] = None;
        self.real[loser.index()] = false;
        true
    }

    /// Parent of a non-root, found by walking left to the leftmost sibling.
    fn parent(&self, item: ItemId) -> Option<ItemId> {
        let mut at = item;
        let mut lp = self.left_parent.get(at.index()).copied().flatten()?;
        let mut steps = 0usize;
        while self.child[lp.index()] != Some(at) {
            at = lp;
            lp = self.left_parent[at.index()]?;
            steps += 1;
            if steps > self.child.len() {
                return None;
            }
        }
        Some(lp)
    }

    /// Parent through a real link, if the node hangs by one.
    fn real_parent(&self, item: ItemId) -> Option<ItemId> {
        if self.real[item.index()] {
            self.parent(item)
        } else {
            None
        }
    }

    fn children(&self, item: ItemId) -> impl Iterator<Item = ItemId> + '_ {
        let limit = self.child.len();
        std::iter::successors(self.child.get(item.index()).copied().flatten(), |c| self.right[c.index()]).take(limit)
    }
}

/// Sizes, masses and replay problems found while mirroring a trace.
#[derive(Clone, Debug, Default, Serialize)]
pub struct StructureReplay {
    pub sizes: Vec<SizeRecord>,
    pub masses: Vec<MassRecord>,
    /// Links or cuts that could not be applied to the mirror.
    pub inconsistencies: Vec<String>,
}

/// Replays the trace's links and cuts, tracking the size of every temporary
/// node and recording the mass of every real child when it is linked.
pub fn replay_structure(trace: &Trace, fates: &NodeFates, annotations: &[LinkAnnotation]) -> StructureReplay {
    let reality: HashMap<LinkId, Reality> = annotations.iter().map(|a| (a.link, a.reality)).collect();
    let ends: HashMap<LinkId, (ItemId, ItemId)> = annotations.iter().map(|a| (a.link, (a.winner, a.loser))).collect();
    let is_real = |id: LinkId| reality.get(&id) == Some(&Reality::Real);

    let mut mirror = Mirror::default();
    let mut out = StructureReplay::default();

    for event in &trace.events {
        if event.kind == OpKind::Insert {
            if let Some(item) = event.item {
                mirror.ensure(item);
                if fate_of(fates, item) == Fate::Temporary {
                    mirror.size[item.index()] = 1;
                    out.sizes.push(SizeRecord { item, op: event.op, link: None, size: 1 });
                }
            }
        }
        let removed = if event.is_deletion() { event.item } else { None };

        for step in event.steps() {
            match step {
                Step::Link(l) => {
                    let real = is_real(l.id);
                    if !mirror.link(l.winner, l.loser, l.id, real) {
                        out.inconsistencies.push(format!("op {}: {} between non-roots", event.op, l.id));
                        continue;
                    }
                    if !real {
                        continue;
                    }
                    let gained = mirror.size[l.loser.index()];
                    let mut at = Some(l.winner);
                    while let Some(x) = at {
                        let s = &mut mirror.size[x.index()];
                        *s += gained;
                        out.sizes.push(SizeRecord { item: x, op: event.op, link: Some(l.id), size: *s });
                        at = mirror.real_parent(x);
                    }
                    let by_parent_size = mirror.size[l.winner.index()];
                    let by_sibling_sum = 1 + mirror
                        .children(l.winner)
                        .filter(|c| mirror.real[c.index()])
                        .map(|c| mirror.size[c.index()])
                        .sum::<u64>();
                    out.masses.push(MassRecord {
                        item: l.loser,
                        parent: l.winner,
                        link: l.id,
                        op: event.op,
                        by_parent_size,
                        by_sibling_sum,
                    });
                }
                Step::Cut(c) => {
                    let Some(&(winner, loser)) = ends.get(&c.cut_link) else {
                        out.inconsistencies.push(format!("op {}: cut of unknown {}", event.op, c.cut_link));
                        continue;
                    };
                    let parent = mirror.parent(loser);
                    if !mirror.cut(loser, c.cut_link) {
                        out.inconsistencies.push(format!("op {}: {} does not hold {loser}", event.op, c.cut_link));
                        continue;
                    }
                    if parent != Some(winner) {
                        out.inconsistencies
                            .push(format!("op {}: {} held {loser} under {parent:?}", event.op, c.cut_link));
                    }
                    if !is_real(c.cut_link) {
                        continue;
                    }
                    // a real link loses its subtree only when the winner is deleted
                    let lost = mirror.size[loser.index()];
                    let mut at = Some(winner);
                    while let Some(x) = at {
                        let s = &mut mirror.size[x.index()];
                        *s = s.saturating_sub(lost);
                        if removed != Some(x) {
                            out.sizes.push(SizeRecord { item: x, op: event.op, link: Some(c.cut_link), size: *s });
                        }
                        at = mirror.real_parent(x);
                    }
                }
            }
        }
        if let Some(item) = removed {
            mirror.ensure(item);
            mirror.size[item.index()] = 0;
        }
    }
    out
}

pub fn size_timeline(trace: &Trace, fates: &NodeFates, annotations: &[LinkAnnotation]) -> Vec<SizeRecord> {
    replay_structure(trace, fates, annotations).sizes
}

pub fn mass_records(trace: &Trace, fates: &NodeFates, annotations: &[LinkAnnotation]) -> Vec<MassRecord> {
    replay_structure(trace, fates, annotations).masses
}

/// Records where an item's size is smaller than its previous record.
pub fn size_decreases(records: &[SizeRecord]) -> Vec<(SizeRecord, u64)> {
    let mut last: HashMap<ItemId, u64> = HashMap::new();
    let mut bad = Vec::new();
    for r in records {
        if let Some(prev) = last.insert(r.item, r.size) {
            if r.size < prev {
                bad.push((*r, prev));
            }
        }
    }
    bad
}

/// Everything the auditor needs about one trace.
#[derive(Clone, Debug)]
pub struct Classification {
    pub fates: NodeFates,
    pub links: Vec<LinkAnnotation>,
    pub contexts: Vec<OpContext>,
    pub structure: StructureReplay,
}

pub fn classify(trace: &Trace) -> Classification {
    let fates = node_fates(trace);
    let links = annotate_links(trace, &fates);
    let contexts = op_contexts(trace, &fates);
    let structure = replay_structure(trace, &fates, &links);
    Classification { fates, links, contexts, structure }
}

#[derive(Serialize)]
struct AnnotatedLink {
    id: LinkId,
    winner: ItemId,
    loser: ItemId,
    ctx: LinkContext,
    orient: Orientation,
    fate: LinkFate,
    reality: Reality,
}

#[derive(Serialize)]
struct AnnotatedEvent<'a> {
    #[serde(flatten)]
    event: &'a crate::trace::TraceEvent,
    n: u64,
    #[serde(rename = "nClamped")]
    n_clamped: u64,
    #[serde(rename = "annotatedLinks")]
    annotated_links: Vec<AnnotatedLink>,
}

/// JSON Lines copy of the trace with per-operation `n` and per-link fate
/// and reality added. The metadata line is carried over unchanged.
pub fn write_annotated<W: Write>(trace: &Trace, c: &Classification, mut w: W) -> io::Result<()> {
    serde_json::to_writer(&mut w, &trace.meta)?;
    w.write_all(b"\n")?;
    let mut anns = c.links.iter().peekable();
    for (event, ctx) in trace.events.iter().zip(&c.contexts) {
        let mut annotated_links = Vec::with_capacity(event.links.len());
        while let Some(a) = anns.next_if(|a| a.op == event.op) {
            annotated_links.push(AnnotatedLink {
                id: a.link,
                winner: a.winner,
                loser: a.loser,
                ctx: a.ctx,
                orient: a.orient,
                fate: a.fate,
                reality: a.reality,
            });
        }
        let line = AnnotatedEvent { event, n: ctx.n_raw, n_clamped: ctx.n_clamped, annotated_links };
        serde_json::to_writer(&mut w, &line)?;
        w.write_all(b"\n")?;
    }
    w.flush()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::heap::Forest;
    use crate::key::Strategy;

    fn forest() -> (Forest, HeapId) {
        let mut f = Forest::default();
        let h = f.make_heap(Strategy::TwoPass);
        (f, h)
    }

    #[test]
    fn fates_follow_deletions() {
        let (mut f, h) = forest();
        let a = f.insert(h, 3).unwrap();
        let b = f.insert(h, 5).unwrap();
        f.delete_min(h).unwrap();
        let fates = node_fates(&f.into_trace());
        assert_eq!(fates[&a], Fate::Temporary);
        assert_eq!(fates[&b], Fate::Permanent);
        assert!(node_fates(&Trace::default()).is_empty());
    }

    #[test]
    fn link_labels() {
        // both deleted: d-link, real
        let (mut f, h) = forest();
        f.insert(h, 3).unwrap();
        f.insert(h, 5).unwrap();
        f.delete_min(h).unwrap();
        f.delete_min(h).unwrap();
        let t = f.into_trace();
        let a = annotate_links(&t, &node_fates(&t));
        assert_eq!((a[0].fate, a[0].reality), (LinkFate::DLink, Reality::Real));

        // decrease-key cuts it: k-link, phantom
        let (mut f, h) = forest();
        f.insert(h, 3).unwrap();
        let b = f.insert(h, 5).unwrap();
        f.decrease_key(h, b, 1).unwrap();
        let t = f.into_trace();
        let a = annotate_links(&t, &node_fates(&t));
        assert_eq!((a[0].fate, a[0].reality), (LinkFate::KLink, Reality::Phantom));
        assert_eq!(a[1].ctx, LinkContext::DecreaseKey);

        // never cut, both permanent: f-link, phantom
        let (mut f, h) = forest();
        f.insert(h, 3).unwrap();
        f.insert(h, 5).unwrap();
        let t = f.into_trace();
        let a = annotate_links(&t, &node_fates(&t));
        assert_eq!((a[0].fate, a[0].reality), (LinkFate::FLink, Reality::Phantom));
    }

    #[test]
    fn contexts_count_temporaries() {
        let mut f = Forest::default();
        let h1 = f.make_heap(Strategy::TwoPass);
        let h2 = f.make_heap(Strategy::TwoPass);
        for k in [1, 2, 3] {
            f.insert(h1, k).unwrap();
        }
        for k in [4, 5, 100] {
            f.insert(h2, k).unwrap();
        }
        let m = f.meld(h1, h2).unwrap();
        for _ in 0..5 {
            f.delete_min(m).unwrap();
        }
        let only_perm = f.make_heap(Strategy::TwoPass);
        f.insert(only_perm, 7).unwrap();
        f.find_min(only_perm).unwrap();
        let t = f.into_trace();
        let fates = node_fates(&t);
        let ctx = op_contexts(&t, &fates);
        assert_eq!(ctx.len(), t.events.len());
        let meld = t.events.iter().position(|e| e.kind == OpKind::Meld).unwrap();
        assert_eq!(ctx[meld].n_raw, 5);
        let last_delete = meld + 5;
        assert_eq!((ctx[last_delete].n_raw, ctx[last_delete].n_clamped), (1, 4));
        let find = ctx.last().unwrap();
        assert_eq!((find.n_raw, find.n_clamped), (0, 4));
    }

    #[test]
    fn sizes_and_masses_small() {
        let (mut f, h) = forest();
        f.insert(h, 1).unwrap();
        f.insert(h, 2).unwrap();
        f.delete_min(h).unwrap();
        f.delete_min(h).unwrap();
        let t = f.into_trace();
        let c = classify(&t);
        let m = &c.structure.masses[0];
        // parent size 1 + 1 = 2; siblings route 1 + s(child) = 2
        assert_eq!((m.by_parent_size, m.by_sibling_sum), (2, 2));
        assert!(c.structure.inconsistencies.is_empty());
    }

    #[test]
    fn mass_with_no_real_right_sibling() {
        // x with size 4 becomes the only real child of y: mass 1 + 4 = 5
        let (mut f, h) = forest();
        let x = f.insert(h, 10).unwrap();
        for k in [11, 12, 13] {
            f.insert(h, k).unwrap();
        }
        let g = f.make_heap(Strategy::TwoPass);
        let y = f.insert(g, 1).unwrap();
        let hg = f.meld(g, h).unwrap();
        for _ in 0..5 {
            f.delete_min(hg).unwrap();
        }
        let t = f.into_trace();
        let c = classify(&t);
        let rec = c.structure.masses.iter().find(|m| m.item == x && m.parent == y).unwrap();
        assert_eq!((rec.by_parent_size, rec.by_sibling_sum), (5, 5));
        let sizes: Vec<u64> = c.structure.sizes.iter().filter(|s| s.item == x).map(|s| s.size).collect();
        assert_eq!(sizes, vec![1, 2, 3, 4]);
    }

    #[test]
    fn phantom_links_leave_sizes_alone() {
        let (mut f, h) = forest();
        let a = f.insert(h, 1).unwrap();
        f.insert(h, 2).unwrap(); // permanent
        f.delete_min(h).unwrap();
        let t = f.into_trace();
        let c = classify(&t);
        assert!(c.structure.masses.is_empty());
        let sizes: Vec<u64> = c.structure.sizes.iter().filter(|s| s.item == a).map(|s| s.size).collect();
        assert_eq!(sizes, vec![1]);
    }

    #[test]
    fn detects_size_decrease() {
        let recs = [
            SizeRecord { item: ItemId(0), op: 0, link: None, size: 1 },
            SizeRecord { item: ItemId(0), op: 1, link: Some(LinkId(0)), size: 3 },
            SizeRecord { item: ItemId(0), op: 2, link: Some(LinkId(0)), size: 2 },
        ];
        assert_eq!(size_decreases(&recs).len(), 1);
    }

    #[test]
    fn annotated_export_lines() {
        let (mut f, h) = forest();
        f.insert(h, 1).unwrap();
        f.insert(h, 2).unwrap();
        f.delete_min(h).unwrap();
        let t = f.into_trace();
        let c = classify(&t);
        let mut buf = Vec::new();
        write_annotated(&t, &c, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().count(), t.events.len() + 1);
        let line: serde_json::Value = serde_json::from_str(text.lines().nth(3).unwrap()).unwrap();
        assert_eq!(line["annotatedLinks"][0]["fate"], "d");
        assert_eq!(line["annotatedLinks"][0]["reality"], "phantom");
        assert_eq!(line["nClamped"], 4);
    }
}
