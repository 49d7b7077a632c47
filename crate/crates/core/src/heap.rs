//! Pairing heaps over an arena of nodes, with every link and cut recorded.
//!
//! Each node carries three references: its leftmost child, its right
//! sibling, and its left sibling (or parent, when it is a leftmost child).
//! Link and cut are the only structural mutations; both are O(1).

use std::cell::Cell;

use thiserror::Error;

use crate::key::{HeapId, ItemId, Key, Strategy};
use crate::trace::{CutCause, LinkContext, LinkId, OpKind, Orientation, Recorder, Trace, TraceEvent, TraceMeta};

type NodeRef = usize;

#[derive(Clone, Debug)]
struct Node {
    item: ItemId,
    key: Key,
    child: Option<NodeRef>,
    right: Option<NodeRef>,
    left_parent: Option<NodeRef>,
    /// Heap the item was inserted into; follow meld forwarding to find its
    /// current heap.
    home: HeapId,
    live: bool,
    /// Link this node lost and still hangs from.
    parent_link: Option<LinkId>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum HeapState {
    Live,
    MeldedInto(HeapId),
}

#[derive(Clone, Debug)]
struct HeapSlot {
    root: Option<NodeRef>,
    strategy: Strategy,
    len: usize,
    /// Interior-mutable so forwarding chains can be compressed on lookup.
    state: Cell<HeapState>,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum HeapError {
    #[error("unknown heap {0}")]
    UnknownHeap(HeapId),
    #[error("{0} was consumed by a meld")]
    DeadHeap(HeapId),
    #[error("cannot meld {0} with itself")]
    SelfMeld(HeapId),
    #[error("cannot meld {a} ({a_strategy}) with {b} ({b_strategy})")]
    StrategyMismatch { a: HeapId, a_strategy: Strategy, b: HeapId, b_strategy: Strategy },
    #[error("unknown item {0}")]
    UnknownItem(ItemId),
    #[error("{item} is not in {heap}")]
    NotInHeap { item: ItemId, heap: HeapId },
    #[error("new key {new} is greater than the current key {current} of {item}")]
    KeyIncrease { item: ItemId, current: Key, new: Key },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ViolationKind {
    RootHasLeftParent,
    RootHasRightSibling,
    HeapOrder { parent: Key, child: Key },
    BackReference { expected: ItemId, found: Option<ItemId> },
    ChildOrder { left: Option<LinkId>, right: Option<LinkId> },
    DeletedNode,
    WrongHeap,
    Cycle,
    Length { recorded: usize, reachable: usize },
}

/// A structural fault found by [`Forest::validate`], with the item path
/// from the root to the offending node.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("{kind:?} at path {path:?}")]
pub struct Violation {
    pub path: Vec<ItemId>,
    pub kind: ViolationKind,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ValidateError {
    #[error(transparent)]
    Heap(#[from] HeapError),
    #[error(transparent)]
    Violation(#[from] Violation),
}

/// A collection of pairing heaps sharing one node arena and one trace.
#[derive(Debug)]
pub struct Forest {
    nodes: Vec<Node>,
    heaps: Vec<HeapSlot>,
    recorder: Recorder,
    meta: TraceMeta,
}

impl Default for Forest {
    fn default() -> Self {
        Forest::new(TraceMeta::default())
    }
}

impl Forest {
    pub fn new(meta: TraceMeta) -> Self {
        Forest { nodes: Vec::new(), heaps: Vec::new(), recorder: Recorder::default(), meta }
    }

    pub fn events(&self) -> &[TraceEvent] {
        self.recorder.events()
    }

    pub fn into_trace(self) -> Trace {
        Trace { meta: self.meta, events: self.recorder.into_events() }
    }

    pub fn make_heap(&mut self, strategy: Strategy) -> HeapId {
        let id = self.alloc_heap(strategy, None, 0);
        let event = self.recorder.begin(OpKind::MakeHeap);
        event.heap = Some(id);
        event.strategy = Some(strategy);
        self.recorder.finish();
        id
    }

    pub fn find_min(&mut self, h: HeapId) -> Result<Option<(ItemId, i64)>, HeapError> {
        let root = self.live_heap(h)?.root;
        let result = root.map(|r| (self.nodes[r].item, finite(self.nodes[r].key)));
        let event = self.recorder.begin(OpKind::FindMin);
        event.heap = Some(h);
        if let Some((item, key)) = result {
            event.item = Some(item);
            event.key = Some(Key::Finite(key));
        }
        self.recorder.finish();
        Ok(result)
    }

    /// Like [`Forest::find_min`] but records nothing.
    pub fn peek_min(&self, h: HeapId) -> Result<Option<(ItemId, i64)>, HeapError> {
        let root = self.live_heap(h)?.root;
        Ok(root.map(|r| (self.nodes[r].item, finite(self.nodes[r].key))))
    }

    pub fn insert(&mut self, h: HeapId, key: i64) -> Result<ItemId, HeapError> {
        self.live_heap(h)?;
        let x = self.nodes.len();
        let item = ItemId(x as u64);
        self.nodes.push(Node {
            item,
            key: Key::Finite(key),
            child: None,
            right: None,
            left_parent: None,
            home: h,
            live: true,
            parent_link: None,
        });
        let event = self.recorder.begin(OpKind::Insert);
        event.heap = Some(h);
        event.item = Some(item);
        event.key = Some(Key::Finite(key));

        let slot = &self.heaps[h.index()];
        let new_root = match slot.root {
            Some(root) => self.link(root, x, LinkContext::Insertion),
            None => x,
        };
        let slot = &mut self.heaps[h.index()];
        slot.root = Some(new_root);
        slot.len += 1;
        self.recorder.finish();
        Ok(item)
    }

    /// Melds two heaps into a fresh one; both inputs become dead.
    pub fn meld(&mut self, h1: HeapId, h2: HeapId) -> Result<HeapId, HeapError> {
        if h1 == h2 {
            self.live_heap(h1)?;
            return Err(HeapError::SelfMeld(h1));
        }
        let a = self.live_heap(h1)?.clone();
        let b = self.live_heap(h2)?.clone();
        if a.strategy != b.strategy {
            return Err(HeapError::StrategyMismatch { a: h1, a_strategy: a.strategy, b: h2, b_strategy: b.strategy });
        }
        let out = self.alloc_heap(a.strategy, None, a.len + b.len);
        let event = self.recorder.begin(OpKind::Meld);
        event.heap = Some(h1);
        event.heap2 = Some(h2);
        event.result = Some(out);

        let root = match (a.root, b.root) {
            (Some(r1), Some(r2)) => Some(self.link(r1, r2, LinkContext::Meld)),
            (r1, r2) => r1.or(r2),
        };
        self.heaps[out.index()].root = root;
        for h in [h1, h2] {
            let slot = &mut self.heaps[h.index()];
            slot.state.set(HeapState::MeldedInto(out));
            slot.root = None;
            slot.len = 0;
        }
        self.recorder.finish();
        Ok(out)
    }

    /// Lowers the key of `item`. A non-root is cut from its parent and
    /// relinked with the root even when the key is unchanged.
    pub fn decrease_key(&mut self, h: HeapId, item: ItemId, key: i64) -> Result<(), HeapError> {
        let x = self.member(h, item)?;
        let new = Key::Finite(key);
        let current = self.nodes[x].key;
        if new > current {
            return Err(HeapError::KeyIncrease { item, current, new });
        }
        let event = self.recorder.begin(OpKind::DecreaseKey);
        event.heap = Some(h);
        event.item = Some(item);
        event.key = Some(new);
        self.decrease_in_place(h, x, new);
        self.recorder.finish();
        Ok(())
    }

    pub fn delete_min(&mut self, h: HeapId) -> Result<Option<(ItemId, i64)>, HeapError> {
        self.live_heap(h)?;
        self.recorder.begin(OpKind::DeleteMin).heap = Some(h);
        let removed = self.remove_root(h);
        let result = removed.map(|x| (self.nodes[x].item, finite(self.nodes[x].key)));
        if let Some((item, key)) = result {
            let event = self.recorder.current();
            event.item = Some(item);
            event.key = Some(Key::Finite(key));
        }
        self.recorder.finish();
        Ok(result)
    }

    /// Deletes an arbitrary item: decrease its key to minus infinity, then
    /// delete the minimum. Both halves land in one `delete` event.
    pub fn delete(&mut self, h: HeapId, item: ItemId) -> Result<(), HeapError> {
        let x = self.member(h, item)?;
        let original = self.nodes[x].key;
        let event = self.recorder.begin(OpKind::Delete);
        event.heap = Some(h);
        event.item = Some(item);
        self.decrease_in_place(h, x, Key::MinusInfinity);
        let removed = self.remove_root(h);
        debug_assert_eq!(removed, Some(x));
        self.nodes[x].key = original;
        self.recorder.finish();
        Ok(())
    }

    pub fn len(&self, h: HeapId) -> Result<usize, HeapError> {
        Ok(self.live_heap(h)?.len)
    }

    pub fn is_empty(&self, h: HeapId) -> Result<bool, HeapError> {
        Ok(self.live_heap(h)?.root.is_none())
    }

    pub fn strategy(&self, h: HeapId) -> Result<Strategy, HeapError> {
        Ok(self.live_heap(h)?.strategy)
    }

    pub fn is_live(&self, h: HeapId) -> bool {
        self.heaps.get(h.index()).is_some_and(|s| s.state.get() == HeapState::Live)
    }

    pub fn live_heaps(&self) -> impl Iterator<Item = HeapId> + '_ {
        self.heaps.iter().enumerate().filter(|(_, s)| s.state.get() == HeapState::Live).map(|(i, _)| HeapId(i as u64))
    }

    /// Current key of a live item.
    pub fn key_of(&self, item: ItemId) -> Option<i64> {
        self.nodes.get(item.index()).filter(|n| n.live).and_then(|n| n.key.finite())
    }

    /// Live heap currently holding `item`.
    pub fn heap_of(&self, item: ItemId) -> Option<HeapId> {
        let node = self.nodes.get(item.index()).filter(|n| n.live)?;
        let mut h = node.home;
        while let HeapState::MeldedInto(next) = self.heaps[h.index()].state.get() {
            h = next;
        }
        let mut at = node.home;
        while let HeapState::MeldedInto(next) = self.heaps[at.index()].state.get() {
            self.heaps[at.index()].state.set(HeapState::MeldedInto(h));
            at = next;
        }
        Some(h)
    }

    /// Walks the tree of `h` checking heap order, reference consistency,
    /// child order by link time and the recorded length.
    pub fn validate(&self, h: HeapId) -> Result<(), ValidateError> {
        let slot = self.live_heap(h)?;
        let Some(root) = slot.root else {
            if slot.len != 0 {
                return Err(violation(vec![], ViolationKind::Length { recorded: slot.len, reachable: 0 }));
            }
            return Ok(());
        };
        let root_node = &self.nodes[root];
        if root_node.left_parent.is_some() {
            return Err(violation(vec![root_node.item], ViolationKind::RootHasLeftParent));
        }
        if root_node.right.is_some() {
            return Err(violation(vec![root_node.item], ViolationKind::RootHasRightSibling));
        }

        let mut visited = vec![false; self.nodes.len()];
        let mut path: Vec<ItemId> = Vec::new();
        let mut stack: Vec<(NodeRef, usize)> = vec![(root, 0)];
        visited[root] = true;
        let mut reachable = 0usize;
        while let Some((x, depth)) = stack.pop() {
            path.truncate(depth);
            let node = &self.nodes[x];
            path.push(node.item);
            reachable += 1;
            if !node.live {
                return Err(violation(path, ViolationKind::DeletedNode));
            }
            if self.heap_of(node.item) != Some(h) {
                return Err(violation(path, ViolationKind::WrongHeap));
            }
            let mut back = x;
            let mut prev_link: Option<LinkId> = None;
            let mut next = node.child;
            while let Some(c) = next {
                let child = &self.nodes[c];
                let mut at = path.clone();
                at.push(child.item);
                if visited[c] {
                    return Err(violation(at, ViolationKind::Cycle));
                }
                visited[c] = true;
                if child.left_parent != Some(back) {
                    return Err(violation(
                        at,
                        ViolationKind::BackReference {
                            expected: self.nodes[back].item,
                            found: child.left_parent.map(|r| self.nodes[r].item),
                        },
                    ));
                }
                if child.key < node.key {
                    return Err(violation(at, ViolationKind::HeapOrder { parent: node.key, child: child.key }));
                }
                // latest link leftmost: ids strictly decrease left to right
                let ordered = match (prev_link, child.parent_link) {
                    (None, Some(_)) if back == x => true,
                    (Some(l), Some(r)) => l > r,
                    _ => false,
                };
                if !ordered {
                    return Err(violation(at, ViolationKind::ChildOrder { left: prev_link, right: child.parent_link }));
                }
                prev_link = child.parent_link;
                stack.push((c, depth + 1));
                back = c;
                next = child.right;
            }
        }
        if reachable != slot.len {
            return Err(violation(vec![root_node.item], ViolationKind::Length { recorded: slot.len, reachable }));
        }
        Ok(())
    }

    fn alloc_heap(&mut self, strategy: Strategy, root: Option<NodeRef>, len: usize) -> HeapId {
        let id = HeapId(self.heaps.len() as u64);
        self.heaps.push(HeapSlot { root, strategy, len, state: Cell::new(HeapState::Live) });
        id
    }

    fn live_heap(&self, h: HeapId) -> Result<&HeapSlot, HeapError> {
        let slot = self.heaps.get(h.index()).ok_or(HeapError::UnknownHeap(h))?;
        match slot.state.get() {
            HeapState::Live => Ok(slot),
            HeapState::MeldedInto(_) => Err(HeapError::DeadHeap(h)),
        }
    }

    fn member(&self, h: HeapId, item: ItemId) -> Result<NodeRef, HeapError> {
        self.live_heap(h)?;
        if item.index() >= self.nodes.len() {
            return Err(HeapError::UnknownItem(item));
        }
        match self.heap_of(item) {
            Some(found) if found == h => Ok(item.index()),
            _ => Err(HeapError::NotInHeap { item, heap: h }),
        }
    }

    fn decrease_in_place(&mut self, h: HeapId, x: NodeRef, key: Key) {
        self.nodes[x].key = key;
        let root = self.heaps[h.index()].root.expect("member of an empty heap");
        if root != x {
            self.cut(x, CutCause::DecreaseKey);
            let winner = self.link(root, x, LinkContext::DecreaseKey);
            self.heaps[h.index()].root = Some(winner);
        }
    }

    /// Removes the root of `h` and relinks its children by the heap's
    /// strategy. Records the cuts and links into the pending event.
    fn remove_root(&mut self, h: HeapId) -> Option<NodeRef> {
        let slot = &self.heaps[h.index()];
        let x = slot.root?;
        let strategy = slot.strategy;

        let mut roots = Vec::new();
        while let Some(c) = self.nodes[x].child {
            self.cut(c, CutCause::Deletion);
            roots.push(c);
        }
        let new_root = match strategy {
            Strategy::TwoPass => self.two_pass(roots),
            Strategy::Multipass => self.multipass(roots),
        };
        self.nodes[x].live = false;
        let slot = &mut self.heaps[h.index()];
        slot.root = new_root;
        slot.len -= 1;
        Some(x)
    }

    fn two_pass(&mut self, roots: Vec<NodeRef>) -> Option<NodeRef> {
        let paired = self.pairing_pass(roots);
        let mut rest = paired.into_iter().rev();
        let mut rightmost = rest.next()?;
        for left in rest {
            rightmost = self.link(left, rightmost, LinkContext::Assembly);
        }
        Some(rightmost)
    }

    fn multipass(&mut self, mut roots: Vec<NodeRef>) -> Option<NodeRef> {
        while roots.len() > 1 {
            roots = self.pairing_pass(roots);
        }
        roots.pop()
    }

    /// Links first with second, third with fourth, and so on; an odd last
    /// root is carried over unlinked.
    fn pairing_pass(&mut self, roots: Vec<NodeRef>) -> Vec<NodeRef> {
        let mut out = Vec::with_capacity(roots.len().div_ceil(2));
        let mut it = roots.into_iter();
        while let Some(left) = it.next() {
            match it.next() {
                Some(right) => out.push(self.link(left, right, LinkContext::Pairing)),
                None => out.push(left),
            }
        }
        out
    }

    /// Links two roots. The smaller key wins and ties go to `first`. For
    /// deletion-pass links `first` must be the left one of the pair.
    fn link(&mut self, first: NodeRef, second: NodeRef, ctx: LinkContext) -> NodeRef {
        debug_assert!(self.nodes[first].left_parent.is_none() && self.nodes[second].left_parent.is_none());
        let (winner, loser) =
            if self.nodes[second].key < self.nodes[first].key { (second, first) } else { (first, second) };
        let orient = if !ctx.is_deletion_pass() {
            Orientation::NotApplicable
        } else if winner == first {
            Orientation::LoserRight
        } else {
            Orientation::LoserLeft
        };
        let id = self.recorder.link(self.nodes[winner].item, self.nodes[loser].item, ctx, orient);

        let old_child = self.nodes[winner].child;
        if let Some(c) = old_child {
            self.nodes[c].left_parent = Some(loser);
        }
        let l = &mut self.nodes[loser];
        l.right = old_child;
        l.left_parent = Some(winner);
        l.parent_link = Some(id);
        self.nodes[winner].child = Some(loser);
        winner
    }

    /// Detaches `y` and its subtree from its parent.
    fn cut(&mut self, y: NodeRef, cause: CutCause) {
        let lp = self.nodes[y].left_parent.expect("cut of a root");
        let right = self.nodes[y].right;
        if self.nodes[lp].child == Some(y) {
            self.nodes[lp].child = right;
        } else {
            self.nodes[lp].right = right;
        }
        if let Some(r) = right {
            self.nodes[r].left_parent = Some(lp);
        }
        let node = &mut self.nodes[y];
        node.left_parent = None;
        node.right = None;
        let link = node.parent_link.take().expect("child without a parent link");
        self.recorder.cut(link, cause);
    }
}

fn finite(key: Key) -> i64 {
    key.finite().expect("public results never carry the sentinel")
}

fn violation(path: Vec<ItemId>, kind: ViolationKind) -> ValidateError {
    ValidateError::Violation(Violation { path, kind })
}
