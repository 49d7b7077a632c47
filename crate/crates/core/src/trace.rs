//! Operation traces: every public operation with the links and cuts it made.
//!
//! On disk a trace is JSON Lines: a metadata object on the first line, then
//! one [`TraceEvent`] per line in execution order.
//!
//! ```text
//! {"format":"pairing-trace","version":1,"strategy":"twopass","seed":0,"generator":"sorting"}
//! {"op":0,"kind":"make_heap","heap":0,"strategy":"twopass","links":[],"cuts":[]}
//! {"op":1,"kind":"insert","heap":0,"item":0,"key":5,"links":[],"cuts":[]}
//! {"op":2,"kind":"insert","heap":0,"item":1,"key":3,"links":[{"id":0,"winner":1,"loser":0,"ctx":"insertion","orient":"na"}],"cuts":[]}
//! ```

use std::collections::HashMap;
use std::fmt;
use std::io::{self, BufRead, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::key::{HeapId, ItemId, Key, Strategy};

pub const TRACE_FORMAT: &str = "pairing-trace";
pub const TRACE_VERSION: u32 = 1;

/// Sequence number of a link, unique within a trace.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct LinkId(pub u64);

impl fmt::Display for LinkId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "link#{}", self.0)
    }
}

/// The operation (or deletion pass) that performed a link.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LinkContext {
    Insertion,
    Meld,
    DecreaseKey,
    Pairing,
    Assembly,
}

impl LinkContext {
    pub const ALL: [LinkContext; 5] = [
        LinkContext::Insertion,
        LinkContext::Meld,
        LinkContext::DecreaseKey,
        LinkContext::Pairing,
        LinkContext::Assembly,
    ];

    /// Links made while relinking the root list of a deletion.
    pub fn is_deletion_pass(self) -> bool {
        matches!(self, LinkContext::Pairing | LinkContext::Assembly)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            LinkContext::Insertion => "insertion",
            LinkContext::Meld => "meld",
            LinkContext::DecreaseKey => "decrease_key",
            LinkContext::Pairing => "pairing",
            LinkContext::Assembly => "assembly",
        }
    }
}

/// Position of the loser relative to the winner on the root list just
/// before a deletion-pass link.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Orientation {
    #[serde(rename = "left")]
    LoserLeft,
    #[serde(rename = "right")]
    LoserRight,
    #[serde(rename = "na")]
    NotApplicable,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CutCause {
    Deletion,
    DecreaseKey,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LinkEvent {
    pub id: LinkId,
    pub winner: ItemId,
    pub loser: ItemId,
    pub ctx: LinkContext,
    pub orient: Orientation,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CutEvent {
    #[serde(rename = "cutLink")]
    pub cut_link: LinkId,
    pub cause: CutCause,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OpKind {
    MakeHeap,
    Insert,
    Meld,
    DecreaseKey,
    DeleteMin,
    Delete,
    FindMin,
}

/// One public operation and everything it did to the forest.
///
/// Field use by kind:
/// - `make_heap`: `heap` is the new heap, `strategy` its delete-min strategy.
/// - `insert`: `heap`, new `item`, its `key`.
/// - `meld`: inputs `heap` and `heap2`, fresh output `result`.
/// - `decrease_key`: `heap`, `item`, new `key`.
/// - `delete_min` / `find_min`: `heap`; `item` and `key` of the result, absent when empty.
/// - `delete`: `heap`, `item`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TraceEvent {
    pub op: u64,
    pub kind: OpKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub heap: Option<HeapId>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub heap2: Option<HeapId>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub result: Option<HeapId>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub strategy: Option<Strategy>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub item: Option<ItemId>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub key: Option<Key>,
    pub links: Vec<LinkEvent>,
    pub cuts: Vec<CutEvent>,
}

/// A link or cut inside an event, in execution order.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Step<'a> {
    Link(&'a LinkEvent),
    Cut(&'a CutEvent),
}

impl TraceEvent {
    pub fn new(op: u64, kind: OpKind) -> Self {
        TraceEvent {
            op,
            kind,
            heap: None,
            heap2: None,
            result: None,
            strategy: None,
            item: None,
            key: None,
            links: Vec::new(),
            cuts: Vec::new(),
        }
    }

    /// Links and cuts merged back into execution order.
    ///
    /// Every operation runs in the same phase order: decrease-key cut,
    /// decrease-key link, deletion cuts, then the remaining links. Links and
    /// cuts keep their recorded order within a phase.
    pub fn steps(&self) -> Vec<Step<'_>> {
        fn cut_phase(c: &CutEvent) -> u8 {
            match c.cause {
                CutCause::DecreaseKey => 0,
                CutCause::Deletion => 2,
            }
        }
        fn link_phase(l: &LinkEvent) -> u8 {
            match l.ctx {
                LinkContext::DecreaseKey => 1,
                _ => 3,
            }
        }
        let mut steps: Vec<(u8, Step<'_>)> = self
            .cuts
            .iter()
            .map(|c| (cut_phase(c), Step::Cut(c)))
            .chain(self.links.iter().map(|l| (link_phase(l), Step::Link(l))))
            .collect();
        // stable: preserves recorded order inside a phase
        steps.sort_by_key(|(phase, _)| *phase);
        steps.into_iter().map(|(_, s)| s).collect()
    }

    /// True for operations that remove a node (`delete_min` on a non-empty
    /// heap, or `delete`).
    pub fn is_deletion(&self) -> bool {
        match self.kind {
            OpKind::DeleteMin => self.item.is_some(),
            OpKind::Delete => true,
            _ => false,
        }
    }

    /// True for operations that include a decrease-key (`decrease_key` and
    /// the decrease-to-minus-infinity half of `delete`).
    pub fn is_decrease_key(&self) -> bool {
        matches!(self.kind, OpKind::DecreaseKey | OpKind::Delete)
    }
}

/// First line of a serialized trace.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TraceMeta {
    pub format: String,
    pub version: u32,
    pub strategy: Strategy,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub generator: Option<String>,
}

impl TraceMeta {
    pub fn new(strategy: Strategy) -> Self {
        TraceMeta { format: TRACE_FORMAT.to_string(), version: TRACE_VERSION, strategy, seed: None, generator: None }
    }
}

impl Default for TraceMeta {
    fn default() -> Self {
        TraceMeta::new(Strategy::default())
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Default)]
pub struct Trace {
    pub meta: TraceMeta,
    pub events: Vec<TraceEvent>,
}

#[derive(Debug, Error)]
pub enum TraceError {
    #[error("I/O error: {0}")]
    Io(#[from] io::Error),
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("empty stream: missing metadata line")]
    MissingHeader,
}

impl Trace {
    pub fn new(meta: TraceMeta) -> Self {
        Trace { meta, events: Vec::new() }
    }

    pub fn links(&self) -> impl Iterator<Item = &LinkEvent> + '_ {
        self.events.iter().flat_map(|e| e.links.iter())
    }

    pub fn cuts(&self) -> impl Iterator<Item = &CutEvent> + '_ {
        self.events.iter().flat_map(|e| e.cuts.iter())
    }

    pub fn write_jsonl<W: Write>(&self, mut w: W) -> io::Result<()> {
        serde_json::to_writer(&mut w, &self.meta)?;
        w.write_all(b"\n")?;
        for event in &self.events {
            serde_json::to_writer(&mut w, event)?;
            w.write_all(b"\n")?;
        }
        w.flush()
    }

    pub fn to_jsonl_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        self.write_jsonl(&mut out).expect("writing to a Vec cannot fail");
        out
    }

    pub fn read_jsonl<R: BufRead>(r: R) -> Result<Trace, TraceError> {
        let mut lines = r.lines().enumerate();
        let meta: TraceMeta = loop {
            match lines.next() {
                None => return Err(TraceError::MissingHeader),
                Some((_, line)) if line.as_ref().is_ok_and(|l| l.trim().is_empty()) => continue,
                Some((idx, line)) => break parse_line(idx + 1, &line?)?,
            }
        };
        if meta.format != TRACE_FORMAT {
            return Err(TraceError::Parse { line: 1, message: format!("unexpected format `{}`", meta.format) });
        }
        if meta.version != TRACE_VERSION {
            return Err(TraceError::Parse { line: 1, message: format!("unsupported version {}", meta.version) });
        }
        let mut events = Vec::new();
        for (idx, line) in lines {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            events.push(parse_line(idx + 1, &line)?);
        }
        Ok(Trace { meta, events })
    }

    pub fn from_jsonl_slice(bytes: &[u8]) -> Result<Trace, TraceError> {
        Trace::read_jsonl(bytes)
    }

    /// Structural sanity of a trace read from outside: dense op indices,
    /// increasing link ids, orientation consistent with context, links only
    /// between roots, and every cut naming the link currently holding its
    /// loser. Returns every problem found.
    pub fn check_well_formed(&self) -> Vec<String> {
        let mut problems = Vec::new();
        let mut last_link: Option<LinkId> = None;
        let mut links: HashMap<LinkId, (ItemId, ItemId)> = HashMap::new();
        // item -> link it currently hangs from
        let mut parent_link: HashMap<ItemId, LinkId> = HashMap::new();

        for (expected_op, event) in self.events.iter().enumerate() {
            if event.op != expected_op as u64 {
                problems.push(format!("event at position {expected_op} has op index {}", event.op));
            }
            for link in &event.links {
                if last_link.is_some_and(|prev| link.id <= prev) {
                    problems.push(format!("op {}: {} is not increasing", event.op, link.id));
                }
                last_link = Some(link.id);
                let positional = link.ctx.is_deletion_pass();
                if positional == (link.orient == Orientation::NotApplicable) {
                    problems.push(format!(
                        "op {}: {} has orientation {:?} for context {}",
                        event.op,
                        link.id,
                        link.orient,
                        link.ctx.as_str()
                    ));
                }
            }
            for step in event.steps() {
                match step {
                    Step::Link(link) => {
                        if link.winner == link.loser {
                            problems.push(format!("op {}: {} links an item to itself", event.op, link.id));
                        }
                        for end in [link.winner, link.loser] {
                            if let Some(held) = parent_link.get(&end) {
                                problems.push(format!(
                                    "op {}: {} uses {end}, which is not a root (held by {held})",
                                    event.op, link.id
                                ));
                            }
                        }
                        if links.insert(link.id, (link.winner, link.loser)).is_some() {
                            problems.push(format!("op {}: duplicate {}", event.op, link.id));
                        }
                        parent_link.insert(link.loser, link.id);
                    }
                    Step::Cut(cut) => match links.get(&cut.cut_link) {
                        None => problems.push(format!("op {}: cut of unknown {}", event.op, cut.cut_link)),
                        Some(&(_, loser)) => {
                            if parent_link.get(&loser) == Some(&cut.cut_link) {
                                parent_link.remove(&loser);
                            } else {
                                problems.push(format!(
                                    "op {}: cut of {} which no longer holds {loser}",
                                    event.op, cut.cut_link
                                ));
                            }
                        }
                    },
                }
            }
        }
        problems
    }
}

fn parse_line<T: serde::de::DeserializeOwned>(line: usize, text: &str) -> Result<T, TraceError> {
    serde_json::from_str(text).map_err(|e| TraceError::Parse { line, message: e.to_string() })
}

/// Appends events for one forest. Link ids are assigned here.
#[derive(Debug, Default)]
pub(crate) struct Recorder {
    events: Vec<TraceEvent>,
    pending: Option<TraceEvent>,
    next_link: u64,
}

impl Recorder {
    pub(crate) fn begin(&mut self, kind: OpKind) -> &mut TraceEvent {
        debug_assert!(self.pending.is_none(), "operation already in progress");
        let op = self.events.len() as u64;
        self.pending.insert(TraceEvent::new(op, kind))
    }

    pub(crate) fn current(&mut self) -> &mut TraceEvent {
        self.pending.as_mut().expect("no operation in progress")
    }

    pub(crate) fn link(&mut self, winner: ItemId, loser: ItemId, ctx: LinkContext, orient: Orientation) -> LinkId {
        let id = LinkId(self.next_link);
        self.next_link += 1;
        self.current().links.push(LinkEvent { id, winner, loser, ctx, orient });
        id
    }

    pub(crate) fn cut(&mut self, cut_link: LinkId, cause: CutCause) {
        self.current().cuts.push(CutEvent { cut_link, cause });
    }

    pub(crate) fn finish(&mut self) {
        let event = self.pending.take().expect("no operation in progress");
        self.events.push(event);
    }

    pub(crate) fn events(&self) -> &[TraceEvent] {
        &self.events
    }

    pub(crate) fn into_events(self) -> Vec<TraceEvent> {
        self.events
    }
}
