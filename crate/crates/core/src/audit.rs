//! Lemma and theorem checks over a classified trace.
//!
//! Every check is an inequality `lhs <= rhs` with an exact integer left side
//! and a real right side. Logarithmic terms are evaluated at the clamped
//! per-operation `n` (at least 4). A delete contributes one decrease-key term
//! and one deletion term.
//!
//! The bounds belong to the two-pass heap. On a trace containing multipass
//! deletions, the per-deletion lemma and all five theorems are reported as
//! inapplicable and left out of the overall verdict.

use std::collections::{BTreeMap, HashMap};
use std::io::{self, Write};

use serde::Serialize;

use crate::classify::{self, Classification, LinkFate, OpContext, Reality};
use crate::key::{HeapId, Strategy};
use crate::trace::{CutCause, LinkContext, OpKind, Orientation, Trace};
use crate::workload;

pub const TOLERANCE: f64 = 1e-6;
pub const LG_E: f64 = std::f64::consts::LOG2_E;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BoundCheck {
    pub name: String,
    pub lhs: u64,
    pub rhs: f64,
    pub slack: f64,
    pub pass: bool,
    pub applicable: bool,
    /// Right-side terms whose operation saw fewer than four temporary nodes.
    pub clamped_terms: u64,
    /// The right side evaluated at the raw `n` (at least 1) instead.
    pub rhs_unclamped: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

impl BoundCheck {
    fn real(name: &str, lhs: u64, rhs: Rhs) -> Self {
        let slack = rhs.value - lhs as f64;
        let pass = lhs as f64 <= rhs.value + TOLERANCE;
        let note = (!pass && rhs.clamped_terms > 0 && slack > -1.0)
            .then(|| "fails by less than one bit and relies on clamped n".to_string());
        BoundCheck {
            name: name.to_string(),
            lhs,
            rhs: rhs.value,
            slack,
            pass,
            applicable: true,
            clamped_terms: rhs.clamped_terms,
            rhs_unclamped: rhs.unclamped,
            note,
        }
    }

    fn exact(name: &str, lhs: u64, rhs: u64) -> Self {
        BoundCheck {
            name: name.to_string(),
            lhs,
            rhs: rhs as f64,
            slack: rhs as f64 - lhs as f64,
            pass: lhs <= rhs,
            applicable: true,
            clamped_terms: 0,
            rhs_unclamped: rhs as f64,
            note: None,
        }
    }

    /// A count of problems that must be zero.
    fn zero(name: &str, violations: u64, note: Option<String>) -> Self {
        BoundCheck { note, ..Self::exact(name, violations, 0) }
    }

    fn inapplicable(mut self, why: &str) -> Self {
        self.applicable = false;
        self.note = Some(why.to_string());
        self
    }
}

#[derive(Clone, Copy, Debug, Default)]
struct Rhs {
    value: f64,
    unclamped: f64,
    clamped_terms: u64,
}

impl Rhs {
    fn constant(c: f64) -> Self {
        Rhs { value: c, unclamped: c, clamped_terms: 0 }
    }

    /// Adds `a * lg n + b` for one operation.
    fn add(&mut self, ctx: &OpContext, a: f64, b: f64) {
        self.value += a * (ctx.n_clamped as f64).log2() + b;
        self.unclamped += a * (ctx.n_raw.max(1) as f64).log2() + b;
        if ctx.n_raw < classify::MIN_N && a != 0.0 {
            self.clamped_terms += 1;
        }
    }
}

/// Link counts for one deletion.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct DeletionCheck {
    pub op: u64,
    pub strategy: Strategy,
    pub children: u64,
    pub pairing: u64,
    pub assembly: u64,
    pub expected_pairing: u64,
    pub expected_assembly: u64,
}

impl DeletionCheck {
    pub fn counts_ok(&self) -> bool {
        self.pairing == self.expected_pairing && self.assembly == self.expected_assembly
    }

    pub fn lemma2_ok(&self) -> bool {
        self.assembly <= self.pairing
    }
}

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize)]
pub struct CountRow {
    pub ctx: LinkContext,
    pub fate: LinkFate,
    pub reality: Reality,
    pub count: u64,
}

#[derive(Clone, Debug, Serialize)]
pub struct AuditReport {
    pub pass: bool,
    pub events: usize,
    pub links: usize,
    pub multipass: bool,
    pub checks: Vec<BoundCheck>,
    pub deletions: Vec<DeletionCheck>,
    pub counts: Vec<CountRow>,
}

impl AuditReport {
    pub fn check(&self, name: &str) -> Option<&BoundCheck> {
        self.checks.iter().find(|c| c.name == name)
    }

    pub fn failures(&self) -> impl Iterator<Item = &BoundCheck> + '_ {
        self.checks.iter().filter(|c| c.applicable && !c.pass)
    }

    pub fn write_json<W: Write>(&self, mut w: W) -> io::Result<()> {
        serde_json::to_writer_pretty(&mut w, self)?;
        w.write_all(b"\n")
    }

    /// One row per check: `name,lhs,rhs,slack,pass,applicable`.
    pub fn write_csv<W: Write>(&self, w: W) -> io::Result<()> {
        #[derive(Serialize)]
        struct Row<'a> {
            name: &'a str,
            lhs: u64,
            rhs: f64,
            slack: f64,
            pass: bool,
            applicable: bool,
        }
        let mut out = csv::Writer::from_writer(w);
        for c in &self.checks {
            out.serialize(Row {
                name: &c.name,
                lhs: c.lhs,
                rhs: c.rhs,
                slack: c.slack,
                pass: c.pass,
                applicable: c.applicable,
            })?;
        }
        out.flush()
    }
}

/// Per-kind operation totals used on the right-hand sides.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct OpCounts {
    pub inserts: u64,
    pub melds: u64,
    /// Decrease-keys, deletes included.
    pub decrease_keys: u64,
    /// Non-empty delete-mins plus deletes.
    pub deletions: u64,
}

pub fn op_counts(trace: &Trace) -> OpCounts {
    let mut c = OpCounts::default();
    for e in &trace.events {
        c.inserts += (e.kind == OpKind::Insert) as u64;
        c.melds += (e.kind == OpKind::Meld) as u64;
        c.decrease_keys += e.is_decrease_key() as u64;
        c.deletions += e.is_deletion() as u64;
    }
    c
}

fn count_links(c: &Classification, pred: impl Fn(&classify::LinkAnnotation) -> bool) -> u64 {
    c.links.iter().filter(|a| pred(a)).count() as u64
}

pub fn check_lemma1(trace: &Trace, c: &Classification) -> BoundCheck {
    let lhs = count_links(c, |a| matches!(a.ctx, LinkContext::Insertion | LinkContext::Meld));
    BoundCheck::exact("lemma1", lhs, op_counts(trace).inserts)
}

pub fn check_lemma2(deletions: &[DeletionCheck]) -> BoundCheck {
    let assembly: u64 = deletions.iter().map(|d| d.assembly).sum();
    let pairing: u64 = deletions.iter().map(|d| d.pairing).sum();
    BoundCheck::exact("lemma2", assembly, pairing)
}

pub fn check_lemma3(trace: &Trace, c: &Classification) -> BoundCheck {
    let counts = op_counts(trace);
    let flinks = count_links(c, |a| a.fate == LinkFate::FLink);
    BoundCheck::exact("lemma3", flinks + counts.deletions, counts.inserts)
}

fn real_right_assembly(c: &Classification) -> u64 {
    count_links(c, |a| {
        a.ctx == LinkContext::Assembly && a.reality == Reality::Real && a.orient == Orientation::LoserRight
    })
}

fn real_pairing(c: &Classification) -> u64 {
    count_links(c, |a| a.ctx == LinkContext::Pairing && a.reality == Reality::Real)
}

pub fn check_theorem1(trace: &Trace, c: &Classification) -> BoundCheck {
    let counts = op_counts(trace);
    let lhs = count_links(c, |a| a.ctx == LinkContext::Pairing);
    let rhs = 4 * counts.inserts + 3 * counts.decrease_keys + 2 * real_right_assembly(c) + 2 * real_pairing(c);
    BoundCheck::exact("theorem1", lhs, rhs)
}

/// Sums `dk_a * lg n + dk_b` over decrease-keys, `del_a * lg n + del_b` over
/// deletions, and the same for inserts and melds.
#[derive(Clone, Copy, Default)]
struct Terms {
    insert: (f64, f64),
    meld: (f64, f64),
    decrease_key: (f64, f64),
    deletion: (f64, f64),
}

fn sum_terms(trace: &Trace, c: &Classification, t: Terms) -> Rhs {
    let mut rhs = Rhs::constant(0.0);
    for (e, ctx) in trace.events.iter().zip(&c.contexts) {
        if e.kind == OpKind::Insert {
            rhs.add(ctx, t.insert.0, t.insert.1);
        }
        if e.kind == OpKind::Meld {
            rhs.add(ctx, t.meld.0, t.meld.1);
        }
        if e.is_decrease_key() {
            rhs.add(ctx, t.decrease_key.0, t.decrease_key.1);
        }
        if e.is_deletion() {
            rhs.add(ctx, t.deletion.0, t.deletion.1);
        }
    }
    rhs
}

pub fn check_theorem2(trace: &Trace, c: &Classification) -> BoundCheck {
    let rhs = sum_terms(trace, c, Terms { decrease_key: (0.5, 0.0), deletion: (1.0, 0.0), ..Terms::default() });
    BoundCheck::real("theorem2", real_right_assembly(c), rhs)
}

pub fn check_theorem3(trace: &Trace, c: &Classification) -> BoundCheck {
    let rhs = sum_terms(trace, c, Terms { decrease_key: (1.0, 0.0), deletion: (1.5, LG_E / 2.0), ..Terms::default() });
    BoundCheck::real("theorem3", real_pairing(c), rhs)
}

pub fn check_theorem4(trace: &Trace, c: &Classification) -> BoundCheck {
    let mut rhs =
        sum_terms(trace, c, Terms { decrease_key: (6.0, 7.0), deletion: (10.0, 2.0 * LG_E), ..Terms::default() });
    let fixed = 9.0 * op_counts(trace).inserts as f64;
    rhs.value += fixed;
    rhs.unclamped += fixed;
    BoundCheck::real("theorem4", c.links.len() as u64, rhs)
}

pub fn check_theorem5(trace: &Trace, c: &Classification) -> BoundCheck {
    let rhs = sum_terms(
        trace,
        c,
        Terms { insert: (1.0, 1.0), meld: (1.0, 0.0), decrease_key: (1.0, 3.0), deletion: (2.0, 0.0) },
    );
    BoundCheck::real("theorem5", c.links.len() as u64, rhs)
}

/// `2 lg(a + b) >= lg a + lg b + 2`, allowing for rounding at equality.
pub fn check_log_inequality(a: f64, b: f64) -> bool {
    log_inequality_gap(a, b) >= -1e-12
}

/// `2 lg(a + b) - (lg a + lg b + 2)`; zero exactly when `a == b`.
pub fn log_inequality_gap(a: f64, b: f64) -> f64 {
    2.0 * (a + b).log2() - (a.log2() + b.log2() + 2.0)
}

fn heap_strategies(trace: &Trace) -> HashMap<HeapId, Strategy> {
    let mut map = HashMap::new();
    for e in &trace.events {
        match e.kind {
            OpKind::MakeHeap => {
                if let Some(h) = e.heap {
                    map.insert(h, e.strategy.unwrap_or(trace.meta.strategy));
                }
            }
            OpKind::Meld => {
                let s = e.heap.and_then(|h| map.get(&h).copied()).unwrap_or(trace.meta.strategy);
                if let Some(out) = e.result {
                    map.insert(out, s);
                }
            }
            _ => {}
        }
    }
    map
}

pub fn deletion_checks(trace: &Trace) -> Vec<DeletionCheck> {
    let strategies = heap_strategies(trace);
    trace
        .events
        .iter()
        .filter(|e| e.is_deletion())
        .map(|e| {
            let strategy = e.heap.and_then(|h| strategies.get(&h).copied()).unwrap_or(trace.meta.strategy);
            let children = e.cuts.iter().filter(|c| c.cause == CutCause::Deletion).count() as u64;
            let pairing = e.links.iter().filter(|l| l.ctx == LinkContext::Pairing).count() as u64;
            let assembly = e.links.iter().filter(|l| l.ctx == LinkContext::Assembly).count() as u64;
            let (expected_pairing, expected_assembly) = match strategy {
                Strategy::TwoPass => (children / 2, children.div_ceil(2).saturating_sub(1)),
                Strategy::Multipass => (children.saturating_sub(1), 0),
            };
            DeletionCheck { op: e.op, strategy, children, pairing, assembly, expected_pairing, expected_assembly }
        })
        .collect()
}

pub fn counts_table(c: &Classification) -> Vec<CountRow> {
    let mut table: BTreeMap<(LinkContext, LinkFate, Reality), u64> = BTreeMap::new();
    for a in &c.links {
        *table.entry((a.ctx, a.fate, a.reality)).or_insert(0) += 1;
    }
    table.into_iter().map(|((ctx, fate, reality), count)| CountRow { ctx, fate, reality, count }).collect()
}

fn first<T: std::fmt::Display>(items: impl IntoIterator<Item = T>) -> Option<String> {
    items.into_iter().next().map(|x| x.to_string())
}

/// Classifies the trace and runs every check.
pub fn audit_trace(trace: &Trace) -> AuditReport {
    let c = classify::classify(trace);
    audit_classified(trace, &c)
}

pub fn audit_classified(trace: &Trace, c: &Classification) -> AuditReport {
    let deletions = deletion_checks(trace);
    let multipass = deletions.iter().any(|d| d.strategy == Strategy::Multipass);

    let mut checks = Vec::new();
    let malformed = trace.check_well_formed();
    checks.push(BoundCheck::zero("trace_well_formed", malformed.len() as u64, first(&malformed)));
    let replay = workload::verify_replay(trace);
    checks.push(BoundCheck::zero("replay_consistency", replay.is_err() as u64, replay.err().map(|e| e.to_string())));
    let inconsistent = &c.structure.inconsistencies;
    checks.push(BoundCheck::zero("structure_consistency", inconsistent.len() as u64, first(inconsistent)));

    let bad_counts: Vec<_> = deletions.iter().filter(|d| !d.counts_ok()).collect();
    checks.push(BoundCheck::zero(
        "deletion_link_counts",
        bad_counts.len() as u64,
        bad_counts.first().map(|d| format!("op {}: {} children", d.op, d.children)),
    ));
    let lemma2_bad = deletions.iter().filter(|d| !d.lemma2_ok()).count() as u64;
    let decreases = classify::size_decreases(&c.structure.sizes);
    checks.push(BoundCheck::zero(
        "size_monotonicity",
        decreases.len() as u64,
        decreases.first().map(|(r, prev)| format!("op {}: {} size {} -> {}", r.op, r.item, prev, r.size)),
    ));
    let mass_bad: Vec<_> = c.structure.masses.iter().filter(|m| !m.agrees()).collect();
    checks.push(BoundCheck::zero(
        "mass_equivalence",
        mass_bad.len() as u64,
        mass_bad.first().map(|m| format!("op {}: {} {} vs {}", m.op, m.item, m.by_parent_size, m.by_sibling_sum)),
    ));

    checks.push(check_lemma1(trace, c));
    let two_pass_only = [
        BoundCheck::zero("lemma2_per_deletion", lemma2_bad, None),
        check_lemma2(&deletions),
        check_theorem1(trace, c),
        check_theorem2(trace, c),
        check_theorem3(trace, c),
        check_theorem4(trace, c),
        check_theorem5(trace, c),
    ];
    checks.push(check_lemma3(trace, c));
    for check in two_pass_only {
        checks.push(if multipass { check.inapplicable("bound is for two-pass deletions") } else { check });
    }

    let pass = checks.iter().all(|c| !c.applicable || c.pass);
    AuditReport {
        pass,
        events: trace.events.len(),
        links: c.links.len(),
        multipass,
        checks,
        deletions,
        counts: counts_table(c),
    }
}
