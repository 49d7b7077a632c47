//! Acceptance suite. Prints one PASS or FAIL line per criterion and exits
//! non-zero if any criterion fails.

use std::collections::BTreeSet;
use std::process::ExitCode;
use std::time::{Duration, Instant};

use pairing_audit::audit::{self, AuditReport};
use pairing_audit::oracle;
use pairing_audit::rng::WorkloadRng;
use pairing_audit::trace::{LinkContext, LinkEvent, LinkId, Orientation};
use pairing_audit::workload::{self, execute, Generator, Workload, WorkloadSpec};
use pairing_audit::{Forest, ItemId, Strategy, Trace, TraceMeta};

const SEEDS: u64 = 5;
const MIXED_SIZE: usize = 10_000;
const DIFF_OPS: usize = 100_000;
const DIFF_BUDGET: Duration = Duration::from_secs(10);

struct Case {
    label: String,
    spec: WorkloadSpec,
    trace: Trace,
    report: AuditReport,
}

fn specs(strategy: Strategy) -> Vec<WorkloadSpec> {
    let mut out = Vec::new();
    for drain in [false, true] {
        for seed in 0..SEEDS {
            let sorting = (2..=14).map(|k| WorkloadSpec::new(Generator::Sorting, 1 << k, seed));
            let mixed = [Generator::DijkstraLike, Generator::MeldHeavy, Generator::RandomMixed]
                .into_iter()
                .map(|g| WorkloadSpec::new(g, MIXED_SIZE, seed));
            out.extend(sorting.chain(mixed).map(|s| s.with_drain_tail(drain).with_strategy(strategy)));
        }
    }
    out
}

fn matrix(strategy: Strategy) -> Vec<Case> {
    let specs = specs(strategy);
    std::thread::scope(|scope| {
        let handles: Vec<_> = specs
            .into_iter()
            .map(|spec| {
                scope.spawn(move || {
                    let w = workload::generate(&spec).expect("valid spec");
                    let trace = workload::run(&w, strategy).expect("generated workloads run");
                    let report = audit::audit_trace(&trace);
                    let label =
                        format!("{} n={} seed={} drain={}", spec.generator, spec.size, spec.seed, spec.drain_tail);
                    Case { label, spec, trace, report }
                })
            })
            .collect();
        handles.into_iter().map(|h| h.join().expect("matrix worker")).collect()
    })
}

type Verdict = Result<String, String>;
type Criterion<'a> = (&'static str, Box<dyn FnOnce() -> Verdict + 'a>);

fn all_zero(cases: &[Case], checks: &[&str]) -> Verdict {
    for case in cases {
        for name in checks {
            let c = case.report.check(name).expect("check present");
            if c.lhs != 0 {
                return Err(format!("{}: {name} = {} ({:?})", case.label, c.lhs, c.note));
            }
        }
    }
    Ok(format!("{} traces, 0 violations", cases.len()))
}

fn bounds_hold(cases: &[Case], checks: &[&str], exact: bool) -> Verdict {
    let mut min_slack = f64::INFINITY;
    for case in cases {
        for name in checks {
            let c = case.report.check(name).expect("check present");
            let ok = if exact { c.lhs as f64 <= c.rhs } else { c.pass };
            if !ok || !c.applicable {
                return Err(format!("{}: {name} lhs {} rhs {}", case.label, c.lhs, c.rhs));
            }
            min_slack = min_slack.min(c.slack);
        }
    }
    Ok(format!("{} traces, min slack {min_slack:.3}", cases.len()))
}

fn differential(strategy: Strategy) -> Verdict {
    let mut slowest = Duration::ZERO;
    let mut items = 0;
    for seed in 0..10 {
        let spec = WorkloadSpec::new(Generator::RandomMixed, DIFF_OPS, seed).with_strategy(strategy);
        let w = workload::generate(&spec).map_err(|e| e.to_string())?;
        if !w.has_distinct_keys() {
            return Err(format!("seed {seed}: keys not distinct"));
        }
        let start = Instant::now();
        let d = oracle::run_both(&w, strategy);
        let took = start.elapsed();
        slowest = slowest.max(took);
        if let Some(div) = d.divergence {
            return Err(format!("seed {seed}: op {} {}", div.op_index, div.what));
        }
        if took > DIFF_BUDGET {
            return Err(format!("seed {seed}: {took:.2?} over budget"));
        }
        items += d.item_comparisons;
    }
    Ok(format!("10 x {DIFF_OPS} ops, {items} item comparisons, slowest seed {slowest:.2?}"))
}

fn structural_counts(cases: &[Case]) -> Verdict {
    let deletions: usize = cases.iter().map(|c| c.report.deletions.len()).sum();
    for case in cases {
        if let Some(d) = case.report.deletions.iter().find(|d| !d.counts_ok() || !d.lemma2_ok()) {
            return Err(format!(
                "{}: op {} c={} pairing={} assembly={}",
                case.label, d.op, d.children, d.pairing, d.assembly
            ));
        }
    }
    all_zero(cases, &["deletion_link_counts", "lemma2_per_deletion"])?;
    Ok(format!("{deletions} deletions, 0 exceptions"))
}

fn theorems(cases: &[Case]) -> Verdict {
    let names = ["theorem1", "theorem2", "theorem3", "theorem4", "theorem5"];
    let summary = bounds_hold(cases, &names, false)?;
    let sorting_1024: Vec<_> =
        cases.iter().filter(|c| c.spec.generator == Generator::Sorting && c.spec.size == 1024).collect();
    for case in &sorting_1024 {
        for name in names {
            let c = case.report.check(name).expect("check present");
            if c.slack <= 0.0 {
                return Err(format!("{}: {name} slack {}", case.label, c.slack));
            }
        }
    }
    let t4 = sorting_1024[0].report.check("theorem4").expect("check present");
    Ok(format!("{summary}; sorting n=1024 theorem4 {} <= {:.1}", t4.lhs, t4.rhs))
}

fn log_inequality() -> Verdict {
    let mut rng = WorkloadRng::new(0x10c);
    let mut min_gap = f64::INFINITY;
    for _ in 0..100_000 {
        let a = 1 + rng.below(1_000_000);
        let b = 1 + rng.below(1_000_000);
        if !audit::check_log_inequality(a as f64, b as f64) {
            return Err(format!("fails at ({a}, {b})"));
        }
        min_gap = min_gap.min(audit::log_inequality_gap(a as f64, b as f64));
    }
    for _ in 0..10_000 {
        let a = (1 + rng.below(1_000_000)) as f64;
        let gap = audit::log_inequality_gap(a, a);
        if gap.abs() > 1e-12 {
            return Err(format!("a = b = {a}: gap {gap:e}"));
        }
    }
    Ok(format!("10^5 pairs, min gap {min_gap:.2e}; equality at a = b within 1e-12"))
}

/// Executes a workload op by op, validating every live heap as it goes.
fn validate_while_running(w: &Workload, strategy: Strategy, every: usize) -> Result<(), String> {
    let mut forest = Forest::new(TraceMeta::new(strategy));
    for (i, op) in w.ops.iter().enumerate() {
        execute(&mut forest, op, strategy).map_err(|e| format!("op {i}: {e}"))?;
        if i % every == 0 || i + 1 == w.ops.len() {
            let heaps: Vec<_> = forest.live_heaps().collect();
            for h in heaps {
                forest.validate(h).map_err(|e| format!("op {i}: {e}"))?;
            }
        }
    }
    Ok(())
}

fn multipass(cases: &[Case]) -> Verdict {
    differential(Strategy::Multipass)?;
    bounds_hold(cases, &["lemma1", "lemma3"], true)?;
    all_zero(cases, &["trace_well_formed", "replay_consistency", "deletion_link_counts"])?;
    for g in [Generator::Sorting, Generator::DijkstraLike, Generator::MeldHeavy, Generator::RandomMixed] {
        for seed in 0..3 {
            let spec = WorkloadSpec::new(g, 2_000, seed).with_strategy(Strategy::Multipass).with_drain_tail(true);
            let w = workload::generate(&spec).map_err(|e| e.to_string())?;
            validate_while_running(&w, Strategy::Multipass, 1).map_err(|e| format!("{g} seed {seed}: {e}"))?;
        }
    }
    let two_pass_only = ["lemma2", "theorem1", "theorem2", "theorem3", "theorem4", "theorem5"];
    for case in cases {
        if !case.report.pass {
            return Err(format!("{}: overall verdict failed", case.label));
        }
        if let Some(name) = two_pass_only.iter().find(|n| case.report.check(n).is_none_or(|c| c.applicable)) {
            return Err(format!("{}: {name} not marked inapplicable", case.label));
        }
    }
    Ok(format!("differential clean, {} traces validated, two-pass bounds inapplicable", cases.len()))
}

fn round_trip(cases: &[Case]) -> Verdict {
    let mut bytes = 0;
    for case in cases.iter().take(100) {
        let first = case.trace.to_jsonl_bytes();
        let parsed = Trace::from_jsonl_slice(&first).map_err(|e| format!("{}: {e}", case.label))?;
        if parsed != case.trace || parsed.to_jsonl_bytes() != first {
            return Err(format!("{}: round trip differs", case.label));
        }
        bytes += first.len();
    }
    Ok(format!("{} traces, {bytes} bytes, byte-identical", cases.len().min(100)))
}

fn perturbation() -> Verdict {
    let spec = WorkloadSpec::new(Generator::RandomMixed, 2_000, 17).with_drain_tail(true);
    let w = workload::generate(&spec).map_err(|e| e.to_string())?;
    let clean = workload::run(&w, Strategy::TwoPass).map_err(|e| e.to_string())?;
    if !audit::audit_trace(&clean).pass {
        return Err("baseline trace does not pass".into());
    }
    let items: Vec<ItemId> = clean.events.iter().filter_map(|e| e.item).collect::<BTreeSet<_>>().into_iter().collect();
    let next_id = clean.links().map(|l| l.id.0).max().unwrap_or(0) + 1;
    let mut rng = WorkloadRng::new(99);
    let mut caught_by = Vec::new();
    for i in 0..10 {
        let mut t = clean.clone();
        let what = if i % 2 == 0 {
            let e = rng.below(t.events.len() as u64) as usize;
            let winner = items[rng.below(items.len() as u64) as usize];
            let loser = items[rng.below(items.len() as u64) as usize];
            let ctx = LinkContext::ALL[rng.below(5) as usize];
            let orient = if ctx.is_deletion_pass() { Orientation::LoserRight } else { Orientation::NotApplicable };
            let link = LinkEvent { id: LinkId(next_id + i), winner, loser, ctx, orient };
            t.events[e].links.push(link);
            format!("extra link at op {e}")
        } else {
            let with_cuts: Vec<usize> = (0..t.events.len()).filter(|&e| !t.events[e].cuts.is_empty()).collect();
            let e = with_cuts[rng.below(with_cuts.len() as u64) as usize];
            let c = rng.below(t.events[e].cuts.len() as u64) as usize;
            t.events[e].cuts.remove(c);
            format!("dropped cut at op {e}")
        };
        let report = audit::audit_trace(&t);
        let failed: Vec<_> = report.failures().map(|c| c.name.clone()).collect();
        if report.pass || failed.is_empty() {
            return Err(format!("undetected: {what}"));
        }
        caught_by.push(failed[0].clone());
    }
    caught_by.sort();
    caught_by.dedup();
    Ok(format!("10/10 detected by {}", caught_by.join(", ")))
}

fn main() -> ExitCode {
    let start = Instant::now();
    let two_pass = matrix(Strategy::TwoPass);
    let multi = matrix(Strategy::Multipass);
    let matrix_time = start.elapsed();

    let criteria: Vec<Criterion> = vec![
        ("differential correctness", Box::new(|| differential(Strategy::TwoPass))),
        ("structural link counts", Box::new(|| structural_counts(&two_pass))),
        ("lemma 1 and lemma 3", Box::new(|| bounds_hold(&two_pass, &["lemma1", "lemma3"], true))),
        ("theorem audits", Box::new(|| theorems(&two_pass))),
        ("size monotonicity", Box::new(|| all_zero(&two_pass, &["size_monotonicity"]))),
        ("mass equivalence", Box::new(|| all_zero(&two_pass, &["mass_equivalence"]))),
        ("log inequality", Box::new(log_inequality)),
        ("multipass variant", Box::new(|| multipass(&multi))),
        ("trace round trip", Box::new(|| round_trip(&two_pass))),
        ("perturbation sensitivity", Box::new(perturbation)),
    ];

    println!("acceptance: workload matrix of {} traces per strategy built in {matrix_time:.2?}", two_pass.len());
    let mut failures = 0;
    for (i, (name, check)) in criteria.into_iter().enumerate() {
        let t = Instant::now();
        let verdict = check();
        let took = t.elapsed();
        match verdict {
            Ok(detail) => println!("PASS {:>2} {name}: {detail} [{took:.2?}]", i + 1),
            Err(detail) => {
                failures += 1;
                println!("FAIL {:>2} {name}: {detail} [{took:.2?}]", i + 1);
            }
        }
    }
    if failures == 0 {
        ExitCode::SUCCESS
    } else {
        println!("{failures} criteria failed");
        ExitCode::FAILURE
    }
}
