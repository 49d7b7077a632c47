use std::fs::File;
use std::io::{self, BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use pairing_audit::audit::{self, AuditReport};
use pairing_audit::classify;
use pairing_audit::oracle::{self, DivergenceReport};
use pairing_audit::workload::{self, Generator, Workload, WorkloadSpec};
use pairing_audit::{Strategy, Trace};

/// Pairing heap workbench: generate workloads, run them with tracing, and
/// audit the traces against the link-count bounds.
#[derive(Parser)]
#[command(name = "pairing-audit", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a workload file.
    Gen {
        #[command(flatten)]
        spec: SpecArgs,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Execute a workload and write its trace.
    Run {
        /// Workload file, or `-` for stdin.
        workload: PathBuf,
        /// Defaults to the strategy recorded in the workload.
        #[arg(long)]
        strategy: Option<Strategy>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Classify a trace and check every bound. Exits 1 if any check fails.
    Audit {
        /// Trace file, or `-` for stdin.
        trace: PathBuf,
        #[arg(long, value_enum, default_value_t = Format::Json)]
        format: Format,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Also write the trace with fates, reality and per-operation n.
        #[arg(long)]
        annotated: Option<PathBuf>,
    },
    /// Run a workload against the heap and the reference queue. Exits 1 on divergence.
    Diff {
        /// Workload file, or `-` for stdin.
        workload: PathBuf,
        #[arg(long)]
        strategy: Option<Strategy>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Generate, run, diff and audit in one step.
    Report {
        #[command(flatten)]
        spec: SpecArgs,
        #[arg(long, value_enum, default_value_t = Format::Json)]
        format: Format,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Args)]
struct SpecArgs {
    #[arg(long, default_value = "sorting")]
    generator: Generator,
    #[arg(long, default_value_t = 1024)]
    size: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = Strategy::TwoPass)]
    strategy: Strategy,
    /// Delete-min every remaining heap until empty at the end.
    #[arg(long)]
    drain_tail: bool,
}

impl SpecArgs {
    fn spec(&self) -> WorkloadSpec {
        WorkloadSpec::new(self.generator, self.size, self.seed)
            .with_strategy(self.strategy)
            .with_drain_tail(self.drain_tail)
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Json,
    Csv,
}

#[derive(Debug, thiserror::Error)]
#[error("{0}")]
struct Failure(String);

impl Failure {
    fn new(context: impl std::fmt::Display, e: impl std::fmt::Display) -> Self {
        Failure(format!("{context}: {e}"))
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli.command) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("pairing-audit: {e}");
            ExitCode::from(2)
        }
    }
}

/// `Ok(false)` means the command ran but found a failure.
fn dispatch(command: Command) -> Result<bool, Failure> {
    match command {
        Command::Gen { spec, out } => {
            let w = workload::generate(&spec.spec()).map_err(|e| Failure::new("invalid workload spec", e))?;
            write_output(out.as_deref(), |f| w.write_jsonl(f))?;
            Ok(true)
        }
        Command::Run { workload, strategy, out } => {
            let w = read_workload(&workload)?;
            let strategy = strategy_for(&w, strategy);
            let trace = workload::run(&w, strategy).map_err(|e| Failure::new(workload.display(), e))?;
            write_output(out.as_deref(), |f| trace.write_jsonl(f))?;
            Ok(true)
        }
        Command::Audit { trace, format, out, annotated } => {
            let t = read_trace(&trace)?;
            let c = classify::classify(&t);
            if let Some(path) = annotated {
                write_output(Some(&path), |f| classify::write_annotated(&t, &c, f))?;
            }
            let report = audit::audit_classified(&t, &c);
            write_report(&report, format, out.as_deref())?;
            summarize(&report);
            Ok(report.pass)
        }
        Command::Diff { workload, strategy, out } => {
            let w = read_workload(&workload)?;
            let d = oracle::run_both(&w, strategy_for(&w, strategy));
            write_output(out.as_deref(), |f| json_line(f, &d))?;
            if let Some(div) = &d.divergence {
                eprintln!("diverged at op {}: {}", div.op_index, div.what);
            }
            Ok(d.is_clean())
        }
        Command::Report { spec, format, out } => {
            let spec = spec.spec();
            let w = workload::generate(&spec).map_err(|e| Failure::new("invalid workload spec", e))?;
            let differential = oracle::run_both(&w, spec.strategy);
            let trace = workload::run(&w, spec.strategy).map_err(|e| Failure::new("run", e))?;
            let audit = audit::audit_trace(&trace);
            let pass = differential.is_clean() && audit.pass;
            match format {
                Format::Json => {
                    let full = FullReport { pass, spec: &spec, differential: &differential, audit: &audit };
                    write_output(out.as_deref(), |f| json_line(f, &full))?;
                }
                Format::Csv => write_output(out.as_deref(), |f| audit.write_csv(f))?,
            }
            if !differential.is_clean() {
                eprintln!("differential run diverged");
            }
            summarize(&audit);
            Ok(pass)
        }
    }
}

#[derive(Serialize)]
struct FullReport<'a> {
    pass: bool,
    spec: &'a WorkloadSpec,
    differential: &'a DivergenceReport,
    audit: &'a AuditReport,
}

fn strategy_for(w: &Workload, explicit: Option<Strategy>) -> Strategy {
    explicit.or(w.spec.as_ref().map(|s| s.strategy)).unwrap_or_default()
}

fn summarize(report: &AuditReport) {
    let failed: Vec<&str> = report.failures().map(|c| c.name.as_str()).collect();
    if failed.is_empty() {
        eprintln!("audit passed: {} checks, {} links", report.checks.len(), report.links);
    } else {
        eprintln!("audit failed: {}", failed.join(", "));
    }
}

fn json_line<T: Serialize>(mut w: &mut dyn Write, value: &T) -> io::Result<()> {
    serde_json::to_writer_pretty(&mut w, value)?;
    w.write_all(b"\n")
}

fn write_report(report: &AuditReport, format: Format, out: Option<&Path>) -> Result<(), Failure> {
    match format {
        Format::Json => write_output(out, |f| report.write_json(f)),
        Format::Csv => write_output(out, |f| report.write_csv(f)),
    }
}

fn open_input(path: &Path) -> Result<Box<dyn BufRead>, Failure> {
    if path == Path::new("-") {
        return Ok(Box::new(io::stdin().lock()));
    }
    let f = File::open(path).map_err(|e| Failure::new(path.display(), e))?;
    Ok(Box::new(BufReader::new(f)))
}

fn read_trace(path: &Path) -> Result<Trace, Failure> {
    Trace::read_jsonl(open_input(path)?).map_err(|e| Failure::new(path.display(), e))
}

fn read_workload(path: &Path) -> Result<Workload, Failure> {
    Workload::read_jsonl(open_input(path)?).map_err(|e| Failure::new(path.display(), e))
}

/// Writes to stdout, or to `path` through a temporary file in the same
/// directory that is renamed into place once complete.
fn write_output(path: Option<&Path>, body: impl FnOnce(&mut dyn Write) -> io::Result<()>) -> Result<(), Failure> {
    let Some(path) = path else {
        let mut stdout = io::stdout().lock();
        return body(&mut stdout).and_then(|()| stdout.flush()).map_err(|e| Failure::new("stdout", e));
    };
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let fail = |e: io::Error| Failure::new(path.display(), e);
    let tmp = tempfile::NamedTempFile::new_in(dir).map_err(fail)?;
    let mut w = BufWriter::new(tmp);
    body(&mut w).map_err(fail)?;
    let tmp = w.into_inner().map_err(|e| fail(e.into_error()))?;
    tmp.persist(path).map_err(|e| fail(e.error))?;
    Ok(())
}
