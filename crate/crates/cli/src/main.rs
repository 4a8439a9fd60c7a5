//! `mgossip`: batch front-end for single runs, seed campaigns and witnesses.
//!
//! Exit codes:
//!
//! | code | meaning |
//! |------|---------|
//! | 0 | stop condition met, all seeds passed, or the witness behaved as predicted |
//! | 1 | a file could not be read, written or parsed |
//! | 2 | the step budget ran out first |
//! | 3 | illegal protocol, whiteboard and schedule combination |
//! | 4 | invalid parameters |
//! | 5 | internal error during simulation |
//! | 6 | a campaign seed failed its checks, or a witness did not behave as predicted |

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use anyhow::Context;
use clap::{Args, Parser, Subcommand, ValueEnum};
use mobile_gossip::harness::campaign::CampaignError;
use mobile_gossip::harness::witness::WitnessError;
use mobile_gossip::harness::{
    fuzz_config, load_graph, run_campaign, run_seed_traced, witness_mirror, witness_symmetry, Campaign, Freeze, FuzzSpec,
    ScheduleName, SeedReport,
};
use mobile_gossip::model::{BoardClass, Program};
use mobile_gossip::protocol::check_legality;
use mobile_gossip::scheduler::Duplex;
use serde::Serialize;

#[derive(Parser)]
#[command(name = "mgossip", version, about = "Deterministic simulator for self-stabilizing mobile-agent gossip")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate one seed and report how it ended.
    Run(RunArgs),
    /// Run a campaign of seeds described by a TOML file.
    Fuzz(FuzzArgs),
    /// Build an impossibility scenario and check it behaves as predicted.
    #[command(subcommand)]
    Witness(WitnessCmd),
}

#[derive(Args)]
struct RunArgs {
    /// TOML campaign file supplying defaults for the flags below.
    #[arg(long)]
    config: Option<PathBuf>,
    /// `ring:N`, `grid:RxC`, `random:N:EXTRA:SEED` or a graph file.
    #[arg(long)]
    graph: Option<String>,
    /// dft_kminus1, fw_async_dft or anon_path_enum.
    #[arg(long)]
    protocol: Option<Program>,
    #[arg(long)]
    k: Option<usize>,
    /// NW, CW or FW.
    #[arg(long)]
    board: Option<BoardClass>,
    /// sync, async_random_fair or async_round_robin.
    #[arg(long)]
    schedule: Option<ScheduleName>,
    /// half or full.
    #[arg(long)]
    duplex: Option<Duplex>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Maximum number of steps.
    #[arg(long)]
    budget: Option<u64>,
    #[arg(long)]
    timer_cap: Option<u32>,
    #[arg(long)]
    phase_cap: Option<usize>,
    /// Start from blank whiteboards and fresh agents instead of a
    /// corrupted configuration.
    #[arg(long)]
    clean: bool,
    /// Allow the timer protocol under asynchronous schedules.
    #[arg(long)]
    unsafe_async: bool,
    /// Write one JSON record per step here.
    #[arg(long)]
    trace: Option<PathBuf>,
    /// Write the final report as JSON here.
    #[arg(long)]
    report: Option<PathBuf>,
}

#[derive(Args)]
struct FuzzArgs {
    /// TOML campaign file.
    config: PathBuf,
    #[arg(long, default_value_t = 1)]
    jobs: usize,
    #[arg(long)]
    seed_start: Option<u64>,
    #[arg(long)]
    seed_count: Option<u64>,
    /// Summary CSV, one row per seed.
    #[arg(long)]
    summary: Option<PathBuf>,
    /// Full per-seed reports, one JSON object per line.
    #[arg(long)]
    reports: Option<PathBuf>,
}

#[derive(Subcommand)]
enum WitnessCmd {
    /// Two mirrored copies of a converged system joined at a free node.
    Mirror(MirrorArgs),
    /// Identical agents spread evenly on a ring.
    Symmetry(SymmetryArgs),
}

#[derive(Copy, Clone, ValueEnum)]
enum FreezeArg {
    All,
    Movers,
}

#[derive(Args)]
struct MirrorArgs {
    #[arg(long, default_value = "ring:4")]
    graph: String,
    #[arg(long, default_value_t = 2)]
    k: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value = "CW")]
    board: BoardClass,
    /// Which agents stop in the mirrored system.
    #[arg(long, value_enum, default_value = "all")]
    freeze: FreezeArg,
    #[arg(long)]
    report: Option<PathBuf>,
}

#[derive(Args)]
struct SymmetryArgs {
    #[arg(long)]
    n: usize,
    #[arg(long)]
    k: usize,
    #[arg(long, default_value = "CW")]
    board: BoardClass,
    #[arg(long, default_value = "anon_path_enum")]
    program: Program,
    #[arg(long)]
    report: Option<PathBuf>,
}

enum Failure {
    Io(anyhow::Error),
    Budget(String),
    Illegal(String),
    Param(String),
    Internal(String),
    Property(String),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Io(_) => 1,
            Failure::Budget(_) => 2,
            Failure::Illegal(_) => 3,
            Failure::Param(_) => 4,
            Failure::Internal(_) => 5,
            Failure::Property(_) => 6,
        }
    }

    fn message(&self) -> String {
        match self {
            Failure::Io(e) => format!("{e:#}"),
            Failure::Budget(s) | Failure::Illegal(s) | Failure::Param(s) | Failure::Internal(s) | Failure::Property(s) => s.clone(),
        }
    }
}

impl From<CampaignError> for Failure {
    fn from(e: CampaignError) -> Self {
        match e {
            CampaignError::Io { .. } => Failure::Io(e.into()),
            CampaignError::Pool(s) => Failure::Internal(s),
            other => Failure::Param(other.to_string()),
        }
    }
}

impl From<WitnessError> for Failure {
    fn from(e: WitnessError) -> Self {
        match e {
            WitnessError::Budget(_) => Failure::Budget(e.to_string()),
            WitnessError::Scheduler(_) => Failure::Internal(e.to_string()),
            other => Failure::Param(other.to_string()),
        }
    }
}

fn read_campaign(path: &Path) -> Result<Campaign, Failure> {
    let text = std::fs::read_to_string(path)
        .with_context(|| format!("cannot read {}", path.display()))
        .map_err(Failure::Io)?;
    toml::from_str(&text)
        .with_context(|| format!("cannot parse {}", path.display()))
        .map_err(Failure::Io)
}

fn create(path: &Path) -> Result<BufWriter<File>, Failure> {
    File::create(path)
        .map(BufWriter::new)
        .with_context(|| format!("cannot create {}", path.display()))
        .map_err(Failure::Io)
}

fn write_json(path: &Path, value: &impl Serialize) -> Result<(), Failure> {
    let mut w = create(path)?;
    serde_json::to_writer_pretty(&mut w, value)
        .map_err(anyhow::Error::from)
        .and_then(|_| writeln!(w).map_err(Into::into))
        .and_then(|_| w.flush().map_err(Into::into))
        .with_context(|| format!("cannot write {}", path.display()))
        .map_err(Failure::Io)
}

fn write_lines<T: Serialize>(path: &Path, items: &[T]) -> Result<(), Failure> {
    let mut w = create(path)?;
    let mut out = || -> anyhow::Result<()> {
        for x in items {
            serde_json::to_writer(&mut w, x)?;
            writeln!(w)?;
        }
        w.flush()?;
        Ok(())
    };
    out().with_context(|| format!("cannot write {}", path.display())).map_err(Failure::Io)
}

/// Checks the protocol, whiteboard and schedule combination before any work.
fn check_campaign(camp: &Campaign) -> Result<(), Failure> {
    check_legality(
        camp.protocol,
        camp.board,
        camp.schedule == ScheduleName::Sync,
        camp.unsafe_async,
    )
    .map_err(|e| Failure::Illegal(e.to_string()))?;
    if camp.fairness_window == 0 {
        return Err(Failure::Param("fairness window must be positive".into()));
    }
    Ok(())
}

fn opt<T: ToString>(x: Option<T>) -> String {
    x.map_or_else(|| "-".into(), |v| v.to_string())
}

fn cmd_run(a: RunArgs) -> Result<(), Failure> {
    let mut camp = match &a.config {
        Some(p) => read_campaign(p)?,
        None => Campaign::default(),
    };
    if let Some(g) = a.graph {
        camp.graph = g;
    }
    if let Some(p) = a.protocol {
        camp.protocol = p;
    }
    if let Some(k) = a.k {
        camp.k = k;
    }
    if let Some(b) = a.board {
        camp.board = b;
    }
    if let Some(s) = a.schedule {
        camp.schedule = s;
    }
    if let Some(d) = a.duplex {
        camp.duplex = d;
    }
    camp.budget = a.budget.or(camp.budget);
    camp.timer_cap = a.timer_cap.or(camp.timer_cap);
    camp.phase_cap = a.phase_cap.or(camp.phase_cap);
    camp.unsafe_async |= a.unsafe_async;
    if a.clean {
        camp.fuzz = FuzzSpec::clean();
    }
    check_campaign(&camp)?;
    let graph = Arc::new(load_graph(&camp.graph)?);
    fuzz_config(&camp.setup(graph.clone()), &camp.fuzz, a.seed).map_err(|e| Failure::Param(e.to_string()))?;

    let (report, records) = run_seed_traced(&camp, &graph, a.seed);
    if let Some(p) = &a.trace {
        write_lines(p, &records)?;
    }
    if let Some(p) = &a.report {
        write_json(p, &report)?;
    }
    let rows = [
        ("graph", camp.graph.clone()),
        ("protocol", camp.protocol.to_string()),
        ("board", camp.board.to_string()),
        ("k", camp.k.to_string()),
        ("seed", report.seed.to_string()),
        ("status", report.status.clone()),
        ("prefix", opt(report.prefix)),
        ("period", opt(report.period)),
        ("quiescent", opt(report.quiescent)),
        ("mover", opt(report.mover)),
        ("gossip_step", opt(report.gossip_step)),
        ("fwd_max", report.fwd_max.to_string()),
        ("back_max", report.back_max.to_string()),
        ("timeouts_in_cycle", opt(report.timeouts_in_cycle)),
        ("passed", report.passed.to_string()),
    ];
    for (key, value) in rows {
        println!("{key:<18} {value}");
    }
    match report.status.as_str() {
        "converged" | "met" => Ok(()),
        "budget_exhausted" | "truncated" => Err(Failure::Budget(format!("seed {}: step budget exhausted", report.seed))),
        _ => Err(Failure::Internal(report.error.unwrap_or_default())),
    }
}

#[derive(Serialize)]
struct SummaryRow<'a> {
    seed: u64,
    status: &'a str,
    prefix: Option<u64>,
    period: Option<u64>,
    quiescent: Option<usize>,
    gossip_step: Option<u64>,
    fwd_max: u64,
    back_max: u64,
}

impl<'a> From<&'a SeedReport> for SummaryRow<'a> {
    fn from(r: &'a SeedReport) -> Self {
        Self {
            seed: r.seed,
            status: &r.status,
            prefix: r.prefix,
            period: r.period,
            quiescent: r.quiescent,
            gossip_step: r.gossip_step,
            fwd_max: r.fwd_max,
            back_max: r.back_max,
        }
    }
}

fn write_summary(path: &Path, reports: &[SeedReport]) -> Result<(), Failure> {
    let out = || -> anyhow::Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        if reports.is_empty() {
            w.write_record(["seed", "status", "prefix", "period", "quiescent", "gossip_step", "fwd_max", "back_max"])?;
        }
        for r in reports {
            w.serialize(SummaryRow::from(r))?;
        }
        w.flush()?;
        Ok(())
    };
    out().with_context(|| format!("cannot write {}", path.display())).map_err(Failure::Io)
}

fn cmd_fuzz(a: FuzzArgs) -> Result<(), Failure> {
    let mut camp = read_campaign(&a.config)?;
    camp.seed_start = a.seed_start.unwrap_or(camp.seed_start);
    camp.seed_count = a.seed_count.unwrap_or(camp.seed_count);
    check_campaign(&camp)?;
    if a.jobs == 0 {
        return Err(Failure::Param("--jobs must be at least 1".into()));
    }
    let reports = run_campaign(&camp, a.jobs)?;
    if let Some(p) = &a.summary {
        write_summary(p, &reports)?;
    }
    if let Some(p) = &a.reports {
        write_lines(p, &reports)?;
    }
    println!(
        "{:>6} {:<16} {:>8} {:>8} {:>9} {:>11} {:>7} {:>8} {:>6}",
        "seed", "status", "prefix", "period", "quiescent", "gossip_step", "fwd_max", "back_max", "passed"
    );
    for r in &reports {
        println!(
            "{:>6} {:<16} {:>8} {:>8} {:>9} {:>11} {:>7} {:>8} {:>6}",
            r.seed,
            r.status,
            opt(r.prefix),
            opt(r.period),
            opt(r.quiescent),
            opt(r.gossip_step),
            r.fwd_max,
            r.back_max,
            r.passed
        );
    }
    let failed: Vec<u64> = reports.iter().filter(|r| !r.passed).map(|r| r.seed).collect();
    let violations: usize = reports.iter().map(|r| r.bound_violations).sum();
    println!(
        "{}/{} seeds passed, {} move-bound violations",
        reports.len() - failed.len(),
        reports.len(),
        violations
    );
    if failed.is_empty() {
        Ok(())
    } else {
        Err(Failure::Property(format!("failing seeds: {failed:?}")))
    }
}

fn cmd_witness(w: WitnessCmd) -> Result<(), Failure> {
    match w {
        WitnessCmd::Mirror(a) => {
            let g = load_graph(&a.graph)?;
            let freeze = match a.freeze {
                FreezeArg::All => Freeze::All,
                FreezeArg::Movers => Freeze::Movers,
            };
            let r = witness_mirror(&g, a.k, a.seed, a.board, freeze)?;
            if let Some(p) = &a.report {
                write_json(p, &r)?;
            }
            println!("indistinguishable        {}", r.indistinguishable);
            println!("cross_tokens_exchanged   {}", r.cross_tokens_exchanged);
            println!("control_gossip_complete  {}", r.control_gossip_complete);
            println!("passed                   {}", r.passed);
            r.passed
                .then_some(())
                .ok_or_else(|| Failure::Property("mirror witness did not behave as predicted".into()))
        }
        WitnessCmd::Symmetry(a) => {
            let r = witness_symmetry(a.n, a.k, a.board, a.program)?;
            if let Some(p) = &a.report {
                write_json(p, &r)?;
            }
            println!("prefix                {}", r.prefix);
            println!("period                {}", r.period);
            println!("meetings              {}", r.meetings);
            println!("gossip_ever_complete  {}", r.gossip_ever_complete);
            println!("passed                {}", r.passed);
            r.passed
                .then_some(())
                .ok_or_else(|| Failure::Property("symmetry witness did not behave as predicted".into()))
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(4) } else { ExitCode::SUCCESS };
        }
    };
    let result = match cli.command {
        Command::Run(a) => cmd_run(a),
        Command::Fuzz(a) => cmd_fuzz(a),
        Command::Witness(w) => cmd_witness(w),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("mgossip: {}", f.message());
            ExitCode::from(f.code())
        }
    }
}
