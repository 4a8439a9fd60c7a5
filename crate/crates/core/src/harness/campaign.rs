//! Many seeds of one scenario, run in parallel, one report per seed.

use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::audit::audit_move_bounds;
use super::cycle::{default_budget, detect_cycle, CycleOutcome};
use super::fuzz::{fuzz_config, FuzzSpec, Setup};
use crate::model::{BoardClass, Configuration, Program};
use crate::scheduler::{Duplex, RunStatus, ScheduleKind, SchedulePolicy, Scheduler, StepRecord, DEFAULT_FAIRNESS_WINDOW};
use crate::topology::{GraphError, PortLabeledGraph};

#[derive(Debug, Error)]
pub enum CampaignError {
    #[error("cannot read graph file {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("bad graph source {0:?} (expected ring:N, grid:RxC, random:N:EXTRA:SEED or a file)")]
    Source(String),
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error("cannot start worker pool: {0}")]
    Pool(String),
}

/// `ring:N`, `grid:RxC`, `random:N:EXTRA:SEED`, or a path to a graph file.
pub fn load_graph(source: &str) -> Result<PortLabeledGraph, CampaignError> {
    let bad = || CampaignError::Source(source.to_string());
    let num = |s: &str| s.parse::<usize>().map_err(|_| bad());
    if let Some(n) = source.strip_prefix("ring:") {
        return Ok(PortLabeledGraph::ring(num(n)?)?);
    }
    if let Some(rc) = source.strip_prefix("grid:") {
        let (r, c) = rc.split_once('x').ok_or_else(bad)?;
        return Ok(PortLabeledGraph::grid(num(r)?, num(c)?)?);
    }
    if let Some(rest) = source.strip_prefix("random:") {
        let parts: Vec<&str> = rest.split(':').collect();
        let [n, extra, seed] = parts[..] else {
            return Err(bad());
        };
        return Ok(PortLabeledGraph::random_connected(num(n)?, num(extra)?, num(seed)? as u64)?);
    }
    let text = std::fs::read_to_string(source).map_err(|source_err| CampaignError::Io {
        path: source.to_string(),
        source: source_err,
    })?;
    Ok(PortLabeledGraph::parse(&text)?)
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScheduleName {
    Sync,
    AsyncRandomFair,
    AsyncRoundRobin,
}

impl std::str::FromStr for ScheduleName {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "sync" => Ok(Self::Sync),
            "async_random_fair" => Ok(Self::AsyncRandomFair),
            "async_round_robin" => Ok(Self::AsyncRoundRobin),
            _ => Err(format!(
                "unknown schedule {s:?} (expected sync, async_random_fair or async_round_robin)"
            )),
        }
    }
}

impl ScheduleName {
    pub fn policy(self, duplex: Duplex, seed: u64, fairness_window: usize, unsafe_async: bool) -> SchedulePolicy {
        let kind = match self {
            ScheduleName::Sync => ScheduleKind::Sync,
            ScheduleName::AsyncRandomFair => ScheduleKind::AsyncRandomFair { seed },
            ScheduleName::AsyncRoundRobin => ScheduleKind::AsyncRoundRobin,
        };
        SchedulePolicy {
            kind,
            duplex,
            fairness_window,
            unsafe_async,
        }
    }
}

/// One scenario over a range of seeds.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default)]
pub struct Campaign {
    pub graph: String,
    pub k: usize,
    pub protocol: Program,
    pub board: BoardClass,
    pub schedule: ScheduleName,
    pub duplex: Duplex,
    /// First seed and number of seeds.
    pub seed_start: u64,
    pub seed_count: u64,
    /// Step budget per seed; defaults to `|V| * timer_cap * 4^k` for
    /// synchronous runs and `50 * m * k` otherwise.
    pub budget: Option<u64>,
    pub timer_cap: Option<u32>,
    pub phase_cap: Option<usize>,
    pub fairness_window: usize,
    pub unsafe_async: bool,
    pub audit: bool,
    pub fuzz: FuzzSpec,
}

impl Default for Campaign {
    fn default() -> Self {
        Self {
            graph: "ring:6".into(),
            k: 3,
            protocol: Program::DftKminus1,
            board: BoardClass::CW,
            schedule: ScheduleName::Sync,
            duplex: Duplex::Half,
            seed_start: 0,
            seed_count: 100,
            budget: None,
            timer_cap: None,
            phase_cap: None,
            fairness_window: DEFAULT_FAIRNESS_WINDOW,
            unsafe_async: false,
            audit: true,
            fuzz: FuzzSpec::adversarial(),
        }
    }
}

impl Campaign {
    pub fn setup(&self, graph: Arc<PortLabeledGraph>) -> Setup {
        let mut s = Setup::new(graph, self.k, self.board, self.protocol, &self.fuzz);
        if let Some(c) = self.timer_cap {
            s.params.timer_cap = c;
        }
        if let Some(l) = self.phase_cap {
            s.params.phase_cap = l;
        }
        s
    }

    /// Quiescent agents a correct run ends with.
    pub fn expected_quiescent(&self) -> usize {
        match self.protocol {
            Program::DftKminus1 => self.k.saturating_sub(1),
            _ => 0,
        }
    }
}

/// Outcome of one seed. Fields that do not apply are `None`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SeedReport {
    pub seed: u64,
    /// `converged`, `budget_exhausted`, `met`, `truncated` or `error`.
    pub status: String,
    pub prefix: Option<u64>,
    pub period: Option<u64>,
    pub quiescent: Option<usize>,
    /// Id of the only moving agent, when exactly one moves.
    pub mover: Option<u32>,
    pub gossip_step: Option<u64>,
    pub fwd_max: u64,
    pub back_max: u64,
    pub bound_violations: usize,
    pub timeouts_in_cycle: Option<u64>,
    pub passed: bool,
    pub error: Option<String>,
}

impl SeedReport {
    fn failed(seed: u64, status: &str, error: String) -> Self {
        Self {
            seed,
            status: status.into(),
            prefix: None,
            period: None,
            quiescent: None,
            mover: None,
            gossip_step: None,
            fwd_max: 0,
            back_max: 0,
            bound_violations: 0,
            timeouts_in_cycle: None,
            passed: false,
            error: Some(error),
        }
    }
}

/// Runs one seed of `camp` on `graph`.
pub fn run_seed(camp: &Campaign, graph: &Arc<PortLabeledGraph>, seed: u64) -> SeedReport {
    run_seed_traced(camp, graph, seed).0
}

/// [`run_seed`] that also returns the step records: the prefix and one
/// period for synchronous runs, every step otherwise.
pub fn run_seed_traced(camp: &Campaign, graph: &Arc<PortLabeledGraph>, seed: u64) -> (SeedReport, Vec<StepRecord>) {
    let setup = camp.setup(graph.clone());
    let cfg = match fuzz_config(&setup, &camp.fuzz, seed) {
        Ok(c) => c,
        Err(e) => return (SeedReport::failed(seed, "error", e.to_string()), Vec::new()),
    };
    let programs: Vec<Program> = cfg.agents.iter().map(|a| a.program).collect();
    let (n, m) = (graph.node_count(), graph.edge_count());
    let policy = camp
        .schedule
        .policy(camp.duplex, seed, camp.fairness_window, camp.unsafe_async);
    if let Err(e) = Scheduler::new(policy.clone(), &cfg) {
        return (SeedReport::failed(seed, "error", e.to_string()), Vec::new());
    }

    if camp.schedule == ScheduleName::Sync {
        let budget = camp.budget.unwrap_or_else(|| default_budget(&cfg));
        let r = match detect_cycle(&cfg, camp.duplex, budget, None) {
            Ok(CycleOutcome::Found(r)) => r,
            Ok(CycleOutcome::BudgetExhausted { steps }) => {
                return (
                    SeedReport::failed(seed, "budget_exhausted", format!("no cycle within {steps} rounds")),
                    Vec::new(),
                )
            }
            Err(e) => return (SeedReport::failed(seed, "error", e.to_string()), Vec::new()),
        };
        let audit = camp
            .audit
            .then(|| audit_move_bounds(&r.records, &programs, n, m))
            .unwrap_or_default();
        let mover = match r.movers[..] {
            [i] => cfg.agents[i].id.map(|x| x.0),
            _ => None,
        };
        let min_id = cfg.agents.iter().filter_map(|a| a.id).min().map(|x| x.0);
        let mover_ok = camp.protocol != Program::DftKminus1 || camp.k == 0 || mover == min_id;
        let gossip_ok = r.cycle_start.gossip_complete();
        let passed = r.quiescent.len() == camp.expected_quiescent() && mover_ok && gossip_ok && audit.ok();
        let report = SeedReport {
            seed,
            status: "converged".into(),
            prefix: Some(r.prefix_len),
            period: Some(r.period),
            quiescent: Some(r.quiescent.len()),
            mover,
            gossip_step: r.gossip_step,
            fwd_max: audit.fwd_max,
            back_max: audit.back_max,
            bound_violations: audit.violations.len(),
            timeouts_in_cycle: Some(r.timeouts_in_cycle),
            passed,
            error: None,
        };
        (report, r.records)
    } else {
        let budget = camp.budget.unwrap_or((50 * m * camp.k.max(1)) as u64);
        let mut c = cfg;
        let mut sched = Scheduler::new(policy, &c).expect("checked above");
        let trace = match sched.run(&mut c, Configuration::gossip_complete, budget, None) {
            Ok(t) => t,
            Err(e) => return (SeedReport::failed(seed, "error", e.to_string()), Vec::new()),
        };
        let audit = camp
            .audit
            .then(|| audit_move_bounds(&trace.records, &programs, n, m))
            .unwrap_or_default();
        let met = trace.status == RunStatus::Met;
        let report = SeedReport {
            seed,
            status: if met { "met" } else { "truncated" }.into(),
            prefix: None,
            period: None,
            quiescent: None,
            mover: None,
            gossip_step: met.then_some(trace.records.len() as u64),
            fwd_max: audit.fwd_max,
            back_max: audit.back_max,
            bound_violations: audit.violations.len(),
            timeouts_in_cycle: None,
            passed: met && audit.ok(),
            error: None,
        };
        (report, trace.records)
    }
}

/// Runs every seed on `jobs` worker threads; reports come back in seed
/// order and do not depend on `jobs`.
pub fn run_campaign(camp: &Campaign, jobs: usize) -> Result<Vec<SeedReport>, CampaignError> {
    let graph = Arc::new(load_graph(&camp.graph)?);
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()
        .map_err(|e| CampaignError::Pool(e.to_string()))?;
    let seeds: Vec<u64> = (camp.seed_start..camp.seed_start + camp.seed_count).collect();
    Ok(pool.install(|| seeds.par_iter().map(|&s| run_seed(camp, &graph, s)).collect()))
}
