//! Executable impossibility scenarios: symmetric rings where identical
//! agents never meet, and mirrored graphs where frozen agents can never
//! tell which copy they are in.

use std::collections::BTreeSet;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::cycle::{default_budget, detect_cycle, CycleOutcome};
use super::fuzz::{fuzz_config, FuzzError, FuzzSpec, Setup};
use crate::model::{AgentId, BoardClass, Configuration, GossipToken, ModelError, Program, SimParams};
use crate::scheduler::{Duplex, RunStatus, SchedulePolicy, Scheduler, SchedulerError};
use crate::topology::{GraphError, Mirror, NodeId, PortLabeledGraph};

#[derive(Debug, Error)]
pub enum WitnessError {
    #[error("k = {k} must divide n = {n} for a regular placement")]
    NotDivisible { n: usize, k: usize },
    #[error("need fewer agents than nodes (k = {k}, n = {n})")]
    TooManyAgents { n: usize, k: usize },
    #[error("no agent-free node to join the copies at")]
    NoFreeNode,
    #[error("cycle detection ran out of budget after {0} rounds")]
    Budget(u64),
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Fuzz(#[from] FuzzError),
    #[error(transparent)]
    Scheduler(#[from] SchedulerError),
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SymmetryReport {
    pub n: usize,
    pub k: usize,
    pub board: BoardClass,
    pub program: Program,
    pub prefix: u64,
    pub period: u64,
    /// Rounds ending with two or more agents on one node, over the prefix
    /// and one full period.
    pub meetings: u64,
    pub gossip_ever_complete: bool,
    pub passed: bool,
}

/// Ring of `n` nodes, `k` identical agents every `n / k` nodes, run
/// synchronously into its cycle.
pub fn witness_symmetry(n: usize, k: usize, board: BoardClass, program: Program) -> Result<SymmetryReport, WitnessError> {
    if k == 0 || n % k != 0 {
        return Err(WitnessError::NotDivisible { n, k });
    }
    let g = Arc::new(PortLabeledGraph::ring(n)?);
    let mut cfg = Configuration::new(g.clone(), board, SimParams::for_graph(&g))?;
    for j in 0..k {
        let id = program.needs_named_agents().then_some(AgentId(j as u32 + 1));
        cfg.add_agent(id, j * (n / k), program)?;
    }
    let budget = default_budget(&cfg).max(1 << 16);
    let r = match detect_cycle(&cfg, Duplex::Half, budget, None)? {
        CycleOutcome::Found(r) => r,
        CycleOutcome::BudgetExhausted { steps } => return Err(WitnessError::Budget(steps)),
    };
    let meetings = r.records.iter().map(|x| x.merges.len() as u64).sum();
    let gossip_ever_complete = r.gossip_step.is_some();
    Ok(SymmetryReport {
        n,
        k,
        board,
        program,
        prefix: r.prefix_len,
        period: r.period,
        meetings,
        gossip_ever_complete,
        passed: meetings == 0 && (k == 1 || !gossip_ever_complete),
    })
}

/// Which agents stop once the mirrored system is built.
#[derive(Copy, Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Freeze {
    /// Every agent stops.
    All,
    /// Only the agents that were moving in the converged cycle stop.
    Movers,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct MirrorReport {
    pub n: usize,
    pub k: usize,
    pub seed: u64,
    pub freeze: Freeze,
    pub join_node: NodeId,
    /// Every agent's local view in the mirrored system equals the view of
    /// its original in the converged source system.
    pub indistinguishable: bool,
    pub frozen_prefix: u64,
    pub frozen_period: u64,
    /// Some agent of one copy learned a genuine token of the other copy in
    /// the frozen system.
    pub cross_tokens_exchanged: bool,
    /// Every agent of the frozen system knew every genuine token at some
    /// point of its run.
    pub frozen_gossip_complete: bool,
    /// The same mirrored system without freezing reaches complete gossip.
    pub control_gossip_complete: bool,
    pub control_rounds: u64,
    pub passed: bool,
}

fn view(cfg: &Configuration, i: usize, id_map: impl Fn(AgentId) -> AgentId) -> impl PartialEq + std::fmt::Debug {
    let a = &cfg.agents[i];
    let v = a.position;
    let b = &cfg.boards[v];
    let id = a.id.expect("named");
    (
        cfg.graph().degree(v),
        a.arrival_port,
        a.t_bit,
        a.regs.clone(),
        b.t_bit(id),
        b.in_link(id),
        b.out_link(id),
        id_map(b.min_id()),
        b.wait_t(),
        b.timer(),
        b.is_waiting(id),
        cfg.agents_at(v).len(),
    )
}

/// Places the converged system `c` of `g` in both copies of `mirror`.
/// Copy-B agents get ids shifted by `offset` (so the old ceiling lands on
/// the new one) and hidden indices shifted by `k`. Copy A keeps its ids;
/// an agent may hold the ceiling id itself, so it cannot be remapped.
fn mirror_config(c: &Configuration, mirror: &Mirror, params: SimParams, offset: u32) -> Result<Configuration, WitnessError> {
    let k = c.agents.len();
    let map_a = |id: AgentId| id;
    let map_b = |id: AgentId| AgentId(id.0 + offset);
    let tok_b = |t: &GossipToken| {
        if (t.origin as usize) < k && *t == GossipToken::genuine(t.origin as usize) {
            GossipToken::genuine(t.origin as usize + k)
        } else {
            t.clone()
        }
    };
    let h = Arc::new(mirror.graph.clone());
    let mut out = Configuration::new(h, c.class(), params)?;
    for a in &c.agents {
        out.add_agent(a.id, mirror.copy_a[a.position], a.program)?;
    }
    for a in &c.agents {
        out.add_agent(a.id.map(map_b), mirror.copy_b[a.position], a.program)?;
    }
    for (j, a) in c.agents.iter().enumerate() {
        let (va, vb) = (mirror.copy_a[a.position], mirror.copy_b[a.position]);
        let ca = &mut out.agents[j];
        ca.t_bit = a.t_bit;
        ca.known = a.known.clone();
        ca.regs = a.regs.clone();
        ca.arrival_port = a.arrival_port;
        ca.pending = a.pending;
        let cb = &mut out.agents[k + j];
        cb.t_bit = a.t_bit;
        cb.known = a.known.iter().map(tok_b).collect();
        cb.regs = a.regs.clone();
        cb.arrival_port = a.arrival_port.map(|p| mirror.port_b(a.position, p));
        cb.pending = a.pending.map(|mut p| {
            p.port = mirror.port_b(a.position, p.port);
            p
        });
        debug_assert!(va != vb);
    }
    for (v, b) in c.boards.iter().enumerate() {
        let (va, vb) = (mirror.copy_a[v], mirror.copy_b[v]);
        let ba = b.map_ids(map_a);
        if va == vb {
            // The join node keeps copy A's board plus copy B's table rows.
            let bb = b.map_ids(map_b);
            let mut joined = ba.clone();
            for (id, bit) in bb.t_table().iter() {
                joined.set_t_bit(id, bit).ok();
            }
            for (id, p) in bb.in_links().iter() {
                joined.set_in_link(id, Some(mirror.port_b(v, p))).ok();
            }
            for (id, p) in bb.out_links().iter() {
                joined.set_out_link(id, Some(mirror.port_b(v, p))).ok();
            }
            for &id in bb.waiting() {
                joined.add_waiting(id).ok();
            }
            if joined.class() == BoardClass::FW {
                joined.store_gossip(b.gossip_store().iter().map(tok_b)).ok();
            }
            out.boards[va] = joined;
        } else {
            out.boards[va] = ba;
            // Ports of nodes other than the join node are the same in both copies.
            let mut bb = b.map_ids(map_b);
            if bb.class() == BoardClass::FW {
                bb.replace_gossip(b.gossip_store().iter().map(tok_b).collect()).ok();
            }
            out.boards[vb] = bb;
        }
    }
    Ok(out)
}

fn crosses(cfg: &Configuration, k: usize) -> bool {
    cfg.agents.iter().enumerate().any(|(i, a)| {
        let other = if i < k { k..2 * k } else { 0..k };
        other.into_iter().any(|j| a.known.contains(&GossipToken::genuine(j)))
    })
}

/// Runs `k` named DFT agents on `g` (start chosen by `seed`) into their
/// cycle, copies the converged system into both halves of the graph
/// mirrored at an agent-free node, freezes agents per `freeze` and checks
/// that no genuine token crosses between the copies. A control run of the
/// unfrozen mirrored system must complete gossip.
pub fn witness_mirror(g: &PortLabeledGraph, k: usize, seed: u64, board: BoardClass, freeze: Freeze) -> Result<MirrorReport, WitnessError> {
    let n = g.node_count();
    if k == 0 || k >= n {
        return Err(WitnessError::TooManyAgents { n, k });
    }
    let spec = FuzzSpec::clean();
    let mut setup = Setup::new(g.clone(), k, board, Program::DftKminus1, &spec);
    // Timer cap valid for the mirrored graph so both systems share it.
    setup.params.timer_cap = 8 * g.edge_count() as u32 + 1;
    let start = fuzz_config(&setup, &spec, seed)?;
    let budget = default_budget(&start);
    let source = match detect_cycle(&start, Duplex::Half, budget, None)? {
        CycleOutcome::Found(r) => r,
        CycleOutcome::BudgetExhausted { steps } => return Err(WitnessError::Budget(steps)),
    };
    let c = &source.cycle_start;
    let occupied: BTreeSet<NodeId> = c.agents.iter().map(|a| a.position).collect();
    let join_node = (0..n).find(|v| !occupied.contains(v)).ok_or(WitnessError::NoFreeNode)?;
    let mirror = g.mirror_join_mapped(join_node)?;

    let offset = c.params.max_id.0;
    let mut params = SimParams::for_graph(&mirror.graph);
    params.timer_cap = setup.params.timer_cap;
    params.max_id = AgentId(2 * offset);
    let h = mirror_config(c, &mirror, params, offset)?;

    let mut indistinguishable = true;
    for j in 0..k {
        let here = view(&h, j, |x| x);
        let there = view(c, j, |x| x);
        indistinguishable &= format!("{here:?}") == format!("{there:?}");
        let here_b = view(&h, k + j, |x| if x.0 > offset { AgentId(x.0 - offset) } else { x });
        indistinguishable &= format!("{here_b:?}") == format!("{there:?}");
    }

    let frozen: Vec<bool> = match freeze {
        Freeze::All => vec![true; 2 * k],
        Freeze::Movers => (0..2 * k).map(|i| source.movers.contains(&(i % k))).collect(),
    };
    let budget_h = default_budget(&h);
    let fr = match detect_cycle(&h, Duplex::Half, budget_h, Some(&frozen))? {
        CycleOutcome::Found(r) => r,
        CycleOutcome::BudgetExhausted { steps } => return Err(WitnessError::Budget(steps)),
    };
    // Known sets only grow, so the cycle start holds everything ever learned.
    let cross_tokens_exchanged = crosses(&fr.cycle_start, k);

    let mut control = h.clone();
    let mut sched = Scheduler::new(SchedulePolicy::sync(Duplex::Half), &control)?;
    let trace = sched.run(&mut control, Configuration::gossip_complete, budget_h, None)?;
    let control_gossip_complete = trace.status == RunStatus::Met;

    Ok(MirrorReport {
        n,
        k,
        seed,
        freeze,
        join_node,
        indistinguishable,
        frozen_prefix: fr.prefix_len,
        frozen_period: fr.period,
        cross_tokens_exchanged,
        frozen_gossip_complete: fr.gossip_step.is_some(),
        control_gossip_complete,
        control_rounds: trace.records.len() as u64,
        passed: indistinguishable && !cross_tokens_exchanged && control_gossip_complete,
    })
}
