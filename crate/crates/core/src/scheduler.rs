//! Drives configurations forward: synchronous rounds or one agent at a time,
//! with half- or full-duplex links.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{Configuration, PendingMove, Program};
use crate::protocol::{agent_step, check_legality, dft, Event, Intent, MoveIntent, ProtocolError};
use crate::topology::{NodeId, Port};

pub const DEFAULT_FAIRNESS_WINDOW: usize = 16;

#[derive(Copy, Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Duplex {
    /// A link carries agents in one direction per round.
    Half,
    /// Opposite crossings of one link both succeed.
    Full,
}

impl std::str::FromStr for Duplex {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "half" => Ok(Duplex::Half),
            "full" => Ok(Duplex::Full),
            _ => Err(format!("unknown duplex {s:?} (expected half or full)")),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScheduleKind {
    Sync,
    AsyncRandomFair { seed: u64 },
    AsyncRoundRobin,
    /// Agent indices in order; the script repeats once exhausted.
    AsyncScripted(Vec<usize>),
}

impl ScheduleKind {
    pub fn is_sync(&self) -> bool {
        matches!(self, ScheduleKind::Sync)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SchedulePolicy {
    pub kind: ScheduleKind,
    pub duplex: Duplex,
    /// No agent waits more than `k * fairness_window` steps under the
    /// random fair policy.
    pub fairness_window: usize,
    /// Allows timer-based protocols under asynchronous policies.
    pub unsafe_async: bool,
}

impl SchedulePolicy {
    pub fn sync(duplex: Duplex) -> Self {
        Self {
            kind: ScheduleKind::Sync,
            duplex,
            fairness_window: DEFAULT_FAIRNESS_WINDOW,
            unsafe_async: false,
        }
    }

    pub fn random_fair(seed: u64) -> Self {
        Self {
            kind: ScheduleKind::AsyncRandomFair { seed },
            ..Self::sync(Duplex::Half)
        }
    }

    pub fn round_robin() -> Self {
        Self {
            kind: ScheduleKind::AsyncRoundRobin,
            ..Self::sync(Duplex::Half)
        }
    }

    pub fn scripted(script: Vec<usize>) -> Self {
        Self {
            kind: ScheduleKind::AsyncScripted(script),
            ..Self::sync(Duplex::Half)
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum SchedulerError {
    #[error(transparent)]
    Protocol(#[from] ProtocolError),
    #[error("schedule selects agent {agent} but only {k} agents exist")]
    NoSuchAgent { agent: usize, k: usize },
    #[error("empty schedule script")]
    EmptyScript,
    #[error("agent {agent} went {waited} steps without being scheduled (bound {bound})")]
    Unfair { agent: usize, waited: u64, bound: u64 },
    #[error("synchronous round is not deterministic")]
    Nondeterministic,
}

/// One attempted migration.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct MoveRecord {
    pub agent: usize,
    pub from: NodeId,
    pub via: Port,
    pub to: NodeId,
    pub accepted: bool,
    #[serde(skip)]
    pub kind: Option<crate::model::MoveKind>,
}

/// What happened in one round (sync) or one selection (async).
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct StepRecord {
    pub step: u64,
    pub acting: Vec<usize>,
    pub moves: Vec<MoveRecord>,
    /// Nodes holding two or more agents after the moves.
    pub merges: Vec<NodeId>,
    /// Configuration hash after the step.
    pub hash: u64,
    #[serde(skip)]
    pub events: Vec<Event>,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RunStatus {
    Met,
    Truncated,
}

#[derive(Clone, Debug)]
pub struct Trace {
    pub status: RunStatus,
    pub records: Vec<StepRecord>,
    /// `(step, snapshot JSON)` pairs, taken every `snapshot_every` steps.
    pub snapshots: Vec<(u64, String)>,
}

/// Decides for each intent whether it is carried out. Under half duplex,
/// when a link is used in both directions in the same round, the direction
/// of the agent with the smallest order key wins; everyone going the other
/// way stays.
pub fn resolve_duplex(cfg: &Configuration, intents: &[MoveIntent], duplex: Duplex) -> Vec<bool> {
    let mut accepted = vec![true; intents.len()];
    if duplex == Duplex::Full {
        return accepted;
    }
    // Undirected edge -> (direction, order key, intent index) of each user.
    let mut by_edge: BTreeMap<((NodeId, Port), (NodeId, Port)), Vec<(bool, (u32, usize), usize)>> = BTreeMap::new();
    for (x, mi) in intents.iter().enumerate() {
        let Intent::Move { port, .. } = mi.intent else {
            continue;
        };
        let (to, back) = cfg.graph().ports(mi.from)[port];
        let (a, b) = ((mi.from, port), (to, back));
        let key = if a <= b { (a, b) } else { (b, a) };
        by_edge
            .entry(key)
            .or_default()
            .push((a <= b, cfg.order_key(mi.agent), x));
    }
    for users in by_edge.values() {
        let Some(&(dir, _, _)) = users.iter().min_by_key(|u| u.1) else {
            continue;
        };
        for &(d, _, x) in users {
            if d != dir {
                accepted[x] = false;
            }
        }
    }
    accepted
}

/// Stateful driver for one configuration.
pub struct Scheduler {
    policy: SchedulePolicy,
    rng: ChaCha8Rng,
    step: u64,
    last_chosen: Vec<u64>,
    cursor: usize,
    uses_timers: bool,
}

impl Scheduler {
    /// Checks every agent's program against the board class and policy.
    pub fn new(policy: SchedulePolicy, cfg: &Configuration) -> Result<Self, SchedulerError> {
        let sync = policy.kind.is_sync();
        for a in &cfg.agents {
            check_legality(a.program, cfg.class(), sync, policy.unsafe_async)?;
        }
        let seed = match policy.kind {
            ScheduleKind::AsyncRandomFair { seed } => seed,
            _ => 0,
        };
        if matches!(&policy.kind, ScheduleKind::AsyncScripted(s) if s.is_empty()) && !cfg.agents.is_empty() {
            return Err(SchedulerError::EmptyScript);
        }
        Ok(Self {
            rng: ChaCha8Rng::seed_from_u64(seed),
            step: 0,
            last_chosen: vec![0; cfg.agents.len()],
            cursor: 0,
            uses_timers: cfg.agents.iter().any(|a| a.program == Program::DftKminus1),
            policy,
        })
    }

    pub fn policy(&self) -> &SchedulePolicy {
        &self.policy
    }

    /// Advances by one round (sync) or one agent action (async).
    pub fn step(&mut self, cfg: &mut Configuration) -> Result<StepRecord, SchedulerError> {
        let rec = if self.policy.kind.is_sync() {
            if cfg!(debug_assertions) && self.step % 64 == 0 {
                let mut twin = cfg.clone();
                let a = sync_round(cfg, self.policy.duplex, self.uses_timers)?;
                let b = sync_round(&mut twin, self.policy.duplex, self.uses_timers)?;
                if a != b || !twin.same_state(cfg) {
                    return Err(SchedulerError::Nondeterministic);
                }
                a
            } else {
                sync_round(cfg, self.policy.duplex, self.uses_timers)?
            }
        } else {
            let i = self.choose(cfg)?;
            async_step(cfg, i, self.uses_timers)?
        };
        self.step += 1;
        Ok(rec)
    }

    fn choose(&mut self, cfg: &Configuration) -> Result<usize, SchedulerError> {
        let k = cfg.agents.len();
        if k == 0 {
            return Err(SchedulerError::NoSuchAgent { agent: 0, k: 0 });
        }
        let now = self.step + 1;
        let i = match &self.policy.kind {
            ScheduleKind::Sync => unreachable!("sync policies do not select agents"),
            ScheduleKind::AsyncRoundRobin => self.step as usize % k,
            ScheduleKind::AsyncScripted(script) => {
                let i = script[self.cursor % script.len()];
                self.cursor += 1;
                if i >= k {
                    return Err(SchedulerError::NoSuchAgent { agent: i, k });
                }
                i
            }
            ScheduleKind::AsyncRandomFair { .. } => {
                let bound = (k * self.policy.fairness_window.max(1)) as u64;
                // Forcing k - 1 steps early leaves room to serve every
                // starving agent before any of them exceeds the bound.
                let threshold = bound.saturating_sub(k as u64 - 1).max(1);
                let starved = (0..k)
                    .filter(|&j| now - self.last_chosen[j] >= threshold)
                    .min_by_key(|&j| (self.last_chosen[j], j));
                let i = starved.unwrap_or_else(|| self.rng.gen_range(0..k));
                for j in 0..k {
                    let waited = now - self.last_chosen[j];
                    if j != i && waited > bound {
                        return Err(SchedulerError::Unfair { agent: j, waited, bound });
                    }
                }
                i
            }
        };
        self.last_chosen[i] = now;
        Ok(i)
    }

    /// Steps until `stop` holds (checked before every step) or `max_steps`
    /// steps have been taken.
    pub fn run(
        &mut self,
        cfg: &mut Configuration,
        mut stop: impl FnMut(&Configuration) -> bool,
        max_steps: u64,
        snapshot_every: Option<u64>,
    ) -> Result<Trace, SchedulerError> {
        let mut records = Vec::new();
        let mut snapshots = Vec::new();
        let every = snapshot_every.filter(|&s| s > 0);
        if every.is_some() {
            snapshots.push((0, cfg.snapshot_json()));
        }
        for n in 0..max_steps {
            if stop(cfg) {
                return Ok(Trace {
                    status: RunStatus::Met,
                    records,
                    snapshots,
                });
            }
            records.push(self.step(cfg)?);
            if let Some(s) = every {
                if (n + 1) % s == 0 {
                    snapshots.push((n + 1, cfg.snapshot_json()));
                }
            }
        }
        let status = if max_steps > 0 && stop(cfg) {
            RunStatus::Met
        } else {
            RunStatus::Truncated
        };
        Ok(Trace {
            status,
            records,
            snapshots,
        })
    }
}

fn intent_of(cfg: &mut Configuration, i: usize, events: &mut Vec<Event>) -> Result<Intent, ProtocolError> {
    match cfg.agents[i].pending {
        Some(p) => Ok(Intent::Move {
            port: p.port,
            kind: p.kind,
        }),
        None => agent_step(cfg, i, events),
    }
}

/// Carries out the accepted moves simultaneously and records all attempts.
fn apply_moves(cfg: &mut Configuration, intents: &[MoveIntent], accepted: &[bool]) -> Vec<MoveRecord> {
    let mut out = Vec::new();
    for (mi, &ok) in intents.iter().zip(accepted) {
        let Intent::Move { port, kind } = mi.intent else {
            continue;
        };
        let (to, back) = cfg.graph().ports(mi.from)[port];
        let a = &mut cfg.agents[mi.agent];
        if ok {
            a.position = to;
            a.arrival_port = Some(back);
            a.pending = None;
        } else {
            a.pending = Some(PendingMove { port, kind });
        }
        out.push(MoveRecord {
            agent: mi.agent,
            from: mi.from,
            via: port,
            to,
            accepted: ok,
            kind: Some(kind),
        });
    }
    out
}

fn merge_colocated(cfg: &mut Configuration) -> Vec<NodeId> {
    let occ = cfg.occupancy();
    let mut merges = Vec::new();
    for (v, here) in occ.iter().enumerate() {
        if here.len() >= 2 {
            cfg.merge_gossip(v);
            merges.push(v);
        }
    }
    merges
}

/// One synchronous round: every agent acts once (node by node, agents in
/// order), then timeouts fire, links are arbitrated, all accepted moves
/// happen at once, co-located agents merge and every timer ticks.
pub fn sync_round(cfg: &mut Configuration, duplex: Duplex, uses_timers: bool) -> Result<StepRecord, SchedulerError> {
    sync_round_frozen(cfg, duplex, uses_timers, None)
}

/// [`sync_round`] in which the agents marked in `frozen` neither act nor
/// move, even when a timeout releases them.
pub fn sync_round_frozen(cfg: &mut Configuration, duplex: Duplex, uses_timers: bool, frozen: Option<&[bool]>) -> Result<StepRecord, SchedulerError> {
    let is_frozen = |i: usize| frozen.is_some_and(|f| f.get(i).copied().unwrap_or(false));
    let k = cfg.agents.len();
    let occ = cfg.occupancy();
    let mut events = Vec::new();
    let mut intents = vec![Intent::Stay; k];
    let mut acting = Vec::with_capacity(k);
    for (v, here) in occ.iter().enumerate() {
        if here.is_empty() {
            continue;
        }
        cfg.merge_gossip(v);
        for &i in here.iter().filter(|&&i| !is_frozen(i)) {
            intents[i] = intent_of(cfg, i, &mut events)?;
            acting.push(i);
        }
    }
    if uses_timers {
        for v in 0..cfg.graph().node_count() {
            if let Some((i, intent)) = dft::timeout_check(cfg, v, &mut events)? {
                if !is_frozen(i) {
                    intents[i] = intent;
                    if !acting.contains(&i) {
                        acting.push(i);
                    }
                }
            }
        }
    }
    let intents: Vec<MoveIntent> = acting
        .iter()
        .map(|&i| MoveIntent {
            agent: i,
            from: cfg.agents[i].position,
            intent: intents[i],
        })
        .collect();
    let accepted = resolve_duplex(cfg, &intents, duplex);
    let moves = apply_moves(cfg, &intents, &accepted);
    let merges = merge_colocated(cfg);
    let cap = cfg.params.timer_cap;
    for b in &mut cfg.boards {
        b.tick(cap);
    }
    cfg.round += 1;
    Ok(StepRecord {
        step: cfg.round,
        acting,
        moves,
        merges,
        hash: cfg.snapshot_hash(),
        events,
    })
}

/// One action of agent `i` alone. Timers do not advance. If a timeout at
/// the agent's node releases some other waiting agent, that agent's move is
/// queued for its own next action.
pub fn async_step(cfg: &mut Configuration, i: usize, uses_timers: bool) -> Result<StepRecord, SchedulerError> {
    let v = cfg.agents[i].position;
    let mut events = Vec::new();
    cfg.merge_gossip(v);
    let mut intent = intent_of(cfg, i, &mut events)?;
    if uses_timers {
        if let Some((j, released)) = dft::timeout_check(cfg, v, &mut events)? {
            if j == i {
                intent = released;
            } else if let Intent::Move { port, kind } = released {
                cfg.agents[j].pending = Some(PendingMove { port, kind });
            }
        }
    }
    let mi = [MoveIntent { agent: i, from: v, intent }];
    let moves = apply_moves(cfg, &mi, &[true]);
    let to = cfg.agents[i].position;
    let mut merges = Vec::new();
    if cfg.merge_gossip(to) && cfg.agents_at(to).len() >= 2 {
        merges.push(to);
    }
    cfg.round += 1;
    Ok(StepRecord {
        step: cfg.round,
        acting: vec![i],
        moves,
        merges,
        hash: cfg.snapshot_hash(),
        events,
    })
}
