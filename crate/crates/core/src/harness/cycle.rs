//! Exact detection of the eventual cycle of a synchronous run.

use std::collections::{BTreeSet, HashMap};

use crate::model::Configuration;
use crate::protocol::Event;
use crate::scheduler::{sync_round_frozen, Duplex, SchedulerError, StepRecord};
use crate::topology::NodeId;

/// The cycle a deterministic run falls into, with statistics over one
/// period.
#[derive(Clone, Debug)]
pub struct CycleReport {
    /// Rounds before the first configuration of the cycle.
    pub prefix_len: u64,
    pub period: u64,
    /// Agents whose position never changes within the cycle.
    pub quiescent: Vec<usize>,
    pub movers: Vec<usize>,
    /// Per agent: nodes it stands on during one period.
    pub mover_visits: Vec<BTreeSet<NodeId>>,
    /// Per agent: rounds (relative to the cycle start) at which it flipped
    /// its traversal bit.
    pub flip_offsets: Vec<Vec<u64>>,
    pub timeouts_in_cycle: u64,
    pub colocations_in_cycle: u64,
    /// First round at which gossip was complete, if ever.
    pub gossip_step: Option<u64>,
    /// Per step records for the prefix followed by one period.
    pub records: Vec<StepRecord>,
    pub cycle_start: Configuration,
}

impl CycleReport {
    /// Gaps between consecutive flips of `agent` around the cycle.
    pub fn flip_gaps(&self, agent: usize) -> Vec<u64> {
        let f = &self.flip_offsets[agent];
        let mut gaps: Vec<u64> = f.windows(2).map(|w| w[1] - w[0]).collect();
        if let (Some(first), Some(last)) = (f.first(), f.last()) {
            gaps.push(first + self.period - last);
        }
        gaps
    }

    /// Last round in which any agent that is quiescent in the cycle moved;
    /// 0 if none ever did.
    pub fn settle_round(&self) -> u64 {
        let q: BTreeSet<usize> = self.quiescent.iter().copied().collect();
        self.records
            .iter()
            .filter(|r| r.moves.iter().any(|m| m.accepted && q.contains(&m.agent)))
            .map(|r| r.step)
            .max()
            .unwrap_or(0)
    }

    /// Round of the `nth` (1-based) flip of `agent` strictly after round
    /// `after`, following the run into the cycle as far as needed.
    pub fn nth_flip_after(&self, agent: usize, after: u64, nth: usize) -> Option<u64> {
        let mut flips: Vec<u64> = self
            .records
            .iter()
            .filter(|r| {
                r.events
                    .iter()
                    .any(|e| matches!(e, Event::Flip { agent: a, .. } if *a == agent))
            })
            .map(|r| r.step)
            .collect();
        let offsets = &self.flip_offsets[agent];
        if !offsets.is_empty() {
            let mut lap = 1;
            while flips.iter().filter(|&&s| s > after).count() < nth {
                flips.extend(offsets.iter().map(|o| self.prefix_len + lap * self.period + o + 1));
                lap += 1;
            }
        }
        flips.into_iter().filter(|&s| s > after).nth(nth - 1)
    }
}

#[derive(Clone, Debug)]
pub enum CycleOutcome {
    Found(Box<CycleReport>),
    BudgetExhausted { steps: u64 },
}

impl CycleOutcome {
    pub fn report(&self) -> Option<&CycleReport> {
        match self {
            CycleOutcome::Found(r) => Some(r),
            CycleOutcome::BudgetExhausted { .. } => None,
        }
    }
}

/// Step budget `|V| * timer_cap * 4^k`.
pub fn default_budget(cfg: &Configuration) -> u64 {
    let k = cfg.agents.len() as u32;
    (cfg.graph().node_count() as u64)
        .saturating_mul(cfg.params.timer_cap as u64)
        .saturating_mul(4u64.saturating_pow(k))
}

/// Runs synchronous rounds from `start` until a configuration repeats.
/// Repeats are found by hash and confirmed by replaying to the earlier
/// occurrence and comparing full states. Agents marked in `frozen` never
/// act.
pub fn detect_cycle(start: &Configuration, duplex: Duplex, budget: u64, frozen: Option<&[bool]>) -> Result<CycleOutcome, SchedulerError> {
    let uses_timers = start
        .agents
        .iter()
        .any(|a| a.program == crate::model::Program::DftKminus1);
    let mut cfg = start.clone();
    cfg.round = 0;
    let mut seen: HashMap<u64, Vec<u64>> = HashMap::new();
    seen.entry(cfg.snapshot_hash()).or_default().push(0);
    let mut records = Vec::new();
    let mut gossip_step = cfg.gossip_complete().then_some(0);
    for step in 1..=budget {
        let rec = sync_round_frozen(&mut cfg, duplex, uses_timers, frozen)?;
        let h = rec.hash;
        records.push(rec);
        if gossip_step.is_none() && cfg.gossip_complete() {
            gossip_step = Some(step);
        }
        if let Some(earlier) = seen.get(&h) {
            for &i in earlier {
                let mut probe = start.clone();
                probe.round = 0;
                for _ in 0..i {
                    sync_round_frozen(&mut probe, duplex, uses_timers, frozen)?;
                }
                if probe.same_state(&cfg) {
                    return Ok(CycleOutcome::Found(Box::new(summarize(
                        probe,
                        records,
                        i,
                        step - i,
                        gossip_step,
                    ))));
                }
            }
        }
        seen.entry(h).or_default().push(step);
    }
    Ok(CycleOutcome::BudgetExhausted { steps: budget })
}

fn summarize(cycle_start: Configuration, records: Vec<StepRecord>, prefix: u64, period: u64, gossip_step: Option<u64>) -> CycleReport {
    let k = cycle_start.agents.len();
    let cycle = &records[prefix as usize..];
    let mut moved = vec![false; k];
    let mut visits: Vec<BTreeSet<NodeId>> = cycle_start.agents.iter().map(|a| BTreeSet::from([a.position])).collect();
    let mut flip_offsets = vec![Vec::new(); k];
    let mut timeouts = 0;
    let mut colocations = 0;
    for (off, r) in cycle.iter().enumerate() {
        for m in r.moves.iter().filter(|m| m.accepted) {
            moved[m.agent] = true;
            visits[m.agent].insert(m.to);
        }
        for e in &r.events {
            match e {
                Event::Flip { agent, .. } => flip_offsets[*agent].push(off as u64),
                Event::Release { .. } => timeouts += 1,
                _ => {}
            }
        }
        colocations += r.merges.len() as u64;
    }
    let quiescent: Vec<usize> = (0..k).filter(|&i| !moved[i]).collect();
    let movers: Vec<usize> = (0..k).filter(|&i| moved[i]).collect();
    CycleReport {
        prefix_len: prefix,
        period,
        quiescent,
        movers,
        mover_visits: visits,
        flip_offsets,
        timeouts_in_cycle: timeouts,
        colocations_in_cycle: colocations,
        gossip_step,
        records,
        cycle_start,
    }
}
