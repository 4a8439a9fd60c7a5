//! Per-traversal move counts for DFT agents.
//!
//! A traversal segment runs from one bit flip of an agent to its next.
//! Forward moves are the moves that bring the agent to a node it has not
//! marked in the current traversal; backtracking moves are the returns to a
//! parent that clear the parent link. Bounced probes of already marked
//! nodes belong to neither and are reported separately, together with the
//! counts obtained by classifying purely on the move's branch (advance vs.
//! any return).

use serde::Serialize;

use crate::model::{MoveKind, Program};
use crate::protocol::Event;
use crate::scheduler::StepRecord;

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct BoundViolation {
    pub agent: usize,
    /// Index of the segment among the agent's complete segments.
    pub segment: usize,
    pub forward: u64,
    pub backtrack: u64,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize)]
pub struct AuditReport {
    pub segments: u64,
    pub fwd_max: u64,
    pub back_max: u64,
    pub bounce_max: u64,
    /// Maxima when every advance counts as forward and every return
    /// (retreat or bounce) as backtracking.
    pub branch_fwd_max: u64,
    pub branch_back_max: u64,
    pub violations: Vec<BoundViolation>,
}

impl AuditReport {
    pub fn ok(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn absorb(&mut self, other: &AuditReport) {
        self.segments += other.segments;
        self.fwd_max = self.fwd_max.max(other.fwd_max);
        self.back_max = self.back_max.max(other.back_max);
        self.bounce_max = self.bounce_max.max(other.bounce_max);
        self.branch_fwd_max = self.branch_fwd_max.max(other.branch_fwd_max);
        self.branch_back_max = self.branch_back_max.max(other.branch_back_max);
        self.violations.extend(other.violations.iter().cloned());
    }
}

#[derive(Clone, Copy, Default)]
struct Counts {
    forward: u64,
    backtrack: u64,
    bounce: u64,
    advance: u64,
    returns: u64,
}

/// Checks `forward <= m` and `backtrack <= n` on every complete segment of
/// every DFT agent in `records`. `programs[i]` is agent `i`'s program.
pub fn audit_move_bounds(records: &[StepRecord], programs: &[Program], n: usize, m: usize) -> AuditReport {
    let k = programs.len();
    let mut report = AuditReport::default();
    let mut open: Vec<Option<Counts>> = vec![None; k];
    let mut done = vec![0usize; k];
    let audited = |i: usize| matches!(programs[i], Program::DftKminus1 | Program::FwAsyncDft);
    for r in records {
        for e in &r.events {
            match *e {
                Event::Flip { agent, .. } if audited(agent) => {
                    if let Some(c) = open[agent].take() {
                        report.segments += 1;
                        report.fwd_max = report.fwd_max.max(c.forward);
                        report.back_max = report.back_max.max(c.backtrack);
                        report.bounce_max = report.bounce_max.max(c.bounce);
                        report.branch_fwd_max = report.branch_fwd_max.max(c.advance);
                        report.branch_back_max = report.branch_back_max.max(c.returns);
                        if c.forward > m as u64 || c.backtrack > n as u64 {
                            report.violations.push(BoundViolation {
                                agent,
                                segment: done[agent],
                                forward: c.forward,
                                backtrack: c.backtrack,
                            });
                        }
                        done[agent] += 1;
                    }
                    open[agent] = Some(Counts::default());
                }
                Event::FirstVisit { agent, .. } => {
                    if let Some(c) = open.get_mut(agent).and_then(Option::as_mut) {
                        c.forward += 1;
                    }
                }
                _ => {}
            }
        }
        for mv in r.moves.iter().filter(|mv| mv.accepted) {
            let Some(c) = open[mv.agent].as_mut() else {
                continue;
            };
            match mv.kind {
                Some(MoveKind::Advance) => c.advance += 1,
                Some(MoveKind::Retreat) => {
                    c.backtrack += 1;
                    c.returns += 1;
                }
                Some(MoveKind::Bounce) => {
                    c.bounce += 1;
                    c.returns += 1;
                }
                None => {}
            }
        }
    }
    report
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::cycle::detect_cycle;
    use crate::model::{AgentId, BoardClass, Configuration, SimParams};
    use crate::scheduler::Duplex;
    use crate::topology::PortLabeledGraph;
    use std::sync::Arc;

    #[test]
    fn empty_trace_empty_report() {
        assert_eq!(audit_move_bounds(&[], &[], 3, 3), AuditReport::default());
    }

    #[test]
    fn clean_single_agent_ring4() {
        let g = Arc::new(PortLabeledGraph::ring(4).unwrap());
        let mut c = Configuration::new(g.clone(), BoardClass::CW, SimParams::for_graph(&g)).unwrap();
        c.add_agent(Some(AgentId(1)), 0, Program::DftKminus1).unwrap();
        let r = detect_cycle(&c, Duplex::Half, 10_000, None).unwrap();
        let r = r.report().unwrap();
        let mut records = r.records.clone();
        records.extend(r.records[r.prefix_len as usize..].iter().cloned());
        let a = audit_move_bounds(&records, &[Program::DftKminus1], 4, 4);
        assert!(a.ok());
        assert!(a.segments >= 1);
        // Three new nodes, three parent returns, the chord probed twice.
        assert_eq!((a.fwd_max, a.back_max, a.bounce_max), (3, 3, 2));
        assert_eq!((a.branch_fwd_max, a.branch_back_max), (5, 5));
    }
}
