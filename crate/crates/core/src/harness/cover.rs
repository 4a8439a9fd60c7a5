//! Node coverage of path-enumerating agents, against brute-force walk
//! enumeration.

use std::collections::BTreeSet;

use crate::model::{Configuration, Registers};
use crate::scheduler::StepRecord;
use crate::topology::{NodeId, PortLabeledGraph};

/// Nodes standing on some walk of length at most `max_len` from `start`,
/// found by enumerating every port-label sequence.
pub fn walk_cover(g: &PortLabeledGraph, start: NodeId, max_len: usize) -> BTreeSet<NodeId> {
    fn go(g: &PortLabeledGraph, v: NodeId, left: usize, out: &mut BTreeSet<NodeId>) {
        out.insert(v);
        if left == 0 {
            return;
        }
        for p in 0..g.degree(v) {
            go(g, g.ports(v)[p].0, left - 1, out);
        }
    }
    let mut out = BTreeSet::new();
    go(g, start, max_len, &mut out);
    out
}

/// Per agent: the start node of its first clean pass through phases
/// `1..=last_phase` and the nodes it stood on during that pass.
#[derive(Clone, Debug, Default)]
pub struct PhaseCoverage {
    pub last_phase: usize,
    pub origin: Vec<Option<NodeId>>,
    pub visited: Vec<BTreeSet<NodeId>>,
    pub finished: Vec<bool>,
}

impl PhaseCoverage {
    pub fn new(k: usize, last_phase: usize) -> Self {
        Self {
            last_phase,
            origin: vec![None; k],
            visited: vec![BTreeSet::new(); k],
            finished: vec![false; k],
        }
    }

    /// Feeds one step; `after` is the configuration the step produced.
    pub fn observe(&mut self, rec: &StepRecord, after: &Configuration) {
        for m in rec.moves.iter().filter(|m| m.accepted) {
            let i = m.agent;
            if self.finished[i] {
                continue;
            }
            let Registers::Path(c) = &after.agents[i].regs else {
                continue;
            };
            match self.origin[i] {
                None => {
                    let fresh = c.length == 1 && c.labels == [0] && c.progress == 0 && c.in_flight && c.degrees.len() == 1;
                    if fresh {
                        self.origin[i] = Some(m.from);
                        self.visited[i] = BTreeSet::from([m.from, m.to]);
                    }
                }
                Some(_) if c.length > self.last_phase => self.finished[i] = true,
                Some(_) => {
                    self.visited[i].insert(m.to);
                }
            }
        }
    }

    pub fn all_finished(&self) -> bool {
        self.finished.iter().all(|&f| f)
    }

    /// Agents whose finished pass missed a node of the brute-force cover.
    pub fn mismatches(&self, g: &PortLabeledGraph) -> Vec<usize> {
        (0..self.finished.len())
            .filter(|&i| match (self.finished[i], self.origin[i]) {
                (true, Some(o)) => self.visited[i] != walk_cover(g, o, self.last_phase),
                _ => true,
            })
            .collect()
    }
}
