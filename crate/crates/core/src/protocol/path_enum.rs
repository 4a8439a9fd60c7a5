//! Gossip for anonymous agents on full whiteboards: each agent walks every
//! port-label sequence of length 1, 2, 3, ... from its start node in
//! lexicographic order, returning to the start between sequences.

use serde::{Deserialize, Serialize};

use super::{Event, Intent, ProtocolError};
use crate::model::{Configuration, MoveKind, Registers};
use crate::topology::Port;

/// Position of an agent within its enumeration of label sequences.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct PathCursor {
    /// Length of the sequences in the current phase.
    pub length: usize,
    /// Current sequence; position `j` is the port taken at depth `j`.
    pub labels: Vec<Port>,
    /// Number of labels already walked.
    pub progress: usize,
    /// Ports leading back towards the start, innermost last.
    pub trail: Vec<Port>,
    /// Degree of the node at each depth where a label was chosen.
    pub degrees: Vec<usize>,
    /// The sequence is finished and the agent is walking back.
    pub returning: bool,
    /// An outbound move was issued and its arrival is not yet recorded.
    pub in_flight: bool,
}

impl Default for PathCursor {
    fn default() -> Self {
        Self::new()
    }
}

impl PathCursor {
    /// First sequence of the first phase: `[0]`.
    pub fn new() -> Self {
        Self::zeros(1)
    }

    fn zeros(length: usize) -> Self {
        Self {
            length,
            labels: vec![0; length],
            progress: 0,
            trail: Vec::new(),
            degrees: Vec::new(),
            returning: false,
            in_flight: false,
        }
    }

    /// Number of scalar cells the cursor occupies.
    pub fn footprint(&self) -> usize {
        self.labels.len() + self.trail.len() + self.degrees.len() + 4
    }

    /// Whether the cursor is one the protocol itself could have produced
    /// (with the in-flight arrival already recorded).
    pub fn is_consistent(&self, phase_cap: usize) -> bool {
        let shape = self.length >= 1
            && self.length <= phase_cap.max(1)
            && self.labels.len() == self.length
            && self.progress <= self.length
            && !(self.returning && self.in_flight);
        if !shape {
            return false;
        }
        let walked = if self.returning {
            self.progress == self.length && self.degrees.len() == self.length && self.trail.len() <= self.length
        } else {
            self.trail.len() == self.progress && self.degrees.len() == self.progress + usize::from(self.in_flight)
        };
        walked
            && self
                .labels
                .iter()
                .zip(&self.degrees)
                .all(|(&l, &d)| l < d)
    }
}

/// The sequence after `cursor.labels` among all sequences of the same
/// length, where position `j` counts modulo `degrees_seen[j]`; after the
/// last one, the all-zero sequence one longer. The result starts a fresh
/// walk from the start node.
pub fn lex_next_cursor(cursor: &PathCursor, degrees_seen: &[usize]) -> PathCursor {
    let l = cursor.length;
    let mut labels = cursor.labels.clone();
    labels.resize(l, 0);
    for j in (0..l).rev() {
        let radix = degrees_seen.get(j).copied().unwrap_or(1);
        if labels[j] + 1 < radix {
            labels[j] += 1;
            labels[j + 1..].iter_mut().for_each(|x| *x = 0);
            return PathCursor {
                labels,
                ..PathCursor::zeros(l)
            };
        }
    }
    PathCursor::zeros(l + 1)
}

/// One move of an `anon_path_enum` agent. Every call issues a move. The
/// step never reads the board, so it also runs on CW and NW boards when a
/// witness asks for it; regular runs are restricted to FW by
/// [`super::check_legality`].
pub fn anon_path_enum_step(cfg: &mut Configuration, i: usize, events: &mut Vec<Event>) -> Result<Intent, ProtocolError> {
    let v = cfg.agents[i].position;
    let deg = cfg.graph().degree(v);
    let cap = cfg.params.phase_cap;
    let agent = &mut cfg.agents[i];
    let mut c = match &agent.regs {
        Registers::Path(c) => c.clone(),
        Registers::Dft { .. } => PathCursor::new(),
    };
    if c.in_flight && !c.returning {
        c.in_flight = false;
        c.trail.push(agent.arrival_port.unwrap_or(0));
        c.progress += 1;
    }
    if !c.is_consistent(cap) {
        c = PathCursor::new();
    }
    let intent = loop {
        if c.returning {
            if let Some(p) = c.trail.pop() {
                if p >= deg {
                    // Only a corrupted trail points off the node.
                    c = PathCursor::new();
                    continue;
                }
                break Intent::Move {
                    port: p,
                    kind: MoveKind::Retreat,
                };
            }
            c = lex_next_cursor(&c, &c.degrees);
            if c.length > cap.max(1) {
                c = PathCursor::new();
                events.push(Event::PhaseWrap { agent: i });
            }
        } else if c.progress == c.length {
            c.returning = true;
        } else {
            let label = c.labels[c.progress];
            if label >= deg {
                c = PathCursor::new();
                continue;
            }
            c.degrees.push(deg);
            c.in_flight = true;
            break Intent::Move {
                port: label,
                kind: MoveKind::Advance,
            };
        }
    };
    agent.regs = Registers::Path(c);
    Ok(intent)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{BoardClass, Program, SimParams};
    use crate::topology::{NodeId, PortLabeledGraph};
    use std::collections::BTreeSet;
    use std::sync::Arc;

    fn degrees_along(g: &PortLabeledGraph, start: NodeId, labels: &[Port]) -> Vec<usize> {
        let mut v = start;
        let mut out = Vec::new();
        for &l in labels {
            out.push(g.degree(v));
            v = g.neighbor(v, l).unwrap().0;
        }
        out
    }

    /// All label sequences of length `l` that are walkable from `start`,
    /// in lexicographic order.
    fn all_walks(g: &PortLabeledGraph, start: NodeId, l: usize) -> Vec<Vec<Port>> {
        let mut out = vec![(start, Vec::new())];
        for _ in 0..l {
            out = out
                .into_iter()
                .flat_map(|(v, seq): (NodeId, Vec<Port>)| {
                    (0..g.degree(v)).map(move |p| {
                        let mut s = seq.clone();
                        s.push(p);
                        (g.neighbor(v, p).unwrap().0, s)
                    })
                })
                .collect();
        }
        let mut seqs: Vec<_> = out.into_iter().map(|(_, s)| s).collect();
        seqs.sort();
        seqs
    }

    #[test]
    fn counting_on_degree_two() {
        let c = PathCursor::new();
        let c = lex_next_cursor(&c, &[2]);
        assert_eq!(c.labels, vec![1]);
        let c = lex_next_cursor(&c, &[2]);
        assert_eq!((c.length, c.labels.clone()), (2, vec![0, 0]));
        assert!(c.is_consistent(4));
    }

    #[test]
    fn variable_radix_matches_exhaustive_walks() {
        for seed in 0..5 {
            let g = PortLabeledGraph::random_connected(6, 4, seed).unwrap();
            for l in 1..=3 {
                let expect = all_walks(&g, 0, l);
                let mut c = PathCursor::zeros(l);
                let mut got = Vec::new();
                while c.length == l {
                    got.push(c.labels.clone());
                    let d = degrees_along(&g, 0, &c.labels);
                    c = lex_next_cursor(&c, &d);
                }
                assert_eq!(got, expect, "seed {seed} length {l}");
                assert_eq!(c.labels, vec![0; l + 1]);
            }
        }
    }

    #[test]
    fn head_advances_after_last_digit() {
        // [1, 2] where the second node has degree 3 and the start degree 3.
        let c = PathCursor {
            labels: vec![1, 2],
            ..PathCursor::zeros(2)
        };
        assert_eq!(lex_next_cursor(&c, &[3, 3]).labels, vec![2, 0]);
    }

    fn lone(g: PortLabeledGraph) -> Configuration {
        let g = Arc::new(g);
        let mut c = Configuration::new(g.clone(), BoardClass::FW, SimParams::for_graph(&g)).unwrap();
        c.add_agent(None, 0, Program::AnonPathEnum).unwrap();
        c
    }

    fn act(c: &mut Configuration, ev: &mut Vec<Event>) {
        let v = c.agents[0].position;
        let port = anon_path_enum_step(c, 0, ev).unwrap().port().expect("always moves");
        let (w, back) = c.graph().neighbor(v, port).unwrap();
        c.agents[0].position = w;
        c.agents[0].arrival_port = Some(back);
    }

    fn cursor(c: &Configuration) -> &PathCursor {
        match &c.agents[0].regs {
            Registers::Path(p) => p,
            _ => unreachable!(),
        }
    }

    #[test]
    fn ring3_covered_by_length_two() {
        let mut c = lone(PortLabeledGraph::ring(3).unwrap());
        let mut ev = Vec::new();
        let mut seen = BTreeSet::from([0]);
        while cursor(&c).length <= 2 {
            act(&mut c, &mut ev);
            seen.insert(c.agents[0].position);
            assert!(cursor(&c).footprint() <= 3 * cursor(&c).length + 4);
        }
        assert_eq!(seen.len(), 3);
        assert!(ev.is_empty());
    }

    #[test]
    fn walks_every_sequence_and_returns() {
        let g = PortLabeledGraph::grid(2, 3).unwrap();
        let mut c = lone(g.clone());
        let mut ev = Vec::new();
        let mut finished = Vec::new();
        while cursor(&c).length <= 2 {
            let before = cursor(&c).clone();
            act(&mut c, &mut ev);
            if cursor(&c).returning && !before.returning {
                finished.push(before.labels.clone());
            }
        }
        let mut expect = all_walks(&g, 0, 1);
        expect.extend(all_walks(&g, 0, 2));
        assert_eq!(finished, expect);
    }

    #[test]
    fn corrupted_cursor_resets() {
        let mut c = lone(PortLabeledGraph::ring(4).unwrap());
        c.agents[0].regs = Registers::Path(PathCursor {
            length: 2,
            labels: vec![0, 0],
            progress: 5,
            trail: vec![],
            degrees: vec![],
            returning: false,
            in_flight: false,
        });
        let intent = anon_path_enum_step(&mut c, 0, &mut Vec::new()).unwrap();
        assert_eq!(
            intent,
            Intent::Move {
                port: 0,
                kind: MoveKind::Advance
            }
        );
        let p = cursor(&c);
        assert_eq!((p.length, p.labels.clone(), p.progress), (1, vec![0], 0));
        assert!(p.in_flight);
    }

    #[test]
    fn trail_port_off_the_node_resets() {
        let mut c = lone(PortLabeledGraph::ring(4).unwrap());
        c.agents[0].regs = Registers::Path(PathCursor {
            length: 1,
            labels: vec![0],
            progress: 1,
            trail: vec![3],
            degrees: vec![4],
            returning: true,
            in_flight: false,
        });
        let intent = anon_path_enum_step(&mut c, 0, &mut Vec::new()).unwrap();
        assert_eq!(intent.port(), Some(0));
        assert_eq!(cursor(&c).labels, vec![0]);
        assert!(!cursor(&c).returning);
    }

    #[test]
    fn phase_cap_wraps() {
        let mut c = lone(PortLabeledGraph::ring(3).unwrap());
        c.params.phase_cap = 1;
        let mut ev = Vec::new();
        for _ in 0..4 {
            act(&mut c, &mut ev);
        }
        assert!(ev.is_empty());
        act(&mut c, &mut ev);
        assert_eq!(ev, vec![Event::PhaseWrap { agent: 0 }]);
        assert_eq!(cursor(&c).length, 1);
    }
}
