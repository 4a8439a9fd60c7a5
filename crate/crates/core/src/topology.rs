//! Anonymous connected graphs with per-node local port labels.
//!
//! Node indices exist only for the simulator's bookkeeping. Protocol step
//! functions never see them: they receive a node's degree, the arrival port
//! and the whiteboard, nothing else.

use std::collections::VecDeque;
use std::fmt::Write as _;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Simulator-internal node index.
pub type NodeId = usize;
/// Local link label, `0..degree`.
pub type Port = usize;

/// One broken structural invariant of a [`PortLabeledGraph`].
#[derive(Clone, Debug, PartialEq, Eq, Error)]
pub enum Violation {
    #[error("graph has no nodes")]
    Empty,
    #[error("node {node} port {port} points to missing node {peer}")]
    PeerOutOfRange { node: NodeId, port: Port, peer: NodeId },
    #[error("node {node} port {port} points to missing port {peer_port} of node {peer}")]
    PeerPortOutOfRange {
        node: NodeId,
        port: Port,
        peer: NodeId,
        peer_port: Port,
    },
    #[error("involution broken at node {node} port {port}")]
    InvolutionBroken { node: NodeId, port: Port },
    #[error("self-loop at node {node} port {port}")]
    SelfLoop { node: NodeId, port: Port },
    #[error("disconnected: node {unreachable} unreachable from node 0")]
    Disconnected { unreachable: NodeId },
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum GraphError {
    #[error("ring needs at least 2 nodes, got {0}")]
    RingTooSmall(usize),
    #[error("line {line}: {msg}")]
    Syntax { line: usize, msg: String },
    #[error("duplicate port {port} at node {node}")]
    DuplicatePort { node: NodeId, port: Port },
    #[error("port gap at node {node}: port {port} missing")]
    PortGap { node: NodeId, port: Port },
    #[error("port {port} out of range at node {node} (degree {degree})")]
    PortOutOfRange { node: NodeId, port: Port, degree: usize },
    #[error("node {0} out of range")]
    NodeOutOfRange(NodeId),
    #[error("invalid graph: {0}")]
    Invalid(#[from] Violation),
}

/// The network: `adjacency[v][a] = (u, b)` means port `a` of `v` leads to
/// `u`, entering through `u`'s port `b`.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct PortLabeledGraph {
    adjacency: Vec<Vec<(NodeId, Port)>>,
}

impl PortLabeledGraph {
    /// Builds a graph and rejects it unless every invariant holds.
    pub fn from_adjacency(adjacency: Vec<Vec<(NodeId, Port)>>) -> Result<Self, GraphError> {
        let g = Self::from_adjacency_unchecked(adjacency);
        match g.validate().into_iter().next() {
            None => Ok(g),
            Some(v) => Err(v.into()),
        }
    }

    /// Builds a graph without checking anything. Used to hand-craft broken
    /// inputs for [`PortLabeledGraph::validate`].
    pub fn from_adjacency_unchecked(adjacency: Vec<Vec<(NodeId, Port)>>) -> Self {
        Self { adjacency }
    }

    /// Ring of `n` nodes. Port 0 is clockwise (`v -> v+1`), port 1
    /// counterclockwise. `n = 2` is the single-edge graph.
    pub fn ring(n: usize) -> Result<Self, GraphError> {
        match n {
            0 | 1 => Err(GraphError::RingTooSmall(n)),
            2 => Ok(Self {
                adjacency: vec![vec![(1, 0)], vec![(0, 0)]],
            }),
            _ => Ok(Self {
                adjacency: (0..n)
                    .map(|v| vec![((v + 1) % n, 1), ((v + n - 1) % n, 0)])
                    .collect(),
            }),
        }
    }

    /// `rows x cols` grid; ports at each node follow east, south, west,
    /// north, skipping absent neighbours.
    pub fn grid(rows: usize, cols: usize) -> Result<Self, GraphError> {
        if rows * cols < 2 {
            return Err(GraphError::RingTooSmall(rows * cols));
        }
        let id = |r: usize, c: usize| r * cols + c;
        let mut edges = Vec::new();
        for r in 0..rows {
            for c in 0..cols {
                if c + 1 < cols {
                    edges.push((id(r, c), id(r, c + 1)));
                }
                if r + 1 < rows {
                    edges.push((id(r, c), id(r + 1, c)));
                }
            }
        }
        // Port order per node: E, S, W, N.
        let mut nbrs: Vec<Vec<NodeId>> = vec![Vec::new(); rows * cols];
        for r in 0..rows {
            for c in 0..cols {
                let v = id(r, c);
                if c + 1 < cols {
                    nbrs[v].push(id(r, c + 1));
                }
                if r + 1 < rows {
                    nbrs[v].push(id(r + 1, c));
                }
                if c > 0 {
                    nbrs[v].push(id(r, c - 1));
                }
                if r > 0 {
                    nbrs[v].push(id(r - 1, c));
                }
            }
        }
        Self::from_neighbour_lists(&nbrs)
    }

    /// Random connected simple graph with `n` nodes and `extra_edges`
    /// chords on top of a random spanning tree; port labels are shuffled
    /// per node. Deterministic in `seed`.
    pub fn random_connected(n: usize, extra_edges: usize, seed: u64) -> Result<Self, GraphError> {
        if n < 2 {
            return Err(GraphError::RingTooSmall(n));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut nbrs: Vec<Vec<NodeId>> = vec![Vec::new(); n];
        let mut order: Vec<NodeId> = (0..n).collect();
        order.shuffle(&mut rng);
        for i in 1..n {
            let u = order[i];
            let w = order[rng.gen_range(0..i)];
            nbrs[u].push(w);
            nbrs[w].push(u);
        }
        let max_extra = n * (n - 1) / 2 - (n - 1);
        let mut added = 0;
        while added < extra_edges.min(max_extra) {
            let u = rng.gen_range(0..n);
            let w = rng.gen_range(0..n);
            if u != w && !nbrs[u].contains(&w) {
                nbrs[u].push(w);
                nbrs[w].push(u);
                added += 1;
            }
        }
        for list in &mut nbrs {
            list.shuffle(&mut rng);
        }
        Self::from_neighbour_lists(&nbrs)
    }

    /// Simple graph from neighbour lists; the list order at each node is
    /// its port order.
    pub fn from_neighbour_lists(nbrs: &[Vec<NodeId>]) -> Result<Self, GraphError> {
        let mut adjacency = vec![Vec::new(); nbrs.len()];
        for (v, list) in nbrs.iter().enumerate() {
            for &u in list {
                let back = nbrs
                    .get(u)
                    .ok_or(GraphError::NodeOutOfRange(u))?
                    .iter()
                    .position(|&x| x == v)
                    .ok_or(Violation::InvolutionBroken {
                        node: v,
                        port: adjacency[v].len(),
                    })?;
                adjacency[v].push((u, back));
            }
        }
        Self::from_adjacency(adjacency)
    }

    pub fn node_count(&self) -> usize {
        self.adjacency.len()
    }

    pub fn edge_count(&self) -> usize {
        self.adjacency.iter().map(Vec::len).sum::<usize>() / 2
    }

    pub fn degree(&self, v: NodeId) -> usize {
        self.adjacency[v].len()
    }

    pub fn max_degree(&self) -> usize {
        self.adjacency.iter().map(Vec::len).max().unwrap_or(0)
    }

    pub fn ports(&self, v: NodeId) -> &[(NodeId, Port)] {
        &self.adjacency[v]
    }

    /// `v[a]` together with the reciprocal port.
    pub fn neighbor(&self, v: NodeId, a: Port) -> Result<(NodeId, Port), GraphError> {
        let ports = self.adjacency.get(v).ok_or(GraphError::NodeOutOfRange(v))?;
        ports.get(a).copied().ok_or(GraphError::PortOutOfRange {
            node: v,
            port: a,
            degree: ports.len(),
        })
    }

    pub fn is_regular(&self) -> bool {
        self.adjacency.windows(2).all(|w| w[0].len() == w[1].len())
    }

    /// Every broken invariant, in node/port order. Empty means valid.
    pub fn validate(&self) -> Vec<Violation> {
        let n = self.adjacency.len();
        if n == 0 {
            return vec![Violation::Empty];
        }
        let mut out = Vec::new();
        for (v, ports) in self.adjacency.iter().enumerate() {
            for (a, &(u, b)) in ports.iter().enumerate() {
                if u >= n {
                    out.push(Violation::PeerOutOfRange { node: v, port: a, peer: u });
                    continue;
                }
                if b >= self.adjacency[u].len() {
                    out.push(Violation::PeerPortOutOfRange {
                        node: v,
                        port: a,
                        peer: u,
                        peer_port: b,
                    });
                    continue;
                }
                if u == v {
                    out.push(Violation::SelfLoop { node: v, port: a });
                    continue;
                }
                if self.adjacency[u][b] != (v, a) {
                    out.push(Violation::InvolutionBroken { node: v, port: a });
                }
            }
        }
        let mut seen = vec![false; n];
        let mut queue = VecDeque::from([0]);
        seen[0] = true;
        while let Some(v) = queue.pop_front() {
            for &(u, _) in &self.adjacency[v] {
                if u < n && !seen[u] {
                    seen[u] = true;
                    queue.push_back(u);
                }
            }
        }
        if let Some(unreachable) = seen.iter().position(|s| !s) {
            out.push(Violation::Disconnected { unreachable });
        }
        out
    }

    /// Hop distances from `src`.
    pub fn distances_from(&self, src: NodeId) -> Vec<usize> {
        let mut dist = vec![usize::MAX; self.node_count()];
        dist[src] = 0;
        let mut queue = VecDeque::from([src]);
        while let Some(v) = queue.pop_front() {
            for &(u, _) in &self.adjacency[v] {
                if dist[u] == usize::MAX {
                    dist[u] = dist[v] + 1;
                    queue.push_back(u);
                }
            }
        }
        dist
    }

    pub fn diameter(&self) -> usize {
        (0..self.node_count())
            .flat_map(|v| self.distances_from(v))
            .max()
            .unwrap_or(0)
    }

    /// Line-based text form: node count, then one line per node with
    /// `port:peerNode:peerPort` triples in port order.
    pub fn serialize(&self) -> String {
        let mut s = format!("{}\n", self.node_count());
        for ports in &self.adjacency {
            let line: Vec<String> = ports
                .iter()
                .enumerate()
                .map(|(a, (u, b))| format!("{a}:{u}:{b}"))
                .collect();
            let _ = writeln!(s, "{}", line.join(" "));
        }
        s
    }

    /// Parses the adjacency-triple format written by
    /// [`PortLabeledGraph::serialize`]. Also accepts an edge-list body where
    /// every line is one edge `u:a v:b`. `#` starts a comment.
    pub fn parse(text: &str) -> Result<Self, GraphError> {
        let mut lines = text
            .lines()
            .enumerate()
            .map(|(i, l)| (i + 1, l.split('#').next().unwrap_or("").trim()));
        let (first_line, n) = loop {
            match lines.next() {
                None => {
                    return Err(GraphError::Syntax {
                        line: 0,
                        msg: "missing node count".into(),
                    })
                }
                Some((_, "")) => continue,
                Some((i, l)) => {
                    let n: usize = l.parse().map_err(|_| GraphError::Syntax {
                        line: i,
                        msg: format!("bad node count {l:?}"),
                    })?;
                    break (i, n);
                }
            }
        };
        if n == 0 {
            return Err(Violation::Empty.into());
        }
        let body: Vec<(usize, &str)> = lines.filter(|(_, l)| !l.is_empty()).collect();
        let edge_list = body
            .first()
            .and_then(|(_, l)| l.split_whitespace().next())
            .is_some_and(|tok| tok.matches(':').count() == 1);

        let mut slots: Vec<Vec<Option<(NodeId, Port)>>> = vec![Vec::new(); n];
        let mut assign = |v: NodeId, a: Port, peer: (NodeId, Port)| -> Result<(), GraphError> {
            if v >= n {
                return Err(GraphError::NodeOutOfRange(v));
            }
            let row = &mut slots[v];
            if row.len() <= a {
                row.resize(a + 1, None);
            }
            if row[a].is_some() {
                return Err(GraphError::DuplicatePort { node: v, port: a });
            }
            row[a] = Some(peer);
            Ok(())
        };

        if edge_list {
            for (line, l) in &body {
                let toks: Vec<&str> = l.split_whitespace().collect();
                let [x, y] = toks.as_slice() else {
                    return Err(GraphError::Syntax {
                        line: *line,
                        msg: "edge line needs exactly two node:port endpoints".into(),
                    });
                };
                let (u, a) = parse_pair(x, *line)?;
                let (v, b) = parse_pair(y, *line)?;
                assign(u, a, (v, b))?;
                assign(v, b, (u, a))?;
            }
        } else {
            if body.len() > n {
                return Err(GraphError::Syntax {
                    line: body[n].0,
                    msg: format!("more than {n} node lines"),
                });
            }
            for (v, (line, l)) in body.iter().enumerate() {
                for tok in l.split_whitespace() {
                    let parts: Vec<&str> = tok.split(':').collect();
                    let [a, u, b] = parts.as_slice() else {
                        return Err(GraphError::Syntax {
                            line: *line,
                            msg: format!("expected port:peerNode:peerPort, got {tok:?}"),
                        });
                    };
                    let num = |s: &str| {
                        s.parse::<usize>().map_err(|_| GraphError::Syntax {
                            line: *line,
                            msg: format!("bad number {s:?}"),
                        })
                    };
                    assign(v, num(a)?, (num(u)?, num(b)?))?;
                }
            }
        }
        let _ = first_line;

        let mut adjacency = Vec::with_capacity(n);
        for (v, row) in slots.into_iter().enumerate() {
            let mut ports = Vec::with_capacity(row.len());
            for (a, slot) in row.into_iter().enumerate() {
                ports.push(slot.ok_or(GraphError::PortGap { node: v, port: a })?);
            }
            adjacency.push(ports);
        }
        Self::from_adjacency(adjacency)
    }

    /// Two copies of `self` glued at `join_node`. See [`Mirror`].
    pub fn mirror_join(&self, join_node: NodeId) -> Result<Self, GraphError> {
        Ok(self.mirror_join_mapped(join_node)?.graph)
    }

    pub fn mirror_join_mapped(&self, join_node: NodeId) -> Result<Mirror, GraphError> {
        let n = self.node_count();
        if join_node >= n {
            return Err(GraphError::NodeOutOfRange(join_node));
        }
        let deg_w = self.degree(join_node);
        let copy_a: Vec<NodeId> = (0..n).collect();
        let mut copy_b = vec![0; n];
        let mut next = n;
        for (v, slot) in copy_b.iter_mut().enumerate() {
            if v == join_node {
                *slot = join_node;
            } else {
                *slot = next;
                next += 1;
            }
        }
        let mut adjacency = vec![Vec::new(); 2 * n - 1];
        for v in 0..n {
            adjacency[v] = self.adjacency[v].clone();
        }
        // The joined node keeps copy A's ports and appends copy B's after them.
        for v in 0..n {
            for &(u, b) in &self.adjacency[v] {
                let bv = copy_b[v];
                let bu = copy_b[u];
                let bport = if u == join_node { deg_w + b } else { b };
                adjacency[bv].push((bu, bport));
            }
        }
        let graph = Self::from_adjacency(adjacency)?;
        Ok(Mirror {
            graph,
            copy_a,
            copy_b,
            join_node,
            port_offset: deg_w,
        })
    }
}

/// Result of gluing two copies of a graph at one node: `2n - 1` nodes and
/// `2m` edges. The joined node's ports `0..deg` lead into copy A and
/// `deg..2*deg` into copy B.
#[derive(Clone, Debug)]
pub struct Mirror {
    pub graph: PortLabeledGraph,
    /// Original node `v` lives at `copy_a[v]` (identity).
    pub copy_a: Vec<NodeId>,
    /// Original node `v` lives at `copy_b[v]`; the join node maps to itself.
    pub copy_b: Vec<NodeId>,
    pub join_node: NodeId,
    pub port_offset: usize,
}

impl Mirror {
    /// Port of copy-B node `copy_b[v]` corresponding to original port `a`.
    pub fn port_b(&self, v: NodeId, a: Port) -> Port {
        if v == self.join_node {
            a + self.port_offset
        } else {
            a
        }
    }

    pub fn in_copy_b(&self, node: NodeId) -> bool {
        node != self.join_node && node >= self.copy_a.len()
    }
}

fn parse_pair(tok: &str, line: usize) -> Result<(usize, usize), GraphError> {
    let bad = || GraphError::Syntax {
        line,
        msg: format!("expected node:port, got {tok:?}"),
    };
    let (a, b) = tok.split_once(':').ok_or_else(bad)?;
    Ok((a.parse().map_err(|_| bad())?, b.parse().map_err(|_| bad())?))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ring_shapes() {
        let g = PortLabeledGraph::ring(3).unwrap();
        assert_eq!(g.node_count(), 3);
        assert_eq!(g.edge_count(), 3);
        assert!((0..3).all(|v| g.degree(v) == 2));

        let g = PortLabeledGraph::ring(2).unwrap();
        assert_eq!(g.edge_count(), 1);
        assert_eq!((g.degree(0), g.degree(1)), (1, 1));

        let g = PortLabeledGraph::ring(6).unwrap();
        assert_eq!(g.edge_count(), 6);
        assert!(g.validate().is_empty());

        assert_eq!(PortLabeledGraph::ring(1), Err(GraphError::RingTooSmall(1)));
        assert_eq!(PortLabeledGraph::ring(0), Err(GraphError::RingTooSmall(0)));
    }

    #[test]
    fn neighbor_lookup() {
        let g = PortLabeledGraph::ring(3).unwrap();
        assert_eq!(g.neighbor(0, 0), Ok((1, 1)));
        let (u, b) = g.neighbor(0, 0).unwrap();
        assert_eq!(g.neighbor(u, b), Ok((0, 0)));
        assert!(matches!(
            g.neighbor(0, 2),
            Err(GraphError::PortOutOfRange { node: 0, port: 2, degree: 2 })
        ));
        let two = PortLabeledGraph::ring(2).unwrap();
        assert_eq!(two.neighbor(0, 0), Ok((1, 0)));
    }

    #[test]
    fn parse_edge_list_and_triples() {
        let g = PortLabeledGraph::parse("2\n0:0 1:0\n").unwrap();
        assert_eq!(g, PortLabeledGraph::ring(2).unwrap());
        assert_eq!(g.edge_count(), 1);

        let r4 = PortLabeledGraph::ring(4).unwrap();
        let text = r4.serialize();
        assert_eq!(PortLabeledGraph::parse(&text).unwrap(), r4);

        let commented = "# a triangle\n3\n0:1:1 1:2:0 # node 0\n0:2:1 1:0:0\n0:0:1 1:1:0\n";
        assert_eq!(
            PortLabeledGraph::parse(commented).unwrap(),
            PortLabeledGraph::ring(3).unwrap()
        );
    }

    #[test]
    fn parse_errors_name_node_and_port() {
        // node 0 lists port 1 only
        let gap = "2\n1:1:0\n0:0:1\n";
        assert_eq!(
            PortLabeledGraph::parse(gap),
            Err(GraphError::PortGap { node: 0, port: 0 })
        );
        let dup = "2\n0:1:0 0:1:0\n0:0:0\n";
        assert_eq!(
            PortLabeledGraph::parse(dup),
            Err(GraphError::DuplicatePort { node: 0, port: 0 })
        );
        let non_inv = "3\n0:1:0\n0:0:0 1:2:0\n0:0:0\n";
        assert!(matches!(
            PortLabeledGraph::parse(non_inv),
            Err(GraphError::Invalid(Violation::PeerPortOutOfRange { .. }))
                | Err(GraphError::Invalid(Violation::InvolutionBroken { .. }))
        ));
        let disconnected = "4\n0:1:0\n0:0:0\n0:3:0\n0:2:0\n";
        assert_eq!(
            PortLabeledGraph::parse(disconnected),
            Err(GraphError::Invalid(Violation::Disconnected { unreachable: 2 }))
        );
        assert!(matches!(
            PortLabeledGraph::parse("x\n"),
            Err(GraphError::Syntax { line: 1, .. })
        ));
    }

    #[test]
    fn ring_port_gap_when_port_omitted() {
        // degree-2 node 1 lists only port 1
        let text = "3\n0:1:1 1:2:0\n1:0:0\n0:0:1 1:1:0\n";
        assert_eq!(
            PortLabeledGraph::parse(text),
            Err(GraphError::PortGap { node: 1, port: 0 })
        );
    }

    #[test]
    fn validate_reports_each_problem() {
        assert!(PortLabeledGraph::ring(5).unwrap().validate().is_empty());

        let broken = PortLabeledGraph::from_adjacency_unchecked(vec![
            vec![(1, 0)],
            vec![(2, 0)],
            vec![(1, 0)],
        ]);
        assert!(broken
            .validate()
            .contains(&Violation::InvolutionBroken { node: 0, port: 0 }));

        let tri = PortLabeledGraph::ring(3).unwrap();
        let mut adj: Vec<Vec<(NodeId, Port)>> = (0..3).map(|v| tri.ports(v).to_vec()).collect();
        adj.extend((0..3).map(|v| tri.ports(v).iter().map(|&(u, b)| (u + 3, b)).collect::<Vec<_>>()));
        let two = PortLabeledGraph::from_adjacency_unchecked(adj);
        assert_eq!(two.validate(), vec![Violation::Disconnected { unreachable: 3 }]);
    }

    #[test]
    fn mirror_counts() {
        let g = PortLabeledGraph::ring(3).unwrap();
        let m = g.mirror_join(2).unwrap();
        assert_eq!(m.node_count(), 5);
        assert_eq!(m.edge_count(), 6);
        assert_eq!(m.degree(2), 4);
        assert!(m.validate().is_empty());

        let path = PortLabeledGraph::ring(2).unwrap().mirror_join(1).unwrap();
        assert_eq!(path.node_count(), 3);
        assert_eq!(path.edge_count(), 2);

        let twice = m.mirror_join(0).unwrap();
        assert!(twice.validate().is_empty());
        assert_eq!(twice.node_count(), 9);

        assert_eq!(g.mirror_join(7), Err(GraphError::NodeOutOfRange(7)));
    }

    #[test]
    fn grid_and_diameter() {
        let g = PortLabeledGraph::grid(2, 3).unwrap();
        assert_eq!(g.node_count(), 6);
        assert_eq!(g.edge_count(), 7);
        assert_eq!(g.diameter(), 3);
        assert_eq!(PortLabeledGraph::ring(5).unwrap().diameter(), 2);
    }
}
