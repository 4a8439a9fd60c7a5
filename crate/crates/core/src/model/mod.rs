//! Global simulation state: agents, whiteboards, gossip tokens and the
//! configuration that ties them to a graph.

mod whiteboard;

use std::collections::BTreeSet;
use std::hash::{Hash, Hasher};
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::protocol::path_enum::PathCursor;
use crate::topology::{NodeId, Port, PortLabeledGraph};

pub use whiteboard::{BoardClass, BoardError, IdMap, Table, TableValue, Whiteboard};

/// Identifier of a named agent.
#[derive(Copy, Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct AgentId(pub u32);

impl std::fmt::Display for AgentId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        self.0.fmt(f)
    }
}

/// A unit of gossip. `origin` is the hidden index of the agent that owns
/// it; fuzzing may add tokens whose origin or payload matches no agent.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct GossipToken {
    pub origin: u32,
    pub payload: Vec<u8>,
}

impl GossipToken {
    /// The token agent `index` is given at setup.
    pub fn genuine(index: usize) -> Self {
        Self {
            origin: index as u32,
            payload: format!("gossip-{index}").into_bytes(),
        }
    }
}

/// Which protocol an agent runs.
#[derive(Copy, Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Program {
    DftKminus1,
    FwAsyncDft,
    AnonPathEnum,
}

impl Program {
    pub fn name(self) -> &'static str {
        match self {
            Program::DftKminus1 => "dft_kminus1",
            Program::FwAsyncDft => "fw_async_dft",
            Program::AnonPathEnum => "anon_path_enum",
        }
    }

    pub fn needs_named_agents(self) -> bool {
        !matches!(self, Program::AnonPathEnum)
    }
}

impl std::str::FromStr for Program {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "dft_kminus1" => Ok(Program::DftKminus1),
            "fw_async_dft" => Ok(Program::FwAsyncDft),
            "anon_path_enum" => Ok(Program::AnonPathEnum),
            _ => Err(format!(
                "unknown protocol {s:?} (expected dft_kminus1, fw_async_dft or anon_path_enum)"
            )),
        }
    }
}

impl std::fmt::Display for Program {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// Protocol-private registers.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Registers {
    /// DFT protocols: whether the last move was a pass-through bounce.
    Dft { bounced: bool },
    Path(PathCursor),
}

impl Registers {
    pub fn initial(program: Program) -> Self {
        match program {
            Program::DftKminus1 | Program::FwAsyncDft => Registers::Dft { bounced: false },
            Program::AnonPathEnum => Registers::Path(PathCursor::new()),
        }
    }
}

/// Class of a single migration, used by the move-bound audit.
#[derive(Copy, Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MoveKind {
    /// Leaves through a port recorded as outgoing.
    Advance,
    /// Returns to the parent, clearing the InLink entry.
    Retreat,
    /// Sent straight back from an already visited node.
    Bounce,
}

/// A migration the scheduler could not carry out yet (half-duplex loss);
/// the agent retries it on its next action.
#[derive(Copy, Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct PendingMove {
    pub port: Port,
    pub kind: MoveKind,
}

/// One mobile agent.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct AgentCore {
    /// `None` for anonymous agents.
    pub id: Option<AgentId>,
    pub position: NodeId,
    pub t_bit: bool,
    pub known: BTreeSet<GossipToken>,
    pub program: Program,
    pub regs: Registers,
    /// Port the agent last arrived through; `None` until its first move.
    pub arrival_port: Option<Port>,
    pub pending: Option<PendingMove>,
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ModelError {
    #[error("timer cap {cap} is below the steady-state traversal period {min}")]
    TimerCapTooSmall { cap: u32, min: u32 },
    #[error("node {0} does not exist")]
    NoSuchNode(NodeId),
    #[error("agent id {0} used twice")]
    DuplicateId(AgentId),
    #[error("agent id {id} outside the id domain 1..={max}")]
    IdOutOfDomain { id: AgentId, max: AgentId },
}

/// Run parameters shared by every node and agent.
#[derive(Copy, Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SimParams {
    /// Saturation value for `Timer` and `WaitT`.
    pub timer_cap: u32,
    /// Largest id of the id domain; clean boards start with `MinID = max_id`.
    pub max_id: AgentId,
    /// Longest path length the path-enumeration protocol grows to.
    pub phase_cap: usize,
}

pub const DEFAULT_MAX_ID: AgentId = AgentId(1024);

impl SimParams {
    /// Default parameters: timer cap `4m + 1`, phase cap `n`.
    pub fn for_graph(g: &PortLabeledGraph) -> Self {
        Self {
            timer_cap: 4 * g.edge_count() as u32 + 1,
            max_id: DEFAULT_MAX_ID,
            phase_cap: g.node_count(),
        }
    }

    /// Rounds one uninterrupted DFT of `g` takes: tree edges are walked
    /// twice and every other edge is probed from both ends.
    pub fn traversal_period(g: &PortLabeledGraph) -> u32 {
        let (n, m) = (g.node_count() as u32, g.edge_count() as u32);
        4 * m + 2 - 2 * n
    }
}

/// Global state: graph, agents, whiteboards and the round counter.
#[derive(Clone, Debug)]
pub struct Configuration {
    graph: Arc<PortLabeledGraph>,
    graph_fingerprint: [u8; 32],
    pub params: SimParams,
    pub agents: Vec<AgentCore>,
    pub boards: Vec<Whiteboard>,
    pub round: u64,
}

impl Configuration {
    /// Clean boards of `class` everywhere and no agents.
    pub fn new(graph: Arc<PortLabeledGraph>, class: BoardClass, params: SimParams) -> Result<Self, ModelError> {
        let min = SimParams::traversal_period(&graph);
        if params.timer_cap < min {
            return Err(ModelError::TimerCapTooSmall {
                cap: params.timer_cap,
                min,
            });
        }
        let graph_fingerprint = Sha256::digest(graph.serialize().as_bytes()).into();
        let boards = vec![Whiteboard::new(class, params.max_id); graph.node_count()];
        Ok(Self {
            graph,
            graph_fingerprint,
            params,
            agents: Vec::new(),
            boards,
            round: 0,
        })
    }

    /// Adds an agent that knows only its own genuine token and returns its
    /// hidden index.
    pub fn add_agent(&mut self, id: Option<AgentId>, position: NodeId, program: Program) -> Result<usize, ModelError> {
        if position >= self.graph.node_count() {
            return Err(ModelError::NoSuchNode(position));
        }
        if let Some(id) = id {
            if id.0 == 0 || id > self.params.max_id {
                return Err(ModelError::IdOutOfDomain {
                    id,
                    max: self.params.max_id,
                });
            }
            if self.agents.iter().any(|a| a.id == Some(id)) {
                return Err(ModelError::DuplicateId(id));
            }
        }
        let index = self.agents.len();
        self.agents.push(AgentCore {
            id,
            position,
            t_bit: false,
            known: BTreeSet::from([GossipToken::genuine(index)]),
            program,
            regs: Registers::initial(program),
            arrival_port: None,
            pending: None,
        });
        Ok(index)
    }

    pub fn graph(&self) -> &PortLabeledGraph {
        &self.graph
    }

    pub fn graph_arc(&self) -> &Arc<PortLabeledGraph> {
        &self.graph
    }

    pub fn class(&self) -> BoardClass {
        self.boards.first().map_or(BoardClass::NW, Whiteboard::class)
    }

    /// Deterministic execution order key: id for named agents, hidden index
    /// for anonymous ones.
    pub fn order_key(&self, index: usize) -> (u32, usize) {
        (self.agents[index].id.map_or(0, |i| i.0), index)
    }

    /// Agents at each node, in execution order.
    pub fn occupancy(&self) -> Vec<Vec<usize>> {
        let mut at = vec![Vec::new(); self.graph.node_count()];
        for (i, a) in self.agents.iter().enumerate() {
            at[a.position].push(i);
        }
        for list in &mut at {
            list.sort_by_key(|&i| self.order_key(i));
        }
        at
    }

    pub fn agents_at(&self, node: NodeId) -> Vec<usize> {
        let mut here: Vec<usize> = (0..self.agents.len())
            .filter(|&i| self.agents[i].position == node)
            .collect();
        here.sort_by_key(|&i| self.order_key(i));
        here
    }

    pub fn index_of(&self, id: AgentId) -> Option<usize> {
        self.agents.iter().position(|a| a.id == Some(id))
    }

    /// Every agent at `node` learns everything the others there know; an FW
    /// board joins in as one more party. Returns whether two or more parties
    /// took part.
    pub fn merge_gossip(&mut self, node: NodeId) -> bool {
        let here = self.agents_at(node);
        let fw = self.boards[node].class() == BoardClass::FW;
        if here.len() + usize::from(fw) < 2 {
            return false;
        }
        let mut union: BTreeSet<GossipToken> = if fw {
            self.boards[node].gossip_store().clone()
        } else {
            BTreeSet::new()
        };
        for &i in &here {
            union.extend(self.agents[i].known.iter().cloned());
        }
        for &i in &here {
            if self.agents[i].known.len() != union.len() {
                self.agents[i].known = union.clone();
            }
        }
        if fw && self.boards[node].gossip_store().len() != union.len() {
            self.boards[node]
                .store_gossip(union)
                .expect("FW board accepts gossip");
        }
        true
    }

    /// Every agent knows every live agent's genuine token.
    pub fn gossip_complete(&self) -> bool {
        let k = self.agents.len();
        self.agents
            .iter()
            .all(|a| (0..k).all(|j| a.known.contains(&GossipToken::genuine(j))))
    }

    /// Digest over graph, parameters, agents and boards; the round counter is
    /// left out. Agents enter as a sorted multiset, so permuting anonymous
    /// agents with equal state does not change it.
    pub fn snapshot_hash(&self) -> u64 {
        let mut per_agent: Vec<[u8; 32]> = self
            .agents
            .iter()
            .map(|a| {
                let mut h = StableHasher::new();
                a.hash(&mut h);
                h.digest()
            })
            .collect();
        per_agent.sort_unstable();
        let mut h = StableHasher::new();
        h.write(&self.graph_fingerprint);
        self.params.hash(&mut h);
        for d in &per_agent {
            h.write(d);
        }
        self.boards.hash(&mut h);
        h.finish()
    }

    /// Structural equality ignoring the round counter.
    pub fn same_state(&self, other: &Self) -> bool {
        self.graph_fingerprint == other.graph_fingerprint
            && self.params == other.params
            && self.agents == other.agents
            && self.boards == other.boards
    }

    pub fn snapshot(&self) -> Snapshot<'_> {
        Snapshot {
            round: self.round,
            graph: hex(&self.graph_fingerprint[..8]),
            params: self.params,
            agents: &self.agents,
            boards: &self.boards,
        }
    }

    pub fn snapshot_json(&self) -> String {
        serde_json::to_string(&self.snapshot()).expect("snapshot serializes")
    }
}

/// JSON snapshot schema: `{round, graph, params, agents, boards}` with
/// fields in declaration order and sets in sorted order.
#[derive(Serialize)]
pub struct Snapshot<'a> {
    pub round: u64,
    /// First 8 bytes of the SHA-256 of the serialized graph, hex.
    pub graph: String,
    pub params: SimParams,
    pub agents: &'a [AgentCore],
    pub boards: &'a [Whiteboard],
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

/// `Hasher` over SHA-256 with fixed-width little-endian integer encoding,
/// so digests agree across runs and platforms.
struct StableHasher(Sha256);

impl StableHasher {
    fn new() -> Self {
        Self(Sha256::new())
    }

    fn digest(self) -> [u8; 32] {
        self.0.finalize().into()
    }
}

impl Hasher for StableHasher {
    fn finish(&self) -> u64 {
        let d = self.0.clone().finalize();
        u64::from_le_bytes(d[..8].try_into().expect("8 bytes"))
    }
    fn write(&mut self, bytes: &[u8]) {
        self.0.update(bytes);
    }
    fn write_u8(&mut self, i: u8) {
        self.write(&[i]);
    }
    fn write_u16(&mut self, i: u16) {
        self.write(&i.to_le_bytes());
    }
    fn write_u32(&mut self, i: u32) {
        self.write(&i.to_le_bytes());
    }
    fn write_u64(&mut self, i: u64) {
        self.write(&i.to_le_bytes());
    }
    fn write_usize(&mut self, i: usize) {
        self.write(&(i as u64).to_le_bytes());
    }
    fn write_isize(&mut self, i: isize) {
        self.write(&(i as i64).to_le_bytes());
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tri(class: BoardClass) -> Configuration {
        let g = Arc::new(PortLabeledGraph::ring(3).unwrap());
        let p = SimParams::for_graph(&g);
        Configuration::new(g, class, p).unwrap()
    }

    #[test]
    fn co_located_agents_share() {
        let mut c = tri(BoardClass::CW);
        c.add_agent(Some(AgentId(1)), 0, Program::DftKminus1).unwrap();
        c.add_agent(Some(AgentId(2)), 0, Program::DftKminus1).unwrap();
        assert!(!c.gossip_complete());
        assert!(c.merge_gossip(0));
        assert_eq!(c.agents[0].known.len(), 2);
        assert_eq!(c.agents[0].known, c.agents[1].known);
        assert!(c.gossip_complete());
    }

    #[test]
    fn fw_store_joins_merge() {
        let mut c = tri(BoardClass::FW);
        c.add_agent(Some(AgentId(1)), 0, Program::FwAsyncDft).unwrap();
        let stored = GossipToken {
            origin: 77,
            payload: b"c".to_vec(),
        };
        c.boards[0].store_gossip([stored.clone()]).unwrap();
        assert!(c.merge_gossip(0));
        let expect: BTreeSet<_> = [GossipToken::genuine(0), stored].into();
        assert_eq!(c.agents[0].known, expect);
        assert_eq!(c.boards[0].gossip_store(), &expect);
    }

    #[test]
    fn lone_agent_on_cw_is_untouched() {
        let mut c = tri(BoardClass::CW);
        c.add_agent(Some(AgentId(1)), 0, Program::DftKminus1).unwrap();
        let before = c.agents[0].known.clone();
        assert!(!c.merge_gossip(0));
        assert_eq!(c.agents[0].known, before);
        assert!(c.gossip_complete());
    }

    #[test]
    fn hash_tracks_state() {
        let mut c = tri(BoardClass::CW);
        c.add_agent(Some(AgentId(1)), 0, Program::DftKminus1).unwrap();
        let copy = c.clone();
        assert_eq!(c.snapshot_hash(), copy.snapshot_hash());
        c.boards[1].tick(100);
        assert_ne!(c.snapshot_hash(), copy.snapshot_hash());
        let mut later = copy.clone();
        later.round = 99;
        assert_eq!(later.snapshot_hash(), copy.snapshot_hash());
        assert!(later.same_state(&copy));
    }

    #[test]
    fn anonymous_permutation_hashes_equal() {
        let mut c = tri(BoardClass::FW);
        c.add_agent(None, 0, Program::AnonPathEnum).unwrap();
        c.add_agent(None, 2, Program::AnonPathEnum).unwrap();
        let mut swapped = c.clone();
        swapped.agents.swap(0, 1);
        assert_eq!(c.snapshot_hash(), swapped.snapshot_hash());
        // The oracle: sort agents by their full serialized state.
        let canon = |cfg: &Configuration| {
            let mut v: Vec<String> = cfg
                .agents
                .iter()
                .map(|a| serde_json::to_string(a).unwrap())
                .collect();
            v.sort();
            v
        };
        assert_eq!(canon(&c), canon(&swapped));
    }

    #[test]
    fn rejects_bad_setup() {
        let mut c = tri(BoardClass::CW);
        c.add_agent(Some(AgentId(3)), 0, Program::DftKminus1).unwrap();
        assert_eq!(
            c.add_agent(Some(AgentId(3)), 1, Program::DftKminus1),
            Err(ModelError::DuplicateId(AgentId(3)))
        );
        assert_eq!(
            c.add_agent(Some(AgentId(4)), 9, Program::DftKminus1),
            Err(ModelError::NoSuchNode(9))
        );
        let g = Arc::new(PortLabeledGraph::ring(6).unwrap());
        let mut p = SimParams::for_graph(&g);
        p.timer_cap = 13;
        assert_eq!(
            Configuration::new(g, BoardClass::CW, p).unwrap_err(),
            ModelError::TimerCapTooSmall { cap: 13, min: 14 }
        );
    }

    #[test]
    fn snapshot_json_is_stable() {
        let mut c = tri(BoardClass::CW);
        c.add_agent(Some(AgentId(1)), 0, Program::DftKminus1).unwrap();
        let a = c.snapshot_json();
        let b = c.clone().snapshot_json();
        assert_eq!(a, b);
        let v: serde_json::Value = serde_json::from_str(&a).unwrap();
        assert_eq!(v["agents"][0]["id"], 1);
        assert_eq!(v["round"], 0);
    }
}
