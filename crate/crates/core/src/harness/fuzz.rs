//! Arbitrary initial configurations: structurally valid, semantically junk.

use std::collections::BTreeSet;
use std::sync::Arc;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{AgentId, BoardClass, Configuration, GossipToken, ModelError, Program, Registers, SimParams};
use crate::protocol::path_enum::PathCursor;
use crate::topology::{NodeId, PortLabeledGraph};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Placement {
    /// Each agent on an independently chosen node.
    Uniform,
    /// All agents on one node.
    Clustered,
    /// Explicit start node per agent.
    List(Vec<NodeId>),
}

/// How much junk to inject. Rates are probabilities in `[0, 1]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FuzzSpec {
    /// Inclusive id range agents and fake board ids are drawn from.
    pub id_domain: (u32, u32),
    /// Explicit ids for the live agents instead of random ones.
    pub ids: Option<Vec<u32>>,
    /// Per node: chance of a fake MinID below every live id, and of table
    /// entries for a fake id.
    pub fake_id_rate: f64,
    /// Per (node, live id): chance of random T_table/InLink/OutLink entries.
    pub table_garbage_rate: f64,
    /// Inclusive ranges for Timer and WaitT, clamped to the timer cap.
    pub timer_range: (u32, u32),
    pub wait_range: (u32, u32),
    /// Per (node, id): chance the id sits in the node's waiting list.
    pub waiting_garbage_rate: f64,
    pub placement: Placement,
    pub random_t_bits: bool,
    /// Chance of each garbage gossip token in agents' and FW boards' sets.
    pub garbage_token_rate: f64,
    /// Chance of scrambled agent registers (arrival port, protocol state).
    pub register_garbage_rate: f64,
}

impl Default for FuzzSpec {
    fn default() -> Self {
        Self::adversarial()
    }
}

impl FuzzSpec {
    /// No junk at all: clean boards, fresh agents, uniform placement.
    pub fn clean() -> Self {
        Self {
            id_domain: (1, 64),
            ids: None,
            fake_id_rate: 0.0,
            table_garbage_rate: 0.0,
            timer_range: (0, 0),
            wait_range: (0, 0),
            waiting_garbage_rate: 0.0,
            placement: Placement::Uniform,
            random_t_bits: false,
            garbage_token_rate: 0.0,
            register_garbage_rate: 0.0,
        }
    }

    /// Junk everywhere.
    pub fn adversarial() -> Self {
        Self {
            fake_id_rate: 0.3,
            table_garbage_rate: 0.5,
            timer_range: (0, u32::MAX),
            wait_range: (0, u32::MAX),
            waiting_garbage_rate: 0.15,
            random_t_bits: true,
            garbage_token_rate: 0.2,
            register_garbage_rate: 0.5,
            ..Self::clean()
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum FuzzError {
    #[error("id domain {lo}..={hi} holds fewer than {k} ids")]
    IdDomainTooSmall { lo: u32, hi: u32, k: usize },
    #[error("explicit ids: expected {k} distinct ids, got {got:?}")]
    BadIds { k: usize, got: Vec<u32> },
    #[error("placement list must name {k} nodes below {n}")]
    BadPlacement { k: usize, n: usize },
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// Everything that fixes a run except the initial junk.
#[derive(Clone, Debug)]
pub struct Setup {
    pub graph: Arc<PortLabeledGraph>,
    pub k: usize,
    pub class: BoardClass,
    pub program: Program,
    pub params: SimParams,
}

impl Setup {
    /// Default parameters for `graph`, with the id ceiling taken from the
    /// fuzz spec's id domain.
    pub fn new(graph: impl Into<Arc<PortLabeledGraph>>, k: usize, class: BoardClass, program: Program, spec: &FuzzSpec) -> Self {
        let graph = graph.into();
        let mut params = SimParams::for_graph(&graph);
        params.max_id = AgentId(spec.id_domain.1.max(1));
        Self {
            graph,
            k,
            class,
            program,
            params,
        }
    }
}

fn garbage_token(rng: &mut ChaCha8Rng, k: usize) -> GossipToken {
    if rng.gen_bool(0.5) {
        GossipToken {
            origin: k as u32 + rng.gen_range(0..8),
            payload: vec![rng.gen(); rng.gen_range(0..4)],
        }
    } else {
        // Claims a live origin but carries the wrong payload.
        GossipToken {
            origin: rng.gen_range(0..k.max(1) as u32),
            payload: b"forged".to_vec(),
        }
    }
}

fn garbage_cursor(rng: &mut ChaCha8Rng, cap: usize, max_deg: usize) -> PathCursor {
    let length = rng.gen_range(1..=cap.max(1) + 1);
    let progress = rng.gen_range(0..=length + 1);
    let labels = (0..length).map(|_| rng.gen_range(0..max_deg)).collect();
    let trail_len = rng.gen_range(0..=progress);
    PathCursor {
        length,
        labels,
        progress,
        trail: (0..trail_len).map(|_| rng.gen_range(0..max_deg)).collect(),
        degrees: (0..trail_len).map(|_| rng.gen_range(1..=max_deg)).collect(),
        returning: rng.gen_bool(0.3),
        in_flight: rng.gen_bool(0.3),
    }
}

/// Deterministic function of `(setup, spec, seed)`.
pub fn fuzz_config(setup: &Setup, spec: &FuzzSpec, seed: u64) -> Result<Configuration, FuzzError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let g = &setup.graph;
    let (n, k) = (g.node_count(), setup.k);
    let cap = setup.params.timer_cap;
    let (lo, hi) = spec.id_domain;
    let named = setup.program.needs_named_agents();

    let ids: Vec<Option<AgentId>> = if !named {
        vec![None; k]
    } else if let Some(ids) = &spec.ids {
        let distinct: BTreeSet<_> = ids.iter().collect();
        if ids.len() != k || distinct.len() != k || ids.iter().any(|&i| i < lo.max(1) || i > hi) {
            return Err(FuzzError::BadIds { k, got: ids.clone() });
        }
        ids.iter().map(|&i| Some(AgentId(i))).collect()
    } else {
        let lo = lo.max(1);
        if hi < lo || ((hi - lo + 1) as usize) < k {
            return Err(FuzzError::IdDomainTooSmall { lo, hi, k });
        }
        let mut picked = BTreeSet::new();
        while picked.len() < k {
            picked.insert(rng.gen_range(lo..=hi));
        }
        let mut v: Vec<_> = picked.into_iter().map(|i| Some(AgentId(i))).collect();
        v.shuffle(&mut rng);
        v
    };

    let positions: Vec<NodeId> = match &spec.placement {
        Placement::Uniform => (0..k).map(|_| rng.gen_range(0..n)).collect(),
        Placement::Clustered => vec![rng.gen_range(0..n); k],
        Placement::List(l) => {
            if l.len() != k || l.iter().any(|&v| v >= n) {
                return Err(FuzzError::BadPlacement { k, n });
            }
            l.clone()
        }
    };

    let mut cfg = Configuration::new(setup.graph.clone(), setup.class, setup.params)?;
    for (id, &at) in ids.iter().zip(&positions) {
        cfg.add_agent(*id, at, setup.program)?;
    }

    let live: Vec<AgentId> = ids.iter().flatten().copied().collect();
    let min_live = live.iter().min().map_or(hi, |i| i.0);
    let is_live = |x: u32| live.iter().any(|i| i.0 == x);
    let fakes_below: Vec<u32> = (lo.max(1)..min_live.min(hi + 1)).filter(|&x| !is_live(x)).collect();
    let range = |rng: &mut ChaCha8Rng, (a, b): (u32, u32)| {
        let (a, b) = (a.min(cap), b.min(cap));
        rng.gen_range(a.min(b)..=b.max(a))
    };

    if setup.class != BoardClass::NW {
        for v in 0..n {
            let deg = g.degree(v);
            let b = &mut cfg.boards[v];
            let mut table_ids = live.clone();
            if rng.gen_bool(spec.fake_id_rate) {
                let fake = if fakes_below.is_empty() {
                    AgentId(rng.gen_range(lo.max(1)..=hi))
                } else {
                    AgentId(*fakes_below.choose(&mut rng).expect("nonempty"))
                };
                if !is_live(fake.0) {
                    b.set_min_id(fake).expect("control board");
                    table_ids.push(fake);
                }
            } else if rng.gen_bool(spec.table_garbage_rate) {
                b.set_min_id(AgentId(rng.gen_range(lo.max(1)..=hi))).expect("control board");
            }
            for &id in &table_ids {
                if rng.gen_bool(spec.table_garbage_rate) || !is_live(id.0) {
                    b.set_t_bit(id, rng.gen()).expect("control board");
                    let link = |rng: &mut ChaCha8Rng| rng.gen_bool(0.6).then(|| rng.gen_range(0..deg));
                    let (i, o) = (link(&mut rng), link(&mut rng));
                    b.set_in_link(id, i).expect("control board");
                    b.set_out_link(id, o).expect("control board");
                }
                if rng.gen_bool(spec.waiting_garbage_rate) {
                    b.add_waiting(id).expect("control board");
                }
            }
            let t = range(&mut rng, spec.timer_range);
            b.set_timer(t).expect("control board");
            let w = range(&mut rng, spec.wait_range);
            b.set_wait_t(w).expect("control board");
            if setup.class == BoardClass::FW {
                while rng.gen_bool(spec.garbage_token_rate) {
                    let tok = garbage_token(&mut rng, k);
                    b.store_gossip([tok]).expect("FW board");
                }
            }
        }
    }

    let max_deg = g.max_degree().max(1);
    for a in &mut cfg.agents {
        if spec.random_t_bits {
            a.t_bit = rng.gen();
        }
        while rng.gen_bool(spec.garbage_token_rate) {
            a.known.insert(garbage_token(&mut rng, k));
        }
        if rng.gen_bool(spec.register_garbage_rate) {
            a.arrival_port = Some(rng.gen_range(0..g.degree(a.position)));
            a.regs = match a.regs {
                Registers::Dft { .. } => Registers::Dft { bounced: rng.gen() },
                Registers::Path(_) => Registers::Path(garbage_cursor(&mut rng, setup.params.phase_cap, max_deg)),
            };
        }
    }
    Ok(cfg)
}
