//! Self-stabilizing depth-first traversal with minimum-id arbitration.
//!
//! Every agent repeatedly traverses the graph, marking each node with its
//! traversal bit. A node lets through only the smallest id it has seen
//! since its timer was last reset; larger ids wait on the board until the
//! timer passes the recorded wait threshold.

use super::{Event, Intent, ProtocolError};
use crate::model::{AgentId, BoardClass, Configuration, MoveKind, Program, Registers};
use crate::topology::{NodeId, Port};

/// Whether the minimum-id arbitration is active.
#[derive(Copy, Clone, Debug, PartialEq, Eq)]
pub enum Mode {
    /// Full protocol: MinID, WaitT, Waiting and Timer are read and written.
    Arbitrated,
    /// Every agent behaves as the minimum and never waits.
    NoWait,
}

/// Port after `a` in cyclic order at a node of degree `deg`.
pub fn next_port(a: Port, deg: usize) -> Result<Port, ProtocolError> {
    if a >= deg {
        return Err(ProtocolError::PortOutOfRange { port: a, degree: deg });
    }
    Ok((a + 1) % deg)
}

fn advance(port: Port) -> Intent {
    Intent::Move {
        port,
        kind: MoveKind::Advance,
    }
}

fn retreat(port: Port) -> Intent {
    Intent::Move {
        port,
        kind: MoveKind::Retreat,
    }
}

fn named(cfg: &Configuration, i: usize) -> Result<AgentId, ProtocolError> {
    cfg.agents[i].id.ok_or_else(|| ProtocolError::Unsupported {
        program: cfg.agents[i].program,
        reason: "needs named agents".into(),
    })
}

/// Lets `id` through node `v` if it is the smallest seen so far.
fn claim(cfg: &mut Configuration, v: NodeId, id: AgentId, mode: Mode) -> Result<bool, ProtocolError> {
    if mode == Mode::NoWait {
        return Ok(true);
    }
    let b = &mut cfg.boards[v];
    if id <= b.min_id() {
        b.set_min_id(id)?;
        let t = b.timer();
        b.set_wait_t(t)?;
        b.reset_timer()?;
        Ok(true)
    } else {
        Ok(false)
    }
}

fn join_waiting(cfg: &mut Configuration, v: NodeId, i: usize, id: AgentId, events: &mut Vec<Event>) -> Result<Intent, ProtocolError> {
    cfg.boards[v].add_waiting(id)?;
    events.push(Event::Wait { agent: i, node: v });
    Ok(Intent::Stay)
}

/// Flips the agent's bit and leaves through port 0 as the root of a new
/// traversal.
fn begin_traversal(cfg: &mut Configuration, v: NodeId, i: usize, id: AgentId, events: &mut Vec<Event>) -> Result<Intent, ProtocolError> {
    let bit = !cfg.agents[i].t_bit;
    cfg.agents[i].t_bit = bit;
    let b = &mut cfg.boards[v];
    b.set_t_bit(id, bit)?;
    b.set_out_link(id, Some(0))?;
    events.push(Event::Flip { agent: i, node: v });
    Ok(advance(0))
}

/// One arrival of agent `i` at node `v` through `in_port`.
pub fn visit(
    cfg: &mut Configuration,
    v: NodeId,
    i: usize,
    in_port: Port,
    mode: Mode,
    events: &mut Vec<Event>,
) -> Result<Intent, ProtocolError> {
    let id = named(cfg, i)?;
    let deg = cfg.graph().degree(v);
    let next = next_port(in_port, deg)?;
    let t = cfg.agents[i].t_bit;

    if cfg.boards[v].t_bit(id) != t {
        let b = &mut cfg.boards[v];
        b.set_t_bit(id, t)?;
        b.set_in_link(id, Some(in_port))?;
        events.push(Event::FirstVisit { agent: i, node: v });
        if !claim(cfg, v, id, mode)? {
            return join_waiting(cfg, v, i, id, events);
        }
        let b = &mut cfg.boards[v];
        return if deg >= 2 {
            b.set_out_link(id, Some(next))?;
            Ok(advance(next))
        } else {
            b.set_in_link(id, None)?;
            Ok(retreat(in_port))
        };
    }

    let b = &cfg.boards[v];
    if b.out_link(id) != Some(in_port) {
        return Ok(Intent::Move {
            port: in_port,
            kind: MoveKind::Bounce,
        });
    }

    if next == 0 && b.in_link(id).is_none() {
        return if claim(cfg, v, id, mode)? {
            begin_traversal(cfg, v, i, id, events)
        } else {
            join_waiting(cfg, v, i, id, events)
        };
    }

    let b = &mut cfg.boards[v];
    if b.in_link(id) == Some(next) {
        b.set_in_link(id, None)?;
        b.set_out_link(id, None)?;
        return Ok(retreat(next));
    }

    b.set_out_link(id, Some(next))?;
    Ok(advance(next))
}

/// Drops whatever traversal the agent believed it was in and starts a new
/// one rooted at `v`.
pub fn restart(cfg: &mut Configuration, v: NodeId, i: usize, mode: Mode, events: &mut Vec<Event>) -> Result<Intent, ProtocolError> {
    let id = named(cfg, i)?;
    cfg.boards[v].set_in_link(id, None)?;
    events.push(Event::Restart { agent: i, node: v });
    if claim(cfg, v, id, mode)? {
        begin_traversal(cfg, v, i, id, events)
    } else {
        join_waiting(cfg, v, i, id, events)
    }
}

/// Shared step of both DFT programs. An agent that was just bounced back
/// must find its own outgoing mark on the port it returns through; if it
/// does not, the traversal it is following was never its own and it
/// restarts here.
pub(crate) fn dft_step(cfg: &mut Configuration, i: usize, mode: Mode, events: &mut Vec<Event>) -> Result<Intent, ProtocolError> {
    let id = named(cfg, i)?;
    let v = cfg.agents[i].position;
    if mode == Mode::Arbitrated && cfg.boards[v].is_waiting(id) {
        return Ok(Intent::Stay);
    }
    let in_port = cfg.agents[i].arrival_port.unwrap_or(0);
    let bounced = matches!(cfg.agents[i].regs, Registers::Dft { bounced: true });
    let intent = if bounced && cfg.boards[v].out_link(id) != Some(in_port) {
        restart(cfg, v, i, mode, events)?
    } else {
        visit(cfg, v, i, in_port, mode, events)?
    };
    cfg.agents[i].regs = Registers::Dft {
        bounced: matches!(intent, Intent::Move { kind: MoveKind::Bounce, .. }),
    };
    Ok(intent)
}

/// One action of a `dft_kminus1` agent. Agents listed in their node's
/// waiting list stay put; they move again only through a timeout release.
pub fn dft_agent_step(cfg: &mut Configuration, i: usize, events: &mut Vec<Event>) -> Result<Intent, ProtocolError> {
    if cfg.boards[cfg.agents[i].position].class() == BoardClass::NW {
        return Err(ProtocolError::Unsupported {
            program: Program::DftKminus1,
            reason: "needs CW or FW whiteboards".into(),
        });
    }
    dft_step(cfg, i, Mode::Arbitrated, events)
}

/// Timeout handling at node `v`: once the timer reaches the wait
/// threshold, the smallest waiting id becomes the node's minimum and that
/// agent resumes. Returns the released agent and its move, if any.
pub fn timeout_check(cfg: &mut Configuration, v: NodeId, events: &mut Vec<Event>) -> Result<Option<(usize, Intent)>, ProtocolError> {
    let b = &mut cfg.boards[v];
    if b.class() == BoardClass::NW || b.timer() < b.wait_t() {
        return Ok(None);
    }
    let Some(id) = b.pop_min_waiting() else {
        return Ok(None);
    };
    b.set_min_id(id)?;
    b.reset_timer()?;
    let agent = cfg
        .agents
        .iter()
        .position(|a| a.id == Some(id) && a.position == v);
    events.push(Event::Release { node: v, id, agent });
    let Some(i) = agent else {
        return Ok(None);
    };
    let deg = cfg.graph().degree(v);
    let b = &mut cfg.boards[v];
    let intent = match b.in_link(id) {
        Some(a) if a < deg => {
            if deg >= 2 {
                let next = next_port(a, deg)?;
                b.set_out_link(id, Some(next))?;
                advance(next)
            } else {
                b.set_in_link(id, None)?;
                retreat(a)
            }
        }
        Some(a) => return Err(ProtocolError::PortOutOfRange { port: a, degree: deg }),
        None => begin_traversal(cfg, v, i, id, events)?,
    };
    cfg.agents[i].regs = Registers::Dft { bounced: false };
    Ok(Some((i, intent)))
}
