//! Agent programs. Each step function mutates the agent's own registers and
//! the board it stands on, and returns the move it wants to make; the
//! scheduler decides whether the move happens.

pub mod dft;
pub mod fw;
pub mod path_enum;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{AgentId, BoardClass, BoardError, Configuration, MoveKind, Program};
use crate::topology::{NodeId, Port};

/// What an agent wants to do this step.
#[derive(Copy, Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Intent {
    Stay,
    Move { port: Port, kind: MoveKind },
}

impl Intent {
    pub fn port(self) -> Option<Port> {
        match self {
            Intent::Stay => None,
            Intent::Move { port, .. } => Some(port),
        }
    }
}

/// An intent tied to the agent and the node it was issued at.
#[derive(Copy, Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct MoveIntent {
    pub agent: usize,
    pub from: NodeId,
    pub intent: Intent,
}

/// Protocol-level happenings the harness audits.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "event")]
pub enum Event {
    /// The agent marked a node for the first time in its current traversal.
    FirstVisit { agent: usize, node: NodeId },
    /// The agent flipped its traversal bit and started a new traversal.
    Flip { agent: usize, node: NodeId },
    /// The agent added itself to a node's waiting list.
    Wait { agent: usize, node: NodeId },
    /// A timeout removed `id` from the waiting list; `agent` is `None` when
    /// no agent with that id stood at the node.
    Release { node: NodeId, id: AgentId, agent: Option<usize> },
    /// The agent found its own trail inconsistent and restarted as a root.
    Restart { agent: usize, node: NodeId },
    /// A path-enumeration agent ran past the phase cap and started over.
    PhaseWrap { agent: usize },
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ProtocolError {
    #[error("{program} is not supported here: {reason}")]
    Unsupported { program: Program, reason: String },
    #[error(transparent)]
    Board(#[from] BoardError),
    #[error("port {port} out of range at a node of degree {degree}")]
    PortOutOfRange { port: Port, degree: usize },
}

/// Checks a (protocol, board class, schedule) combination up front.
pub fn check_legality(program: Program, class: BoardClass, synchronous: bool, unsafe_async: bool) -> Result<(), ProtocolError> {
    let refuse = |reason: &str| {
        Err(ProtocolError::Unsupported {
            program,
            reason: reason.to_string(),
        })
    };
    match program {
        Program::DftKminus1 => {
            if class == BoardClass::NW {
                return refuse("needs CW or FW whiteboards");
            }
            if !synchronous && !unsafe_async {
                return refuse("timer-based waiting is only sound in synchronous rounds (pass the unsafe-async switch to explore anyway)");
            }
            Ok(())
        }
        Program::FwAsyncDft | Program::AnonPathEnum => {
            if class != BoardClass::FW {
                return refuse("needs FW whiteboards");
            }
            Ok(())
        }
    }
}

/// Runs one action of agent `index` according to its program.
pub fn agent_step(cfg: &mut Configuration, index: usize, events: &mut Vec<Event>) -> Result<Intent, ProtocolError> {
    match cfg.agents[index].program {
        Program::DftKminus1 => dft::dft_agent_step(cfg, index, events),
        Program::FwAsyncDft => fw::fw_dft_step(cfg, index, events),
        Program::AnonPathEnum => path_enum::anon_path_enum_step(cfg, index, events),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn legality_matrix() {
        use BoardClass::*;
        use Program::*;
        assert!(check_legality(DftKminus1, NW, true, false).is_err());
        assert!(check_legality(DftKminus1, CW, true, false).is_ok());
        assert!(check_legality(DftKminus1, FW, true, false).is_ok());
        assert!(check_legality(DftKminus1, CW, false, false).is_err());
        assert!(check_legality(DftKminus1, CW, false, true).is_ok());
        for p in [FwAsyncDft, AnonPathEnum] {
            assert!(check_legality(p, CW, true, false).is_err());
            assert!(check_legality(p, NW, false, false).is_err());
            assert!(check_legality(p, FW, false, false).is_ok());
            assert!(check_legality(p, FW, true, false).is_ok());
        }
    }
}
