//! Deterministic simulator for gossip among mobile agents on anonymous
//! port-labeled graphs, with tools for testing self-stabilization.

pub mod model;
pub mod protocol;
pub mod scheduler;
pub mod topology;
pub mod harness;

pub use model::{AgentCore, AgentId, BoardClass, Configuration, GossipToken, MoveKind, Program, SimParams, Whiteboard};
pub use protocol::{Event, Intent, MoveIntent};
pub use scheduler::{Duplex, RunStatus, SchedulePolicy, ScheduleKind, Scheduler, StepRecord, Trace};
pub use topology::{NodeId, Port, PortLabeledGraph};
