//! Self-stabilization testing: fuzzed starts, exact cycle detection, move
//! audits, coverage oracles, witnesses and seed campaigns.

pub mod audit;
pub mod campaign;
pub mod cover;
pub mod cycle;
pub mod fuzz;
pub mod witness;

pub use audit::{audit_move_bounds, AuditReport};
pub use campaign::{load_graph, run_campaign, run_seed, run_seed_traced, Campaign, ScheduleName, SeedReport};
pub use cycle::{default_budget, detect_cycle, CycleOutcome, CycleReport};
pub use fuzz::{fuzz_config, FuzzSpec, Placement, Setup};
pub use witness::{witness_mirror, witness_symmetry, Freeze, MirrorReport, SymmetryReport};
