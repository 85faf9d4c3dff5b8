//! Scenario parsing, the deterministic event loop, table dumps, and trace
//! serialization behind the `adjsim` binary.

pub mod scenario;
pub mod sim;
pub mod tables;

pub use scenario::{parse_scenario, parse_scenario_seeded, Scenario, ScenarioError};
pub use sim::{emit_trace, run, SimOutput, Summary};
pub use tables::emit_tables;
