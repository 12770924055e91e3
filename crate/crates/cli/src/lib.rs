//! Scenario files, trace emission and run orchestration for the simulator
//! binary. See the repository README for the file formats.

pub mod emit;
pub mod scenario;

pub use emit::emit_trace;
pub use scenario::{parse_scenario, scenario_to_toml, ScenarioError};
