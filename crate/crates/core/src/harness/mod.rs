//! Scenario configuration, Monte Carlo orchestration, CSV output and the
//! numerical verification suites.

pub mod config;
pub mod exec;
pub mod runner;
pub mod stats;
pub mod verify;

pub use config::{CodeChoice, Scenario, ScenarioConfig};
pub use exec::{map_traces, Execution};
pub use runner::{run_scenario, CodeRun, RunRecord, StepRow};
