//! Scenario runner for drills against a running e112 service.

pub mod client;
pub mod generate;
pub mod oracle;
pub mod report;
pub mod runner;
pub mod scenario;

pub use report::Report;
pub use runner::{run, RunError};
pub use scenario::{load_scenario, parse_scenario, Scenario, ScenarioError};
