//! Scenario parsing, suite execution and reporting for the `intcoh` binary.

pub mod report;
pub mod scenario;
pub mod selftest;
pub mod suites;

pub use report::{Report, Status, SuiteReport, Table};
pub use scenario::{emit_scenario, parse_scenario, Instance, Scenario, ScenarioError, Suite};
pub use selftest::{selftest, CORPUS};
pub use suites::{run_all, run_suite, RunOptions};
