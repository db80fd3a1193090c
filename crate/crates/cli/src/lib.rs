//! Command-line front end: scenario files, runs, CSV and report output.

pub mod commands;
pub mod csv;
pub mod error;
pub mod report;
pub mod scenario_file;

pub use commands::{run, Cli, Command};
pub use error::{CliError, ExitClass};
pub use scenario_file::{parse_scenario, ScenarioFile};
