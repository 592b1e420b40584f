//! Library half of the `preduce` command-line tool: problem-definition
//! files, subcommands and run reports.

pub mod commands;
pub mod definition;
pub mod report;

pub use commands::CommandError;
pub use definition::{InputError, Problem, ProblemDefinition};
pub use report::RunReport;
