//! Problem files, command dispatch and reports for the `passiv` binary.

pub mod problem;
pub mod report;
pub mod run;

pub use problem::{parse_problem, parse_problem_str, ParseError, ProblemSpec};
pub use report::{summary, Report};
pub use run::{run, Command, Flags, ModeArg, Outcome};
