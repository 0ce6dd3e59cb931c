//! Problem DSL, structure JSON, and the command line.

pub mod cli;
pub mod io;
pub mod parse;

pub use io::{read_structure, write_models, write_structure, IoError};
pub use parse::{parse_problem, ParseError, ProblemSpec};
