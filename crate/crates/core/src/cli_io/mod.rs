//! Model files, the command-line driver and result serialization.

pub mod commands;
pub mod model;
pub mod output;

pub use commands::{run_command, CliError, EXIT_CONDITION, EXIT_OK, EXIT_USAGE, TOLERANCE_ENV};
pub use model::{parse_model, ModelDocument, ParseError};
pub use output::{RunManifest, TripleJson};
