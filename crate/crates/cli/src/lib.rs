//! Library surface of the `openhospital` binary: configuration loading and
//! the command implementations, exposed so integration tests can drive the
//! commands in-process.

pub mod commands;
pub mod config;

pub use commands::{
    build_provider, cmd_eval, cmd_replay, cmd_report, cmd_run, cmd_synth, cmd_validate, EXIT_CONFIG,
    EXIT_OK, EXIT_PARTIAL,
};
pub use config::{Overrides, ProviderKind, RunConfig};
