//! Command-line front end for the `icnn` library: the self-check suite,
//! multi-label and image-completion experiments, toy-environment
//! Q-learning, and LP export.

pub mod commands;
pub mod config;

pub use commands::{cmd_check, cmd_complete, cmd_export_lp, cmd_multilabel, cmd_rl};
pub use config::{CliError, RunConfig};
