//! CLI orchestration: configuration, output manifests, and the
//! generate / train / evaluate / control / report commands.

pub mod config;
pub mod manifest;
pub mod run;

pub use config::RunConfig;
pub use run::{cmd_control, cmd_evaluate, cmd_generate, cmd_report, cmd_train};
