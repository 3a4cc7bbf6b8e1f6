//! Library half of the `labelwrap` command-line tool. The binary in
//! `main.rs` is a thin flag-parsing layer over these modules, which keeps
//! every behavior callable (and testable) as a plain function.
//!
//! - [`config`] — augmentation config with documented defaults, TOML loading
//! - [`augment`] — deterministic dataset generation and the replayable manifest
//! - [`commands`] — one entry point per subcommand

pub mod augment;
pub mod commands;
pub mod config;

pub use augment::{run_augment, AugmentReport, ManifestRecord};
pub use config::{AugmentConfig, CliError, JitterConfig, JitterParams, PoseRanges};
