//! Batch front end of `doacert-core`: system definition files, the workflow
//! commands, result records and certificate archives.

pub mod archive;
pub mod commands;
pub mod config;
pub mod error;

pub use archive::{Archive, VerifyReport};
pub use commands::{Outcome, Overrides, Record, Status};
pub use config::{Config, Workflow};
pub use error::CliError;
