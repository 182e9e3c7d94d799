//! File formats, configuration, experiment orchestration and the command-line
//! front end over `csae-core`.

pub mod checkpoint;
pub mod cli;
pub mod config;
pub mod data;
pub mod error;
pub mod experiment;
pub mod report;

pub use error::{AppError, AppResult};
