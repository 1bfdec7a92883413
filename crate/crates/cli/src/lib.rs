//! Pipeline orchestration behind the `esvit` binary. Every command writes a
//! run directory holding its resolved config and a version stamp.

pub mod config;
pub mod error;
pub mod pipeline;
pub mod tools;
pub mod training;

pub use config::RunConfig;
pub use error::{CliError, Result};
