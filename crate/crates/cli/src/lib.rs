//! Harness around the `rwprover` core: run configuration, corpus and
//! checkpoint I/O, and the five pipeline stages behind the `rwprover`
//! binary (`gen`, `sft`, `rl`, `eval`, `repair`).
//!
//! Every stage reads a resolved [`RunConfig`], writes its artifacts into
//! the configured output directory, and writes the config back as
//! `<stage>.manifest.toml`; passing that manifest as `--config` reproduces
//! the artifacts.

pub mod config;
pub mod io;
pub mod stages;

pub use config::RunConfig;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("config error: {0}")]
    Config(String),
    #[error("data error: {0}")]
    Data(String),
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl HarnessError {
    /// 1 for usage and configuration problems, 2 for bad or missing data.
    pub fn exit_code(&self) -> i32 {
        match self {
            HarnessError::Config(_) => 1,
            HarnessError::Data(_) | HarnessError::Io { .. } => 2,
        }
    }
}
