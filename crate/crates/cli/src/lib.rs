//! Command-line driver: image loading, configuration, synthetic test images,
//! pipeline execution and artifact output.

pub mod artifacts;
pub mod config;
pub mod io;
pub mod pipeline;
pub mod synthetic;

use std::path::PathBuf;

pub use artifacts::{save_components, Manifest};
pub use config::{ConfigFile, Overrides, Pipeline, RunConfig, SolverConfig, Source};
pub use io::load_image;
pub use pipeline::{run_on, run_pipeline, Components, Segmentation};
pub use synthetic::{add_noise, generate, Synthetic, SyntheticKind};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {msg} (at byte offset {offset})")]
    Format { path: PathBuf, offset: usize, msg: String },
    #[error("{0}")]
    Config(String),
    #[error("line {line}: unknown key '{key}'; valid keys are: {valid}")]
    UnknownKey { key: String, line: usize, valid: String },
    #[error("missing required key: {0}")]
    MissingKey(&'static str),
    #[error(transparent)]
    Solver(#[from] shtseg::Error),
}
