//! Command-line harness: configuration ingestion, figure presets, output
//! serialization and run provenance.

pub mod config;
pub mod manifest;
pub mod output;
pub mod presets;
pub mod run;

use std::io;
use std::path::{Path, PathBuf};

pub use config::{parse_config, validate_config, ConfigErrors, Experiment, ExperimentConfig};
pub use manifest::{rerun, RunManifest};
pub use run::run_experiment;

pub const EXIT_OK: i32 = 0;
pub const EXIT_FAILURE: i32 = 1;
pub const EXIT_VALIDATION: i32 = 2;
pub const EXIT_NUMERICAL: i32 = 3;

#[derive(Debug, thiserror::Error)]
pub enum HarnessError {
    #[error(transparent)]
    Config(#[from] ConfigErrors),
    #[error(transparent)]
    Model(#[from] masked_cavity::Error),
    #[error("numerical invariant violated: {0}")]
    Trip(String),
    #[error("invalid manifest: {0}")]
    Manifest(String),
    #[error("rerun does not reproduce the recorded outputs:\n  {}", .0.join("\n  "))]
    Mismatch(Vec<String>),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: io::Error },
    #[error("{0}: {1}")]
    Csv(PathBuf, csv::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl HarnessError {
    pub fn io(path: &Path, source: io::Error) -> Self {
        HarnessError::Io {
            path: path.to_path_buf(),
            source,
        }
    }

    /// 2 for invalid input, 3 for a numerical-invariant trip, 1 otherwise.
    pub fn exit_code(&self) -> i32 {
        use masked_cavity::Error as E;
        match self {
            HarnessError::Config(_) | HarnessError::Manifest(_) => EXIT_VALIDATION,
            HarnessError::Model(e) if e.is_numerical_trip() => EXIT_NUMERICAL,
            HarnessError::Model(E::Validation(_) | E::InvalidParameter(_) | E::Checkpoint(_)) => EXIT_VALIDATION,
            HarnessError::Trip(_) => EXIT_NUMERICAL,
            _ => EXIT_FAILURE,
        }
    }
}
