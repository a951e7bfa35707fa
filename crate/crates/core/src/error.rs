use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("operator `{kind}` is not defined on {space}")]
    Incompatible { kind: String, space: String },

    #[error("axis {axis} out of range for {dims}-dimensional motion")]
    AxisOutOfRange { axis: usize, dims: usize },

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("population {population:.3e} on |l| >= l_max-1 exceeds 1e-8; raise l_max (currently {l_max})")]
    Leakage { population: f64, l_max: usize },

    #[error("population {population:.3e} on the top two Fock levels exceeds 1e-6; raise N_max (currently {n_max})")]
    PhotonTail { population: f64, n_max: usize },

    #[error("trace drifted by {0:.3e} (limit 1e-7)")]
    TraceDrift(f64),

    #[error("non-finite value in {0}")]
    NonFinite(String),

    #[error("state norm collapsed to {0:.3e} before renormalization; reduce the step")]
    NormCollapse(f64),

    #[error("{solver} did not converge (residual {residual:.3e})")]
    NoConvergence { solver: &'static str, residual: f64 },

    #[error("invalid configuration:\n  {}", .0.join("\n  "))]
    Validation(Vec<String>),

    #[error("malformed checkpoint: {0}")]
    Checkpoint(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// True for failures caused by a numerical invariant (cutoff leakage,
    /// non-finite values, collapse); false for usage and I/O errors.
    pub fn is_numerical_trip(&self) -> bool {
        matches!(
            self,
            Error::Leakage { .. }
                | Error::PhotonTail { .. }
                | Error::TraceDrift(_)
                | Error::NonFinite(_)
                | Error::NormCollapse(_)
                | Error::NoConvergence { .. }
        )
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
