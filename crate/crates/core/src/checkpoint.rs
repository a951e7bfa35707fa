//! Versioned JSON checkpoint of a density matrix.
//!
//! Layout:
//!
//! ```json
//! {
//!   "format": "masked-cavity-density-matrix",
//!   "version": 1,
//!   "space": { "internal": {"kind": "full", "photon_cutoff": 3}, "motion": {"kind": "restricted"} },
//!   "time": 12.5,
//!   "params": { ... } | null,
//!   "dim": 16,
//!   "entries": [[re, im], ...]
//! }
//! ```
//!
//! `entries` holds the `dim × dim` matrix in row-major order. `time` is in
//! units of 1/κ and `params` optionally echoes the model that produced it.

use std::path::Path;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hilbert::{DensityMatrix, SpaceDescriptor};
use crate::open::OpenModelParams;
use crate::C64;

pub const CHECKPOINT_FORMAT: &str = "masked-cavity-density-matrix";
pub const CHECKPOINT_VERSION: u32 = 1;

/// Largest accepted dimension; bounds the allocation for untrusted input.
pub const MAX_CHECKPOINT_DIM: usize = 8192;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Raw {
    format: String,
    version: u32,
    space: SpaceDescriptor,
    time: f64,
    #[serde(default)]
    params: Option<OpenModelParams>,
    dim: usize,
    entries: Vec<[f64; 2]>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub rho: DensityMatrix,
    pub time: f64,
    pub params: Option<OpenModelParams>,
}

impl Checkpoint {
    pub fn to_json(&self) -> Result<String> {
        let d = self.rho.matrix.nrows();
        let mut entries = Vec::with_capacity(d * d);
        for i in 0..d {
            for j in 0..d {
                let v = self.rho.matrix[(i, j)];
                entries.push([v.re, v.im]);
            }
        }
        let raw = Raw {
            format: CHECKPOINT_FORMAT.into(),
            version: CHECKPOINT_VERSION,
            space: self.rho.space.clone(),
            time: self.time,
            params: self.params.clone(),
            dim: d,
            entries,
        };
        Ok(serde_json::to_string(&raw)?)
    }

    /// Parses and validates a checkpoint: format tag and version, space
    /// consistency, finiteness, Hermiticity (1e-9) and unit trace (1e-6).
    pub fn from_json(text: &str) -> Result<Self> {
        let raw: Raw = serde_json::from_str(text).map_err(|e| Error::Checkpoint(e.to_string()))?;
        if raw.format != CHECKPOINT_FORMAT {
            return Err(Error::Checkpoint(format!("unknown format tag {:?}", raw.format)));
        }
        if raw.version != CHECKPOINT_VERSION {
            return Err(Error::Checkpoint(format!(
                "version {} is not supported (expected {CHECKPOINT_VERSION})",
                raw.version
            )));
        }
        let space = SpaceDescriptor::new(raw.space.internal, raw.space.motion)
            .map_err(|e| Error::Checkpoint(e.to_string()))?;
        let d = space
            .checked_dim()
            .filter(|&d| d <= MAX_CHECKPOINT_DIM)
            .ok_or_else(|| Error::Checkpoint(format!("space {space} is too large")))?;
        if raw.dim != d {
            return Err(Error::Checkpoint(format!("dim {} but {space} has dimension {d}", raw.dim)));
        }
        if raw.entries.len() != d * d {
            return Err(Error::Checkpoint(format!("{} entries, expected {}", raw.entries.len(), d * d)));
        }
        if !raw.time.is_finite() || raw.time < 0.0 {
            return Err(Error::Checkpoint(format!("time must be finite and non-negative, got {}", raw.time)));
        }
        if raw.entries.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::Checkpoint("non-finite matrix entry".into()));
        }
        let matrix = DMatrix::from_row_iterator(d, d, raw.entries.iter().map(|[re, im]| C64::new(*re, *im)));
        let rho = DensityMatrix::new(matrix, space).map_err(|e| Error::Checkpoint(e.to_string()))?;
        let defect = rho.hermitian_defect();
        if defect > 1e-9 {
            return Err(Error::Checkpoint(format!("matrix is not Hermitian (defect {defect:.2e})")));
        }
        let trace = rho.trace();
        if (trace - 1.0).norm() > 1e-6 {
            return Err(Error::Checkpoint(format!("trace {trace} differs from 1")));
        }
        if let Some(p) = &raw.params {
            p.validate().map_err(|e| Error::Checkpoint(format!("embedded parameters: {e}")))?;
            if SpaceDescriptor::restricted(p.n_max) != rho.space {
                return Err(Error::Checkpoint(format!(
                    "embedded parameters imply N_max = {} but the matrix lives on {}",
                    p.n_max, rho.space
                )));
            }
        }
        Ok(Checkpoint {
            rho,
            time: raw.time,
            params: raw.params,
        })
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()?)?;
        Ok(())
    }

    pub fn read(path: &Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }
}
