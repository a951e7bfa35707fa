//! Run manifests: resolved configuration, provenance and a checksummed file
//! inventory, plus regeneration of a run from its manifest.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};

use crate::config::{revalidate, ExperimentConfig, FORMAT_VERSION};
use crate::output::Outputs;
use crate::run::run_experiment;
use crate::HarnessError;

pub const MANIFEST_FILE: &str = "manifest.json";
/// Largest manifest accepted, in bytes.
pub const MAX_MANIFEST_BYTES: usize = 1 << 22;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CodeVersion {
    pub harness: String,
    pub library: String,
}

impl CodeVersion {
    pub fn current() -> Self {
        CodeVersion {
            harness: env!("CARGO_PKG_VERSION").to_string(),
            library: masked_cavity::VERSION.to_string(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileEntry {
    /// Path relative to the run directory.
    pub path: String,
    pub bytes: u64,
    pub sha256: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunManifest {
    pub format_version: u32,
    pub config: ExperimentConfig,
    pub code_version: CodeVersion,
    pub wall_time_s: f64,
    pub convergence: BTreeMap<String, Value>,
    pub files: Vec<FileEntry>,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    format!("{:x}", Sha256::digest(bytes))
}

fn safe_relative(path: &str) -> bool {
    let p = Path::new(path);
    !path.is_empty() && p.components().all(|c| matches!(c, std::path::Component::Normal(_)))
}

impl RunManifest {
    pub fn build(
        cfg: &ExperimentConfig,
        wall_time_s: f64,
        convergence: BTreeMap<String, Value>,
        out: &Outputs,
    ) -> Result<Self, HarnessError> {
        let files = out
            .files()
            .iter()
            .map(|name| {
                let path = out.path(name);
                let bytes = fs::read(&path).map_err(|e| HarnessError::io(&path, e))?;
                Ok(FileEntry {
                    path: name.clone(),
                    bytes: bytes.len() as u64,
                    sha256: sha256_hex(&bytes),
                })
            })
            .collect::<Result<_, HarnessError>>()?;
        Ok(RunManifest {
            format_version: FORMAT_VERSION,
            config: cfg.clone(),
            code_version: CodeVersion::current(),
            wall_time_s,
            convergence,
            files,
        })
    }

    pub fn write(&self, dir: &Path) -> Result<(), HarnessError> {
        let path = dir.join(MANIFEST_FILE);
        let mut text = serde_json::to_string_pretty(self)?;
        text.push('\n');
        fs::write(&path, text).map_err(|e| HarnessError::io(&path, e))
    }

    /// Parses and checks a manifest document.
    pub fn parse(bytes: &[u8]) -> Result<Self, HarnessError> {
        if bytes.len() > MAX_MANIFEST_BYTES {
            return Err(HarnessError::Manifest(format!("manifest larger than {MAX_MANIFEST_BYTES} bytes")));
        }
        let m: RunManifest = serde_json::from_slice(bytes).map_err(|e| HarnessError::Manifest(e.to_string()))?;
        let mut errs = Vec::new();
        if m.format_version != FORMAT_VERSION {
            errs.push(format!("format_version must be {FORMAT_VERSION}, got {}", m.format_version));
        }
        if !(m.wall_time_s >= 0.0 && m.wall_time_s.is_finite()) {
            errs.push(format!("wall_time_s must be finite and non-negative, got {}", m.wall_time_s));
        }
        for f in &m.files {
            if !safe_relative(&f.path) || f.path == MANIFEST_FILE {
                errs.push(format!("file entry {:?} is not a plain relative path", f.path));
            }
            if f.sha256.len() != 64 || !f.sha256.bytes().all(|b| b.is_ascii_hexdigit()) {
                errs.push(format!("file entry {:?} has a malformed sha256", f.path));
            }
        }
        if let Err(e) = revalidate(&m.config) {
            errs.extend(e.0);
        }
        if errs.is_empty() {
            Ok(m)
        } else {
            Err(HarnessError::Manifest(errs.join("; ")))
        }
    }

    pub fn read(path: &Path) -> Result<Self, HarnessError> {
        let bytes = fs::read(path).map_err(|e| HarnessError::io(path, e))?;
        Self::parse(&bytes)
    }
}

/// How a regenerated file compares with the recorded one.
#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Agreement {
    Identical,
    /// Numbers agree to the relative tolerance; deterministic outputs only.
    WithinTolerance { max_relative: f64 },
    Differs { reason: String },
}

#[derive(Clone, Debug, Serialize)]
pub struct RerunReport {
    pub output_dir: PathBuf,
    pub files: Vec<(String, Agreement)>,
}

impl RerunReport {
    pub fn mismatches(&self) -> Vec<String> {
        self.files
            .iter()
            .filter_map(|(p, a)| match a {
                Agreement::Differs { reason } => Some(format!("{p}: {reason}")),
                _ => None,
            })
            .collect()
    }
}

/// Relative tolerance for regenerated deterministic outputs.
pub const RERUN_TOLERANCE: f64 = 1e-12;

/// Keys whose values legitimately change between runs.
const VOLATILE_KEYS: [&str; 1] = ["runtime_s"];

fn strip_volatile(v: &mut Value) {
    match v {
        Value::Object(map) => {
            for k in VOLATILE_KEYS {
                map.remove(k);
            }
            map.values_mut().for_each(strip_volatile);
        }
        Value::Array(items) => items.iter_mut().for_each(strip_volatile),
        _ => {}
    }
}

fn relative_gap(a: f64, b: f64) -> f64 {
    if a == b || (a.is_nan() && b.is_nan()) {
        0.0
    } else {
        (a - b).abs() / a.abs().max(b.abs()).max(1.0)
    }
}

/// Largest relative difference between numeric fields of two token
/// streams that agree everywhere else, or `None` if their structure differs.
fn numeric_gap(a: &str, b: &str) -> Option<f64> {
    let split = |s: &str| -> Vec<String> {
        s.split(|c: char| c == ',' || c == '\n' || c.is_whitespace() || c == '[' || c == ']')
            .filter(|t| !t.is_empty())
            .map(str::to_string)
            .collect()
    };
    let (ta, tb) = (split(a), split(b));
    if ta.len() != tb.len() {
        return None;
    }
    let mut worst: f64 = 0.0;
    for (x, y) in ta.iter().zip(&tb) {
        if x == y {
            continue;
        }
        match (x.parse::<f64>(), y.parse::<f64>()) {
            (Ok(u), Ok(v)) => worst = worst.max(relative_gap(u, v)),
            _ => return None,
        }
    }
    Some(worst)
}

fn compare(recorded: &FileEntry, original: Option<&[u8]>, fresh: &[u8], stochastic: bool) -> Agreement {
    if sha256_hex(fresh) == recorded.sha256 {
        return Agreement::Identical;
    }
    let Some(original) = original else {
        return Agreement::Differs {
            reason: "checksum differs and the recorded file is unavailable".into(),
        };
    };
    let (Ok(a), Ok(b)) = (std::str::from_utf8(original), std::str::from_utf8(fresh)) else {
        return Agreement::Differs {
            reason: "checksum differs".into(),
        };
    };
    let (a, b) = if recorded.path.ends_with(".json") {
        match (serde_json::from_str::<Value>(a), serde_json::from_str::<Value>(b)) {
            (Ok(mut va), Ok(mut vb)) => {
                strip_volatile(&mut va);
                strip_volatile(&mut vb);
                if va == vb {
                    return Agreement::Identical;
                }
                (va.to_string(), vb.to_string())
            }
            _ => (a.to_string(), b.to_string()),
        }
    } else {
        (a.to_string(), b.to_string())
    };
    if stochastic {
        return Agreement::Differs {
            reason: "seeded stochastic output is not bitwise identical".into(),
        };
    }
    match numeric_gap(&a, &b) {
        Some(gap) if gap <= RERUN_TOLERANCE => Agreement::WithinTolerance { max_relative: gap },
        Some(gap) => Agreement::Differs {
            reason: format!("numbers differ by up to {gap:.3e} (relative)"),
        },
        None => Agreement::Differs {
            reason: "structure differs".into(),
        },
    }
}

/// Regenerates the run described by the manifest at `path` into `out_dir`
/// (default: `rerun/` beside the manifest) and compares every inventoried
/// file with the recorded one.
pub fn rerun(path: &Path, out_dir: Option<PathBuf>) -> Result<RerunReport, HarnessError> {
    let recorded = RunManifest::read(path)?;
    let base = path.parent().unwrap_or(Path::new("."));
    let mut cfg = recorded.config.clone();
    cfg.output_dir = out_dir.unwrap_or_else(|| base.join("rerun"));
    let fresh = run_experiment(&cfg)?;
    let stochastic = cfg.experiment.is_stochastic();
    let mut files = Vec::new();
    for entry in &recorded.files {
        let agreement = if !fresh.files.iter().any(|f| f.path == entry.path) {
            Agreement::Differs {
                reason: "not produced by the rerun".into(),
            }
        } else {
            let new_path = cfg.output_dir.join(&entry.path);
            let new_bytes = fs::read(&new_path).map_err(|e| HarnessError::io(&new_path, e))?;
            let original = fs::read(base.join(&entry.path)).ok();
            compare(entry, original.as_deref(), &new_bytes, stochastic)
        };
        files.push((entry.path.clone(), agreement));
    }
    for f in &fresh.files {
        if !recorded.files.iter().any(|e| e.path == f.path) {
            files.push((
                f.path.clone(),
                Agreement::Differs {
                    reason: "not in the recorded inventory".into(),
                },
            ));
        }
    }
    Ok(RerunReport {
        output_dir: cfg.output_dir,
        files,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn numeric_gap_ignores_formatting_only() {
        assert_eq!(numeric_gap("t,W\n1e0,2.5e-1\n", "t,W\n1e0,2.5e-1\n"), Some(0.0));
        let g = numeric_gap("a\n1.0\n", "a\n1.0000000000001\n").unwrap();
        assert!(g > 0.0 && g < 1e-12);
        assert_eq!(numeric_gap("a,b\n1\n", "a,c\n1\n"), None);
        assert_eq!(numeric_gap("1 2", "1"), None);
    }

    #[test]
    fn volatile_keys_are_ignored() {
        let mut a = serde_json::json!({"x": 1, "runtime_s": 2.0, "inner": {"runtime_s": 3}});
        strip_volatile(&mut a);
        assert_eq!(a, serde_json::json!({"x": 1, "inner": {}}));
    }

    #[test]
    fn only_plain_relative_paths_are_safe() {
        assert!(safe_relative("wigner.csv"));
        assert!(safe_relative("sub/dir.csv"));
        assert!(!safe_relative("../escape.csv"));
        assert!(!safe_relative("/etc/passwd"));
        assert!(!safe_relative(""));
    }
}
