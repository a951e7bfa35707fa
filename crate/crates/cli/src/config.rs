//! Experiment configuration: JSON schema, preset expansion, defaults and
//! aggregated validation.
//!
//! ```json
//! {
//!   "format_version": 1,
//!   "experiment": "wigner_steady",
//!   "preset": "fig4b",
//!   "params": { "omega": 20, "epsilon_ratio": 1 },
//!   "output_dir": "out/fig4b"
//! }
//! ```
//!
//! Either `experiment` or `preset` is required. Explicit `params` override
//! the preset. Parameter names are ASCII (`omega_r`); the Unicode spellings
//! listed in [`PARAMS`] (`ω_r`) are accepted as aliases.

use std::collections::BTreeMap;
use std::fmt;
use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::presets;

pub const FORMAT_VERSION: u32 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Experiment {
    Rabi1d,
    Rabi2d,
    Walk,
    MaskedGround,
    MeanfieldSweep,
    WignerSteady,
    Trajectory,
    Ensemble,
}

impl Experiment {
    pub const ALL: [Experiment; 8] = [
        Experiment::Rabi1d,
        Experiment::Rabi2d,
        Experiment::Walk,
        Experiment::MaskedGround,
        Experiment::MeanfieldSweep,
        Experiment::WignerSteady,
        Experiment::Trajectory,
        Experiment::Ensemble,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Experiment::Rabi1d => "rabi1d",
            Experiment::Rabi2d => "rabi2d",
            Experiment::Walk => "walk",
            Experiment::MaskedGround => "masked_ground",
            Experiment::MeanfieldSweep => "meanfield_sweep",
            Experiment::WignerSteady => "wigner_steady",
            Experiment::Trajectory => "trajectory",
            Experiment::Ensemble => "ensemble",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        let norm = s.replace('-', "_").to_ascii_lowercase();
        Self::ALL.into_iter().find(|e| e.name() == norm)
    }

    /// Closed-system experiments measure time and rates in units of Ω,
    /// open-system ones in units of κ.
    pub fn is_open(self) -> bool {
        matches!(
            self,
            Experiment::MeanfieldSweep | Experiment::WignerSteady | Experiment::Trajectory | Experiment::Ensemble
        )
    }

    pub fn is_stochastic(self) -> bool {
        matches!(self, Experiment::Trajectory | Experiment::Ensemble)
    }
}

impl fmt::Display for Experiment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Kind {
    Real,
    Integer,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Range {
    Positive,
    NonNegative,
    Any,
    /// Inclusive bounds.
    Between(f64, f64),
    OneOf(&'static [f64]),
}

#[derive(Debug)]
pub struct ParamSpec {
    pub name: &'static str,
    pub symbol: &'static str,
    pub kind: Kind,
    pub range: Range,
    pub unit: &'static str,
    pub help: &'static str,
}

macro_rules! param {
    ($name:literal, $sym:literal, $kind:ident, $range:expr, $unit:literal, $help:literal) => {
        ParamSpec {
            name: $name,
            symbol: $sym,
            kind: Kind::$kind,
            range: $range,
            unit: $unit,
            help: $help,
        }
    };
}

/// Every parameter the harness understands.
pub static PARAMS: &[ParamSpec] = &[
    param!("omega", "Ω", Real, Range::NonNegative, "rate unit", "atom-cavity coupling"),
    param!("omega_r", "ω_r", Real, Range::NonNegative, "rate unit", "recoil frequency"),
    param!("kappa", "κ", Real, Range::Positive, "rate", "cavity field decay rate"),
    param!("epsilon", "ε", Real, Range::NonNegative, "κ", "drive amplitude"),
    param!("epsilon_ratio", "ε/ε_crit", Real, Range::NonNegative, "1", "drive amplitude relative to ε_crit = Ω/2"),
    param!("n_max", "N_max", Integer, Range::Between(1.0, 2000.0), "photons", "photon-number cutoff"),
    param!("l_max", "l_max", Integer, Range::Between(1.0, 4096.0), "ħk", "momentum ladder cutoff per axis"),
    param!("dims", "d", Integer, Range::OneOf(&[1.0, 2.0]), "1", "spatial dimensions of the cavity"),
    param!("dt", "dt", Real, Range::Positive, "time unit", "integration step"),
    param!("t_end", "t_end", Real, Range::Positive, "time unit", "final time"),
    param!("sample_interval", "Δt", Real, Range::Positive, "time unit", "spacing of recorded samples"),
    param!("include_1d", "include_1d", Integer, Range::OneOf(&[0.0, 1.0]), "flag", "also write the 1D series"),
    param!("points", "points", Integer, Range::Between(2.0, 1e6), "1", "number of sample points"),
    param!("ratio_min", "ε_min/ε_crit", Real, Range::NonNegative, "1", "start of the drive sweep"),
    param!("ratio_max", "ε_max/ε_crit", Real, Range::NonNegative, "1", "end of the drive sweep"),
    param!("sector", "σ₃J₃", Integer, Range::OneOf(&[-1.0, 0.0, 1.0]), "1", "initial parity sector; 0 selects the mixed-parity start"),
    param!("grid_half_width", "A", Real, Range::Between(0.0, 25.0), "1", "Wigner grid half width; 0 chooses it from the state"),
    param!("grid_step", "δ", Real, Range::Between(1e-3, 1.0), "1", "Wigner grid spacing"),
    param!("log_scale", "log_scale", Integer, Range::OneOf(&[0.0, 1.0]), "flag", "add a log10|W| column"),
    param!("t_max", "t_max", Real, Range::Positive, "1/κ", "time-evolution limit for the steady state"),
    param!("tol", "tol", Real, Range::Positive, "1", "steady-state trace-distance target"),
    param!("kappa_d", "κ_D", Real, Range::Positive, "κ", "detector linewidth"),
    param!("seed", "seed", Integer, Range::Between(0.0, 9007199254740992.0), "1", "master RNG seed"),
    param!("stream", "stream", Integer, Range::Between(0.0, 1e6), "1", "first RNG stream"),
    param!("record_stride", "stride", Integer, Range::Between(1.0, 1e9), "steps", "steps between recorded samples"),
    param!("trajectories", "M", Integer, Range::Between(2.0, 1e6), "1", "ensemble size"),
    param!("compare_master", "compare_master", Integer, Range::OneOf(&[0.0, 1.0]), "flag", "also integrate the master equation"),
];

pub fn param_spec(name: &str) -> Option<&'static ParamSpec> {
    PARAMS.iter().find(|p| p.name == name)
}

fn canonical(key: &str) -> Option<&'static str> {
    PARAMS.iter().find(|p| p.name == key || p.symbol == key).map(|p| p.name)
}

/// Defaults per experiment. The key set is also the set of accepted keys.
pub fn defaults(e: Experiment) -> BTreeMap<&'static str, f64> {
    let closed = [("omega", 1.0), ("omega_r", 1e-4)];
    let open = [("kappa", 1.0), ("omega", 20.0), ("omega_r", 0.25)];
    let v: Vec<(&'static str, f64)> = match e {
        Experiment::Rabi1d => [&closed[..], &[("t_end", 80.0), ("sample_interval", 0.1), ("l_max", 128.0)]].concat(),
        Experiment::Rabi2d => [
            &closed[..],
            &[("t_end", 80.0), ("sample_interval", 0.1), ("l_max", 64.0), ("include_1d", 0.0)],
        ]
        .concat(),
        Experiment::Walk => [&closed[..], &[("dims", 1.0), ("t_end", 80.0), ("l_max", 128.0)]].concat(),
        Experiment::MaskedGround => [&closed[..], &[("dims", 1.0), ("l_max", 40.0), ("points", 720.0)]].concat(),
        Experiment::MeanfieldSweep => [&open[..], &[("ratio_min", 0.0), ("ratio_max", 1.5), ("points", 61.0)]].concat(),
        Experiment::WignerSteady => [
            &open[..],
            &[
                ("epsilon_ratio", 1.0),
                ("n_max", 120.0),
                ("sector", -1.0),
                ("grid_half_width", 0.0),
                ("grid_step", 0.1),
                ("log_scale", 0.0),
                ("t_max", 5000.0),
                ("tol", 1e-6),
            ],
        ]
        .concat(),
        Experiment::Trajectory => [
            &open[..],
            &[
                ("epsilon_ratio", 1.0),
                ("n_max", 160.0),
                ("sector", 0.0),
                ("dt", 1e-3),
                ("t_end", 2000.0),
                ("kappa_d", 0.25),
                ("seed", 1.0),
                ("stream", 0.0),
                ("record_stride", 100.0),
            ],
        ]
        .concat(),
        Experiment::Ensemble => [
            &open[..],
            &[
                ("epsilon_ratio", 1.0),
                ("n_max", 20.0),
                ("sector", 0.0),
                ("dt", 5e-4),
                ("t_end", 10.0),
                ("kappa_d", 0.25),
                ("seed", 1.0),
                ("stream", 0.0),
                ("record_stride", 1000.0),
                ("trajectories", 100.0),
                ("compare_master", 1.0),
            ],
        ]
        .concat(),
    };
    let mut map: BTreeMap<&'static str, f64> = v.into_iter().collect();
    if e.is_open() && e != Experiment::MeanfieldSweep {
        // `epsilon` is accepted as an alternative to `epsilon_ratio`; it has
        // no default of its own.
        map.remove("epsilon");
    }
    map
}

fn accepted(e: Experiment, key: &str) -> bool {
    defaults(e).contains_key(key) || (key == "epsilon" && e.is_open() && e != Experiment::MeanfieldSweep)
}

/// A fully resolved configuration: every accepted parameter has a value.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub format_version: u32,
    pub experiment: Experiment,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub preset: Option<String>,
    pub params: BTreeMap<String, f64>,
    pub output_dir: PathBuf,
}

impl ExperimentConfig {
    pub fn get(&self, key: &str) -> f64 {
        self.params[key]
    }

    pub fn int(&self, key: &str) -> usize {
        self.params[key] as usize
    }

    pub fn flag(&self, key: &str) -> bool {
        self.params[key] != 0.0
    }

    /// Drive amplitude in units of κ.
    pub fn epsilon(&self) -> f64 {
        self.params
            .get("epsilon")
            .copied()
            .unwrap_or_else(|| self.get("epsilon_ratio") * self.get("omega") / 2.0)
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ConfigErrors(pub Vec<String>);

impl fmt::Display for ConfigErrors {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "invalid configuration ({} problem(s)):", self.0.len())?;
        for e in &self.0 {
            write!(f, "\n  - {e}")?;
        }
        Ok(())
    }
}

impl std::error::Error for ConfigErrors {}

fn suggest(key: &str, candidates: impl Iterator<Item = &'static ParamSpec>) -> Option<&'static ParamSpec> {
    let lower = key.to_lowercase();
    candidates
        .map(|p| {
            let d = strsim::levenshtein(&lower, p.name).min(strsim::levenshtein(&lower, &p.symbol.to_lowercase()));
            (d, p)
        })
        .filter(|(d, p)| *d <= 2.max(p.name.len() / 3))
        .min_by_key(|(d, _)| *d)
        .map(|(_, p)| p)
}

fn suggest_word<'a>(key: &str, words: &[&'a str]) -> Option<&'a str> {
    words
        .iter()
        .map(|w| (strsim::levenshtein(&key.to_lowercase(), w), *w))
        .filter(|(d, _)| *d <= 3)
        .min_by_key(|(d, _)| *d)
        .map(|(_, w)| w)
}

fn label(p: &ParamSpec) -> String {
    if p.symbol == p.name {
        p.name.to_string()
    } else {
        format!("{}/{}", p.symbol, p.name)
    }
}

fn check_value(p: &ParamSpec, v: f64, errs: &mut Vec<String>) {
    let name = label(p);
    if !v.is_finite() {
        errs.push(format!("{name} must be finite"));
        return;
    }
    if p.kind == Kind::Integer && v.fract() != 0.0 {
        errs.push(format!("{name} must be an integer, got {v}"));
    }
    let ok = match p.range {
        Range::Positive => v > 0.0,
        Range::NonNegative => v >= 0.0,
        Range::Any => true,
        Range::Between(lo, hi) => (lo..=hi).contains(&v),
        Range::OneOf(set) => set.contains(&v),
    };
    if !ok {
        errs.push(match p.range {
            Range::Positive => format!("{} must be positive, got {v}", p.symbol),
            Range::NonNegative => format!("{} must be non-negative, got {v}", p.symbol),
            Range::Between(lo, hi) => format!("{name} must lie in [{lo}, {hi}], got {v}"),
            Range::OneOf(set) => format!("{name} must be one of {set:?}, got {v}"),
            Range::Any => unreachable!(),
        });
    }
}

/// Cross-parameter constraints on a resolved parameter set.
fn check_consistency(e: Experiment, p: &BTreeMap<String, f64>, errs: &mut Vec<String>) {
    let g = |k: &str| p.get(k).copied();
    if let (Some(a), Some(b)) = (g("ratio_min"), g("ratio_max")) {
        if a > b {
            errs.push(format!("ratio_min ({a}) must not exceed ratio_max ({b})"));
        }
    }
    if let (Some(dt), Some(t)) = (g("sample_interval"), g("t_end")) {
        if dt > t {
            errs.push(format!("sample_interval ({dt}) exceeds t_end ({t})"));
        }
    }
    if matches!(e, Experiment::Trajectory | Experiment::Ensemble) {
        let (Some(dt), Some(kappa), Some(omega), Some(t)) = (g("dt"), g("kappa"), g("omega"), g("t_end")) else {
            return;
        };
        let eps = g("epsilon").unwrap_or_else(|| g("epsilon_ratio").unwrap_or(0.0) * omega / 2.0);
        let rate = kappa.max(omega).max(eps);
        if dt * rate / kappa > 0.02 * (1.0 + 1e-12) {
            errs.push(format!(
                "dt = {dt}/κ is too large: dt·max(Ω, ε, κ) = {:.3} exceeds 0.02",
                dt * rate / kappa
            ));
        }
        if dt > t {
            errs.push(format!("dt ({dt}) exceeds t_end ({t})"));
        }
    }
    if e == Experiment::MaskedGround && g("dims") == Some(2.0) && g("points").is_some_and(|n| n > 256.0) {
        errs.push("points must not exceed 256 for dims = 2 (the density grid is points²)".into());
    }
    if e == Experiment::WignerSteady {
        if let (Some(a), Some(d)) = (g("grid_half_width"), g("grid_step")) {
            if a > 0.0 && a < d {
                errs.push(format!("grid_half_width ({a}) is smaller than grid_step ({d})"));
            }
        }
    }
}

/// Parses, expands and validates a raw JSON configuration. Every problem
/// found is reported at once.
pub fn validate_config(raw: &Value) -> Result<ExperimentConfig, ConfigErrors> {
    let mut errs = Vec::new();
    let Some(obj) = raw.as_object() else {
        return Err(ConfigErrors(vec!["configuration must be a JSON object".into()]));
    };
    const TOP: [&str; 5] = ["format_version", "experiment", "preset", "params", "output_dir"];
    for key in obj.keys() {
        if !TOP.contains(&key.as_str()) {
            errs.push(match suggest_word(key, &TOP) {
                Some(s) => format!("unknown top-level key {key:?}; did you mean {s:?}?"),
                None => format!("unknown top-level key {key:?} (expected one of {TOP:?})"),
            });
        }
    }
    let version = match obj.get("format_version") {
        None => FORMAT_VERSION,
        Some(v) => match v.as_u64() {
            Some(n) if n == FORMAT_VERSION as u64 => FORMAT_VERSION,
            _ => {
                errs.push(format!("format_version must be {FORMAT_VERSION}, got {v}"));
                FORMAT_VERSION
            }
        },
    };
    let preset = match obj.get("preset") {
        None => None,
        Some(Value::String(name)) => match presets::find(name) {
            Some(p) => Some(p),
            None => {
                let names: Vec<&str> = presets::PRESETS.iter().map(|p| p.name).collect();
                errs.push(match suggest_word(name, &names) {
                    Some(s) => format!("unknown preset {name:?}; did you mean {s:?}?"),
                    None => format!("unknown preset {name:?} (available: {})", names.join(", ")),
                });
                None
            }
        },
        Some(v) => {
            errs.push(format!("preset must be a string, got {v}"));
            None
        }
    };
    let experiment = match obj.get("experiment") {
        Some(Value::String(s)) => match Experiment::parse(s) {
            Some(e) => Some(e),
            None => {
                let names: Vec<&str> = Experiment::ALL.iter().map(|e| e.name()).collect();
                errs.push(match suggest_word(s, &names) {
                    Some(n) => format!("unknown experiment {s:?}; did you mean {n:?}?"),
                    None => format!("unknown experiment {s:?} (expected one of {})", names.join(", ")),
                });
                None
            }
        },
        Some(v) => {
            errs.push(format!("experiment must be a string, got {v}"));
            None
        }
        None => preset.map(|p| p.experiment),
    };
    if let (Some(e), Some(p)) = (experiment, preset) {
        if e != p.experiment {
            errs.push(format!("preset {:?} runs {} but experiment is {e}", p.name, p.experiment));
        }
    }
    let output_dir = match obj.get("output_dir") {
        None => None,
        Some(Value::String(s)) if !s.is_empty() => Some(PathBuf::from(s)),
        Some(v) => {
            errs.push(format!("output_dir must be a non-empty string, got {v}"));
            None
        }
    };
    let Some(experiment) = experiment else {
        if obj.get("experiment").is_none() && preset.is_none() && obj.get("preset").is_none() {
            errs.push("either \"experiment\" or \"preset\" is required".into());
        }
        return Err(ConfigErrors(errs));
    };

    let mut params: BTreeMap<String, f64> =
        defaults(experiment).into_iter().map(|(k, v)| (k.to_string(), v)).collect();
    let mut explicit: Vec<&'static str> = Vec::new();
    if let Some(p) = preset {
        for (k, v) in p.params {
            params.insert(k.to_string(), *v);
        }
    }
    match obj.get("params") {
        None => {}
        Some(Value::Object(map)) => {
            for (key, value) in map {
                let Some(name) = canonical(key).filter(|n| accepted(experiment, n)) else {
                    let known = canonical(key).is_some();
                    let cands = PARAMS.iter().filter(|p| accepted(experiment, p.name));
                    errs.push(match (known, suggest(key, cands)) {
                        (true, _) => format!("parameter {key:?} does not apply to {experiment}"),
                        (false, Some(s)) => format!("unknown parameter {key:?}; did you mean \"{}\"?", label(s)),
                        (false, None) => format!("unknown parameter {key:?} for {experiment}"),
                    });
                    continue;
                };
                if explicit.contains(&name) {
                    errs.push(format!("parameter {name} is given more than once"));
                    continue;
                }
                explicit.push(name);
                match value.as_f64() {
                    Some(v) => {
                        params.insert(name.to_string(), v);
                    }
                    None => errs.push(format!("parameter {key:?} must be a number, got {value}")),
                }
            }
        }
        Some(v) => errs.push(format!("params must be an object, got {v}")),
    }
    // The drive is given either as ε or as ε/ε_crit. Explicit parameters
    // take precedence over the preset, which takes precedence over the
    // default ratio.
    if experiment.is_open() && experiment != Experiment::MeanfieldSweep {
        let preset_eps = preset.is_some_and(|p| p.params.iter().any(|(k, _)| *k == "epsilon"));
        let (eps, ratio) = (explicit.contains(&"epsilon"), explicit.contains(&"epsilon_ratio"));
        if eps && ratio {
            errs.push("give either ε/epsilon or ε/ε_crit/epsilon_ratio, not both".into());
        }
        if eps || (preset_eps && !ratio) {
            params.remove("epsilon_ratio");
        } else {
            params.remove("epsilon");
        }
    }
    for (k, v) in &params {
        if let Some(s) = param_spec(k) {
            check_value(s, *v, &mut errs);
        }
    }
    check_consistency(experiment, &params, &mut errs);
    if !errs.is_empty() {
        return Err(ConfigErrors(errs));
    }
    let output_dir = output_dir.unwrap_or_else(|| {
        PathBuf::from("runs").join(preset.map(|p| p.name.to_string()).unwrap_or_else(|| experiment.to_string()))
    });
    Ok(ExperimentConfig {
        format_version: version,
        experiment,
        preset: preset.map(|p| p.name.to_string()),
        params,
        output_dir,
    })
}

/// Parses a configuration document and validates it.
pub fn parse_config(text: &str) -> Result<ExperimentConfig, ConfigErrors> {
    let value: Value = serde_json::from_str(text).map_err(|e| ConfigErrors(vec![format!("malformed JSON: {e}")]))?;
    validate_config(&value)
}

/// Re-validates an already resolved configuration, as read from a manifest.
pub fn revalidate(cfg: &ExperimentConfig) -> Result<ExperimentConfig, ConfigErrors> {
    let mut value = serde_json::to_value(cfg).map_err(|e| ConfigErrors(vec![e.to_string()]))?;
    if let Some(obj) = value.as_object_mut() {
        // The resolved parameters already include the preset's.
        obj.remove("preset");
    }
    let mut out = validate_config(&value)?;
    out.preset = cfg.preset.clone();
    if out.params != cfg.params {
        return Err(ConfigErrors(vec!["resolved parameters changed on re-validation".into()]));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    #[test]
    fn preset_expands_to_full_parameters() {
        let cfg = validate_config(&json!({"preset": "fig4b"})).unwrap();
        assert_eq!(cfg.experiment, Experiment::WignerSteady);
        assert_eq!(cfg.get("omega_r"), 0.25);
        assert_eq!(cfg.get("omega"), 20.0);
        assert_eq!(cfg.get("epsilon_ratio"), 1.0);
        assert_eq!(cfg.epsilon(), 10.0);
        assert_eq!(cfg.get("sector"), -1.0);
        assert_eq!(cfg.output_dir, PathBuf::from("runs/fig4b"));
    }

    #[test]
    fn negative_kappa_is_rejected() {
        let err = validate_config(&json!({"experiment": "wigner_steady", "params": {"kappa": -1}})).unwrap_err();
        assert!(err.0.iter().any(|e| e.contains("κ must be positive")), "{err}");
    }

    #[test]
    fn unknown_key_gets_a_suggestion() {
        let err = validate_config(&json!({"experiment": "trajectory", "params": {"omega_R": 0.1}})).unwrap_err();
        assert!(err.0.iter().any(|e| e.contains("ω_r/omega_r")), "{err}");
    }

    #[test]
    fn all_problems_are_reported_together() {
        let err = validate_config(&json!({
            "experiment": "trajectory",
            "extra": 1,
            "params": {"kappa": 0, "n_max": 2.5, "dt": 0.1, "bogus_key": 3}
        }))
        .unwrap_err();
        assert!(err.0.len() >= 5, "{err}");
    }

    #[test]
    fn unicode_aliases_are_accepted() {
        let cfg = validate_config(&json!({"experiment": "wigner_steady", "params": {"Ω": 8, "N_max": 40, "ε": 1}}))
            .unwrap();
        assert_eq!(cfg.get("omega"), 8.0);
        assert_eq!(cfg.int("n_max"), 40);
        assert_eq!(cfg.epsilon(), 1.0);
        assert!(!cfg.params.contains_key("epsilon_ratio"));
    }

    #[test]
    fn parameters_outside_the_experiment_are_rejected() {
        let err = validate_config(&json!({"experiment": "rabi1d", "params": {"kappa_d": 1}})).unwrap_err();
        assert!(err.0[0].contains("does not apply"), "{err}");
    }

    #[test]
    fn resolved_config_round_trips() {
        let cfg = validate_config(&json!({"preset": "fig6", "params": {"seed": 42}})).unwrap();
        let back = revalidate(&serde_json::from_str(&serde_json::to_string(&cfg).unwrap()).unwrap()).unwrap();
        assert_eq!(back, cfg);
    }
}
