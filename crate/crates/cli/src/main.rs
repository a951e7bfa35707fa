use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use masked_cavity_cli::config::Experiment;
use masked_cavity_cli::presets::PRESETS;
use masked_cavity_cli::{rerun, run_experiment, validate_config, ConfigErrors, HarnessError, EXIT_FAILURE};
use serde_json::{Map, Value};

#[derive(Parser)]
#[command(name = "masked-cavity", version, about = "Atom in a driven, lossy standing-wave cavity: experiments and figure presets")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone, Default)]
struct RunArgs {
    /// JSON configuration file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory (overrides `output_dir`).
    #[arg(long)]
    out: Option<PathBuf>,
    /// RNG seed for stochastic experiments.
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads for ensembles, sweeps and grids.
    #[arg(long, default_value_t = 1)]
    jobs: usize,
    /// Parameter override, e.g. `--set omega=10`; repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Excited-state population, 1D cavity.
    Rabi1d(RunArgs),
    /// Excited-state population, 2D cavity.
    Rabi2d(RunArgs),
    /// Momentum-ladder distribution after free evolution.
    Walk(RunArgs),
    /// Parity-resolved ground states of the one-excitation manifold.
    MaskedGround(RunArgs),
    /// Mean-field fixed points versus drive strength.
    MeanfieldSweep(RunArgs),
    /// Steady-state cavity Wigner function.
    WignerSteady(RunArgs),
    /// One heterodyne-detection trajectory.
    Trajectory(RunArgs),
    /// Trajectory ensemble statistics.
    Ensemble(RunArgs),
    /// Runs a figure preset.
    Preset {
        name: String,
        #[command(flatten)]
        args: RunArgs,
    },
    /// Lists the presets.
    Presets,
    /// Regenerates a run from its manifest and compares the outputs.
    Rerun {
        manifest: PathBuf,
        /// Directory for the regenerated outputs (default: `rerun/` beside the manifest).
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, default_value_t = 1)]
        jobs: usize,
    },
}

fn invalid(msg: String) -> HarnessError {
    HarnessError::Config(ConfigErrors(vec![msg]))
}

fn raw_config(experiment: Option<Experiment>, preset: Option<&str>, args: &RunArgs) -> Result<Value, HarnessError> {
    let mut obj = match &args.config {
        None => Map::new(),
        Some(path) => {
            let text = fs::read_to_string(path).map_err(|e| HarnessError::io(path, e))?;
            match serde_json::from_str::<Value>(&text) {
                Ok(Value::Object(m)) => m,
                Ok(_) => return Err(invalid(format!("{}: configuration must be a JSON object", path.display()))),
                Err(e) => return Err(invalid(format!("{}: malformed JSON: {e}", path.display()))),
            }
        }
    };
    if let Some(e) = experiment {
        match obj.get("experiment").and_then(Value::as_str).map(Experiment::parse) {
            Some(Some(given)) if given != e => {
                return Err(invalid(format!("configuration is for {given}, not {e}")));
            }
            _ => {
                obj.insert("experiment".into(), Value::from(e.name()));
            }
        }
    }
    if let Some(p) = preset {
        obj.insert("preset".into(), Value::from(p));
    }
    if let Some(out) = &args.out {
        obj.insert("output_dir".into(), Value::from(out.to_string_lossy().into_owned()));
    }
    let params = obj.entry("params").or_insert_with(|| Value::Object(Map::new()));
    let Value::Object(params) = params else {
        return Err(invalid("params must be an object".into()));
    };
    if let Some(seed) = args.seed {
        params.insert("seed".into(), Value::from(seed));
    }
    let mut errs = Vec::new();
    for kv in &args.set {
        match kv.split_once('=').map(|(k, v)| (k.trim(), v.trim().parse::<f64>())) {
            Some((k, Ok(v))) if !k.is_empty() => {
                params.insert(k.to_string(), Value::from(v));
            }
            _ => errs.push(format!("--set expects KEY=NUMBER, got {kv:?}")),
        }
    }
    if !errs.is_empty() {
        return Err(HarnessError::Config(ConfigErrors(errs)));
    }
    Ok(Value::Object(obj))
}

fn set_jobs(jobs: usize) -> Result<(), HarnessError> {
    if jobs == 0 {
        return Err(invalid("--jobs must be at least 1".into()));
    }
    if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(jobs).build_global() {
        log::warn!("could not configure {jobs} worker threads: {e}");
    }
    Ok(())
}

fn run(experiment: Option<Experiment>, preset: Option<&str>, args: &RunArgs) -> Result<(), HarnessError> {
    set_jobs(args.jobs)?;
    let cfg = validate_config(&raw_config(experiment, preset, args)?)?;
    let manifest = run_experiment(&cfg)?;
    println!("{} finished in {:.2} s", cfg.experiment, manifest.wall_time_s);
    for f in &manifest.files {
        println!("  {}  {}", f.sha256, cfg.output_dir.join(&f.path).display());
    }
    println!("manifest: {}", cfg.output_dir.join(masked_cavity_cli::manifest::MANIFEST_FILE).display());
    Ok(())
}

fn dispatch(command: Command) -> Result<(), HarnessError> {
    let exp = |e: Experiment, a: &RunArgs| run(Some(e), None, a);
    match command {
        Command::Rabi1d(a) => exp(Experiment::Rabi1d, &a),
        Command::Rabi2d(a) => exp(Experiment::Rabi2d, &a),
        Command::Walk(a) => exp(Experiment::Walk, &a),
        Command::MaskedGround(a) => exp(Experiment::MaskedGround, &a),
        Command::MeanfieldSweep(a) => exp(Experiment::MeanfieldSweep, &a),
        Command::WignerSteady(a) => exp(Experiment::WignerSteady, &a),
        Command::Trajectory(a) => exp(Experiment::Trajectory, &a),
        Command::Ensemble(a) => exp(Experiment::Ensemble, &a),
        Command::Preset { name, args } => run(None, Some(&name), &args),
        Command::Presets => {
            for p in PRESETS {
                println!("{:<8} {:<16} {}", p.name, p.experiment.name(), p.description);
            }
            Ok(())
        }
        Command::Rerun { manifest, out, jobs } => {
            set_jobs(jobs)?;
            let report = rerun(&manifest, out)?;
            for (path, agreement) in &report.files {
                println!("  {path}: {}", serde_json::to_string(agreement)?);
            }
            let bad = report.mismatches();
            if bad.is_empty() {
                println!("rerun in {} reproduces every recorded output", report.output_dir.display());
                Ok(())
            } else {
                Err(HarnessError::Mismatch(bad))
            }
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match dispatch(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            let code = e.exit_code();
            ExitCode::from(u8::try_from(code).unwrap_or(EXIT_FAILURE as u8))
        }
    }
}
