//! Dispatch of a validated configuration to the simulation modules.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::time::Instant;

use masked_cavity::bessel::bessel_j0;
use masked_cavity::checkpoint::Checkpoint;
use masked_cavity::closed::{
    build_closed_hamiltonian, check_ladder_extent, dressed_components, evolve_2d_factorized, evolve_unitary,
    masked_ground_state, momentum_distribution, peak_position, position_density, rabi_signal, schmidt_entropy,
    ClosedModelParams, Electronic, EvolveOptions, ManifoldSpec, MomentumDistribution,
};
use masked_cavity::hilbert::{build_operator, expectation, partial_trace, DensityMatrix, Factor, OperatorKind, SpaceDescriptor, StateVector};
use masked_cavity::meanfield::{mf_steady_states, BranchKind, MeanFieldParams, SteadyBranch};
use masked_cavity::open::{
    build_open_system, evolve_master, sector_populations, steady_state, InitialState, OpenModelParams, SteadyOptions,
};
use masked_cavity::trajectory::{
    detect_switches, ensemble_configs, ensemble_stats, run_trajectory, EnsembleStats, HeterodyneRecord, SwitchConfig,
    TrajectoryConfig,
};
use masked_cavity::wigner::{recommended_half_width, wigner, WignerGrid};
use masked_cavity::C64;
use rayon::prelude::*;
use serde_json::{json, Value};

use crate::config::{Experiment, ExperimentConfig};
use crate::manifest::RunManifest;
use crate::output::{Cell, Outputs};
use crate::HarnessError;

/// Name of the random number generator, recorded with stochastic outputs.
pub const RNG_NAME: &str = "xoshiro256++ seeded by seed_from_u64(seed), advanced by `stream` jumps of 2^128";

/// What a run reports besides its files. A non-empty `trip` makes the run
/// fail with a numerical-invariant error after its outputs are written.
#[derive(Default)]
struct Report {
    convergence: BTreeMap<String, Value>,
    trip: Option<String>,
}

/// Runs the experiment, writes its outputs and manifest, and returns the
/// manifest.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<RunManifest, HarnessError> {
    let start = Instant::now();
    let mut out = Outputs::create(&cfg.output_dir)?;
    log::info!("running {} into {}", cfg.experiment, cfg.output_dir.display());
    let report = match cfg.experiment {
        Experiment::Rabi1d => rabi1d(cfg, &mut out),
        Experiment::Rabi2d => rabi2d(cfg, &mut out),
        Experiment::Walk => walk(cfg, &mut out),
        Experiment::MaskedGround => masked_ground(cfg, &mut out),
        Experiment::MeanfieldSweep => meanfield_sweep(cfg, &mut out),
        Experiment::WignerSteady => wigner_steady(cfg, &mut out, start),
        Experiment::Trajectory => trajectory(cfg, &mut out),
        Experiment::Ensemble => ensemble(cfg, &mut out),
    }?;
    let manifest = RunManifest::build(cfg, start.elapsed().as_secs_f64(), report.convergence, &out)?;
    manifest.write(out.dir())?;
    match report.trip {
        Some(msg) => Err(HarnessError::Trip(msg)),
        None => Ok(manifest),
    }
}

fn time_grid(t_end: f64, step: f64) -> Vec<f64> {
    let n = (t_end / step + 1e-9).floor() as usize;
    let mut times: Vec<f64> = (0..=n).map(|k| k as f64 * step).collect();
    if t_end - times[n] > 1e-9 * step {
        times.push(t_end);
    }
    times
}

fn closed_params(cfg: &ExperimentConfig, dims: usize) -> Result<ClosedModelParams, HarnessError> {
    Ok(ClosedModelParams::new(cfg.get("omega"), cfg.get("omega_r"), dims)?)
}

/// 1D evolution from `|e, 0⟩ ⊗ |l = 0⟩` on the one-excitation manifold.
fn evolve_1d(cfg: &ExperimentConfig, l_max: usize, times: &[f64], report: &mut Report) -> Result<Vec<StateVector>, HarnessError> {
    let p = closed_params(cfg, 1)?;
    let space = SpaceDescriptor::manifold(1, &[l_max])?;
    if let Some(w) = check_ladder_extent(&p, &space, times.last().copied().unwrap_or(0.0)) {
        report.convergence.insert("ladder_warning_1d".into(), json!(w));
    }
    let h = build_closed_hamiltonian(&p, ManifoldSpec::Excitations(1), &space)?;
    let psi0 = StateVector::ladder_state(&space, 0, true, &[0])?;
    Ok(evolve_unitary(&h, &psi0, times, &EvolveOptions::default())?)
}

/// 2D evolution from `|e, 0⟩ ⊗ |0, 0⟩`; `j_max` bounds the rotated walks.
fn evolve_2d(cfg: &ExperimentConfig, j_max: usize, times: &[f64]) -> Result<Vec<StateVector>, HarnessError> {
    let p = closed_params(cfg, 2)?;
    let one = C64::new(1.0, 0.0);
    Ok(evolve_2d_factorized(&p, 1, [one, C64::new(0.0, 0.0)], j_max, times, &EvolveOptions::default())?)
}

fn rabi1d(cfg: &ExperimentConfig, out: &mut Outputs) -> Result<Report, HarnessError> {
    let mut report = Report::default();
    let times = time_grid(cfg.get("t_end"), cfg.get("sample_interval"));
    let pe = rabi_signal(&evolve_1d(cfg, cfg.int("l_max"), &times, &mut report)?)?;
    let omega = cfg.get("omega");
    let mut t = out.table("rabi_1d.csv", &["t [1/Omega]", "P_e", "P_e recoil-free limit"])?;
    for (tk, p) in times.iter().zip(&pe) {
        t.reals(&[*tk, *p, 0.5 * (1.0 + bessel_j0(2.0 * omega * tk))])?;
    }
    t.finish()?;
    Ok(report)
}

fn rabi2d(cfg: &ExperimentConfig, out: &mut Outputs) -> Result<Report, HarnessError> {
    let mut report = Report::default();
    let times = time_grid(cfg.get("t_end"), cfg.get("sample_interval"));
    let pe2 = rabi_signal(&evolve_2d(cfg, cfg.int("l_max"), &times)?)?;
    let mut t = out.table("rabi_2d.csv", &["t [1/Omega]", "P_e"])?;
    for (tk, p) in times.iter().zip(&pe2) {
        t.reals(&[*tk, *p])?;
    }
    t.finish()?;
    if cfg.flag("include_1d") {
        // The 2D ladder spans 2 l_max per axis; the 1D run uses the same span.
        let pe1 = rabi_signal(&evolve_1d(cfg, 2 * cfg.int("l_max"), &times, &mut report)?)?;
        let mut t = out.table("rabi_1d.csv", &["t [1/Omega]", "P_e"])?;
        for (tk, p) in times.iter().zip(&pe1) {
            t.reals(&[*tk, *p])?;
        }
        t.finish()?;
    }
    Ok(report)
}

fn centred(dist: &MomentumDistribution, axis: usize) -> i64 {
    dist.l_max[axis] as i64
}

fn walk(cfg: &ExperimentConfig, out: &mut Outputs) -> Result<Report, HarnessError> {
    let mut report = Report::default();
    let t_end = cfg.get("t_end");
    let psi = if cfg.int("dims") == 1 {
        evolve_1d(cfg, cfg.int("l_max"), &[t_end], &mut report)?
    } else {
        evolve_2d(cfg, cfg.int("l_max"), &[t_end])?
    }
    .remove(0);
    let e = momentum_distribution(&psi, Electronic::Excited)?;
    let g = momentum_distribution(&psi, Electronic::Ground)?;
    report.convergence.insert("excited_population".into(), json!(e.total()));
    if cfg.int("dims") == 1 {
        let a = centred(&e, 0);
        let mut t = out.table("walk_1d.csv", &["l [hbar k]", "P(e,l)", "P(g,l)"])?;
        for l in -a..=a {
            t.row(&[Cell::Int(l), e.at(&[l]).into(), g.at(&[l]).into()])?;
        }
        return t.finish().map(|_| report);
    }
    let (a, b) = (centred(&e, 0), centred(&e, 1));
    let mut t = out.table("walk_2d_joint.csv", &["l1 [hbar k]", "l2 [hbar k]", "P(e,l1,l2)", "P(g,l1,l2)"])?;
    for l1 in -a..=a {
        for l2 in -b..=b {
            t.row(&[Cell::Int(l1), Cell::Int(l2), e.at(&[l1, l2]).into(), g.at(&[l1, l2]).into()])?;
        }
    }
    t.finish()?;
    let mut t = out.table("walk_2d_marginal.csv", &["l1 [hbar k]", "P(e,l1)", "P(g,l1)"])?;
    for l1 in -a..=a {
        let i = (l1 + a) as usize;
        t.row(&[Cell::Int(l1), e.marginals[0][i].into(), g.marginals[0][i].into()])?;
    }
    t.finish()?;
    let (u, v) = e.rotated_marginals()?;
    let mut t = out.table("walk_2d_rotated.csv", &["L [hbar k]", "P(e, l1+l2=L)", "P(e, l1-l2=L)"])?;
    for (i, (pu, pv)) in u.iter().zip(&v).enumerate() {
        t.row(&[Cell::Int(i as i64 - a - b), (*pu).into(), (*pv).into()])?;
    }
    t.finish()?;
    Ok(report)
}

fn masked_ground(cfg: &ExperimentConfig, out: &mut Outputs) -> Result<Report, HarnessError> {
    let mut report = Report::default();
    let dims = cfg.int("dims");
    let l_max = cfg.int("l_max");
    let p = closed_params(cfg, dims)?;
    let space = SpaceDescriptor::manifold(1, &vec![l_max; dims])?;
    let h = build_closed_hamiltonian(&p, ManifoldSpec::Excitations(1), &space)?;
    let gs = masked_ground_state(&h, ManifoldSpec::Excitations(1), p.omega)?;
    let mut t = out.table("masked_levels.csv", &["parities", "E [Omega]", "residual [Omega]", "degenerate"])?;
    for (i, level) in gs.report.sectors.iter().enumerate() {
        let label: Vec<String> = level.parities.iter().map(|s| format!("{s:+}")).collect();
        let degenerate = gs.report.degenerate.contains(&i) as i64;
        t.row(&[
            label.join(" ").as_str().into(),
            level.energy.into(),
            level.residual.into(),
            Cell::Int(degenerate),
        ])?;
    }
    t.finish()?;
    let (mut upper, mut lower) = dressed_components(&gs.state)?;
    upper.normalize();
    lower.normalize();
    let points = cfg.int("points");
    let du = position_density(&upper, points)?;
    let dl = position_density(&lower, points)?;
    let x = |i: usize| 2.0 * PI * i as f64 / points as f64;
    let mut summary = json!({
        "ground_energy": gs.energy,
        "degeneracy_threshold": gs.report.threshold,
        "degenerate_sectors": gs.report.degenerate.len(),
    });
    if dims == 1 {
        let mut t = out.table("masked_density.csv", &["k x [rad]", "upper branch density", "lower branch density"])?;
        for i in 0..points {
            t.reals(&[x(i), du[i], dl[i]])?;
        }
        t.finish()?;
        summary["upper_peak"] = json!(peak_position(&du));
        summary["lower_peak"] = json!(peak_position(&dl));
    } else {
        let mut t = out.table(
            "masked_density_2d.csv",
            &["k x1 [rad]", "k x2 [rad]", "upper branch density", "lower branch density"],
        )?;
        for i in 0..points {
            for j in 0..points {
                t.reals(&[x(i), x(j), du[i * points + j], dl[i * points + j]])?;
            }
        }
        t.finish()?;
        summary["upper_branch_axis_entropy"] = json!(schmidt_entropy(&upper, &[Factor::Axis(0)])?);
    }
    report.convergence.insert("degenerate_sectors".into(), json!(gs.report.degenerate.len()));
    out.json("masked_ground.json", &summary)?;
    Ok(report)
}

fn branch_id(b: &SteadyBranch) -> String {
    let side = if b.state.z >= 0.0 { "+" } else { "-" };
    match b.kind {
        BranchKind::Trivial => format!("trivial{side}"),
        BranchKind::Nontrivial { root_index, .. } => format!("root{root_index}{side}"),
    }
}

fn meanfield_sweep(cfg: &ExperimentConfig, out: &mut Outputs) -> Result<Report, HarnessError> {
    let (kappa, omega, omega_r) = (cfg.get("kappa"), cfg.get("omega"), cfg.get("omega_r"));
    let (lo, hi, n) = (cfg.get("ratio_min"), cfg.get("ratio_max"), cfg.int("points"));
    let ratios: Vec<f64> = (0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).collect();
    let sweep: Vec<Vec<SteadyBranch>> = ratios
        .par_iter()
        .map(|r| MeanFieldParams::new(kappa, omega, omega_r, r * omega / 2.0).and_then(|p| mf_steady_states(&p)))
        .collect::<Result<_, _>>()?;
    let mut t = out.table(
        "meanfield_branches.csv",
        &[
            "epsilon/epsilon_crit",
            "branch",
            "Re alpha * kappa/Omega",
            "Im alpha * kappa/Omega",
            "X",
            "Y",
            "Z",
            "cos phi",
            "stability",
            "leading Re lambda [kappa]",
        ],
    )?;
    let scale = kappa / omega;
    for (r, branches) in ratios.iter().zip(&sweep) {
        for b in branches {
            let cos_phi = match b.kind {
                BranchKind::Trivial => f64::NAN,
                BranchKind::Nontrivial { phi, .. } => phi.cos(),
            };
            let stability = serde_json::to_value(b.stability)?;
            t.row(&[
                (*r).into(),
                branch_id(b).as_str().into(),
                (b.state.alpha.re * scale).into(),
                (b.state.alpha.im * scale).into(),
                b.state.x.into(),
                b.state.y.into(),
                b.state.z.into(),
                cos_phi.into(),
                stability.as_str().unwrap_or("unknown").into(),
                (b.leading_eigenvalue.re / kappa).into(),
            ])?;
        }
    }
    t.finish()?;
    let mut report = Report::default();
    report.convergence.insert("sweep_points".into(), json!(n));
    Ok(report)
}

fn initial_state(cfg: &ExperimentConfig) -> Result<InitialState, HarnessError> {
    match cfg.get("sector") as i8 {
        0 => Ok(InitialState::mixed_parity()),
        s => Ok(InitialState::parity_eigenstate(s)?),
    }
}

fn open_model(cfg: &ExperimentConfig) -> Result<OpenModelParams, HarnessError> {
    let p = OpenModelParams {
        kappa: cfg.get("kappa"),
        omega: cfg.get("omega"),
        omega_r: cfg.get("omega_r"),
        epsilon: cfg.epsilon(),
        n_max: cfg.int("n_max"),
        initial_state: initial_state(cfg)?,
    };
    p.validate()?;
    Ok(p)
}

fn wigner_steady(cfg: &ExperimentConfig, out: &mut Outputs, start: Instant) -> Result<Report, HarnessError> {
    let mut report = Report::default();
    let model = open_model(cfg)?;
    let opts = SteadyOptions {
        t_max: cfg.get("t_max"),
        tol: cfg.get("tol"),
        ..SteadyOptions::default()
    };
    let ss = steady_state(&model, &opts)?;
    let field = partial_trace(&ss.rho, &[Factor::Photon])?;
    let step = cfg.get("grid_step");
    let half_width = match cfg.get("grid_half_width") {
        a if a > 0.0 => a,
        _ => ((recommended_half_width(&field)? / step).ceil() * step).clamp(step, 25.0),
    };
    let grid = wigner(&field, &WignerGrid::new(half_width, step)?)?;
    let log_scale = cfg.flag("log_scale");
    let mut header = vec!["x = Re alpha", "p = Im alpha", "W"];
    if log_scale {
        header.push("log10 |W|");
    }
    let mut t = out.table("wigner.csv", &header)?;
    let n = grid.size();
    for ip in 0..n {
        for ix in 0..n {
            let w = grid.at(ix, ip);
            let mut row = vec![grid.coord(ix), grid.coord(ip), w];
            if log_scale {
                row.push(w.abs().log10());
            }
            t.reals(&row)?;
        }
    }
    t.finish()?;
    let resolved = OpenModelParams {
        n_max: ss.n_max,
        ..model.clone()
    };
    Checkpoint {
        rho: ss.rho.clone(),
        time: ss.t_reached,
        params: Some(resolved.clone()),
    }
    .write(&out.path("steady_rho.json"))?;
    out.record("steady_rho.json");
    let (plus, minus) = sector_populations(&ss.rho);
    let meta = json!({
        "params": resolved,
        "epsilon_crit": model.epsilon_crit(),
        "epsilon_over_epsilon_crit": model.epsilon / model.epsilon_crit(),
        "limiting_drive_omega_over_4": model.omega / 4.0,
        "converged": ss.converged,
        "residual": ss.residual,
        "method": ss.method,
        "n_max_used": ss.n_max,
        "t_reached": ss.t_reached,
        "min_eigenvalue": ss.rho.min_eigenvalue(),
        "sector_populations": {"minus": minus, "plus": plus},
        "grid": {"half_width": half_width, "step": step, "points_per_axis": n},
        "normalization": grid.normalization(),
        "w_min": grid.min(),
        "w_max": grid.max(),
        "checkpoint": "steady_rho.json",
        "runtime_s": start.elapsed().as_secs_f64(),
    });
    out.json("wigner.json", &meta)?;
    report.convergence.insert("steady_state_converged".into(), json!(ss.converged));
    report.convergence.insert("steady_state_residual".into(), json!(ss.residual));
    report.convergence.insert("n_max_used".into(), json!(ss.n_max));
    if !ss.converged {
        report.trip = Some(format!(
            "steady state not converged: residual {:.3e} above {:.1e} at t = {}/κ",
            ss.residual, opts.tol, ss.t_reached
        ));
    }
    Ok(report)
}

fn trajectory_config(cfg: &ExperimentConfig) -> Result<TrajectoryConfig, HarnessError> {
    let t = TrajectoryConfig {
        model: open_model(cfg)?,
        dt: cfg.get("dt"),
        duration: cfg.get("t_end"),
        kappa_d: cfg.get("kappa_d"),
        seed: cfg.get("seed") as u64,
        stream: cfg.get("stream") as u64,
        record_stride: cfg.int("record_stride"),
    };
    t.validate()?;
    Ok(t)
}

fn trajectory(cfg: &ExperimentConfig, out: &mut Outputs) -> Result<Report, HarnessError> {
    let tc = trajectory_config(cfg)?;
    let mut rec = run_trajectory(&tc)?;
    let switches = detect_switches(&rec, &SwitchConfig::new(tc.kappa_d));
    rec.switch_times = switches.switch_times.clone();
    write_record(out, "record.csv", &rec)?;
    let drift = rec.parity.iter().map(|p| (p - rec.parity[0]).abs()).fold(0.0, f64::max);
    out.json(
        "record.json",
        &json!({
            "config": tc,
            "seed": tc.seed,
            "stream": tc.stream,
            "rng": RNG_NAME,
            "switch_times": rec.switch_times,
            "bimodal": switches.bimodal,
            "threshold": switches.threshold,
            "separation": switches.separation,
            "parity_drift": drift,
            "max_photon_tail": rec.max_photon_tail,
        }),
    )?;
    let mut report = Report::default();
    report.convergence.insert("max_photon_tail".into(), json!(rec.max_photon_tail));
    report.convergence.insert("switches".into(), json!(rec.switch_times.len()));
    Ok(report)
}

fn write_record(out: &mut Outputs, name: &str, rec: &HeterodyneRecord) -> Result<(), HarnessError> {
    let mut t = out.table(
        name,
        &[
            "t [1/kappa]",
            "Re I",
            "Im I",
            "Re <sigma_->",
            "Im <sigma_->",
            "Re <(J+ + J-) sigma_->",
            "<sigma_3 J_3>",
            "<n>",
        ],
    )?;
    for k in 0..rec.times.len() {
        t.reals(&[
            rec.times[k],
            rec.current[k].re,
            rec.current[k].im,
            rec.sigma_minus[k].re,
            rec.sigma_minus[k].im,
            rec.branch_correlation[k].re,
            rec.parity[k],
            rec.photons[k],
        ])?;
    }
    t.finish()
}

fn ensemble(cfg: &ExperimentConfig, out: &mut Outputs) -> Result<Report, HarnessError> {
    let base = trajectory_config(cfg)?;
    let count = cfg.int("trajectories");
    if count < 50 {
        log::warn!("ensemble of {count} trajectories; at least 50 are recommended");
    }
    let records: Vec<HeterodyneRecord> = ensemble_configs(&base, count)
        .par_iter()
        .map(run_trajectory)
        .collect::<Result<_, _>>()?;
    let stats = |f: &dyn Fn(&HeterodyneRecord) -> Vec<f64>| -> Result<EnsembleStats, HarnessError> {
        Ok(ensemble_stats(&records.iter().map(|r| (r.times.clone(), f(r))).collect::<Vec<_>>())?)
    };
    let columns = [
        stats(&|r| r.field.iter().map(|a| a.re).collect())?,
        stats(&|r| r.field.iter().map(|a| a.im).collect())?,
        stats(&|r| r.photons.clone())?,
        stats(&|r| r.parity.clone())?,
    ];
    let mut header = vec![
        "t [1/kappa]",
        "mean Re <a>",
        "stderr Re <a>",
        "mean Im <a>",
        "stderr Im <a>",
        "mean <n>",
        "stderr <n>",
        "mean <sigma_3 J_3>",
        "stderr <sigma_3 J_3>",
    ];
    let master = if cfg.flag("compare_master") {
        let sys = build_open_system(&base.model)?;
        let rho0 = DensityMatrix::from_pure(&base.model.initial_state.to_state(&sys.space)?);
        let traj = evolve_master(&sys, &base.model, &rho0, base.duration, base.dt, base.record_stride)?;
        let a_op = build_operator(OperatorKind::Annihilate, &sys.space)?;
        let n_op = build_operator(OperatorKind::Number, &sys.space)?;
        let values = traj
            .iter()
            .map(|(_, rho)| Ok([expectation(&a_op, rho)?, expectation(&n_op, rho)?]))
            .collect::<Result<Vec<_>, masked_cavity::Error>>()?;
        header.extend(["master Re <a>", "master Im <a>", "master <n>"]);
        Some(values)
    } else {
        None
    };
    let times = &columns[0].times;
    if let Some(m) = &master {
        if m.len() != times.len() {
            return Err(HarnessError::Trip(format!(
                "master equation has {} samples, ensemble {}",
                m.len(),
                times.len()
            )));
        }
    }
    let mut worst_z: f64 = 0.0;
    let mut t = out.table("ensemble.csv", &header)?;
    for k in 0..times.len() {
        let mut row = vec![times[k]];
        for c in &columns {
            row.extend([c.mean[k], c.stderr[k]]);
        }
        if let Some(m) = &master {
            let [a, n] = m[k];
            row.extend([a.re, a.im, n.re]);
            for (c, exact) in columns.iter().zip([a.re, a.im, n.re]) {
                if c.stderr[k] > 0.0 {
                    worst_z = worst_z.max((c.mean[k] - exact).abs() / c.stderr[k]);
                }
            }
        }
        t.reals(&row)?;
    }
    t.finish()?;
    let mut summary = json!({
        "config": base,
        "seed": base.seed,
        "streams": [base.stream, base.stream + count as u64 - 1],
        "rng": RNG_NAME,
        "trajectories": count,
        "max_photon_tail": records.iter().map(|r| r.max_photon_tail).fold(0.0, f64::max),
    });
    let mut report = Report::default();
    if master.is_some() {
        summary["worst_standard_errors_from_master"] = json!(worst_z);
        report.convergence.insert("worst_standard_errors_from_master".into(), json!(worst_z));
    }
    out.json("ensemble.json", &summary)?;
    report.convergence.insert("trajectories".into(), json!(count));
    Ok(report)
}
