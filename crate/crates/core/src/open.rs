//! Driven, damped cavity coupled to an atom whose motion is restricted to
//! `{|0⟩, |k⟩}`: Hamiltonian and jump operator, Lindblad evolution, steady
//! states, and the dressed-branch transition element of the field.

use faer::linalg::solvers::Solve;
use faer::sparse::{SparseColMat, Triplet};
use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hilbert::{build_operator, DensityMatrix, Motion, Operator, OperatorKind, SpaceDescriptor, StateVector};
use crate::sparse::CsrMatrix;
use crate::C64;

const I: C64 = C64::new(0.0, 1.0);

/// One term `amplitude · |photons, e/g, J₃⟩` of an initial state.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InitialComponent {
    pub amplitude: C64,
    pub photons: usize,
    pub excited: bool,
    pub j3: i8,
}

/// Initial state as a superposition of restricted basis states; normalized
/// when it is materialized on a space.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct InitialState(pub Vec<InitialComponent>);

impl InitialState {
    pub fn basis(photons: usize, excited: bool, j3: i8) -> Self {
        InitialState(vec![InitialComponent {
            amplitude: C64::new(1.0, 0.0),
            photons,
            excited,
            j3,
        }])
    }

    /// Empty cavity, ground-state atom, in the given `σ̂₃Ĵ₃` sector: sector
    /// −1 is `|g, 0, J₃ = +1⟩`, sector +1 is `|g, 0, J₃ = −1⟩`.
    pub fn parity_eigenstate(sector: i8) -> Result<Self> {
        match sector {
            -1 => Ok(Self::basis(0, false, 1)),
            1 => Ok(Self::basis(0, false, -1)),
            _ => Err(Error::InvalidParameter(format!("parity sector must be ±1, got {sector}"))),
        }
    }

    /// `(|g, 0, −1⟩ + i|e, 0, −1⟩)/√2`, which straddles both parity sectors.
    pub fn mixed_parity() -> Self {
        let h = std::f64::consts::FRAC_1_SQRT_2;
        InitialState(vec![
            InitialComponent {
                amplitude: C64::new(h, 0.0),
                photons: 0,
                excited: false,
                j3: -1,
            },
            InitialComponent {
                amplitude: C64::new(0.0, h),
                photons: 0,
                excited: true,
                j3: -1,
            },
        ])
    }

    pub fn max_photons(&self) -> usize {
        self.0.iter().map(|c| c.photons).max().unwrap_or(0)
    }

    pub fn to_state(&self, space: &SpaceDescriptor) -> Result<StateVector> {
        let mut psi = StateVector::zeros(space);
        for c in &self.0 {
            let b = StateVector::restricted_state(space, c.photons, c.excited, c.j3)?;
            psi.add_scaled(c.amplitude, &b);
        }
        if psi.normalize() == 0.0 {
            return Err(Error::InvalidParameter("initial state has zero norm".into()));
        }
        Ok(psi)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OpenModelParams {
    pub kappa: f64,
    pub omega: f64,
    pub omega_r: f64,
    pub epsilon: f64,
    /// Photon cutoff: Fock states `0..=n_max`.
    pub n_max: usize,
    pub initial_state: InitialState,
}

impl OpenModelParams {
    pub fn validate(&self) -> Result<()> {
        let mut errs = Vec::new();
        if !(self.kappa > 0.0 && self.kappa.is_finite()) {
            errs.push(format!("κ must be positive, got {}", self.kappa));
        }
        for (name, v) in [("Ω", self.omega), ("ω_r", self.omega_r), ("ε", self.epsilon)] {
            if !(v >= 0.0 && v.is_finite()) {
                errs.push(format!("{name} must be finite and non-negative, got {v}"));
            }
        }
        if self.initial_state.0.is_empty() {
            errs.push("initial state is empty".into());
        }
        if self.n_max < 2 || self.n_max <= self.initial_state.max_photons() {
            errs.push(format!(
                "N_max = {} must be at least 2 and exceed the initial photon number",
                self.n_max
            ));
        }
        if errs.is_empty() {
            Ok(())
        } else {
            Err(Error::Validation(errs))
        }
    }

    pub fn epsilon_crit(&self) -> f64 {
        self.omega / 2.0
    }

    /// Largest physical rate, used for step-size checks.
    pub fn max_rate(&self) -> f64 {
        self.kappa.max(self.omega).max(self.epsilon)
    }
}

pub struct OpenSystem {
    pub space: SpaceDescriptor,
    pub h: Operator,
    pub jump: Operator,
}

/// `H = (ω_r/2)Ĵ₃ + (Ω/2)(Ĵ₊+Ĵ₋)(âσ̂₊ + â†σ̂₋) + ε(â + â†)` in the frame
/// rotating at the cavity frequency, and the loss channel `√(2κ) â`.
pub fn build_open_system(p: &OpenModelParams) -> Result<OpenSystem> {
    p.validate()?;
    let space = SpaceDescriptor::restricted(p.n_max);
    let op = |k| build_operator(k, &space);
    let a = op(OperatorKind::Annihilate)?;
    let ad = op(OperatorKind::Create)?;
    let exchange = a.mul(&op(OperatorKind::SigmaPlus)?)?.add(&ad.mul(&op(OperatorKind::SigmaMinus)?)?)?;
    let coupling = op(OperatorKind::J1)?.mul(&exchange)?;
    let h = op(OperatorKind::Kinetic { omega_r: p.omega_r })?
        .add(&coupling.scale(p.omega / 2.0))?
        .add(&a.add(&ad)?.scale(p.epsilon))?
        .with_hermitian_check();
    let jump = a.scale((2.0 * p.kappa).sqrt());
    Ok(OpenSystem { space, h, jump })
}

impl OpenSystem {
    /// `H − (i/2) L†L`.
    pub fn effective_hamiltonian(&self) -> CsrMatrix {
        let ll = self.jump.matrix.adjoint().matmul(&self.jump.matrix);
        self.h.matrix.sub(&ll.scale(C64::new(0.0, 0.5)))
    }

    /// `σ̂₃Ĵ₃` eigenvalue of every basis state.
    pub fn parity_labels(&self) -> Vec<i8> {
        parity_labels(&self.space)
    }

    pub fn sector_indices(&self, sector: i8) -> Vec<usize> {
        self.parity_labels()
            .iter()
            .enumerate()
            .filter(|(_, &s)| s == sector)
            .map(|(i, _)| i)
            .collect()
    }

    pub fn n_max(&self) -> usize {
        self.space.photon_cutoff().expect("restricted space has a photon factor")
    }
}

/// `σ̂₃Ĵ₃` eigenvalues of the basis of a restricted space.
pub fn parity_labels(space: &SpaceDescriptor) -> Vec<i8> {
    (0..space.dim())
        .map(|k| {
            let (i, m) = space.split(k);
            let (_, excited) = space.internal_labels(i).unwrap_or((0, false));
            let s3 = if excited { 1 } else { -1 };
            let j3 = if m == 1 { 1 } else { -1 };
            s3 * j3
        })
        .collect()
}

/// Populations `(sector +1, sector −1)` of a density matrix.
pub fn sector_populations(rho: &DensityMatrix) -> (f64, f64) {
    let labels = parity_labels(&rho.space);
    let mut out = (0.0, 0.0);
    for (k, &s) in labels.iter().enumerate() {
        let v = rho.matrix[(k, k)].re;
        if s > 0 {
            out.0 += v;
        } else {
            out.1 += v;
        }
    }
    out
}

/// Largest absolute matrix element of `ρ` coupling the two sectors.
pub fn sector_coherence(rho: &DensityMatrix) -> f64 {
    let labels = parity_labels(&rho.space);
    let mut worst: f64 = 0.0;
    for (i, &si) in labels.iter().enumerate() {
        for (j, &sj) in labels.iter().enumerate() {
            if si != sj {
                worst = worst.max(rho.matrix[(i, j)].norm());
            }
        }
    }
    worst
}

/// Population of the two highest Fock levels.
pub fn photon_tail(rho: &DensityMatrix) -> f64 {
    let Some(n_max) = rho.space.photon_cutoff() else {
        return 0.0;
    };
    let per_photon = rho.space.dim() / (n_max + 1);
    let start = (n_max - 1) * per_photon;
    (start..rho.space.dim()).map(|k| rho.matrix[(k, k)].re).sum()
}

fn check_tail(rho: &DensityMatrix) -> Result<()> {
    let tail = photon_tail(rho);
    if tail > 1e-6 {
        return Err(Error::PhotonTail {
            population: tail,
            n_max: rho.space.photon_cutoff().unwrap_or(0),
        });
    }
    Ok(())
}

/// Action of the Lindblad generator on Hermitian density matrices.
pub struct Liouvillian {
    heff: CsrMatrix,
    jump: CsrMatrix,
}

impl Liouvillian {
    pub fn new(sys: &OpenSystem) -> Self {
        Liouvillian {
            heff: sys.effective_hamiltonian(),
            jump: sys.jump.matrix.clone(),
        }
    }

    /// `−i(H_eff ρ − ρ H_eff†) + L ρ L†`, using `ρ = ρ†`.
    pub fn apply(&self, rho: &DMatrix<C64>) -> DMatrix<C64> {
        let x = self.heff.mul_dense(rho);
        let y = self.jump.mul_dense(rho);
        let mut out = self.jump.mul_dense(&y.adjoint());
        out += x.adjoint() * I - x * I;
        out
    }

    /// Upper bound on the generator norm: `2‖H_eff‖ + ‖L‖²`.
    pub fn norm_bound(&self) -> f64 {
        let hn = (self.heff.row_sum_norm() * self.heff.adjoint().row_sum_norm()).sqrt();
        let ln = (self.jump.row_sum_norm() * self.jump.adjoint().row_sum_norm()).sqrt();
        2.0 * hn + ln * ln
    }
}

/// Fixed-step RK4 integrator of the master equation, symmetrizing after
/// every step and checking trace, finiteness and the photon tail.
pub struct MasterIntegrator {
    liouvillian: Liouvillian,
    rho: DensityMatrix,
    dt: f64,
    origin: f64,
    time: f64,
    steps: u64,
}

impl MasterIntegrator {
    pub fn new(sys: &OpenSystem, rho0: DensityMatrix, dt: f64, max_rate: f64) -> Result<Self> {
        if rho0.space != sys.space {
            return Err(Error::Dimension(format!("ρ on {} but system on {}", rho0.space, sys.space)));
        }
        rho0.validate()?;
        if dt.is_nan() || dt <= 0.0 || dt * max_rate > 0.02 * (1.0 + 1e-12) {
            return Err(Error::InvalidParameter(format!(
                "dt = {dt} must be positive with dt·max(Ω, ε, κ) ≤ 0.02"
            )));
        }
        let liouvillian = Liouvillian::new(sys);
        let bound = liouvillian.norm_bound();
        if dt * bound > 2.5 {
            log::warn!("dt·‖L‖ = {:.2} exceeds the RK4 stability margin; expect blow-up", dt * bound);
        }
        Ok(MasterIntegrator {
            liouvillian,
            rho: rho0,
            dt,
            origin: 0.0,
            time: 0.0,
            steps: 0,
        })
    }

    pub fn time(&self) -> f64 {
        self.time
    }

    /// Sets the clock, for resuming from a checkpoint written at `time`.
    pub fn with_time(mut self, time: f64) -> Self {
        self.origin = time - self.steps as f64 * self.dt;
        self.time = time;
        self
    }

    pub fn state(&self) -> &DensityMatrix {
        &self.rho
    }

    pub fn into_state(self) -> DensityMatrix {
        self.rho
    }

    fn step(&mut self) {
        let dt = C64::new(self.dt, 0.0);
        let half = dt * 0.5;
        let r = &self.rho.matrix;
        let k1 = self.liouvillian.apply(r);
        let k2 = self.liouvillian.apply(&(r + &k1 * half));
        let k3 = self.liouvillian.apply(&(r + &k2 * half));
        let k4 = self.liouvillian.apply(&(r + &k3 * dt));
        self.rho.matrix += (k1 + (k2 + k3) * C64::new(2.0, 0.0) + k4) * (dt / 6.0);
        self.rho.symmetrize();
        self.steps += 1;
        self.time = self.origin + self.steps as f64 * self.dt;
    }

    fn check(&self) -> Result<()> {
        let tr = self.rho.trace();
        if !tr.re.is_finite() || !tr.im.is_finite() {
            return Err(Error::NonFinite(format!("density matrix at t = {}", self.time)));
        }
        let drift = (tr - C64::new(1.0, 0.0)).norm();
        if drift > 1e-7 {
            return Err(Error::TraceDrift(drift));
        }
        check_tail(&self.rho)
    }

    /// Advances by `steps` steps, checking invariants periodically and at
    /// the end.
    pub fn advance_steps(&mut self, steps: u64) -> Result<()> {
        for k in 1..=steps {
            self.step();
            if k % 64 == 0 || k == steps {
                self.check()?;
            }
        }
        Ok(())
    }

    /// Advances to the step nearest to time `t`.
    pub fn advance_to(&mut self, t: f64) -> Result<()> {
        let target = ((t - self.origin) / self.dt).round().max(0.0) as u64;
        if target > self.steps {
            self.advance_steps(target - self.steps)?;
        }
        Ok(())
    }
}

/// Integrates from `rho0` to `t_end` and returns `(t, ρ(t))` every
/// `record_every` steps, including the first and last.
pub fn evolve_master(
    sys: &OpenSystem,
    p: &OpenModelParams,
    rho0: &DensityMatrix,
    t_end: f64,
    dt: f64,
    record_every: usize,
) -> Result<Vec<(f64, DensityMatrix)>> {
    let mut integ = MasterIntegrator::new(sys, rho0.clone(), dt, p.max_rate())?;
    let steps = (t_end / dt).round() as u64;
    let every = record_every.max(1) as u64;
    let mut out = vec![(0.0, rho0.clone())];
    let mut done = 0;
    while done < steps {
        let chunk = every.min(steps - done);
        integ.advance_steps(chunk)?;
        done += chunk;
        out.push((integ.time(), integ.state().clone()));
    }
    Ok(out)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SteadyMethod {
    /// Null space for single-sector initial states, time evolution otherwise.
    Auto,
    NullSpace,
    TimeEvolution,
}

#[derive(Clone, Debug)]
pub struct SteadyOptions {
    pub method: SteadyMethod,
    /// Probe window Δ in units of 1/κ.
    pub probe_window: f64,
    /// Time-evolution limit in units of 1/κ.
    pub t_max: f64,
    /// Trace-distance target `‖ρ(t+Δ) − ρ(t)‖_tr`.
    pub tol: f64,
    /// Time-evolution step; defaults to the largest step allowed by the
    /// rate and RK4 stability limits.
    pub dt: Option<f64>,
    /// Restart with `⌈1.5 N_max⌉` while the photon tail is too heavy.
    pub auto_raise: bool,
    pub n_max_limit: usize,
}

impl Default for SteadyOptions {
    fn default() -> Self {
        SteadyOptions {
            method: SteadyMethod::Auto,
            probe_window: 10.0,
            t_max: 5000.0,
            tol: 1e-6,
            dt: None,
            auto_raise: true,
            n_max_limit: 600,
        }
    }
}

#[derive(Clone, Debug)]
pub struct SteadyState {
    pub rho: DensityMatrix,
    pub converged: bool,
    /// Achieved `‖ρ(t+Δ) − ρ(t)‖_tr` (time evolution) or its first-order
    /// estimate `Δ‖L ρ‖_tr` (null space).
    pub residual: f64,
    pub method: SteadyMethod,
    pub n_max: usize,
    /// Evolution time reached, in units of 1/κ; zero for the null space.
    pub t_reached: f64,
}

/// Long-time state reached from `p.initial_state`.
pub fn steady_state(p: &OpenModelParams, opts: &SteadyOptions) -> Result<SteadyState> {
    let mut p = p.clone();
    loop {
        match steady_state_at_cutoff(&p, opts) {
            Err(Error::PhotonTail { population, n_max }) if opts.auto_raise => {
                let next = (n_max as f64 * 1.5).ceil() as usize;
                if next > opts.n_max_limit {
                    return Err(Error::PhotonTail { population, n_max });
                }
                log::info!("photon tail {population:.2e} at N_max = {n_max}; restarting with N_max = {next}");
                p.n_max = next;
            }
            other => return other,
        }
    }
}

fn steady_state_at_cutoff(p: &OpenModelParams, opts: &SteadyOptions) -> Result<SteadyState> {
    let sys = build_open_system(p)?;
    let psi0 = p.initial_state.to_state(&sys.space)?;
    let labels = sys.parity_labels();
    let mut weight = [0.0; 2];
    for (a, &s) in psi0.amplitudes.iter().zip(&labels) {
        weight[(s < 0) as usize] += a.norm_sqr();
    }
    let single = weight.iter().filter(|&&w| w > 1e-14).count() == 1;
    let method = match opts.method {
        SteadyMethod::Auto if single => SteadyMethod::NullSpace,
        SteadyMethod::Auto => SteadyMethod::TimeEvolution,
        m => m,
    };
    match method {
        SteadyMethod::NullSpace => {
            if !single {
                return Err(Error::InvalidParameter(
                    "null-space steady state needs a single-sector initial state".into(),
                ));
            }
            let sector = if weight[0] > 0.0 { 1 } else { -1 };
            let rho = sector_null_space(&sys, sector)?;
            check_tail(&rho)?;
            let lrho = Liouvillian::new(&sys).apply(&rho.matrix);
            let residual = opts.probe_window / p.kappa * hermitian_trace_norm(lrho);
            Ok(SteadyState {
                rho,
                converged: residual < opts.tol,
                residual,
                method,
                n_max: p.n_max,
                t_reached: 0.0,
            })
        }
        _ => {
            let liou = Liouvillian::new(&sys);
            let dt = opts
                .dt
                .unwrap_or_else(|| (0.02 / p.max_rate()).min(2.0 / liou.norm_bound()));
            let rho0 = DensityMatrix::from_pure(&psi0);
            let mut integ = MasterIntegrator::new(&sys, rho0, dt, p.max_rate())?;
            let window = opts.probe_window / p.kappa;
            let t_max = opts.t_max / p.kappa;
            let mut previous = integ.state().clone();
            let mut residual = f64::INFINITY;
            while integ.time() < t_max - 0.5 * dt {
                let next = (integ.time() + window).min(t_max);
                integ.advance_to(next)?;
                residual = integ.state().trace_distance_raw(&previous);
                log::debug!("t = {:.1}: probe residual {residual:.3e}", integ.time());
                if residual < opts.tol {
                    break;
                }
                previous = integ.state().clone();
            }
            let t_reached = integ.time() * p.kappa;
            Ok(SteadyState {
                rho: integ.into_state(),
                converged: residual < opts.tol,
                residual,
                method: SteadyMethod::TimeEvolution,
                n_max: p.n_max,
                t_reached,
            })
        }
    }
}

fn hermitian_trace_norm(m: DMatrix<C64>) -> f64 {
    let h = (&m + m.adjoint()) * C64::new(0.5, 0.0);
    nalgebra::SymmetricEigen::new(h).eigenvalues.iter().map(|l| l.abs()).sum()
}

/// Unit-trace null vector of the generator restricted to the block of
/// operators supported on one parity sector, embedded in the full space.
fn sector_null_space(sys: &OpenSystem, sector: i8) -> Result<DensityMatrix> {
    let idx = sys.sector_indices(sector);
    let d = idx.len();
    let heff = sys.effective_hamiltonian().restrict(&idx);
    let jump = sys.jump.matrix.restrict(&idx);
    let hn = heff.nnz();
    let jn = jump.nnz();
    let mut trips: Vec<Triplet<usize, usize, C64>> = Vec::with_capacity(2 * hn * d + jn * jn + d);
    // Row-major vectorization: vec(AρB) = (A ⊗ Bᵀ) vec(ρ).
    for (i, i2, h) in heff.triplets() {
        for j in 0..d {
            trips.push(Triplet::new(i * d + j, i2 * d + j, -I * h));
        }
    }
    for (j, j2, h) in heff.triplets() {
        for i in 0..d {
            trips.push(Triplet::new(i * d + j, i * d + j2, I * h.conj()));
        }
    }
    for (i, i2, a) in jump.triplets() {
        for (j, j2, b) in jump.triplets() {
            trips.push(Triplet::new(i * d + j, i2 * d + j2, a * b.conj()));
        }
    }
    // The diagonal equations are dependent (the generator is trace
    // preserving); the one for ρ₀₀ is replaced by Tr ρ = 1.
    trips.retain(|t| t.row != 0);
    trips.extend((0..d).map(|k| Triplet::new(0, k * d + k, C64::new(1.0, 0.0))));
    let n = d * d;
    let mat = SparseColMat::<usize, C64>::try_new_from_triplets(n, n, &trips)
        .map_err(|e| Error::Dimension(format!("Liouvillian assembly: {e:?}")))?;
    let lu = mat.sp_lu().map_err(|e| {
        log::error!("sparse LU failed: {e:?}");
        Error::NoConvergence {
            solver: "sparse LU",
            residual: f64::NAN,
        }
    })?;
    let mut rhs = faer::Mat::<C64>::zeros(n, 1);
    rhs[(0, 0)] = C64::new(1.0, 0.0);
    lu.solve_in_place(&mut rhs);
    let dim = sys.space.dim();
    let mut full = DMatrix::zeros(dim, dim);
    for (a, &ia) in idx.iter().enumerate() {
        for (b, &ib) in idx.iter().enumerate() {
            let v = rhs[(a * d + b, 0)];
            if !v.re.is_finite() || !v.im.is_finite() {
                return Err(Error::NonFinite("null-space solution".into()));
            }
            full[(ia, ib)] = v;
        }
    }
    let mut rho = DensityMatrix::new(full, sys.space.clone())?;
    rho.symmetrize();
    let tr = rho.trace();
    rho.matrix /= tr;
    Ok(rho)
}

/// `Σ_{n′} ⟨+, n′, J₁| â |−, n, J₁⟩` with dressed states
/// `|±, n⟩ = (|g, n⟩ ± |e, n−1⟩)/√2` and the `Ĵ₁ = +1` motional state.
/// Components outside the Fock range (`|e, −1⟩`) are dropped.
pub fn branch_transition_element(n: usize, space: &SpaceDescriptor) -> Result<f64> {
    if n == 0 {
        return Err(Error::InvalidParameter("branch element needs n ≥ 1".into()));
    }
    let Some(cutoff) = space.photon_cutoff() else {
        return Err(Error::Incompatible {
            kind: "branch transition element".into(),
            space: space.to_string(),
        });
    };
    if space.motion != Motion::Restricted || !space.has_atom() || cutoff < n {
        return Err(Error::InvalidParameter(format!(
            "branch element for n = {n} needs a restricted space with N_max ≥ n, got {space}"
        )));
    }
    let dressed = |m: usize, sign: f64| -> Result<StateVector> {
        let mut psi = StateVector::zeros(space);
        for j3 in [-1, 1] {
            psi.add_scaled(C64::new(0.5, 0.0), &StateVector::restricted_state(space, m, false, j3)?);
            if m >= 1 {
                psi.add_scaled(C64::new(0.5 * sign, 0.0), &StateVector::restricted_state(space, m - 1, true, j3)?);
            }
        }
        Ok(psi)
    };
    let a = build_operator(OperatorKind::Annihilate, space)?;
    let lowered = a.apply(&dressed(n, -1.0)?)?;
    let mut total = C64::new(0.0, 0.0);
    for m in 0..=cutoff {
        total += dressed(m, 1.0)?.inner(&lowered);
    }
    if total.im.abs() > 1e-12 {
        return Err(Error::NonFinite(format!("complex branch element {total}")));
    }
    Ok(total.re)
}
