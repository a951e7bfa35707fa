//! Semiclassical equations for the field amplitude, atomic polarization and
//! inversion, and the motional two-state Bloch vector; their fixed points and
//! linear stability.

use log::{info, warn};
use nalgebra::{DMatrix, SMatrix};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::C64;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MeanFieldParams {
    pub kappa: f64,
    pub omega: f64,
    pub omega_r: f64,
    pub epsilon: f64,
}

impl MeanFieldParams {
    pub fn new(kappa: f64, omega: f64, omega_r: f64, epsilon: f64) -> Result<Self> {
        let p = MeanFieldParams {
            kappa,
            omega,
            omega_r,
            epsilon,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        let mut errs = Vec::new();
        if !(self.kappa > 0.0 && self.kappa.is_finite()) {
            errs.push(format!("κ must be positive, got {}", self.kappa));
        }
        if !(self.omega >= 0.0 && self.omega.is_finite()) {
            errs.push(format!("Ω must be non-negative, got {}", self.omega));
        }
        if !(self.omega_r >= 0.0 && self.omega_r.is_finite()) {
            errs.push(format!("ω_r must be non-negative, got {}", self.omega_r));
        }
        if !(self.epsilon >= 0.0 && self.epsilon.is_finite()) {
            errs.push(format!("ε must be non-negative, got {}", self.epsilon));
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
}

/// `α = ⟨a⟩`, `β = 2⟨σ₋⟩`, `ζ = ⟨σ₃⟩`, `X = ⟨J₊+J₋⟩`, `Y = i⟨J₊−J₋⟩`,
/// `Z = ⟨J₃⟩`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MeanFieldState {
    pub alpha: C64,
    pub beta: C64,
    pub zeta: f64,
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl MeanFieldState {
    pub fn to_array(&self) -> [f64; 8] {
        [
            self.alpha.re,
            self.alpha.im,
            self.beta.re,
            self.beta.im,
            self.zeta,
            self.x,
            self.y,
            self.z,
        ]
    }

    pub fn from_array(a: &[f64; 8]) -> Self {
        MeanFieldState {
            alpha: C64::new(a[0], a[1]),
            beta: C64::new(a[2], a[3]),
            zeta: a[4],
            x: a[5],
            y: a[6],
            z: a[7],
        }
    }

    /// `|β|² + ζ²`.
    pub fn internal_length(&self) -> f64 {
        self.beta.norm_sqr() + self.zeta * self.zeta
    }

    /// `X² + Y² + Z²`.
    pub fn motional_length(&self) -> f64 {
        self.x * self.x + self.y * self.y + self.z * self.z
    }

    pub fn is_finite(&self) -> bool {
        self.to_array().iter().all(|v| v.is_finite())
    }
}

/// Time derivative of the state in the frame rotating at the cavity
/// frequency.
pub fn mf_rhs(s: &MeanFieldState, p: &MeanFieldParams) -> MeanFieldState {
    let i = C64::new(0.0, 1.0);
    let alpha = -p.kappa * s.alpha - i * (p.omega / 4.0) * s.x * s.beta - i * p.epsilon;
    let beta = i * p.omega * s.x * s.alpha * s.zeta;
    let cross = s.alpha * s.beta.conj();
    // -(i/2) Ω X (αβ* − α*β) = Ω X Im(αβ*)
    let zeta = p.omega * s.x * cross.im;
    let c = 2.0 * cross.re;
    MeanFieldState {
        alpha,
        beta,
        zeta,
        x: p.omega_r * s.y,
        y: -p.omega_r * s.x + 0.5 * p.omega * s.z * c,
        z: -0.5 * p.omega * s.y * c,
    }
}

pub fn residual(s: &MeanFieldState, p: &MeanFieldParams) -> f64 {
    mf_rhs(s, p).to_array().iter().map(|v| v * v).sum::<f64>().sqrt()
}

pub type Jacobian = SMatrix<f64, 8, 8>;

/// Analytic Jacobian of [`mf_rhs`] in the ordering of
/// [`MeanFieldState::to_array`].
pub fn jacobian(s: &MeanFieldState, p: &MeanFieldParams) -> Jacobian {
    let [ar, ai, br, bi, zeta, x, y, z] = s.to_array();
    let (k, om, wr) = (p.kappa, p.omega, p.omega_r);
    let d = ar * br + ai * bi;
    let mut j = Jacobian::zeros();
    j[(0, 0)] = -k;
    j[(0, 3)] = om * x / 4.0;
    j[(0, 5)] = om * bi / 4.0;
    j[(1, 1)] = -k;
    j[(1, 2)] = -om * x / 4.0;
    j[(1, 5)] = -om * br / 4.0;
    j[(2, 1)] = -om * x * zeta;
    j[(2, 4)] = -om * x * ai;
    j[(2, 5)] = -om * zeta * ai;
    j[(3, 0)] = om * x * zeta;
    j[(3, 4)] = om * x * ar;
    j[(3, 5)] = om * zeta * ar;
    j[(4, 0)] = -om * x * bi;
    j[(4, 1)] = om * x * br;
    j[(4, 2)] = om * x * ai;
    j[(4, 3)] = -om * x * ar;
    j[(4, 5)] = om * (ai * br - ar * bi);
    j[(5, 6)] = wr;
    j[(6, 0)] = om * z * br;
    j[(6, 1)] = om * z * bi;
    j[(6, 2)] = om * z * ar;
    j[(6, 3)] = om * z * ai;
    j[(6, 5)] = -wr;
    j[(6, 7)] = om * d;
    j[(7, 0)] = -om * y * br;
    j[(7, 1)] = -om * y * bi;
    j[(7, 2)] = -om * y * ar;
    j[(7, 3)] = -om * y * ai;
    j[(7, 6)] = -om * d;
    j
}

/// Central-difference Jacobian with step `h`.
pub fn jacobian_fd(s: &MeanFieldState, p: &MeanFieldParams, h: f64) -> Jacobian {
    let base = s.to_array();
    let mut j = Jacobian::zeros();
    for col in 0..8 {
        let mut plus = base;
        let mut minus = base;
        plus[col] += h;
        minus[col] -= h;
        let fp = mf_rhs(&MeanFieldState::from_array(&plus), p).to_array();
        let fm = mf_rhs(&MeanFieldState::from_array(&minus), p).to_array();
        for row in 0..8 {
            j[(row, col)] = (fp[row] - fm[row]) / (2.0 * h);
        }
    }
    j
}

/// [`mf_rhs`] on the flat real layout, used in the integrator hot loop.
#[inline(always)]
fn rhs_flat(y: &[f64; 8], p: &MeanFieldParams) -> [f64; 8] {
    let [ar, ai, br, bi, zeta, x, y_, z] = *y;
    let q = 0.25 * p.omega * x;
    let ox = p.omega * x;
    // αβ* = (ar br + ai bi) + i(ai br − ar bi)
    let cre = ar * br + ai * bi;
    let cim = ai * br - ar * bi;
    [
        -p.kappa * ar + q * bi,
        -p.kappa * ai - q * br - p.epsilon,
        -ox * zeta * ai,
        ox * zeta * ar,
        ox * cim,
        p.omega_r * y_,
        -p.omega_r * x + p.omega * z * cre,
        -p.omega * y_ * cre,
    ]
}

#[inline(always)]
fn rk4_flat(y0: &[f64; 8], p: &MeanFieldParams, dt: f64) -> [f64; 8] {
    let stage = |k: &[f64; 8], h: f64| {
        let mut y = *y0;
        for i in 0..8 {
            y[i] += h * k[i];
        }
        y
    };
    let k1 = rhs_flat(y0, p);
    let k2 = rhs_flat(&stage(&k1, 0.5 * dt), p);
    let k3 = rhs_flat(&stage(&k2, 0.5 * dt), p);
    let k4 = rhs_flat(&stage(&k3, dt), p);
    let mut y = *y0;
    let h = dt / 6.0;
    for i in 0..8 {
        y[i] += h * (k1[i] + 2.0 * (k2[i] + k3[i]) + k4[i]);
    }
    y
}

/// Fixed-step RK4 integration. Returns `(t, state)` every `record_every`
/// steps, including the initial and final states.
pub fn mf_integrate(
    s0: &MeanFieldState,
    p: &MeanFieldParams,
    t_end: f64,
    dt: f64,
    record_every: usize,
) -> Result<Vec<(f64, MeanFieldState)>> {
    let mut out = mf_integrate_many(std::slice::from_ref(s0), p, t_end, dt, record_every)?;
    Ok(out.pop().expect("one trajectory"))
}

/// [`mf_integrate`] for several initial states advanced in lockstep. The
/// independent updates overlap in the CPU pipeline, which makes a batch
/// markedly cheaper than the same trajectories run one after another.
pub fn mf_integrate_many(
    s0: &[MeanFieldState],
    p: &MeanFieldParams,
    t_end: f64,
    dt: f64,
    record_every: usize,
) -> Result<Vec<Vec<(f64, MeanFieldState)>>> {
    p.validate()?;
    let rate = p.kappa.max(p.omega).max(p.epsilon);
    if dt.is_nan() || dt <= 0.0 || dt > 1e-2 / rate * (1.0 + 1e-12) {
        return Err(Error::InvalidParameter(format!(
            "dt = {dt} must be positive and ≤ 1e-2 / max(κ, Ω, ε) = {}",
            1e-2 / rate
        )));
    }
    let steps = (t_end / dt).round() as usize;
    let every = record_every.max(1);
    let mut ys: Vec<[f64; 8]> = s0.iter().map(|s| s.to_array()).collect();
    let mut out: Vec<Vec<(f64, MeanFieldState)>> = s0.iter().map(|s| vec![(0.0, *s)]).collect();
    for k in 1..=steps {
        for y in ys.iter_mut() {
            *y = rk4_flat(y, p, dt);
        }
        let record = k % every == 0 || k == steps;
        if record || k % 1024 == 0 {
            for (y, traj) in ys.iter().zip(out.iter_mut()) {
                let s = MeanFieldState::from_array(y);
                if !s.is_finite() {
                    return Err(Error::NonFinite(format!("mean-field state at t = {}", k as f64 * dt)));
                }
                if record {
                    traj.push((k as f64 * dt, s));
                }
            }
        }
    }
    Ok(out)
}

/// Roots φ ∈ [0, 2π) of
/// `cos⁴φ − (ω_r κ/(2ε²) + ε_crit²/ε² + 1) cos²φ + ε_crit²/ε² = 0`.
pub fn transcendental_roots(p: &MeanFieldParams) -> Vec<f64> {
    if p.epsilon <= 0.0 {
        return Vec::new();
    }
    let e2 = p.epsilon * p.epsilon;
    let r = p.epsilon_crit().powi(2) / e2;
    let b = p.omega_r * p.kappa / (2.0 * e2) + r + 1.0;
    phases_from_quadratic(b, r)
}

/// Roots of `u² − b u + c = 0` with `u = cos²φ ∈ [0, 1]`, mapped to all
/// distinct phases in `[0, 2π)`.
fn phases_from_quadratic(b: f64, c: f64) -> Vec<f64> {
    let disc = b * b - 4.0 * c;
    if disc < 0.0 {
        return Vec::new();
    }
    let sq = disc.sqrt();
    // Numerically stable pair.
    let q = 0.5 * (b + sq);
    let mut us = vec![q];
    if q != 0.0 {
        us.push(c / q);
    }
    let mut phases: Vec<f64> = Vec::new();
    for u in us {
        if !(0.0..=1.0).contains(&u) {
            continue;
        }
        let cs = u.sqrt();
        for c0 in [cs, -cs] {
            let a = c0.clamp(-1.0, 1.0).acos();
            for phi in [a, 2.0 * std::f64::consts::PI - a] {
                let phi = phi.rem_euclid(2.0 * std::f64::consts::PI);
                if !phases.iter().any(|q| (q - phi).abs() < 1e-12) {
                    phases.push(phi);
                }
            }
        }
    }
    phases.sort_by(f64::total_cmp);
    phases
}

/// Phases solving the fixed-point conditions of [`mf_rhs`] with `ζ = 0`,
/// `|β| = 1`, `Y = 0`. There `X = −2ε cos φ / ε_crit`,
/// `Z = −ω_r κ X / (Ω ε sin φ)`, and `X² + Z² = 1` gives
/// `u² − (1 + ω_r²κ²/(4ε_crit²ε²) + ε_crit²/(4ε²)) u + ε_crit²/(4ε²) = 0`.
pub fn consistent_roots(p: &MeanFieldParams) -> Vec<f64> {
    if p.epsilon <= 0.0 || p.omega <= 0.0 {
        return Vec::new();
    }
    let e2 = p.epsilon * p.epsilon;
    let ec2 = p.epsilon_crit().powi(2);
    let c = ec2 / (4.0 * e2);
    let b = 1.0 + (p.omega_r * p.kappa).powi(2) / (4.0 * ec2 * e2) + c;
    phases_from_quadratic(b, c)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stability {
    Stable,
    Unstable,
    Marginal,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum BranchKind {
    Trivial,
    Nontrivial { root_index: usize, phi: f64 },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SteadyBranch {
    pub kind: BranchKind,
    pub state: MeanFieldState,
    pub residual: f64,
    pub stability: Stability,
    /// Eigenvalue with the largest real part.
    pub leading_eigenvalue: C64,
}

const RESIDUAL_LIMIT: f64 = 1e-9;

/// Quadratures of the field in steady state for unit polarization `e^{iφ}`.
fn steady_alpha(p: &MeanFieldParams, x: f64, phi: f64) -> C64 {
    let ec = p.epsilon_crit();
    C64::new(
        0.5 * ec / p.kappa * x * phi.sin(),
        -0.5 * ec / p.kappa * x * phi.cos() - p.epsilon / p.kappa,
    )
}

fn physical(s: &MeanFieldState) -> bool {
    s.x.abs() <= 1.0 + 1e-12 && s.z.abs() <= 1.0 + 1e-12
}

/// All fixed points passing the residual and Bloch-vector filters, with
/// their stability.
pub fn mf_steady_states(p: &MeanFieldParams) -> Result<Vec<SteadyBranch>> {
    p.validate()?;
    if p.omega_r == 0.0 {
        return Err(Error::InvalidParameter(
            "steady-state analysis requires ω_r > 0".into(),
        ));
    }
    let mut candidates: Vec<(BranchKind, MeanFieldState)> = Vec::new();
    let trivial_alpha = C64::new(0.0, -p.epsilon / p.kappa);
    for sign in [1.0, -1.0] {
        candidates.push((
            BranchKind::Trivial,
            MeanFieldState {
                alpha: trivial_alpha,
                beta: C64::new(0.0, 0.0),
                zeta: sign,
                x: 0.0,
                y: 0.0,
                z: sign,
            },
        ));
    }
    let mut root_index = 0;
    // Localization X = (2ε/ε_crit) cos φ on the roots of the printed quartic.
    for phi in transcendental_roots(p) {
        let x = 2.0 * p.epsilon / p.epsilon_crit() * phi.cos();
        if x.abs() > 1.0 {
            info!("discarding candidate φ = {phi:.6}: |X| = {:.4} > 1", x.abs());
            continue;
        }
        let zmag = (1.0 - x * x).max(0.0).sqrt();
        for z in [zmag, -zmag] {
            candidates.push((
                BranchKind::Nontrivial { root_index, phi },
                MeanFieldState {
                    alpha: steady_alpha(p, x, phi),
                    beta: C64::from_polar(1.0, phi),
                    zeta: 0.0,
                    x,
                    y: 0.0,
                    z,
                },
            ));
        }
        root_index += 1;
    }
    for phi in consistent_roots(p) {
        let s = phi.sin();
        if s.abs() < 1e-14 {
            continue;
        }
        let x = -2.0 * p.epsilon / p.epsilon_crit() * phi.cos();
        let z = -p.omega_r * p.kappa * x / (p.omega * p.epsilon * s);
        candidates.push((
            BranchKind::Nontrivial { root_index, phi },
            MeanFieldState {
                alpha: steady_alpha(p, x, phi),
                beta: C64::from_polar(1.0, phi),
                zeta: 0.0,
                x,
                y: 0.0,
                z,
            },
        ));
        root_index += 1;
    }
    let mut out = Vec::new();
    for (kind, state) in candidates {
        let r = residual(&state, p);
        if r.is_nan() || r >= RESIDUAL_LIMIT {
            info!("discarding {kind:?}: residual {r:.3e}");
            continue;
        }
        if !physical(&state) {
            info!("discarding {kind:?}: outside the Bloch sphere (X = {}, Z = {})", state.x, state.z);
            continue;
        }
        let (stability, leading) = mf_stability(&state, p);
        out.push(SteadyBranch {
            kind,
            state,
            residual: r,
            stability,
            leading_eigenvalue: leading,
        });
    }
    Ok(out)
}

fn eigenvalues(j: &Jacobian) -> Vec<C64> {
    let m = DMatrix::from_iterator(8, 8, j.iter().copied());
    m.complex_eigenvalues().iter().copied().collect()
}

/// Linear stability of a fixed point.
///
/// Modes with `|Re λ| ≤ τ` are neutral, where `τ = 10⁻⁹ max(1, max|λ|)` is a
/// roundoff-level threshold; this covers the zero modes along the two
/// conserved lengths and undamped motional precession. The point is unstable
/// if any `Re λ > τ`, stable otherwise. If the spectra of `J` and `Jᵀ`
/// disagree by more than `τ` the eigenproblem is treated as ill-conditioned
/// and the result is marginal.
pub fn mf_stability(s: &MeanFieldState, p: &MeanFieldParams) -> (Stability, C64) {
    let j = jacobian(s, p);
    let ev = eigenvalues(&j);
    let evt = eigenvalues(&j.transpose());
    let scale = ev.iter().map(|l| l.norm()).fold(1.0, f64::max);
    let tau = 1e-9 * scale;
    let leading = *ev
        .iter()
        .max_by(|a, b| a.re.total_cmp(&b.re))
        .expect("8 eigenvalues");
    let lead_t = evt.iter().map(|l| l.re).fold(f64::NEG_INFINITY, f64::max);
    if ev.iter().any(|l| !l.re.is_finite()) || (lead_t - leading.re).abs() > tau {
        warn!("ill-conditioned stability problem: leading Re λ {} vs {}", leading.re, lead_t);
        return (Stability::Marginal, leading);
    }
    if leading.re > tau {
        (Stability::Unstable, leading)
    } else {
        (Stability::Stable, leading)
    }
}

/// Number of eigenvalues with `|λ| ≤ τ` whose eigenvectors have a component
/// along the gradient of a conserved length.
pub fn conserved_zero_modes(s: &MeanFieldState, p: &MeanFieldParams) -> usize {
    let j = jacobian(s, p);
    let m = DMatrix::from_iterator(8, 8, j.iter().copied());
    let ev = eigenvalues(&j);
    let scale = ev.iter().map(|l| l.norm()).fold(1.0, f64::max);
    let tau = 1e-9 * scale;
    let a = s.to_array();
    let g1 = [0.0, 0.0, 2.0 * a[2], 2.0 * a[3], 2.0 * a[4], 0.0, 0.0, 0.0];
    let g2 = [0.0, 0.0, 0.0, 0.0, 0.0, 2.0 * a[5], 2.0 * a[6], 2.0 * a[7]];
    // Null space of J, then test overlap of its basis with the gradients.
    let svd = m.svd(true, true);
    let Some(v_t) = svd.v_t else { return 0 };
    let mut count = 0;
    for (k, sv) in svd.singular_values.iter().enumerate() {
        if *sv > tau {
            continue;
        }
        let v = v_t.row(k);
        let o1: f64 = v.iter().zip(&g1).map(|(x, g)| x * g).sum();
        let o2: f64 = v.iter().zip(&g2).map(|(x, g)| x * g).sum();
        if o1.abs() > 1e-8 || o2.abs() > 1e-8 {
            count += 1;
        }
    }
    count
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fig3(eps_over_crit: f64) -> MeanFieldParams {
        MeanFieldParams::new(1.0, 20.0, 0.25, eps_over_crit * 10.0).unwrap()
    }

    fn random_state(seed: u64) -> MeanFieldState {
        let mut x = seed.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
        let mut next = || {
            x = x.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            (x >> 11) as f64 / (1u64 << 53) as f64 * 2.0 - 1.0
        };
        MeanFieldState {
            alpha: C64::new(next(), next()),
            beta: C64::new(next(), next()),
            zeta: next(),
            x: next(),
            y: next(),
            z: next(),
        }
    }

    #[test]
    fn flat_rhs_matches_complex_form() {
        let p = fig3(0.8);
        for seed in 0..20 {
            let s = random_state(seed);
            let a = mf_rhs(&s, &p).to_array();
            let b = rhs_flat(&s.to_array(), &p);
            for (u, v) in a.iter().zip(&b) {
                assert!((u - v).abs() < 1e-13, "{a:?} vs {b:?}");
            }
        }
    }

    #[test]
    fn trivial_fixed_point() {
        let p = fig3(0.7);
        let s = MeanFieldState {
            alpha: C64::new(0.0, -p.epsilon / p.kappa),
            beta: C64::new(0.3, -0.2),
            zeta: 0.5,
            x: 0.0,
            y: 0.0,
            z: 1.0,
        };
        let d = mf_rhs(&s, &p);
        assert_eq!(d.alpha, C64::new(0.0, 0.0));
        assert_eq!(d.beta, C64::new(0.0, 0.0));
    }

    #[test]
    fn conserved_lengths_have_zero_derivative() {
        let p = fig3(1.1);
        for seed in 0..20 {
            let s = random_state(seed);
            let d = mf_rhs(&s, &p);
            let dl1 = 2.0 * (s.beta.re * d.beta.re + s.beta.im * d.beta.im) + 2.0 * s.zeta * d.zeta;
            let dl2 = 2.0 * (s.x * d.x + s.y * d.y + s.z * d.z);
            assert!(dl1.abs() < 1e-12 && dl2.abs() < 1e-12);
        }
    }

    #[test]
    fn analytic_jacobian_matches_differences() {
        let p = fig3(0.9);
        for seed in 0..5 {
            let s = random_state(seed);
            let a = jacobian(&s, &p);
            let f = jacobian_fd(&s, &p, 1e-6);
            assert!((a - f).amax() < 1e-6, "{}", (a - f).amax());
        }
    }

    #[test]
    fn damped_empty_cavity() {
        let p = MeanFieldParams::new(1.0, 20.0, 0.25, 0.0).unwrap();
        let s0 = MeanFieldState {
            alpha: C64::new(1.0, 0.0),
            beta: C64::new(0.0, 0.0),
            zeta: -1.0,
            x: 0.0,
            y: 0.0,
            z: 1.0,
        };
        let traj = mf_integrate(&s0, &p, 2.0, 5e-4, 1000).unwrap();
        let (t, s) = traj.last().unwrap();
        assert!((s.alpha.re - (-t).exp()).abs() < 1e-12);
        let trivial = MeanFieldState { alpha: C64::new(0.0, 0.0), ..s0 };
        let ev = eigenvalues(&jacobian(&trivial, &p));
        assert_eq!(ev.iter().filter(|l| (**l - C64::new(-1.0, 0.0)).norm() < 1e-12).count(), 2);
    }

    #[test]
    fn step_halving_converges() {
        let p = fig3(0.8);
        let s0 = MeanFieldState { zeta: 0.6, beta: C64::new(0.8, 0.0), ..random_state(3) };
        let a = mf_integrate(&s0, &p, 1.0, 4e-4, usize::MAX).unwrap();
        let b = mf_integrate(&s0, &p, 1.0, 2e-4, usize::MAX).unwrap();
        let (sa, sb) = (a.last().unwrap().1.to_array(), b.last().unwrap().1.to_array());
        let diff = sa.iter().zip(&sb).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
        assert!(diff < 1e-8, "{diff}");
    }

    #[test]
    fn printed_quartic_at_zero_recoil() {
        let p = MeanFieldParams::new(1.0, 20.0, 0.0, 15.0).unwrap();
        let roots = transcendental_roots(&p);
        let target = p.epsilon_crit() / p.epsilon;
        assert!(roots.iter().any(|phi| (phi.cos() - target).abs() < 1e-10));
        assert!(roots.iter().any(|phi| (phi.cos() + target).abs() < 1e-10));
        for phi in roots {
            let u = phi.cos().powi(2);
            let r = target * target;
            let q = u * u - (r + 1.0) * u + r;
            assert!(q.abs() < 1e-10);
        }
    }

    #[test]
    fn small_drive_has_no_printed_roots() {
        // One u-root exceeds 1 and is dropped; the other lies just below 1.
        let roots = transcendental_roots(&fig3(0.1));
        let mut us: Vec<f64> = roots.iter().map(|phi| phi.cos().powi(2)).collect();
        us.dedup_by(|a, b| (*a - *b).abs() < 1e-12);
        assert_eq!(roots.len(), 4);
        assert!(us.iter().all(|u| (u - us[0]).abs() < 1e-12 && *u < 1.0));
    }

    #[test]
    fn steady_branches_pass_residual_filter() {
        for f in [0.2, 0.55, 1.0, 1.5] {
            let branches = mf_steady_states(&fig3(f)).unwrap();
            assert!(branches.iter().filter(|b| b.kind == BranchKind::Trivial).count() == 2);
            for b in &branches {
                assert!(b.residual < 1e-9);
                if b.kind == BranchKind::Trivial {
                    assert_eq!(b.stability, Stability::Stable);
                } else {
                    assert_eq!(b.stability, Stability::Unstable);
                }
            }
        }
    }

    #[test]
    fn zero_recoil_rejected_for_steady_states() {
        assert!(mf_steady_states(&MeanFieldParams::new(1.0, 20.0, 0.0, 5.0).unwrap()).is_err());
    }
}
