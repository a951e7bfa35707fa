//! Closed-system dynamics on a single excitation manifold: Hamiltonians for
//! the 1D/2D/3D standing-wave couplings, unitary evolution with a leakage
//! monitor, momentum and position distributions, and masked ground states.

use std::f64::consts::PI;

use log::warn;
use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hilbert::{
    bipartite_matrix, build_operator, Factor, Internal, Motion, Operator, OperatorKind,
    SpaceDescriptor, StateVector,
};
use crate::lanczos::{lowest_eigenpair, LanczosOptions};
use crate::propagate::TaylorPropagator;
use crate::sparse::CsrMatrix;
use crate::C64;

const ZERO: C64 = C64::new(0.0, 0.0);

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClosedModelParams {
    pub omega: f64,
    pub omega_r: f64,
    pub dims: usize,
}

impl ClosedModelParams {
    pub fn new(omega: f64, omega_r: f64, dims: usize) -> Result<Self> {
        let p = ClosedModelParams {
            omega,
            omega_r,
            dims,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        let mut errs = Vec::new();
        if !(self.omega > 0.0 && self.omega.is_finite()) {
            errs.push(format!("Ω must be positive, got {}", self.omega));
        }
        if !(self.omega_r >= 0.0 && self.omega_r.is_finite()) {
            errs.push(format!("ω_r must be non-negative, got {}", self.omega_r));
        }
        if !(1..=3).contains(&self.dims) {
            errs.push(format!("dims must be 1, 2 or 3, got {}", self.dims));
        }
        if errs.is_empty() {
            Ok(())
        } else {
            Err(Error::Validation(errs))
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum ManifoldSpec {
    /// The unpaired `|g, 0⟩`.
    Ground,
    /// The doublet `{|e, n-1⟩, |g, n⟩}`.
    Excitations(usize),
}

impl ManifoldSpec {
    pub fn excitations(self) -> usize {
        match self {
            ManifoldSpec::Ground => 0,
            ManifoldSpec::Excitations(n) => n,
        }
    }

    pub fn space(self, l_max: &[usize]) -> Result<SpaceDescriptor> {
        if let ManifoldSpec::Excitations(0) = self {
            return Err(Error::InvalidParameter(
                "excitation manifold needs n ≥ 1; use Ground for |g,0⟩".into(),
            ));
        }
        SpaceDescriptor::manifold(self.excitations(), l_max)
    }
}

/// Position profile of the coupling on the motion factor:
/// 1D `cos x`, 2D `cos x₁ sin x₂`, 3D `sin x₁ sin x₂ cos x₃`.
pub fn coupling_profile(dims: usize, motion: &SpaceDescriptor) -> Result<CsrMatrix> {
    let trig = |axis: usize, cosine: bool| -> Result<CsrMatrix> {
        let p = build_operator(OperatorKind::ShiftPlus(axis), motion)?.matrix;
        let m = build_operator(OperatorKind::ShiftMinus(axis), motion)?.matrix;
        Ok(if cosine {
            p.add(&m).scale(C64::new(0.5, 0.0))
        } else {
            p.sub(&m).scale(C64::new(0.0, -0.5))
        })
    };
    if motion.axes() != dims {
        return Err(Error::Dimension(format!(
            "{dims}D coupling on {}-axis motion space",
            motion.axes()
        )));
    }
    match dims {
        1 => trig(0, true),
        2 => Ok(trig(0, true)?.matmul(&trig(1, false)?)),
        3 => Ok(trig(0, false)?
            .matmul(&trig(1, false)?)
            .matmul(&trig(2, true)?)),
        _ => Err(Error::InvalidParameter(format!("dims must be 1..=3, got {dims}"))),
    }
}

/// Hamiltonian on one excitation manifold with the free energy
/// `ω_a(n̂ + σ̂₊σ̂₋)` removed: `ω_r Σ l_m² + Ω √n f(x) σ_x`, where `σ_x`
/// swaps `|e,n-1⟩ ↔ |g,n⟩` and `f` is the coupling profile.
pub fn build_closed_hamiltonian(
    params: &ClosedModelParams,
    manifold: ManifoldSpec,
    space: &SpaceDescriptor,
) -> Result<Operator> {
    params.validate()?;
    let Motion::Ladder { l_max } = &space.motion else {
        return Err(Error::Incompatible {
            kind: "closed Hamiltonian".into(),
            space: space.to_string(),
        });
    };
    if l_max.len() != params.dims {
        return Err(Error::Dimension(format!(
            "{}D model on {}-axis ladder",
            params.dims,
            l_max.len()
        )));
    }
    if space.internal
        != (Internal::Manifold {
            excitations: manifold.excitations(),
        })
    {
        return Err(Error::Incompatible {
            kind: format!("{manifold:?}"),
            space: space.to_string(),
        });
    }
    let kinetic = build_operator(
        OperatorKind::Kinetic {
            omega_r: params.omega_r,
        },
        space,
    )?;
    let n = manifold.excitations();
    if n == 0 {
        return Ok(kinetic);
    }
    let motion = space.motion_only();
    let profile = coupling_profile(params.dims, &motion)?;
    let g = params.omega * (n as f64).sqrt();
    let sigma_x = CsrMatrix::from_triplets(2, 2, [(0, 1, C64::new(g, 0.0)), (1, 0, C64::new(g, 0.0))]);
    let coupling = sigma_x.kron(&profile);
    let h = kinetic.matrix.add(&coupling);
    // Clean tiny asymmetries from products of imaginary factors.
    let h = h.add(&h.adjoint()).scale(C64::new(0.5, 0.0));
    Operator::new(h, space.clone(), true)
}

/// Warns when the walk spread `~Ω t` (in momentum steps) approaches the
/// ladder cutoff. Returns the warning text if one was issued.
pub fn check_ladder_extent(params: &ClosedModelParams, space: &SpaceDescriptor, t_max: f64) -> Option<String> {
    let spread = params.omega * t_max;
    let Motion::Ladder { l_max } = &space.motion else {
        return None;
    };
    let smallest = *l_max.iter().min()?;
    if spread > smallest as f64 {
        let msg = format!(
            "estimated momentum spread Ω·t = {spread:.1} exceeds l_max = {smallest}; leakage likely"
        );
        warn!("{msg}");
        Some(msg)
    } else {
        None
    }
}

/// Population on ladder states with `|l_m| ≥ l_max,m − 1` on any axis.
pub fn edge_population(psi: &StateVector) -> f64 {
    let Motion::Ladder { l_max } = &psi.space.motion else {
        return 0.0;
    };
    let dm = psi.space.motion_dim();
    let mut edge = vec![false; dm];
    for (m, e) in edge.iter_mut().enumerate() {
        let l = psi.space.motion_labels(m);
        *e = l
            .iter()
            .zip(l_max)
            .any(|(li, &lm)| li.unsigned_abs() as usize + 1 >= lm);
    }
    psi.amplitudes
        .iter()
        .enumerate()
        .filter(|(i, _)| edge[i % dm])
        .map(|(_, a)| a.norm_sqr())
        .sum()
}

fn check_leakage(psi: &StateVector, limit: f64) -> Result<()> {
    let pop = edge_population(psi);
    if pop >= limit {
        let l_max = match &psi.space.motion {
            Motion::Ladder { l_max } => l_max.iter().copied().min().unwrap_or(0),
            _ => 0,
        };
        return Err(Error::Leakage {
            population: pop,
            l_max,
        });
    }
    Ok(())
}

#[derive(Clone, Debug)]
pub struct EvolveOptions {
    pub tol: f64,
    pub leakage_limit: f64,
}

impl Default for EvolveOptions {
    fn default() -> Self {
        EvolveOptions {
            tol: 1e-14,
            leakage_limit: 1e-8,
        }
    }
}

/// `ψ(t_k)` for each `t_k` in `times` (non-decreasing, starting at or after
/// 0). Fails if norm or energy drift, or ladder leakage, exceed bounds.
pub fn evolve_unitary(
    h: &Operator,
    psi0: &StateVector,
    times: &[f64],
    opts: &EvolveOptions,
) -> Result<Vec<StateVector>> {
    if !h.hermitian {
        return Err(Error::InvalidParameter("evolve_unitary needs a Hermitian H".into()));
    }
    if h.space != psi0.space {
        return Err(Error::Dimension(format!(
            "H on {} but ψ₀ on {}",
            h.space, psi0.space
        )));
    }
    if (psi0.norm() - 1.0).abs() > 1e-10 {
        return Err(Error::InvalidParameter(format!(
            "ψ₀ not normalized (‖ψ₀‖ = {})",
            psi0.norm()
        )));
    }
    let energy = |psi: &StateVector| crate::hilbert::expectation(h, psi).map(|e| e.re);
    let e0 = energy(psi0)?;
    let mut prop = TaylorPropagator::new(&h.matrix, opts.tol);
    let scale = prop.norm_bound().max(1.0);
    let mut psi = psi0.clone();
    let mut t = 0.0;
    let mut out = Vec::with_capacity(times.len());
    for &tk in times {
        if tk < t {
            return Err(Error::InvalidParameter("time grid must be non-decreasing from 0".into()));
        }
        prop.step(&mut psi.amplitudes, tk - t)?;
        t = tk;
        let nrm = psi.norm();
        if !nrm.is_finite() {
            return Err(Error::NonFinite(format!("state at t = {t}")));
        }
        if (nrm - 1.0).abs() > 1e-8 {
            return Err(Error::NoConvergence {
                solver: "unitary evolution (norm)",
                residual: (nrm - 1.0).abs(),
            });
        }
        let de = (energy(&psi)? - e0).abs();
        if de > 1e-6 * scale {
            return Err(Error::NoConvergence {
                solver: "unitary evolution (energy)",
                residual: de,
            });
        }
        check_leakage(&psi, opts.leakage_limit)?;
        out.push(psi.clone());
    }
    Ok(out)
}

/// Excited-state probability of each state.
pub fn rabi_signal(states: &[StateVector]) -> Result<Vec<f64>> {
    states.iter().map(excited_population).collect()
}

pub fn excited_population(psi: &StateVector) -> Result<f64> {
    if !psi.space.has_atom() {
        return Err(Error::Incompatible {
            kind: "excited population".into(),
            space: psi.space.to_string(),
        });
    }
    let dm = psi.space.motion_dim();
    let mut pe = 0.0;
    for (i, a) in psi.amplitudes.iter().enumerate() {
        let (_, e) = psi.space.internal_labels(i / dm).expect("atom-bearing space");
        if e {
            pe += a.norm_sqr();
        }
    }
    Ok(pe.clamp(0.0, 1.0))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Electronic {
    Excited,
    Ground,
}

/// Momentum-ladder distribution `|c_l|²` conditioned on one electronic
/// level. `joint` is row-major over the axes with `l_m + l_max,m` indices.
#[derive(Clone, Debug, PartialEq)]
pub struct MomentumDistribution {
    pub l_max: Vec<usize>,
    pub joint: Vec<f64>,
    pub marginals: Vec<Vec<f64>>,
}

impl MomentumDistribution {
    pub fn total(&self) -> f64 {
        self.joint.iter().sum()
    }

    /// Value at per-axis momenta `l`.
    pub fn at(&self, l: &[i64]) -> f64 {
        let mut idx = 0usize;
        for (&lm, &li) in self.l_max.iter().zip(l) {
            idx = idx * (2 * lm + 1) + (li + lm as i64) as usize;
        }
        self.joint[idx]
    }

    /// For two axes: distributions over `L_u = l₁ + l₂` and `L_v = l₁ − l₂`,
    /// each indexed by `L + l_max,0 + l_max,1`.
    pub fn rotated_marginals(&self) -> Result<(Vec<f64>, Vec<f64>)> {
        if self.l_max.len() != 2 {
            return Err(Error::Dimension(format!(
                "rotated coordinates need 2 axes, got {}",
                self.l_max.len()
            )));
        }
        let (a, b) = (self.l_max[0] as i64, self.l_max[1] as i64);
        let span = (2 * (a + b) + 1) as usize;
        let mut u = vec![0.0; span];
        let mut v = vec![0.0; span];
        for l1 in -a..=a {
            for l2 in -b..=b {
                let p = self.at(&[l1, l2]);
                u[(l1 + l2 + a + b) as usize] += p;
                v[(l1 - l2 + a + b) as usize] += p;
            }
        }
        Ok((u, v))
    }
}

pub fn momentum_distribution(psi: &StateVector, condition: Electronic) -> Result<MomentumDistribution> {
    let Motion::Ladder { l_max } = &psi.space.motion else {
        return Err(Error::Incompatible {
            kind: "momentum distribution".into(),
            space: psi.space.to_string(),
        });
    };
    if !psi.space.has_atom() {
        return Err(Error::Incompatible {
            kind: "conditioned momentum distribution".into(),
            space: psi.space.to_string(),
        });
    }
    let dm = psi.space.motion_dim();
    let mut joint = vec![0.0; dm];
    for (i, a) in psi.amplitudes.iter().enumerate() {
        let (_, e) = psi.space.internal_labels(i / dm).expect("atom-bearing space");
        if e == (condition == Electronic::Excited) {
            joint[i % dm] += a.norm_sqr();
        }
    }
    let mut marginals: Vec<Vec<f64>> = l_max.iter().map(|l| vec![0.0; 2 * l + 1]).collect();
    for (m, p) in joint.iter().enumerate() {
        let l = psi.space.motion_labels(m);
        for (axis, (&li, &lm)) in l.iter().zip(l_max).enumerate() {
            marginals[axis][(li + lm as i64) as usize] += p;
        }
    }
    Ok(MomentumDistribution {
        l_max: l_max.clone(),
        joint,
        marginals,
    })
}

/// Entries of `values` on the index parity class (even or odd positions)
/// carrying the larger total weight, in order.
pub fn occupied_sublattice(values: &[f64]) -> Vec<f64> {
    let even: f64 = values.iter().step_by(2).sum();
    let odd: f64 = values.iter().skip(1).step_by(2).sum();
    let offset = if even >= odd { 0 } else { 1 };
    values.iter().skip(offset).step_by(2).copied().collect()
}

/// One-dimensional tight-binding chain `2ω_r j² + s (g/2) sin u`, where
/// `sin u` hops `j → j ± 1` with amplitude `∓i/2`.
fn rotated_chain(omega_r: f64, g: f64, sign: f64, j_max: usize) -> CsrMatrix {
    let d = 2 * j_max + 1;
    let hop = C64::new(0.0, -sign * g / 4.0);
    let mut trips = Vec::with_capacity(3 * d);
    for idx in 0..d {
        let j = idx as f64 - j_max as f64;
        trips.push((idx, idx, C64::new(2.0 * omega_r * j * j, 0.0)));
        if idx + 1 < d {
            trips.push((idx + 1, idx, hop));
            trips.push((idx, idx + 1, hop.conj()));
        }
    }
    CsrMatrix::from_triplets(d, d, trips)
}

/// 2D evolution using the decomposition of the `cos x₁ sin x₂` coupling
/// into commuting walks along `u = x₁ + x₂` and `v = x₁ − x₂` on each
/// dressed branch. The initial state is `(c_e|e,n-1⟩ + c_g|g,n⟩) ⊗ |0,0⟩`.
/// States are returned on the 2D ladder manifold with `l_max = 2 j_max`.
pub fn evolve_2d_factorized(
    params: &ClosedModelParams,
    n: usize,
    internal0: [C64; 2],
    j_max: usize,
    times: &[f64],
    opts: &EvolveOptions,
) -> Result<Vec<StateVector>> {
    params.validate()?;
    if params.dims != 2 {
        return Err(Error::Dimension("factorized evolution is 2D only".into()));
    }
    if n == 0 {
        return Err(Error::InvalidParameter("factorized evolution needs n ≥ 1".into()));
    }
    let g = params.omega * (n as f64).sqrt();
    let d = 2 * j_max + 1;
    let chains = [
        rotated_chain(params.omega_r, g, 1.0, j_max),
        rotated_chain(params.omega_r, g, -1.0, j_max),
    ];
    let mut props: Vec<TaylorPropagator> = chains.iter().map(|c| TaylorPropagator::new(c, opts.tol)).collect();
    let mut states = [vec![ZERO; d], vec![ZERO; d]];
    for s in states.iter_mut() {
        s[j_max] = C64::new(1.0, 0.0);
    }
    let r = std::f64::consts::FRAC_1_SQRT_2;
    let c_plus = (internal0[0] + internal0[1]) * r;
    let c_minus = (internal0[0] - internal0[1]) * r;
    let l_max = 2 * j_max;
    let space = SpaceDescriptor::manifold(n, &[l_max, l_max])?;
    let mut t = 0.0;
    let mut out = Vec::with_capacity(times.len());
    for &tk in times {
        if tk < t {
            return Err(Error::InvalidParameter("time grid must be non-decreasing from 0".into()));
        }
        for (p, s) in props.iter_mut().zip(states.iter_mut()) {
            p.step(s, tk - t)?;
            let edge: f64 = s
                .iter()
                .enumerate()
                .filter(|(i, _)| (*i as i64 - j_max as i64).unsigned_abs() as usize + 1 >= j_max)
                .map(|(_, a)| a.norm_sqr())
                .sum();
            if edge >= opts.leakage_limit {
                return Err(Error::Leakage {
                    population: edge,
                    l_max: j_max,
                });
            }
        }
        t = tk;
        // Upper branch: u-walk with +, v-walk with −; lower branch reversed.
        let (pos, neg) = (&states[0], &states[1]);
        let mut psi = StateVector::zeros(&space);
        for ju in 0..d {
            for jv in 0..d {
                let up = pos[ju] * neg[jv] * c_plus;
                let low = neg[ju] * pos[jv] * c_minus;
                if up == ZERO && low == ZERO {
                    continue;
                }
                let (u, v) = (ju as i64 - j_max as i64, jv as i64 - j_max as i64);
                let m = space.motion_index(&[u + v, u - v]).expect("diamond inside square");
                psi.amplitudes[space.join(0, m)] = (up + low) * r;
                psi.amplitudes[space.join(1, m)] = (up - low) * r;
            }
        }
        out.push(psi);
    }
    Ok(out)
}

/// Position density over one unit cell `[0, 2π)` per axis (wavenumber 1),
/// normalized to unit cell integral. `psi` lives on a motion-only ladder
/// space. 2D output is row-major in `(x₁, x₂)`.
pub fn position_density(psi: &StateVector, points: usize) -> Result<Vec<f64>> {
    let Motion::Ladder { l_max } = &psi.space.motion else {
        return Err(Error::Incompatible {
            kind: "position density".into(),
            space: psi.space.to_string(),
        });
    };
    if psi.space.internal != Internal::Absent {
        return Err(Error::Incompatible {
            kind: "position density (project out the internal state first)".into(),
            space: psi.space.to_string(),
        });
    }
    let xs: Vec<f64> = (0..points).map(|k| 2.0 * PI * k as f64 / points as f64).collect();
    let norm = psi.norm_sqr();
    if norm == 0.0 {
        return Err(Error::InvalidParameter("zero wavepacket".into()));
    }
    match l_max.len() {
        1 => {
            let lm = l_max[0] as i64;
            Ok(xs
                .iter()
                .map(|&x| {
                    let phi: C64 = (-lm..=lm)
                        .map(|l| psi.amplitudes[(l + lm) as usize] * C64::from_polar(1.0, l as f64 * x))
                        .sum();
                    phi.norm_sqr() / (2.0 * PI * norm)
                })
                .collect())
        }
        2 => {
            let (a, b) = (l_max[0] as i64, l_max[1] as i64);
            let nb = (2 * b + 1) as usize;
            // Transform along axis 2 first, then axis 1.
            let mut partial = DMatrix::<C64>::zeros((2 * a + 1) as usize, points);
            for i in 0..(2 * a + 1) as usize {
                for (k, &x2) in xs.iter().enumerate() {
                    partial[(i, k)] = (-b..=b)
                        .map(|l2| psi.amplitudes[i * nb + (l2 + b) as usize] * C64::from_polar(1.0, l2 as f64 * x2))
                        .sum();
                }
            }
            let mut out = vec![0.0; points * points];
            for (j, &x1) in xs.iter().enumerate() {
                for k in 0..points {
                    let phi: C64 = (-a..=a)
                        .map(|l1| partial[((l1 + a) as usize, k)] * C64::from_polar(1.0, l1 as f64 * x1))
                        .sum();
                    out[j * points + k] = phi.norm_sqr() / (4.0 * PI * PI * norm);
                }
            }
            Ok(out)
        }
        d => Err(Error::Dimension(format!("position density supports 1 or 2 axes, got {d}"))),
    }
}

/// Projections of a manifold state on the dressed components
/// `(|e,n-1⟩ ± |g,n⟩)/√2`, as (unnormalized) motion-only states.
pub fn dressed_components(psi: &StateVector) -> Result<(StateVector, StateVector)> {
    match psi.space.internal {
        Internal::Manifold { excitations } if excitations > 0 => {}
        _ => {
            return Err(Error::Incompatible {
                kind: "dressed projection".into(),
                space: psi.space.to_string(),
            })
        }
    }
    let motion = psi.space.motion_only();
    let dm = motion.dim();
    let r = std::f64::consts::FRAC_1_SQRT_2;
    let (e, g) = psi.amplitudes.split_at(dm);
    let upper = e.iter().zip(g).map(|(a, b)| (a + b) * r).collect();
    let lower = e.iter().zip(g).map(|(a, b)| (a - b) * r).collect();
    Ok((
        StateVector::from_amplitudes(&motion, upper)?,
        StateVector::from_amplitudes(&motion, lower)?,
    ))
}

/// Von Neumann entropy (nats) of the reduced state on `part_a`.
pub fn schmidt_entropy(psi: &StateVector, part_a: &[Factor]) -> Result<f64> {
    let m = bipartite_matrix(psi, part_a)?;
    let sv = m.singular_values();
    let total: f64 = sv.iter().map(|s| s * s).sum();
    if total == 0.0 {
        return Err(Error::InvalidParameter("zero state".into()));
    }
    Ok(sv
        .iter()
        .map(|s| s * s / total)
        .filter(|&p| p > 1e-300)
        .map(|p| -p * p.ln())
        .sum())
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SectorLevel {
    /// Eigenvalue of `(-1)^{l_m} σ̂₃` for each axis.
    pub parities: Vec<i8>,
    pub energy: f64,
    pub residual: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DegeneracyReport {
    pub threshold: f64,
    pub sectors: Vec<SectorLevel>,
    /// Indices into `sectors` within `threshold` of the minimum.
    pub degenerate: Vec<usize>,
}

#[derive(Clone, Debug)]
pub struct MaskedGroundState {
    pub energy: f64,
    pub state: StateVector,
    /// Lowest state of every degenerate sector, in `report.degenerate` order.
    pub doublet: Vec<StateVector>,
    pub report: DegeneracyReport,
}

fn pseudo_random_start(n: usize, seed: u64) -> Vec<C64> {
    let mut x = seed.wrapping_mul(0x9E37_79B9_7F4A_7C15) | 1;
    (0..n)
        .map(|_| {
            x ^= x << 13;
            x ^= x >> 7;
            x ^= x << 17;
            let a = (x >> 11) as f64 / (1u64 << 53) as f64;
            x ^= x << 13;
            x ^= x >> 7;
            x ^= x << 17;
            let b = (x >> 11) as f64 / (1u64 << 53) as f64;
            C64::new(a - 0.5, b - 0.5)
        })
        .collect()
}

/// Lowest eigenpairs of `H` per conserved-parity sector. `omega` sets the
/// degeneracy threshold `10⁻⁶ Ω`.
pub fn masked_ground_state(h: &Operator, manifold: ManifoldSpec, omega: f64) -> Result<MaskedGroundState> {
    if manifold.excitations() == 0 {
        return Err(Error::InvalidParameter("masked ground state needs n ≥ 1".into()));
    }
    let space = &h.space;
    let axes = space.axes();
    if axes == 0 {
        return Err(Error::Incompatible {
            kind: "masked ground state".into(),
            space: space.to_string(),
        });
    }
    let parity_diags: Vec<Vec<C64>> = (0..axes)
        .map(|m| build_operator(OperatorKind::Parity(m), space).map(|p| p.matrix.diagonal()))
        .collect::<Result<_>>()?;
    let mut sectors: Vec<(Vec<i8>, Vec<usize>)> = Vec::new();
    for i in 0..space.dim() {
        let label: Vec<i8> = parity_diags.iter().map(|d| if d[i].re > 0.0 { 1 } else { -1 }).collect();
        match sectors.iter_mut().find(|(l, _)| *l == label) {
            Some((_, idx)) => idx.push(i),
            None => sectors.push((label, vec![i])),
        }
    }
    sectors.sort_by(|a, b| b.0.cmp(&a.0));
    let opts = LanczosOptions::default();
    let mut levels = Vec::new();
    let mut vectors = Vec::new();
    for (s, (label, keep)) in sectors.iter().enumerate() {
        let sub = h.matrix.restrict(keep);
        let start = pseudo_random_start(keep.len(), s as u64 + 1);
        let pair = lowest_eigenpair(&sub, &start, &opts)?;
        let mut full = StateVector::zeros(space);
        for (k, &i) in keep.iter().enumerate() {
            full.amplitudes[i] = pair.vector[k];
        }
        levels.push(SectorLevel {
            parities: label.clone(),
            energy: pair.value,
            residual: pair.residual,
        });
        vectors.push(full);
    }
    let threshold = 1e-6 * omega;
    let (imin, emin) = levels
        .iter()
        .enumerate()
        .map(|(i, l)| (i, l.energy))
        .min_by(|a, b| a.1.total_cmp(&b.1))
        .expect("at least one sector");
    let degenerate: Vec<usize> = levels
        .iter()
        .enumerate()
        .filter(|(_, l)| l.energy - emin <= threshold)
        .map(|(i, _)| i)
        .collect();
    Ok(MaskedGroundState {
        energy: emin,
        state: vectors[imin].clone(),
        doublet: degenerate.iter().map(|&i| vectors[i].clone()).collect(),
        report: DegeneracyReport {
            threshold,
            sectors: levels,
            degenerate,
        },
    })
}

/// Location of the maximum of a sampled 1D density on `[0, 2π)`.
pub fn peak_position(density: &[f64]) -> f64 {
    let (k, _) = density
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.total_cmp(b.1))
        .expect("non-empty density");
    2.0 * PI * k as f64 / density.len() as f64
}

/// `∫ |φ_a(x)| |φ_b(x)| dx` for two normalized densities sampled on the
/// same uniform grid over the cell.
pub fn density_overlap(a: &[f64], b: &[f64], cell_volume: f64) -> f64 {
    let w = cell_volume / a.len() as f64;
    a.iter().zip(b).map(|(x, y)| (x * y).sqrt() * w).sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hilbert::expectation;

    fn params(dims: usize, omega_r: f64) -> ClosedModelParams {
        ClosedModelParams::new(1.0, omega_r, dims).unwrap()
    }

    #[test]
    fn spectrum_pairs_at_zero_recoil() {
        // With ω_r = 0 the coupling is Ω√n cos x σ_x; on a finite ladder
        // cos x has a ± symmetric spectrum and so does H.
        let space = SpaceDescriptor::manifold(1, &[8]).unwrap();
        let h = build_closed_hamiltonian(&params(1, 0.0), ManifoldSpec::Excitations(1), &space).unwrap();
        let mut ev: Vec<f64> = nalgebra::SymmetricEigen::new(h.matrix.to_dense())
            .eigenvalues
            .iter()
            .copied()
            .collect();
        ev.sort_by(f64::total_cmp);
        for (a, b) in ev.iter().zip(ev.iter().rev()) {
            assert!((a + b).abs() < 1e-12);
        }
        // Brute force: eigenvalues of cos x on 17 plane waves are cos(πk/18).
        let mut expect: Vec<f64> = (1..=17)
            .flat_map(|k| {
                let c = (PI * k as f64 / 18.0).cos();
                [c, -c]
            })
            .collect();
        expect.sort_by(f64::total_cmp);
        for (a, b) in ev.iter().zip(&expect) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn parity_commutes_with_h() {
        for dims in 1..=3 {
            let l = vec![3; dims];
            let space = SpaceDescriptor::manifold(2, &l).unwrap();
            let h = build_closed_hamiltonian(&params(dims, 0.1), ManifoldSpec::Excitations(2), &space).unwrap();
            for axis in 0..dims {
                let p = build_operator(OperatorKind::Parity(axis), &space).unwrap();
                assert!(h.commutator(&p).unwrap().matrix.max_abs() < 1e-12);
            }
        }
    }

    #[test]
    fn two_dimensional_walks_commute_in_interior() {
        let space = SpaceDescriptor::manifold(1, &[5, 5]).unwrap();
        let p = params(2, 0.3);
        let motion = space.motion_only();
        let sp = |a| build_operator(OperatorKind::ShiftPlus(a), &motion).unwrap().matrix;
        let sm = |a| build_operator(OperatorKind::ShiftMinus(a), &motion).unwrap().matrix;
        let sin_u = sp(0).matmul(&sp(1)).sub(&sm(0).matmul(&sm(1))).scale(C64::new(0.0, -0.5));
        let sin_v = sp(0).matmul(&sm(1)).sub(&sm(0).matmul(&sp(1))).scale(C64::new(0.0, -0.5));
        let sx = CsrMatrix::from_triplets(2, 2, [(0, 1, C64::new(0.5, 0.0)), (1, 0, C64::new(0.5, 0.0))]);
        let ku: Vec<C64> = (0..motion.dim())
            .map(|m| {
                let l = motion.motion_labels(m);
                C64::new(p.omega_r * ((l[0] + l[1]) as f64).powi(2) / 2.0, 0.0)
            })
            .collect();
        let kv: Vec<C64> = (0..motion.dim())
            .map(|m| {
                let l = motion.motion_labels(m);
                C64::new(p.omega_r * ((l[0] - l[1]) as f64).powi(2) / 2.0, 0.0)
            })
            .collect();
        let id2 = CsrMatrix::identity(2);
        let hu = id2.kron(&CsrMatrix::from_diagonal(&ku)).add(&sx.kron(&sin_u));
        let hv = id2.kron(&CsrMatrix::from_diagonal(&kv)).sub(&sx.kron(&sin_v));
        let h = build_closed_hamiltonian(&p, ManifoldSpec::Excitations(1), &space).unwrap();
        assert!(h.matrix.sub(&hu.add(&hv)).max_abs() < 1e-14);
        let comm = hu.commutator(&hv);
        for (i, j, v) in comm.triplets() {
            let interior = |k: usize| space.motion_labels(k % motion.dim()).iter().all(|l| l.abs() <= 3);
            if interior(i) && interior(j) {
                assert!(v.norm() < 1e-12, "({i},{j}) = {v}");
            }
        }
    }

    #[test]
    fn zero_hamiltonian_is_static() {
        let space = SpaceDescriptor::manifold(1, &[4]).unwrap();
        let h = Operator::new(CsrMatrix::zeros(space.dim(), space.dim()), space.clone(), true).unwrap();
        let psi0 = StateVector::ladder_state(&space, 0, true, &[0]).unwrap();
        let out = evolve_unitary(&h, &psi0, &[0.0, 1.0, 5.0], &EvolveOptions::default()).unwrap();
        for s in out {
            assert_eq!(s.amplitudes, psi0.amplitudes);
        }
    }

    #[test]
    fn rabi_values_for_simple_states() {
        let space = SpaceDescriptor::manifold(1, &[2]).unwrap();
        let e = StateVector::ladder_state(&space, 0, true, &[0]).unwrap();
        let mut mix = e.clone();
        let gi = space.join(1, space.motion_index(&[0]).unwrap());
        mix.amplitudes[gi] = C64::new(1.0, 0.0);
        mix.normalize();
        let r = rabi_signal(&[e, mix]).unwrap();
        assert_eq!(r[0], 1.0);
        assert!((r[1] - 0.5).abs() < 1e-15);
    }

    #[test]
    fn factorized_matches_joint_evolution() {
        let p = params(2, 0.05);
        let j_max = 12;
        let times = [0.5, 2.0, 4.0];
        let fact = evolve_2d_factorized(
            &p,
            1,
            [C64::new(1.0, 0.0), ZERO],
            j_max,
            &times,
            &EvolveOptions::default(),
        )
        .unwrap();
        let space = fact[0].space.clone();
        let h = build_closed_hamiltonian(&p, ManifoldSpec::Excitations(1), &space).unwrap();
        let psi0 = StateVector::ladder_state(&space, 0, true, &[0, 0]).unwrap();
        let joint = evolve_unitary(&h, &psi0, &times, &EvolveOptions::default()).unwrap();
        for (a, b) in fact.iter().zip(&joint) {
            let diff: f64 = a
                .amplitudes
                .iter()
                .zip(&b.amplitudes)
                .map(|(x, y)| (x - y).norm_sqr())
                .sum::<f64>()
                .sqrt();
            assert!(diff < 1e-10, "diff {diff}");
        }
    }

    #[test]
    fn time_reversal_returns_initial_state() {
        let space = SpaceDescriptor::manifold(1, &[30]).unwrap();
        let h = build_closed_hamiltonian(&params(1, 1e-3), ManifoldSpec::Excitations(1), &space).unwrap();
        let psi0 = StateVector::ladder_state(&space, 0, true, &[0]).unwrap();
        let fwd = evolve_unitary(&h, &psi0, &[10.0], &EvolveOptions::default()).unwrap();
        let back = evolve_unitary(&h.scale(-1.0), &fwd[0], &[10.0], &EvolveOptions::default()).unwrap();
        let overlap = back[0].inner(&psi0).norm();
        assert!((overlap - 1.0).abs() < 1e-6);
    }

    #[test]
    fn leakage_monitor_trips() {
        let space = SpaceDescriptor::manifold(1, &[4]).unwrap();
        let h = build_closed_hamiltonian(&params(1, 0.0), ManifoldSpec::Excitations(1), &space).unwrap();
        let psi0 = StateVector::ladder_state(&space, 0, true, &[0]).unwrap();
        let r = evolve_unitary(&h, &psi0, &[20.0], &EvolveOptions::default());
        assert!(matches!(r, Err(Error::Leakage { .. })));
    }

    #[test]
    fn position_density_examples() {
        let motion = SpaceDescriptor::new(Internal::Absent, Motion::Ladder { l_max: vec![2] }).unwrap();
        let flat = StateVector::basis(&motion, motion.motion_index(&[0]).unwrap());
        let d = position_density(&flat, 16).unwrap();
        for v in d {
            assert!((v - 1.0 / (2.0 * PI)).abs() < 1e-14);
        }
        let mut cos = StateVector::zeros(&motion);
        cos.amplitudes[motion.motion_index(&[1]).unwrap()] = C64::new(1.0, 0.0);
        cos.amplitudes[motion.motion_index(&[-1]).unwrap()] = C64::new(1.0, 0.0);
        cos.normalize();
        let n = 32;
        let d = position_density(&cos, n).unwrap();
        for (k, v) in d.iter().enumerate() {
            let x = 2.0 * PI * k as f64 / n as f64;
            assert!((v - x.cos().powi(2) / PI).abs() < 1e-14);
        }
        let integral: f64 = d.iter().sum::<f64>() * 2.0 * PI / n as f64;
        assert!((integral - 1.0).abs() < 1e-12);
    }

    #[test]
    fn entropy_examples() {
        let s = SpaceDescriptor::new(Internal::Absent, Motion::Ladder { l_max: vec![0, 0] });
        assert!(s.is_ok());
        let q = SpaceDescriptor::new(Internal::Absent, Motion::Ladder { l_max: vec![1, 1] }).unwrap();
        let mut bell = StateVector::zeros(&q);
        bell.amplitudes[q.motion_index(&[1, 1]).unwrap()] = C64::new(1.0, 0.0);
        bell.amplitudes[q.motion_index(&[-1, -1]).unwrap()] = C64::new(1.0, 0.0);
        bell.normalize();
        let e = schmidt_entropy(&bell, &[Factor::Axis(0)]).unwrap();
        assert!((e - 2f64.ln()).abs() < 1e-12);
        let prod = StateVector::basis(&q, q.motion_index(&[1, 0]).unwrap());
        assert!(schmidt_entropy(&prod, &[Factor::Axis(0)]).unwrap().abs() < 1e-12);
    }

    #[test]
    fn heavy_recoil_ground_state_is_delocalized() {
        let space = SpaceDescriptor::manifold(1, &[6]).unwrap();
        let p = ClosedModelParams::new(1.0, 1e3, 1).unwrap();
        let h = build_closed_hamiltonian(&p, ManifoldSpec::Excitations(1), &space).unwrap();
        let gs = masked_ground_state(&h, ManifoldSpec::Excitations(1), p.omega).unwrap();
        let motion = space.motion_only();
        let cos2 = build_operator(OperatorKind::ShiftPlus(0), &space)
            .unwrap()
            .add(&build_operator(OperatorKind::ShiftMinus(0), &space).unwrap())
            .unwrap()
            .with_hermitian_check();
        let c = expectation(&cos2, &gs.state).unwrap();
        assert!(c.norm() < 1e-3);
        let dm = motion.dim();
        let l0 = motion.motion_index(&[0]).unwrap();
        let w0 = gs.state.amplitudes[l0].norm_sqr() + gs.state.amplitudes[dm + l0].norm_sqr();
        assert!(w0 > 0.999);
    }
}
