//! Truncated composite Hilbert spaces and the operator algebra on them.
//!
//! Tensor factors are ordered photon ⊗ atom ⊗ motion, with motion axes in
//! ascending index. The atom basis is `[|g⟩, |e⟩]` and σ₃|e⟩ = +|e⟩. A
//! ladder axis stores momentum index `l ∈ [-l_max, l_max]` at position
//! `l + l_max`; the restricted motion basis is `[|0⟩, |k⟩]`.

use std::fmt;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sparse::CsrMatrix;
use crate::C64;

const ZERO: C64 = C64::new(0.0, 0.0);
const ONE: C64 = C64::new(1.0, 0.0);

/// Photon and electronic part of the space.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Internal {
    /// Fock states `0..=photon_cutoff` tensored with the two atomic levels.
    Full { photon_cutoff: usize },
    /// One excitation manifold: `[|e, n-1⟩, |g, n⟩]` for `n ≥ 1`, or the
    /// unpaired `|g, 0⟩` for `n = 0`.
    Manifold { excitations: usize },
    /// Photon factor alone, as left by tracing out the atom.
    Fock { photon_cutoff: usize },
    /// Atom factor alone.
    Atom,
    /// Motion only.
    Absent,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Motion {
    /// Plane-wave ladder per axis at zero quasimomentum.
    Ladder { l_max: Vec<usize> },
    /// The two-state space `{|0⟩, |k⟩}`.
    Restricted,
    Absent,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SpaceDescriptor {
    pub internal: Internal,
    pub motion: Motion,
}

/// A tensor factor of a [`SpaceDescriptor`], used by partial traces and
/// bipartitions.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Factor {
    Photon,
    Atom,
    /// The two-state excitation doublet of a manifold space.
    Doublet,
    Axis(usize),
    Restricted,
}

impl SpaceDescriptor {
    pub fn new(internal: Internal, motion: Motion) -> Result<Self> {
        if let Motion::Ladder { l_max } = &motion {
            if l_max.is_empty() || l_max.len() > 3 {
                return Err(Error::InvalidParameter(format!(
                    "ladder motion needs 1 to 3 axes, got {}",
                    l_max.len()
                )));
            }
        }
        if internal == Internal::Absent && motion == Motion::Absent {
            return Err(Error::InvalidParameter("empty space".into()));
        }
        Ok(SpaceDescriptor { internal, motion })
    }

    /// Full photon ⊗ atom ⊗ ladder space. Only zero quasimomentum is
    /// supported.
    pub fn ladder(photon_cutoff: usize, l_max: &[usize], quasimomentum: f64) -> Result<Self> {
        if quasimomentum != 0.0 {
            return Err(Error::InvalidParameter(format!(
                "quasimomentum must be 0, got {quasimomentum}"
            )));
        }
        Self::new(
            Internal::Full { photon_cutoff },
            Motion::Ladder {
                l_max: l_max.to_vec(),
            },
        )
    }

    pub fn restricted(photon_cutoff: usize) -> Self {
        SpaceDescriptor {
            internal: Internal::Full { photon_cutoff },
            motion: Motion::Restricted,
        }
    }

    pub fn manifold(excitations: usize, l_max: &[usize]) -> Result<Self> {
        Self::new(
            Internal::Manifold { excitations },
            Motion::Ladder {
                l_max: l_max.to_vec(),
            },
        )
    }

    pub fn motion_only(&self) -> Self {
        SpaceDescriptor {
            internal: Internal::Absent,
            motion: self.motion.clone(),
        }
    }

    pub fn internal_dim(&self) -> usize {
        match self.internal {
            Internal::Full { photon_cutoff } => 2 * (photon_cutoff + 1),
            Internal::Manifold { excitations: 0 } => 1,
            Internal::Manifold { .. } => 2,
            Internal::Fock { photon_cutoff } => photon_cutoff + 1,
            Internal::Atom => 2,
            Internal::Absent => 1,
        }
    }

    pub fn motion_dims(&self) -> Vec<usize> {
        match &self.motion {
            Motion::Ladder { l_max } => l_max.iter().map(|l| 2 * l + 1).collect(),
            Motion::Restricted => vec![2],
            Motion::Absent => vec![],
        }
    }

    pub fn motion_dim(&self) -> usize {
        self.motion_dims().iter().product()
    }

    pub fn dim(&self) -> usize {
        self.internal_dim() * self.motion_dim()
    }

    /// `dim()` with overflow checking, for descriptors from untrusted input.
    pub fn checked_dim(&self) -> Option<usize> {
        let internal = match self.internal {
            Internal::Full { photon_cutoff } => photon_cutoff.checked_add(1)?.checked_mul(2)?,
            Internal::Fock { photon_cutoff } => photon_cutoff.checked_add(1)?,
            _ => self.internal_dim(),
        };
        let mut d = internal;
        if let Motion::Ladder { l_max } = &self.motion {
            for l in l_max {
                d = d.checked_mul(l.checked_mul(2)?.checked_add(1)?)?;
            }
        } else {
            d = d.checked_mul(self.motion_dim())?;
        }
        Some(d)
    }

    pub fn axes(&self) -> usize {
        match &self.motion {
            Motion::Ladder { l_max } => l_max.len(),
            _ => 0,
        }
    }

    pub fn l_max(&self, axis: usize) -> Result<usize> {
        match &self.motion {
            Motion::Ladder { l_max } => l_max.get(axis).copied().ok_or(Error::AxisOutOfRange {
                axis,
                dims: l_max.len(),
            }),
            _ => Err(Error::Incompatible {
                kind: "ladder axis".into(),
                space: self.to_string(),
            }),
        }
    }

    pub fn has_atom(&self) -> bool {
        matches!(
            self.internal,
            Internal::Full { .. } | Internal::Manifold { .. } | Internal::Atom
        )
    }

    pub fn photon_cutoff(&self) -> Option<usize> {
        match self.internal {
            Internal::Full { photon_cutoff } | Internal::Fock { photon_cutoff } => {
                Some(photon_cutoff)
            }
            _ => None,
        }
    }

    pub fn factors(&self) -> Vec<(Factor, usize)> {
        let mut out = Vec::new();
        match self.internal {
            Internal::Full { photon_cutoff } => {
                out.push((Factor::Photon, photon_cutoff + 1));
                out.push((Factor::Atom, 2));
            }
            Internal::Manifold { .. } => out.push((Factor::Doublet, self.internal_dim())),
            Internal::Fock { photon_cutoff } => out.push((Factor::Photon, photon_cutoff + 1)),
            Internal::Atom => out.push((Factor::Atom, 2)),
            Internal::Absent => {}
        }
        match &self.motion {
            Motion::Ladder { l_max } => {
                for (m, l) in l_max.iter().enumerate() {
                    out.push((Factor::Axis(m), 2 * l + 1));
                }
            }
            Motion::Restricted => out.push((Factor::Restricted, 2)),
            Motion::Absent => {}
        }
        out
    }

    /// Index of `(internal, motion)` in the composite basis.
    pub fn join(&self, internal: usize, motion: usize) -> usize {
        internal * self.motion_dim() + motion
    }

    pub fn split(&self, index: usize) -> (usize, usize) {
        (index / self.motion_dim(), index % self.motion_dim())
    }

    /// Motion index for per-axis momentum labels.
    pub fn motion_index(&self, l: &[i64]) -> Option<usize> {
        let Motion::Ladder { l_max } = &self.motion else {
            return None;
        };
        if l.len() != l_max.len() {
            return None;
        }
        let mut idx = 0usize;
        for (&lm, &li) in l_max.iter().zip(l) {
            if li.unsigned_abs() as usize > lm {
                return None;
            }
            idx = idx * (2 * lm + 1) + (li + lm as i64) as usize;
        }
        Some(idx)
    }

    /// Per-axis momentum labels of a motion index.
    pub fn motion_labels(&self, mut index: usize) -> Vec<i64> {
        let Motion::Ladder { l_max } = &self.motion else {
            return vec![];
        };
        let mut out = vec![0i64; l_max.len()];
        for (m, &lm) in l_max.iter().enumerate().rev() {
            let d = 2 * lm + 1;
            out[m] = (index % d) as i64 - lm as i64;
            index /= d;
        }
        out
    }

    /// Internal index of `|photons, excited⟩`, if representable.
    pub fn internal_index(&self, photons: usize, excited: bool) -> Option<usize> {
        match self.internal {
            Internal::Full { photon_cutoff } if photons <= photon_cutoff => {
                Some(2 * photons + excited as usize)
            }
            Internal::Fock { photon_cutoff } if photons <= photon_cutoff && !excited => Some(photons),
            Internal::Atom if photons == 0 => Some(excited as usize),
            Internal::Manifold { excitations: 0 } if photons == 0 && !excited => Some(0),
            Internal::Manifold { excitations } if excitations > 0 => {
                if excited && photons + 1 == excitations {
                    Some(0)
                } else if !excited && photons == excitations {
                    Some(1)
                } else {
                    None
                }
            }
            _ => None,
        }
    }

    /// `(photons, excited)` for an internal index.
    pub fn internal_labels(&self, internal: usize) -> Option<(usize, bool)> {
        match self.internal {
            Internal::Full { .. } => Some((internal / 2, internal % 2 == 1)),
            Internal::Fock { .. } => Some((internal, false)),
            Internal::Atom => Some((0, internal == 1)),
            Internal::Manifold { excitations: 0 } => Some((0, false)),
            Internal::Manifold { excitations } => Some(if internal == 0 {
                (excitations - 1, true)
            } else {
                (excitations, false)
            }),
            Internal::Absent => None,
        }
    }
}

impl fmt::Display for SpaceDescriptor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.internal {
            Internal::Full { photon_cutoff } => write!(f, "photon[0..={photon_cutoff}] ⊗ atom")?,
            Internal::Manifold { excitations } => write!(f, "manifold[n={excitations}]")?,
            Internal::Fock { photon_cutoff } => write!(f, "photon[0..={photon_cutoff}]")?,
            Internal::Atom => write!(f, "atom")?,
            Internal::Absent => write!(f, "(no internal)")?,
        }
        match &self.motion {
            Motion::Ladder { l_max } => write!(f, " ⊗ ladder{l_max:?}"),
            Motion::Restricted => write!(f, " ⊗ restricted{{0,k}}"),
            Motion::Absent => Ok(()),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum OperatorKind {
    Identity,
    Annihilate,
    Create,
    Number,
    SigmaPlus,
    SigmaMinus,
    Sigma3,
    /// `e^{+i k x}` on one ladder axis: `|l⟩ → |l+1⟩`.
    ShiftPlus(usize),
    ShiftMinus(usize),
    /// `ħω_r Σ l²` on a ladder, `(ħω_r/2) Ĵ₃` on the restricted space.
    Kinetic { omega_r: f64 },
    JPlus,
    JMinus,
    J3,
    J1,
    /// `(-1)^{l_axis} σ̂₃`.
    Parity(usize),
    /// `σ̂₃ Ĵ₃`.
    ParityRestricted,
}

impl OperatorKind {
    fn is_hermitian(self) -> bool {
        !matches!(
            self,
            OperatorKind::Annihilate
                | OperatorKind::Create
                | OperatorKind::SigmaPlus
                | OperatorKind::SigmaMinus
                | OperatorKind::ShiftPlus(_)
                | OperatorKind::ShiftMinus(_)
                | OperatorKind::JPlus
                | OperatorKind::JMinus
        )
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Operator {
    pub matrix: CsrMatrix,
    pub space: SpaceDescriptor,
    pub hermitian: bool,
}

impl Operator {
    pub fn new(matrix: CsrMatrix, space: SpaceDescriptor, hermitian: bool) -> Result<Self> {
        let d = space.dim();
        if matrix.rows() != d || matrix.cols() != d {
            return Err(Error::Dimension(format!(
                "{}x{} matrix on {}-dimensional space {space}",
                matrix.rows(),
                matrix.cols(),
                d
            )));
        }
        if hermitian {
            let defect = matrix.hermitian_defect();
            if defect >= 1e-12 {
                return Err(Error::InvalidParameter(format!(
                    "operator flagged Hermitian has |A - A†| = {defect:.3e}"
                )));
            }
        }
        Ok(Operator {
            matrix,
            space,
            hermitian,
        })
    }

    pub fn dim(&self) -> usize {
        self.matrix.rows()
    }

    fn check_space(&self, other: &SpaceDescriptor) -> Result<()> {
        if &self.space != other {
            return Err(Error::Dimension(format!(
                "operator on {} applied on {other}",
                self.space
            )));
        }
        Ok(())
    }

    pub fn apply(&self, psi: &StateVector) -> Result<StateVector> {
        self.check_space(&psi.space)?;
        Ok(StateVector {
            amplitudes: self.matrix.mul_vec(&psi.amplitudes),
            space: self.space.clone(),
        })
    }

    pub fn adjoint(&self) -> Operator {
        Operator {
            matrix: self.matrix.adjoint(),
            space: self.space.clone(),
            hermitian: self.hermitian,
        }
    }

    pub fn scale(&self, s: f64) -> Operator {
        Operator {
            matrix: self.matrix.scale(C64::new(s, 0.0)),
            space: self.space.clone(),
            hermitian: self.hermitian,
        }
    }

    pub fn scale_complex(&self, s: C64) -> Operator {
        Operator {
            matrix: self.matrix.scale(s),
            space: self.space.clone(),
            hermitian: self.hermitian && s.im == 0.0,
        }
    }

    pub fn add(&self, other: &Operator) -> Result<Operator> {
        self.check_space(&other.space)?;
        Ok(Operator {
            matrix: self.matrix.add(&other.matrix),
            space: self.space.clone(),
            hermitian: self.hermitian && other.hermitian,
        })
    }

    pub fn sub(&self, other: &Operator) -> Result<Operator> {
        self.add(&other.scale(-1.0))
    }

    /// Product `self · other`; the Hermitian hint is dropped.
    pub fn mul(&self, other: &Operator) -> Result<Operator> {
        self.check_space(&other.space)?;
        Ok(Operator {
            matrix: self.matrix.matmul(&other.matrix),
            space: self.space.clone(),
            hermitian: false,
        })
    }

    pub fn commutator(&self, other: &Operator) -> Result<Operator> {
        self.check_space(&other.space)?;
        Ok(Operator {
            matrix: self.matrix.commutator(&other.matrix),
            space: self.space.clone(),
            hermitian: false,
        })
    }

    /// Restriction to a subset of basis states, relabelled as `space`.
    pub fn restrict(&self, keep: &[usize], space: SpaceDescriptor) -> Result<Operator> {
        if keep.len() != space.dim() {
            return Err(Error::Dimension(format!(
                "restricting to {} states but target space {space} has {}",
                keep.len(),
                space.dim()
            )));
        }
        Ok(Operator {
            matrix: self.matrix.restrict(keep),
            space,
            hermitian: self.hermitian,
        })
    }

    /// Re-checks the Hermitian hint against the stored matrix.
    pub fn with_hermitian_check(mut self) -> Operator {
        self.hermitian = self.matrix.hermitian_defect() < 1e-12;
        self
    }
}

/// Builds `kind` embedded in the full composite space.
pub fn build_operator(kind: OperatorKind, space: &SpaceDescriptor) -> Result<Operator> {
    use OperatorKind::*;
    let incompatible = || Error::Incompatible {
        kind: format!("{kind:?}"),
        space: space.to_string(),
    };
    let di = space.internal_dim();
    let dm = space.motion_dim();

    let internal_local: Option<CsrMatrix> = match kind {
        Annihilate | Create | SigmaPlus | SigmaMinus => {
            let (photons, atom) = match space.internal {
                Internal::Full { photon_cutoff } => (Some(photon_cutoff + 1), true),
                Internal::Fock { photon_cutoff } => (Some(photon_cutoff + 1), false),
                Internal::Atom => (None, true),
                _ => return Err(incompatible()),
            };
            let photon_op = |create: bool| {
                let n = photons.expect("photon factor present");
                CsrMatrix::from_triplets(
                    n,
                    n,
                    (1..n).map(|k| {
                        let v = C64::new((k as f64).sqrt(), 0.0);
                        if create {
                            (k, k - 1, v)
                        } else {
                            (k - 1, k, v)
                        }
                    }),
                )
            };
            let atom_id = || CsrMatrix::identity(if atom { 2 } else { 1 });
            let photon_id = || CsrMatrix::identity(photons.unwrap_or(1));
            match kind {
                Annihilate | Create => {
                    if photons.is_none() {
                        return Err(incompatible());
                    }
                    Some(photon_op(kind == Create).kron(&atom_id()))
                }
                _ => {
                    if !atom {
                        return Err(incompatible());
                    }
                    let s = if kind == SigmaPlus {
                        CsrMatrix::from_triplets(2, 2, [(1, 0, ONE)])
                    } else {
                        CsrMatrix::from_triplets(2, 2, [(0, 1, ONE)])
                    };
                    Some(photon_id().kron(&s))
                }
            }
        }
        Number | Sigma3 => {
            let ok = match kind {
                Number => space.photon_cutoff().is_some() || matches!(space.internal, Internal::Manifold { .. }),
                _ => space.has_atom(),
            };
            if !ok {
                return Err(incompatible());
            }
            let diag: Vec<C64> = (0..di)
                .map(|i| {
                    let (n, e) = space.internal_labels(i).expect("internal factor present");
                    let v = match kind {
                        Number => n as f64,
                        _ => {
                            if e {
                                1.0
                            } else {
                                -1.0
                            }
                        }
                    };
                    C64::new(v, 0.0)
                })
                .collect();
            Some(CsrMatrix::from_diagonal(&diag))
        }
        _ => None,
    };
    if let Some(local) = internal_local {
        let m = local.kron(&CsrMatrix::identity(dm));
        return Operator::new(m, space.clone(), kind.is_hermitian());
    }

    let matrix = match kind {
        Identity => CsrMatrix::identity(space.dim()),
        ShiftPlus(axis) | ShiftMinus(axis) => {
            let Motion::Ladder { l_max } = &space.motion else {
                return Err(incompatible());
            };
            if axis >= l_max.len() {
                return Err(Error::AxisOutOfRange {
                    axis,
                    dims: l_max.len(),
                });
            }
            let step: i64 = if matches!(kind, ShiftPlus(_)) { 1 } else { -1 };
            let mut trips = Vec::with_capacity(dm);
            for m in 0..dm {
                let mut l = space.motion_labels(m);
                l[axis] += step;
                if let Some(target) = space.motion_index(&l) {
                    trips.push((target, m, ONE));
                }
            }
            let local = CsrMatrix::from_triplets(dm, dm, trips);
            CsrMatrix::identity(di).kron(&local)
        }
        Kinetic { omega_r } => match &space.motion {
            Motion::Ladder { .. } => {
                let diag: Vec<C64> = (0..dm)
                    .map(|m| {
                        let l2: i64 = space.motion_labels(m).iter().map(|l| l * l).sum();
                        C64::new(omega_r * l2 as f64, 0.0)
                    })
                    .collect();
                CsrMatrix::identity(di).kron(&CsrMatrix::from_diagonal(&diag))
            }
            Motion::Restricted => CsrMatrix::identity(di).kron(&CsrMatrix::from_diagonal(&[
                C64::new(-omega_r / 2.0, 0.0),
                C64::new(omega_r / 2.0, 0.0),
            ])),
            Motion::Absent => return Err(incompatible()),
        },
        JPlus | JMinus | J3 | J1 => {
            if space.motion != Motion::Restricted {
                return Err(incompatible());
            }
            let local = match kind {
                JPlus => CsrMatrix::from_triplets(2, 2, [(1, 0, ONE)]),
                JMinus => CsrMatrix::from_triplets(2, 2, [(0, 1, ONE)]),
                J3 => CsrMatrix::from_diagonal(&[-ONE, ONE]),
                _ => CsrMatrix::from_triplets(2, 2, [(1, 0, ONE), (0, 1, ONE)]),
            };
            CsrMatrix::identity(di).kron(&local)
        }
        Parity(axis) => {
            let Motion::Ladder { l_max } = &space.motion else {
                return Err(incompatible());
            };
            if axis >= l_max.len() {
                return Err(Error::AxisOutOfRange {
                    axis,
                    dims: l_max.len(),
                });
            }
            if !space.has_atom() {
                return Err(incompatible());
            }
            let s3 = build_operator(Sigma3, space)?.matrix.diagonal();
            let diag: Vec<C64> = (0..space.dim())
                .map(|i| {
                    let (_, m) = space.split(i);
                    let l = space.motion_labels(m)[axis];
                    let sign = if l.rem_euclid(2) == 0 { 1.0 } else { -1.0 };
                    s3[i] * sign
                })
                .collect();
            CsrMatrix::from_diagonal(&diag)
        }
        ParityRestricted => {
            if space.motion != Motion::Restricted || !space.has_atom() {
                return Err(incompatible());
            }
            let s3 = build_operator(Sigma3, space)?;
            let j3 = build_operator(J3, space)?;
            s3.matrix.matmul(&j3.matrix)
        }
        Annihilate | Create | SigmaPlus | SigmaMinus | Number | Sigma3 => unreachable!(),
    };
    Operator::new(matrix, space.clone(), kind.is_hermitian())
}

#[derive(Clone, Debug, PartialEq)]
pub struct StateVector {
    pub amplitudes: Vec<C64>,
    pub space: SpaceDescriptor,
}

impl StateVector {
    pub fn zeros(space: &SpaceDescriptor) -> Self {
        StateVector {
            amplitudes: vec![ZERO; space.dim()],
            space: space.clone(),
        }
    }

    pub fn basis(space: &SpaceDescriptor, index: usize) -> Self {
        let mut s = Self::zeros(space);
        s.amplitudes[index] = ONE;
        s
    }

    /// `|photons, e/g⟩ ⊗ |l⟩` on a ladder space.
    pub fn ladder_state(
        space: &SpaceDescriptor,
        photons: usize,
        excited: bool,
        l: &[i64],
    ) -> Result<Self> {
        let i = space
            .internal_index(photons, excited)
            .ok_or_else(|| Error::InvalidParameter(format!("|n={photons}, e={excited}⟩ not in {space}")))?;
        let m = space
            .motion_index(l)
            .ok_or_else(|| Error::InvalidParameter(format!("momentum {l:?} not in {space}")))?;
        Ok(Self::basis(space, space.join(i, m)))
    }

    /// `|photons, e/g, J₃ = j3⟩` on the restricted space.
    pub fn restricted_state(
        space: &SpaceDescriptor,
        photons: usize,
        excited: bool,
        j3: i8,
    ) -> Result<Self> {
        if space.motion != Motion::Restricted {
            return Err(Error::Incompatible {
                kind: "restricted basis state".into(),
                space: space.to_string(),
            });
        }
        let i = space
            .internal_index(photons, excited)
            .ok_or_else(|| Error::InvalidParameter(format!("|n={photons}⟩ not in {space}")))?;
        let m = match j3 {
            1 => 1,
            -1 => 0,
            _ => return Err(Error::InvalidParameter(format!("J3 must be ±1, got {j3}"))),
        };
        Ok(Self::basis(space, space.join(i, m)))
    }

    pub fn from_amplitudes(space: &SpaceDescriptor, amplitudes: Vec<C64>) -> Result<Self> {
        if amplitudes.len() != space.dim() {
            return Err(Error::Dimension(format!(
                "{} amplitudes for {}-dimensional {space}",
                amplitudes.len(),
                space.dim()
            )));
        }
        Ok(StateVector {
            amplitudes,
            space: space.clone(),
        })
    }

    pub fn norm_sqr(&self) -> f64 {
        self.amplitudes.iter().map(|a| a.norm_sqr()).sum()
    }

    pub fn norm(&self) -> f64 {
        self.norm_sqr().sqrt()
    }

    pub fn normalize(&mut self) -> f64 {
        let n = self.norm();
        if n > 0.0 {
            let inv = 1.0 / n;
            self.amplitudes.iter_mut().for_each(|a| *a *= inv);
        }
        n
    }

    pub fn inner(&self, other: &StateVector) -> C64 {
        self.amplitudes
            .iter()
            .zip(&other.amplitudes)
            .map(|(a, b)| a.conj() * b)
            .sum()
    }

    pub fn add_scaled(&mut self, s: C64, other: &StateVector) {
        for (a, b) in self.amplitudes.iter_mut().zip(&other.amplitudes) {
            *a += s * b;
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct DensityMatrix {
    pub matrix: DMatrix<C64>,
    pub space: SpaceDescriptor,
}

impl DensityMatrix {
    pub fn new(matrix: DMatrix<C64>, space: SpaceDescriptor) -> Result<Self> {
        let d = space.dim();
        if matrix.nrows() != d || matrix.ncols() != d {
            return Err(Error::Dimension(format!(
                "{}x{} density matrix on {d}-dimensional {space}",
                matrix.nrows(),
                matrix.ncols()
            )));
        }
        Ok(DensityMatrix { matrix, space })
    }

    pub fn from_pure(psi: &StateVector) -> Self {
        let v = nalgebra::DVector::from_column_slice(&psi.amplitudes);
        DensityMatrix {
            matrix: &v * v.adjoint(),
            space: psi.space.clone(),
        }
    }

    pub fn trace(&self) -> C64 {
        self.matrix.trace()
    }

    pub fn hermitian_defect(&self) -> f64 {
        (&self.matrix - self.matrix.adjoint()).camax()
    }

    pub fn symmetrize(&mut self) {
        let adj = self.matrix.adjoint();
        self.matrix += adj;
        self.matrix *= C64::new(0.5, 0.0);
    }

    pub fn eigenvalues(&self) -> Vec<f64> {
        let mut h = self.matrix.clone();
        let adj = h.adjoint();
        h += adj;
        h *= C64::new(0.5, 0.0);
        let mut ev: Vec<f64> = nalgebra::SymmetricEigen::new(h).eigenvalues.iter().copied().collect();
        ev.sort_by(f64::total_cmp);
        ev
    }

    pub fn min_eigenvalue(&self) -> f64 {
        self.eigenvalues().first().copied().unwrap_or(0.0)
    }

    /// Checks trace, Hermiticity and positivity.
    pub fn validate(&self) -> Result<()> {
        let tr = self.trace();
        if (tr - ONE).norm() > 1e-8 {
            return Err(Error::InvalidParameter(format!("Tr ρ = {tr}")));
        }
        let h = self.hermitian_defect();
        if h > 1e-10 {
            return Err(Error::InvalidParameter(format!("|ρ - ρ†| = {h:.3e}")));
        }
        let lmin = self.min_eigenvalue();
        if lmin < -1e-8 {
            return Err(Error::InvalidParameter(format!(
                "smallest eigenvalue {lmin:.3e}"
            )));
        }
        Ok(())
    }

    /// Trace norm `Σ|λ_i|` of the Hermitian part of `self - other`.
    pub fn trace_distance_raw(&self, other: &DensityMatrix) -> f64 {
        let diff = DensityMatrix {
            matrix: &self.matrix - &other.matrix,
            space: self.space.clone(),
        };
        diff.eigenvalues().iter().map(|l| l.abs()).sum()
    }

    pub fn partial_trace(&self, keep: &[Factor]) -> Result<DensityMatrix> {
        partial_trace(self, keep)
    }
}

/// `⟨ψ|A|ψ⟩` or `Tr(Aρ)`.
pub trait Expectation {
    fn expect_raw(&self, op: &Operator) -> Result<C64>;
}

impl Expectation for StateVector {
    fn expect_raw(&self, op: &Operator) -> Result<C64> {
        op.check_space(&self.space)?;
        let mut acc = ZERO;
        for i in 0..op.dim() {
            let mut row = ZERO;
            for (j, v) in op.matrix.row(i) {
                row += v * self.amplitudes[j];
            }
            acc += self.amplitudes[i].conj() * row;
        }
        Ok(acc)
    }
}

impl Expectation for DensityMatrix {
    fn expect_raw(&self, op: &Operator) -> Result<C64> {
        op.check_space(&self.space)?;
        let mut acc = ZERO;
        for i in 0..op.dim() {
            for (k, v) in op.matrix.row(i) {
                acc += v * self.matrix[(k, i)];
            }
        }
        Ok(acc)
    }
}

/// Expectation value; for Hermitian operators a negligible imaginary part
/// (below 1e-8) is dropped.
pub fn expectation<S: Expectation>(op: &Operator, state: &S) -> Result<C64> {
    let v = state.expect_raw(op)?;
    if op.hermitian && v.im.abs() < 1e-8 {
        Ok(C64::new(v.re, 0.0))
    } else {
        Ok(v)
    }
}

fn factor_layout(space: &SpaceDescriptor, keep: &[Factor]) -> Result<(Vec<usize>, Vec<bool>)> {
    let factors = space.factors();
    for k in keep {
        if !factors.iter().any(|(f, _)| f == k) {
            return Err(Error::Dimension(format!("factor {k:?} not present in {space}")));
        }
    }
    let dims = factors.iter().map(|(_, d)| *d).collect();
    let mask = factors.iter().map(|(f, _)| keep.contains(f)).collect();
    Ok((dims, mask))
}

/// For each composite index, its (kept, traced) index pair.
fn bipartition_indices(dims: &[usize], mask: &[bool]) -> (usize, usize, Vec<(usize, usize)>) {
    let total: usize = dims.iter().product();
    let dk: usize = dims.iter().zip(mask).filter(|(_, &m)| m).map(|(d, _)| d).product();
    let dt = total / dk;
    let mut out = Vec::with_capacity(total);
    for idx in 0..total {
        let mut rem = idx;
        let mut digits = vec![0usize; dims.len()];
        for f in (0..dims.len()).rev() {
            digits[f] = rem % dims[f];
            rem /= dims[f];
        }
        let (mut k, mut t) = (0usize, 0usize);
        for f in 0..dims.len() {
            if mask[f] {
                k = k * dims[f] + digits[f];
            } else {
                t = t * dims[f] + digits[f];
            }
        }
        out.push((k, t));
    }
    (dk, dt, out)
}

/// Reduced density matrix on the factors in `keep`, ordered as in the
/// parent space.
pub fn partial_trace(rho: &DensityMatrix, keep: &[Factor]) -> Result<DensityMatrix> {
    if keep.is_empty() {
        return Err(Error::InvalidParameter("partial trace must keep at least one factor".into()));
    }
    let (dims, mask) = factor_layout(&rho.space, keep)?;
    let (dk, dt, map) = bipartition_indices(&dims, &mask);
    let mut by_traced: Vec<Vec<(usize, usize)>> = vec![Vec::new(); dt];
    for (full, &(k, t)) in map.iter().enumerate() {
        by_traced[t].push((k, full));
    }
    let mut out = DMatrix::zeros(dk, dk);
    for group in &by_traced {
        for &(ki, fi) in group {
            for &(kj, fj) in group {
                out[(ki, kj)] += rho.matrix[(fi, fj)];
            }
        }
    }
    let space = reduced_space(&rho.space, keep);
    Ok(DensityMatrix { matrix: out, space })
}

/// Descriptor of the space left after keeping `keep`.
fn reduced_space(space: &SpaceDescriptor, keep: &[Factor]) -> SpaceDescriptor {
    let photon = keep.contains(&Factor::Photon);
    let atom = keep.contains(&Factor::Atom);
    let internal = match space.internal {
        Internal::Full { photon_cutoff } | Internal::Fock { photon_cutoff } if photon => {
            if atom {
                Internal::Full { photon_cutoff }
            } else {
                Internal::Fock { photon_cutoff }
            }
        }
        Internal::Full { .. } | Internal::Atom if atom => Internal::Atom,
        Internal::Manifold { excitations } if keep.contains(&Factor::Doublet) => {
            Internal::Manifold { excitations }
        }
        _ => Internal::Absent,
    };
    let motion = match &space.motion {
        Motion::Ladder { l_max } => {
            let kept: Vec<usize> = l_max
                .iter()
                .enumerate()
                .filter(|(m, _)| keep.contains(&Factor::Axis(*m)))
                .map(|(_, l)| *l)
                .collect();
            if kept.is_empty() {
                Motion::Absent
            } else {
                Motion::Ladder { l_max: kept }
            }
        }
        Motion::Restricted if keep.contains(&Factor::Restricted) => Motion::Restricted,
        _ => Motion::Absent,
    };
    SpaceDescriptor { internal, motion }
}

/// Photon-number density matrix obtained by tracing out everything but the
/// field.
pub fn field_density(rho: &DensityMatrix) -> Result<DMatrix<C64>> {
    Ok(partial_trace(rho, &[Factor::Photon])?.matrix)
}

/// Coefficient matrix of `psi` across the bipartition `part_a | rest`.
pub fn bipartite_matrix(psi: &StateVector, part_a: &[Factor]) -> Result<DMatrix<C64>> {
    let (dims, mask) = factor_layout(&psi.space, part_a)?;
    let (dk, dt, map) = bipartition_indices(&dims, &mask);
    let mut m = DMatrix::zeros(dk, dt);
    for (full, &(k, t)) in map.iter().enumerate() {
        m[(k, t)] = psi.amplitudes[full];
    }
    Ok(m)
}
