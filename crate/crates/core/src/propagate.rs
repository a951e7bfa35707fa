//! Taylor-series propagation of `exp(-i M t) ψ` for sparse `M`.
//!
//! The interval is split so that each substep has `‖M‖ τ ≤ 1`, and the
//! series of each substep is summed until the next term drops below the
//! requested tolerance relative to the vector norm.

use crate::error::{Error, Result};
use crate::sparse::CsrMatrix;
use crate::C64;

pub struct TaylorPropagator<'a> {
    matrix: &'a CsrMatrix,
    norm: f64,
    tol: f64,
    scratch: Vec<C64>,
    term: Vec<C64>,
}

impl<'a> TaylorPropagator<'a> {
    /// `matrix` need not be Hermitian; its 2-norm is bounded by the geometric
    /// mean of the row- and column-sum norms. `tol` bounds the truncated
    /// series remainder per substep.
    pub fn new(matrix: &'a CsrMatrix, tol: f64) -> Self {
        let row = matrix.row_sum_norm();
        let col = matrix.adjoint().row_sum_norm();
        TaylorPropagator {
            matrix,
            norm: (row * col).sqrt(),
            tol,
            scratch: vec![C64::new(0.0, 0.0); matrix.rows()],
            term: vec![C64::new(0.0, 0.0); matrix.rows()],
        }
    }

    pub fn norm_bound(&self) -> f64 {
        self.norm
    }

    /// Overwrites `psi` with `exp(-i M dt) psi`.
    pub fn step(&mut self, psi: &mut [C64], dt: f64) -> Result<()> {
        if dt == 0.0 || self.norm == 0.0 {
            return Ok(());
        }
        let substeps = (self.norm * dt.abs()).ceil().max(1.0) as usize;
        let tau = dt / substeps as f64;
        for _ in 0..substeps {
            self.substep(psi, tau)?;
        }
        Ok(())
    }

    fn substep(&mut self, psi: &mut [C64], tau: f64) -> Result<()> {
        let psi_norm = psi.iter().map(|a| a.norm_sqr()).sum::<f64>().sqrt();
        if !psi_norm.is_finite() {
            return Err(Error::NonFinite("state vector in Taylor propagation".into()));
        }
        if psi_norm == 0.0 {
            return Ok(());
        }
        self.term.copy_from_slice(psi);
        let factor = C64::new(0.0, -tau);
        for k in 1..=60 {
            self.matrix.mul_vec_into(&self.term, &mut self.scratch);
            let scale = factor / k as f64;
            let mut term_norm = 0.0;
            for (t, s) in self.term.iter_mut().zip(&self.scratch) {
                *t = scale * s;
                term_norm += t.norm_sqr();
            }
            for (p, t) in psi.iter_mut().zip(&self.term) {
                *p += t;
            }
            if term_norm.sqrt() <= self.tol * psi_norm {
                return Ok(());
            }
        }
        Err(Error::NoConvergence {
            solver: "Taylor propagator",
            residual: self.term.iter().map(|a| a.norm_sqr()).sum::<f64>().sqrt(),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn two_level_rotation() {
        // exp(-i σx t)|0⟩ = cos t |0⟩ - i sin t |1⟩
        let one = C64::new(1.0, 0.0);
        let m = CsrMatrix::from_triplets(2, 2, [(0, 1, one), (1, 0, one)]);
        let mut prop = TaylorPropagator::new(&m, 1e-15);
        let mut psi = vec![one, C64::new(0.0, 0.0)];
        let t = 7.3;
        prop.step(&mut psi, t).unwrap();
        assert!((psi[0] - C64::new(t.cos(), 0.0)).norm() < 1e-13);
        assert!((psi[1] - C64::new(0.0, -t.sin())).norm() < 1e-13);
    }

    #[test]
    fn non_hermitian_decay() {
        // M = -i γ: exp(-i M t) = exp(-γ t)
        let m = CsrMatrix::from_diagonal(&[C64::new(0.0, -0.5)]);
        let mut prop = TaylorPropagator::new(&m, 1e-15);
        let mut psi = vec![C64::new(1.0, 0.0)];
        prop.step(&mut psi, 4.0).unwrap();
        assert!((psi[0].re - (-2.0f64).exp()).abs() < 1e-14);
    }

    #[test]
    fn zero_matrix_is_identity() {
        let m = CsrMatrix::zeros(3, 3);
        let mut prop = TaylorPropagator::new(&m, 1e-15);
        let mut psi = vec![C64::new(0.2, 0.1); 3];
        let before = psi.clone();
        prop.step(&mut psi, 10.0).unwrap();
        assert_eq!(psi, before);
    }
}
