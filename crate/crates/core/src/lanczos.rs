//! Restarted Lanczos iteration for the lowest eigenpair of a sparse
//! Hermitian matrix.

use nalgebra::{DMatrix, SymmetricEigen};

use crate::error::{Error, Result};
use crate::sparse::CsrMatrix;
use crate::C64;

#[derive(Clone, Debug)]
pub struct LanczosOptions {
    /// Krylov basis size per cycle.
    pub basis: usize,
    pub max_cycles: usize,
    /// Residual target `‖Hx − θx‖ ≤ tol · max(1, ‖H‖)`.
    pub tol: f64,
}

impl Default for LanczosOptions {
    fn default() -> Self {
        LanczosOptions {
            basis: 120,
            max_cycles: 60,
            tol: 1e-10,
        }
    }
}

#[derive(Clone, Debug)]
pub struct Eigenpair {
    pub value: f64,
    pub vector: Vec<C64>,
    pub residual: f64,
}

fn dot(a: &[C64], b: &[C64]) -> C64 {
    a.iter().zip(b).map(|(x, y)| x.conj() * y).sum()
}

fn norm(a: &[C64]) -> f64 {
    a.iter().map(|x| x.norm_sqr()).sum::<f64>().sqrt()
}

/// Lowest eigenpair of Hermitian `h`, starting from `start`.
pub fn lowest_eigenpair(h: &CsrMatrix, start: &[C64], opts: &LanczosOptions) -> Result<Eigenpair> {
    let n = h.rows();
    if n == 0 {
        return Err(Error::Dimension("empty matrix".into()));
    }
    if n == 1 {
        return Ok(Eigenpair {
            value: h.get(0, 0).re,
            vector: vec![C64::new(1.0, 0.0)],
            residual: 0.0,
        });
    }
    let scale = h.row_sum_norm().max(1.0);
    let mut x: Vec<C64> = start.to_vec();
    let nx = norm(&x);
    if nx == 0.0 {
        return Err(Error::InvalidParameter("zero Lanczos start vector".into()));
    }
    x.iter_mut().for_each(|v| *v /= nx);

    let m = opts.basis.min(n);
    let mut best = (f64::INFINITY, f64::INFINITY);
    for _ in 0..opts.max_cycles {
        let mut basis: Vec<Vec<C64>> = Vec::with_capacity(m);
        let mut alpha = Vec::with_capacity(m);
        let mut beta: Vec<f64> = Vec::with_capacity(m);
        basis.push(x.clone());
        let mut w = vec![C64::new(0.0, 0.0); n];
        for j in 0..m {
            h.mul_vec_into(&basis[j], &mut w);
            let a = dot(&basis[j], &w).re;
            alpha.push(a);
            // Full reorthogonalization, applied twice for stability.
            for _ in 0..2 {
                for q in &basis {
                    let c = dot(q, &w);
                    for (wi, qi) in w.iter_mut().zip(q) {
                        *wi -= c * qi;
                    }
                }
            }
            let b = norm(&w);
            if j + 1 == m || b < 1e-14 * scale {
                break;
            }
            beta.push(b);
            basis.push(w.iter().map(|v| v / b).collect());
        }
        let k = alpha.len();
        let t = DMatrix::from_fn(k, k, |i, j| {
            if i == j {
                alpha[i]
            } else if i + 1 == j {
                beta[i]
            } else if j + 1 == i {
                beta[j]
            } else {
                0.0
            }
        });
        let eig = SymmetricEigen::new(t);
        let (imin, theta) = eig
            .eigenvalues
            .iter()
            .enumerate()
            .min_by(|a, b| a.1.total_cmp(b.1))
            .map(|(i, v)| (i, *v))
            .expect("non-empty tridiagonal");
        let s = eig.eigenvectors.column(imin);
        let mut y = vec![C64::new(0.0, 0.0); n];
        for (q, &c) in basis.iter().zip(s.iter()) {
            for (yi, qi) in y.iter_mut().zip(q) {
                *yi += qi * c;
            }
        }
        let ny = norm(&y);
        y.iter_mut().for_each(|v| *v /= ny);
        h.mul_vec_into(&y, &mut w);
        let residual = w
            .iter()
            .zip(&y)
            .map(|(hv, v)| (hv - v * theta).norm_sqr())
            .sum::<f64>()
            .sqrt();
        best = (theta, residual);
        if residual <= opts.tol * scale || k == n {
            return Ok(Eigenpair {
                value: theta,
                vector: y,
                residual,
            });
        }
        x = y;
    }
    Err(Error::NoConvergence {
        solver: "Lanczos",
        residual: best.1,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn path_graph_ground_state() {
        // Tridiagonal -1 hopping on n sites: λ_min = -2 cos(π/(n+1)).
        let n = 200;
        let m = CsrMatrix::from_triplets(
            n,
            n,
            (0..n - 1).flat_map(|i| [(i, i + 1, C64::new(-1.0, 0.0)), (i + 1, i, C64::new(-1.0, 0.0))]),
        );
        let start: Vec<C64> = (0..n).map(|i| C64::new(1.0 + (i % 7) as f64 * 0.01, 0.0)).collect();
        let e = lowest_eigenpair(&m, &start, &LanczosOptions::default()).unwrap();
        let exact = -2.0 * (std::f64::consts::PI / (n as f64 + 1.0)).cos();
        assert!((e.value - exact).abs() < 1e-9);
    }

    #[test]
    fn dense_cross_check() {
        let n = 30;
        let trips = (0..n).flat_map(|i| {
            let mut v = vec![(i, i, C64::new((i as f64 * 0.7).sin(), 0.0))];
            if i + 3 < n {
                let c = C64::new(0.3, 0.1 * i as f64);
                v.push((i, i + 3, c));
                v.push((i + 3, i, c.conj()));
            }
            v
        });
        let m = CsrMatrix::from_triplets(n, n, trips);
        let dense = SymmetricEigen::new(m.to_dense());
        let exact = dense.eigenvalues.iter().copied().fold(f64::INFINITY, f64::min);
        let start = vec![C64::new(1.0, 0.5); n];
        let e = lowest_eigenpair(&m, &start, &LanczosOptions::default()).unwrap();
        assert!((e.value - exact).abs() < 1e-10);
    }
}
