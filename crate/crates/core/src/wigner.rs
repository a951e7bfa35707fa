//! Wigner distribution of the cavity field on a square phase-plane grid,
//! with peak finding and quadrature marginals.
//!
//! Coordinates are `α = x + i p`, normalized so that `∫ W d²α = 1` and the
//! vacuum has `W(0) = 2/π`.

use std::f64::consts::PI;

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hilbert::{DensityMatrix, Internal};
use crate::C64;

/// Largest grid half-width accepted.
const MAX_AMPLITUDE: f64 = 25.0;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WignerGrid {
    /// The grid spans `[−A, A]²`.
    pub half_width: f64,
    pub step: f64,
    /// Row-major over `p` then `x`: `values[ip · n + ix]`.
    pub values: Vec<f64>,
}

impl WignerGrid {
    pub fn new(half_width: f64, step: f64) -> Result<Self> {
        if !(half_width > 0.0 && step > 0.0 && step <= half_width) || half_width > MAX_AMPLITUDE {
            return Err(Error::InvalidParameter(format!(
                "Wigner grid needs 0 < δ ≤ A ≤ {MAX_AMPLITUDE}, got A = {half_width}, δ = {step}"
            )));
        }
        let grid = WignerGrid {
            half_width,
            step,
            values: Vec::new(),
        };
        let n = grid.size();
        Ok(WignerGrid {
            values: vec![0.0; n * n],
            ..grid
        })
    }

    /// Points per axis.
    pub fn size(&self) -> usize {
        (2.0 * self.half_width / self.step).round() as usize + 1
    }

    pub fn coord(&self, i: usize) -> f64 {
        -self.half_width + i as f64 * self.step
    }

    pub fn at(&self, ix: usize, ip: usize) -> f64 {
        self.values[ip * self.size() + ix]
    }

    /// `Σ W δ²`, which should be 1 when the grid covers the state.
    pub fn normalization(&self) -> f64 {
        self.values.iter().sum::<f64>() * self.step * self.step
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    /// `log₁₀|W|`, with zeros mapped to −∞.
    pub fn log_abs(&self) -> Vec<f64> {
        self.values.iter().map(|v| v.abs().log10()).collect()
    }

    /// Marginal `∫ W dp` as a function of `x`.
    pub fn x_marginal(&self) -> Vec<f64> {
        let n = self.size();
        (0..n)
            .map(|ix| (0..n).map(|ip| self.at(ix, ip)).sum::<f64>() * self.step)
            .collect()
    }

    /// Marginal `∫ W dx` as a function of `p`.
    pub fn p_marginal(&self) -> Vec<f64> {
        let n = self.size();
        (0..n)
            .map(|ip| (0..n).map(|ix| self.at(ix, ip)).sum::<f64>() * self.step)
            .collect()
    }

    /// 3×3 box average; edge points average over the neighbours present.
    pub fn smoothed(&self) -> Vec<f64> {
        let n = self.size() as isize;
        let mut out = vec![0.0; self.values.len()];
        for ip in 0..n {
            for ix in 0..n {
                let mut acc = 0.0;
                let mut count = 0.0;
                for dp in -1..=1 {
                    for dx in -1..=1 {
                        let (x, p) = (ix + dx, ip + dp);
                        if x >= 0 && x < n && p >= 0 && p < n {
                            acc += self.values[(p * n + x) as usize];
                            count += 1.0;
                        }
                    }
                }
                out[(ip * n + ix) as usize] = acc / count;
            }
        }
        out
    }

    /// Peaks of the smoothed distribution whose topographic prominence is
    /// at least `fraction` of the smoothed global maximum. The global
    /// maximum's prominence is its height.
    pub fn peaks(&self, fraction: f64) -> Vec<Peak> {
        let s = self.smoothed();
        let n = self.size();
        let global = s.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut order: Vec<usize> = (0..s.len()).collect();
        order.sort_by(|&a, &b| s[b].total_cmp(&s[a]));
        // Union-find flood from the top: each component remembers its
        // highest point; when two meet, the lower one's prominence is its
        // height minus the current level.
        let mut parent: Vec<usize> = vec![usize::MAX; s.len()];
        let mut top: Vec<usize> = vec![0; s.len()];
        let mut prominence: Vec<Option<f64>> = vec![None; s.len()];
        fn find(parent: &mut [usize], mut i: usize) -> usize {
            while parent[i] != i {
                parent[i] = parent[parent[i]];
                i = parent[i];
            }
            i
        }
        for &k in &order {
            parent[k] = k;
            top[k] = k;
            let (kx, kp) = ((k % n) as isize, (k / n) as isize);
            for dp in -1..=1 {
                for dx in -1..=1 {
                    let (x, p) = (kx + dx, kp + dp);
                    if (dx, dp) == (0, 0) || x < 0 || p < 0 || x >= n as isize || p >= n as isize {
                        continue;
                    }
                    let nb = p as usize * n + x as usize;
                    if parent[nb] == usize::MAX {
                        continue;
                    }
                    let (ra, rb) = (find(&mut parent, k), find(&mut parent, nb));
                    if ra == rb {
                        continue;
                    }
                    let (hi, lo) = if s[top[ra]] >= s[top[rb]] { (ra, rb) } else { (rb, ra) };
                    prominence[top[lo]] = Some(s[top[lo]] - s[k]);
                    parent[lo] = hi;
                }
            }
        }
        let mut peaks: Vec<Peak> = Vec::new();
        for (k, prom) in prominence.iter().enumerate() {
            let prom = match prom {
                Some(p) => *p,
                None if parent[k] == k && top[k] == k => s[k],
                None => continue,
            };
            if prom >= fraction * global && prom > 0.0 {
                peaks.push(Peak {
                    x: self.coord(k % n),
                    p: self.coord(k / n),
                    height: s[k],
                    prominence: prom,
                });
            }
        }
        peaks.sort_by(|a, b| b.height.total_cmp(&a.height));
        peaks
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Peak {
    pub x: f64,
    pub p: f64,
    pub height: f64,
    pub prominence: f64,
}

/// Reflection relating two peaks, if any holds within `tol`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mirror {
    /// `x → −x`.
    AcrossP,
    /// `p → −p`.
    AcrossX,
}

pub fn mirror_relation(a: &Peak, b: &Peak, tol: f64) -> Option<Mirror> {
    if (a.x + b.x).abs() <= tol && (a.p - b.p).abs() <= tol {
        Some(Mirror::AcrossP)
    } else if (a.x - b.x).abs() <= tol && (a.p + b.p).abs() <= tol {
        Some(Mirror::AcrossX)
    } else {
        None
    }
}

/// Photon-number density matrix of a Fock-space [`DensityMatrix`].
fn fock_matrix(rho: &DensityMatrix) -> Result<&DMatrix<C64>> {
    match rho.space.internal {
        Internal::Fock { .. } if rho.space.motion == crate::hilbert::Motion::Absent => Ok(&rho.matrix),
        _ => Err(Error::Incompatible {
            kind: "Wigner distribution".into(),
            space: rho.space.to_string(),
        }),
    }
}

/// `W(α)` at one phase-plane point. With `x = 4|α|²` and `k = n − m`, the
/// Wigner function of `|n⟩⟨m|` is `(2/π)(−1)^m e^{ikθ} f_m^k(x)`, where
/// `f_m^k = √(m!/(m+k)!) x^{k/2} L_m^k(x) e^{−x/2}` is a normalized Laguerre
/// function. For each `k` the `f_m^k` follow a three-term recurrence in `m`,
/// run here with a running exponent so that neither the Gaussian start nor
/// the growth through the classically forbidden region leaves the `f64`
/// range. `sqrt` holds `√j` for `j ≤ dim`.
fn wigner_point(rho: &DMatrix<C64>, alpha: C64, sqrt: &[f64]) -> f64 {
    const RESCALE: f64 = 1e100;
    let d = rho.nrows();
    let x = 4.0 * alpha.norm_sqr();
    let theta = alpha.arg();
    let ln_x = x.ln();
    let mut total = 0.0;
    // ln f_0^k
    let mut ln_start = -0.5 * x;
    for k in 0..d {
        if k > 0 {
            if x == 0.0 {
                break;
            }
            ln_start += 0.5 * (ln_x - (k as f64).ln());
        }
        let phase = C64::from_polar(1.0, k as f64 * theta);
        let kf = k as f64;
        let mut ln_scale = ln_start;
        let mut factor = ln_scale.exp();
        let (mut prev, mut f) = (0.0, 1.0);
        let mut acc = 0.0;
        for m in 0..d - k {
            let c = if k == 0 {
                rho[(m, m)].re
            } else {
                2.0 * (rho[(m, m + k)] * phase).re
            };
            let signed = if m % 2 == 0 { c } else { -c };
            acc += signed * f * factor;
            let mf = m as f64;
            let next = ((2.0 * mf + kf + 1.0 - x) * f - sqrt[m] * sqrt[m + k] * prev)
                / (sqrt[m + 1] * sqrt[m + k + 1]);
            prev = f;
            f = next;
            if f.abs() > RESCALE {
                f /= RESCALE;
                prev /= RESCALE;
                ln_scale += RESCALE.ln();
                factor = ln_scale.exp();
            }
        }
        total += acc;
    }
    2.0 / PI * total
}

fn sqrt_table(d: usize) -> Vec<f64> {
    (0..=d + 1).map(|j| (j as f64).sqrt()).collect()
}

/// Field quadrature moments: `(⟨α⟩, standard deviation of the wider
/// quadrature)`, with quadratures `(â + â†)/2` and `(â − â†)/(2i)`.
pub fn field_spread(rho: &DensityMatrix) -> Result<(C64, f64)> {
    let r = fock_matrix(rho)?;
    let d = r.nrows();
    let mut a = C64::new(0.0, 0.0);
    let mut a2 = C64::new(0.0, 0.0);
    let mut n = 0.0;
    for k in 1..d {
        let s = (k as f64).sqrt();
        a += r[(k, k - 1)] * s;
        n += r[(k, k)].re * k as f64;
        if k >= 2 {
            a2 += r[(k, k - 2)] * (s * ((k - 1) as f64).sqrt());
        }
    }
    // ⟨X²⟩ = (⟨a²⟩ + ⟨a†²⟩ + 2⟨n⟩ + 1)/4, ⟨P²⟩ = (2⟨n⟩ + 1 − ⟨a²⟩ − ⟨a†²⟩)/4.
    let vx = (2.0 * a2.re + 2.0 * n + 1.0) / 4.0 - a.re * a.re;
    let vp = (2.0 * n + 1.0 - 2.0 * a2.re) / 4.0 - a.im * a.im;
    Ok((a, vx.max(vp).max(0.0).sqrt()))
}

/// Smallest half-width covering ≥ 4 standard deviations around the mean.
pub fn recommended_half_width(rho: &DensityMatrix) -> Result<f64> {
    let (a, sd) = field_spread(rho)?;
    Ok(a.re.abs().max(a.im.abs()) + 4.0 * sd)
}

/// Evaluates `W(α) = (2/π) Tr[ρ D(α) Π D(−α)]` on every point of `grid`.
pub fn wigner(rho_field: &DensityMatrix, grid: &WignerGrid) -> Result<WignerGrid> {
    let r = fock_matrix(rho_field)?;
    let needed = recommended_half_width(rho_field)?;
    if needed > grid.half_width {
        log::warn!(
            "Wigner grid A = {} covers less than 4 standard deviations of the field; use A ≥ {:.2}",
            grid.half_width,
            needed
        );
    }
    let n = grid.size();
    let sqrt = sqrt_table(r.nrows());
    let values: Vec<f64> = (0..n * n)
        .into_par_iter()
        .map(|k| wigner_point(r, C64::new(grid.coord(k % n), grid.coord(k / n)), &sqrt))
        .collect();
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("Wigner grid".into()));
    }
    Ok(WignerGrid {
        values,
        ..grid.clone()
    })
}

/// `W` at arbitrary points.
pub fn wigner_at(rho_field: &DensityMatrix, points: &[C64]) -> Result<Vec<f64>> {
    let r = fock_matrix(rho_field)?;
    let sqrt = sqrt_table(r.nrows());
    Ok(points.par_iter().map(|&a| wigner_point(r, a, &sqrt)).collect())
}

/// Minimum of `W` along the straight segment between two peaks, sampled
/// at `samples` points including the ends.
pub fn segment_minimum(rho_field: &DensityMatrix, a: &Peak, b: &Peak, samples: usize) -> Result<(f64, C64)> {
    let samples = samples.max(2);
    let pts: Vec<C64> = (0..samples)
        .map(|k| {
            let t = k as f64 / (samples - 1) as f64;
            C64::new(a.x + t * (b.x - a.x), a.p + t * (b.p - a.p))
        })
        .collect();
    let w = wigner_at(rho_field, &pts)?;
    let (k, v) = w
        .iter()
        .enumerate()
        .min_by(|x, y| x.1.total_cmp(y.1))
        .map(|(k, v)| (k, *v))
        .expect("at least two samples");
    Ok((v, pts[k]))
}

/// Probability density of the quadrature `(â + â†)/2` at each `x`,
/// computed from `ρ` through oscillator eigenfunctions.
pub fn x_quadrature_density(rho_field: &DensityMatrix, xs: &[f64]) -> Result<Vec<f64>> {
    let r = fock_matrix(rho_field)?;
    let d = r.nrows();
    Ok(xs
        .iter()
        .map(|&x| {
            let mut psi = vec![0.0; d];
            psi[0] = (2.0 / PI).powf(0.25) * (-x * x).exp();
            if d > 1 {
                psi[1] = 2.0 * x * psi[0];
            }
            for k in 1..d - 1 {
                psi[k + 1] = (2.0 * x * psi[k] - (k as f64).sqrt() * psi[k - 1]) / ((k + 1) as f64).sqrt();
            }
            let mut acc = 0.0;
            for m in 0..d {
                for n in 0..d {
                    acc += (r[(m, n)] * psi[m] * psi[n]).re;
                }
            }
            acc
        })
        .collect())
}

/// `Σ |∫W dp − P(x)| δ` over the grid's `x` axis.
pub fn marginal_l1_error(rho_field: &DensityMatrix, grid: &WignerGrid) -> Result<f64> {
    let xs: Vec<f64> = (0..grid.size()).map(|i| grid.coord(i)).collect();
    let direct = x_quadrature_density(rho_field, &xs)?;
    Ok(grid
        .x_marginal()
        .iter()
        .zip(&direct)
        .map(|(a, b)| (a - b).abs())
        .sum::<f64>()
        * grid.step)
}
