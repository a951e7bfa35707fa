//! Integer-order Bessel functions and the overlap sums that set the damping
//! of Rabi oscillations on the momentum ladder.

use std::f64::consts::PI;

/// `J_0..=J_order(x)` by Miller's backward recurrence, normalized with
/// `J_0 + 2 Σ J_2k = 1`.
pub fn bessel_j_sequence(order: usize, x: f64) -> Vec<f64> {
    if x == 0.0 {
        let mut out = vec![0.0; order + 1];
        out[0] = 1.0;
        return out;
    }
    let ax = x.abs();
    let start = (order.max(ax as usize) + 20 + (ax.sqrt() * 10.0) as usize) | 1;
    let mut vals = vec![0.0; start + 2];
    vals[start + 1] = 0.0;
    vals[start] = 1e-300;
    for m in (1..=start).rev() {
        vals[m - 1] = 2.0 * m as f64 / ax * vals[m] - vals[m + 1];
        if vals[m - 1].abs() > 1e250 {
            for v in vals[m - 1..].iter_mut() {
                *v *= 1e-250;
            }
        }
    }
    let norm = vals[0] + 2.0 * vals.iter().skip(2).step_by(2).sum::<f64>();
    let mut out: Vec<f64> = vals[..=order].iter().map(|v| v / norm).collect();
    if x < 0.0 {
        for (m, v) in out.iter_mut().enumerate() {
            if m % 2 == 1 {
                *v = -*v;
            }
        }
    }
    out
}

/// `J_0(x)` from the integral representation `(1/π)∫_0^π cos(x sin θ) dθ`,
/// evaluated with the periodic trapezoid rule (spectrally accurate).
pub fn bessel_j0(x: f64) -> f64 {
    let n = 64 + 2 * x.abs().ceil() as usize;
    let h = 2.0 * PI / n as f64;
    (0..n).map(|k| (x * (k as f64 * h).sin()).cos()).sum::<f64>() / n as f64
}

/// Smallest order `M ≥ x` whose tail `Σ_{m>M} J_m(x)²` is provably below
/// `tol`, using `|J_m(x)| ≤ (|x|/2)^m / m!`.
pub fn truncation_order(x: f64, tol: f64) -> usize {
    let half = x.abs() / 2.0;
    let mut m = (x.abs().ceil() as usize).max(1);
    loop {
        // log of (x/2)^m/m! for the first omitted term, squared, and a
        // geometric tail factor once the ratio half/(m+1) is below 1/2.
        let ln_term = (m + 1) as f64 * half.max(1e-300).ln() - ln_factorial(m + 1);
        let ratio = half / (m + 2) as f64;
        if ratio < 0.5 && 2.0 * ln_term + (1.0 / (1.0 - ratio * ratio)).ln() < tol.ln() {
            return m;
        }
        m += 1;
    }
}

fn ln_factorial(n: usize) -> f64 {
    (1..=n).map(|k| (k as f64).ln()).sum()
}

/// `Σ_m (-1)^m J_m(x)²` over all integers `m`.
fn alternating_square_sum(x: f64, tol: f64) -> f64 {
    let order = truncation_order(x, tol);
    let j = bessel_j_sequence(order, x);
    let tail: f64 = j
        .iter()
        .enumerate()
        .skip(1)
        .map(|(m, v)| if m % 2 == 0 { v * v } else { -v * v })
        .sum();
    j[0] * j[0] + 2.0 * tail
}

/// Overlap of the two atomic momentum wavepackets after a Rabi time `x = Ωt`,
/// as a truncated Bessel sum.
///
/// `dims = 1`: `Σ_m (-1)^m J_m(x)²`. `dims = 2`: the double sum
/// `Σ_{m1,m2} (-1)^{m1+m2} J_{m1}(x/2)² J_{m2}(x/2)²`.
pub fn overlap_oracle(dims: usize, x: f64) -> f64 {
    const TOL: f64 = 1e-14;
    match dims {
        1 => alternating_square_sum(x, TOL),
        2 => {
            let half = x / 2.0;
            let order = truncation_order(half, TOL);
            let j = bessel_j_sequence(order, half);
            let term = |m: i64| {
                let v = j[m.unsigned_abs() as usize];
                let sign = if m.rem_euclid(2) == 0 { 1.0 } else { -1.0 };
                sign * v * v
            };
            let range = -(order as i64)..=order as i64;
            let mut total = 0.0;
            for m1 in range.clone() {
                let t1 = term(m1);
                for m2 in range.clone() {
                    total += t1 * term(m2);
                }
            }
            total
        }
        _ => panic!("overlap_oracle supports 1 or 2 dimensions, got {dims}"),
    }
}
