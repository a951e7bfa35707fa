//! Heterodyne unraveling of the open system: stochastic Schrödinger
//! equation, filtered photocurrent, switch detection, branch correlations
//! and ensemble statistics.
//!
//! Random numbers come from `Xoshiro256PlusPlus`. A run with master seed
//! `s` and stream `k` seeds the generator with `seed_from_u64(s)` and then
//! applies `jump()` `k` times, so distinct streams never overlap.

use rand::SeedableRng;
use rand_distr::{Distribution, StandardNormal};
use rand_xoshiro::Xoshiro256PlusPlus;
use rayon::prelude::*;
use std::cmp::Reverse;
use std::collections::BinaryHeap;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hilbert::{build_operator, OperatorKind, StateVector};
use crate::open::{build_open_system, OpenModelParams, OpenSystem};
use crate::propagate::TaylorPropagator;
use crate::sparse::CsrMatrix;
use crate::C64;

/// Generator for `(seed, stream)`.
pub fn stream_rng(seed: u64, stream: u64) -> Xoshiro256PlusPlus {
    let mut rng = Xoshiro256PlusPlus::seed_from_u64(seed);
    for _ in 0..stream {
        rng.jump();
    }
    rng
}

/// Complex Wiener increment with `⟨dZ* dZ⟩ = dt`, `⟨dZ dZ⟩ = 0`.
pub fn wiener_increment(rng: &mut Xoshiro256PlusPlus, dt: f64) -> C64 {
    let s = (0.5 * dt).sqrt();
    let re: f64 = StandardNormal.sample(rng);
    let im: f64 = StandardNormal.sample(rng);
    C64::new(re * s, im * s)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryConfig {
    pub model: OpenModelParams,
    /// Step in units of 1/κ.
    pub dt: f64,
    /// Duration in units of 1/κ.
    pub duration: f64,
    /// Detector linewidth in units of κ.
    pub kappa_d: f64,
    pub seed: u64,
    pub stream: u64,
    /// Steps between recorded samples.
    pub record_stride: usize,
}

impl TrajectoryConfig {
    pub fn validate(&self) -> Result<()> {
        self.model.validate()?;
        let mut errs = Vec::new();
        let rate = self.model.max_rate();
        if self.dt.is_nan() || self.dt <= 0.0 || self.dt / self.model.kappa * rate > 0.02 * (1.0 + 1e-12) {
            errs.push(format!("dt = {} must be positive with dt·max(Ω, ε, κ) ≤ 0.02", self.dt));
        }
        if !(self.duration > 0.0 && self.duration.is_finite()) {
            errs.push(format!("duration must be positive, got {}", self.duration));
        }
        if !(self.kappa_d > 0.0 && self.kappa_d.is_finite()) {
            errs.push(format!("κ_D must be positive, got {}", self.kappa_d));
        }
        if self.record_stride == 0 {
            errs.push("record stride must be at least 1".into());
        }
        if errs.is_empty() {
            Ok(())
        } else {
            Err(Error::Validation(errs))
        }
    }

    pub fn steps(&self) -> u64 {
        (self.duration / self.dt).round() as u64
    }
}

/// Conditioned expectations and filtered current sampled along one
/// trajectory. Times are in units of 1/κ.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct HeterodyneRecord {
    pub times: Vec<f64>,
    pub current: Vec<C64>,
    pub sigma_minus: Vec<C64>,
    /// `⟨(Ĵ₊ + Ĵ₋) σ̂₋⟩`.
    pub branch_correlation: Vec<C64>,
    /// `⟨σ̂₃ Ĵ₃⟩`.
    pub parity: Vec<f64>,
    pub field: Vec<C64>,
    pub photons: Vec<f64>,
    pub seed: u64,
    pub stream: u64,
    pub switch_times: Vec<f64>,
    /// Largest photon-tail population seen at a sample.
    pub max_photon_tail: f64,
}

/// Operators measured along trajectories.
pub struct Observables {
    a: CsrMatrix,
    n: Vec<f64>,
    sigma_minus: CsrMatrix,
    branch: CsrMatrix,
    parity: Vec<f64>,
    tail_start: usize,
}

impl Observables {
    pub fn new(sys: &OpenSystem) -> Result<Self> {
        let op = |k| build_operator(k, &sys.space).map(|o| o.matrix);
        let sm = op(OperatorKind::SigmaMinus)?;
        let j1 = op(OperatorKind::J1)?;
        let n_max = sys.n_max();
        Ok(Observables {
            a: op(OperatorKind::Annihilate)?,
            n: op(OperatorKind::Number)?.diagonal().iter().map(|v| v.re).collect(),
            branch: j1.matmul(&sm),
            sigma_minus: sm,
            parity: op(OperatorKind::ParityRestricted)?.diagonal().iter().map(|v| v.re).collect(),
            tail_start: (n_max - 1) * sys.space.dim() / (n_max + 1),
        })
    }

    fn expect(m: &CsrMatrix, psi: &[C64]) -> C64 {
        let mut acc = C64::new(0.0, 0.0);
        for (i, p) in psi.iter().enumerate() {
            let mut row = C64::new(0.0, 0.0);
            for (j, v) in m.row(i) {
                row += v * psi[j];
            }
            acc += p.conj() * row;
        }
        acc
    }

    fn diag(d: &[f64], psi: &[C64]) -> f64 {
        d.iter().zip(psi).map(|(v, p)| v * p.norm_sqr()).sum()
    }

    pub fn field(&self, psi: &[C64]) -> C64 {
        Self::expect(&self.a, psi)
    }

    pub fn photons(&self, psi: &[C64]) -> f64 {
        Self::diag(&self.n, psi)
    }

    pub fn sigma_minus(&self, psi: &[C64]) -> C64 {
        Self::expect(&self.sigma_minus, psi)
    }

    pub fn branch_correlation(&self, psi: &[C64]) -> C64 {
        Self::expect(&self.branch, psi)
    }

    pub fn parity(&self, psi: &[C64]) -> f64 {
        Self::diag(&self.parity, psi)
    }

    pub fn photon_tail(&self, psi: &[C64]) -> f64 {
        psi[self.tail_start..].iter().map(|p| p.norm_sqr()).sum()
    }
}

/// Integrator state for one trajectory.
pub struct SseStepper<'a> {
    propagator: TaylorPropagator<'a>,
    jump: &'a CsrMatrix,
    scratch: Vec<C64>,
}

impl<'a> SseStepper<'a> {
    /// `heff` is `H − (i/2) L†L`; `jump` is `L`.
    pub fn new(heff: &'a CsrMatrix, jump: &'a CsrMatrix) -> Self {
        SseStepper {
            propagator: TaylorPropagator::new(heff, 1e-12),
            jump,
            scratch: vec![C64::new(0.0, 0.0); heff.rows()],
        }
    }

    /// One step of `d|ψ⟩ = [−i H_eff dt + L dq]|ψ⟩` with
    /// `dq = ⟨L†⟩ dt + dZ`. The deterministic part is propagated exactly,
    /// the measurement term to Euler–Maruyama order. `psi` must be
    /// normalized on entry and is renormalized on exit. Returns `dq`.
    pub fn step(&mut self, psi: &mut [C64], dt: f64, dz: C64) -> Result<C64> {
        self.jump.mul_vec_into(psi, &mut self.scratch);
        let l_mean: C64 = psi.iter().zip(&self.scratch).map(|(p, l)| p.conj() * l).sum();
        let dq = l_mean.conj() * dt + dz;
        self.propagator.step(psi, dt)?;
        for (p, l) in psi.iter_mut().zip(&self.scratch) {
            *p += l * dq;
        }
        let norm = psi.iter().map(|p| p.norm_sqr()).sum::<f64>().sqrt();
        if !norm.is_finite() {
            return Err(Error::NonFinite("trajectory state".into()));
        }
        if norm < 1e-12 {
            return Err(Error::NormCollapse(norm));
        }
        let inv = 1.0 / norm;
        psi.iter_mut().for_each(|p| *p *= inv);
        Ok(dq)
    }
}

/// Single-step form of the stochastic Schrödinger equation on a built
/// system. Returns the new normalized state and the `dq` used.
pub fn sse_step(sys: &OpenSystem, psi: &StateVector, dt: f64, dz: C64) -> Result<(StateVector, C64)> {
    let heff = sys.effective_hamiltonian();
    let mut stepper = SseStepper::new(&heff, &sys.jump.matrix);
    let mut out = psi.clone();
    let dq = stepper.step(&mut out.amplitudes, dt, dz)?;
    Ok((out, dq))
}

/// Integrates one trajectory from `cfg.model.initial_state`. The current
/// obeys `dI = −κ_D (I dt − dq/√κ)`.
pub fn run_trajectory(cfg: &TrajectoryConfig) -> Result<HeterodyneRecord> {
    run_trajectory_with_noise(cfg, true)
}

/// As [`run_trajectory`]; with `noise = false` every `dZ` is zero and the
/// run is deterministic.
pub fn run_trajectory_with_noise(cfg: &TrajectoryConfig, noise: bool) -> Result<HeterodyneRecord> {
    cfg.validate()?;
    let sys = build_open_system(&cfg.model)?;
    let obs = Observables::new(&sys)?;
    let heff = sys.effective_hamiltonian();
    let mut stepper = SseStepper::new(&heff, &sys.jump.matrix);
    let mut rng = stream_rng(cfg.seed, cfg.stream);
    let mut psi = cfg.model.initial_state.to_state(&sys.space)?.amplitudes;
    let kappa = cfg.model.kappa;
    let dt = cfg.dt / kappa;
    let kd = cfg.kappa_d * kappa;
    let steps = cfg.steps();
    let stride = cfg.record_stride as u64;
    let mut rec = HeterodyneRecord {
        seed: cfg.seed,
        stream: cfg.stream,
        ..HeterodyneRecord::default()
    };
    let mut current = C64::new(0.0, 0.0);
    let sample = |rec: &mut HeterodyneRecord, t: f64, psi: &[C64], current: C64| -> Result<()> {
        let tail = obs.photon_tail(psi);
        rec.max_photon_tail = rec.max_photon_tail.max(tail);
        if tail > 1e-6 {
            return Err(Error::PhotonTail {
                population: tail,
                n_max: cfg.model.n_max,
            });
        }
        rec.times.push(t * kappa);
        rec.current.push(current);
        rec.sigma_minus.push(obs.sigma_minus(psi));
        rec.branch_correlation.push(obs.branch_correlation(psi));
        rec.parity.push(obs.parity(psi));
        rec.field.push(obs.field(psi));
        rec.photons.push(obs.photons(psi));
        Ok(())
    };
    sample(&mut rec, 0.0, &psi, current)?;
    let sqrt_kappa = kappa.sqrt();
    for k in 1..=steps {
        let dz = if noise {
            wiener_increment(&mut rng, dt)
        } else {
            C64::new(0.0, 0.0)
        };
        let dq = stepper.step(&mut psi, dt, dz)?;
        current += -kd * (current * dt - dq / sqrt_kappa);
        if k % stride == 0 || k == steps {
            sample(&mut rec, k as f64 * dt, &psi, current)?;
        }
    }
    Ok(rec)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SwitchConfig {
    /// A new level must persist for this many `1/κ_D`.
    pub persistence: f64,
    pub kappa_d: f64,
    /// Ashman separation `D` required to call the histogram bimodal.
    pub min_separation: f64,
    /// Samples before this time (units of 1/κ) are ignored.
    pub skip_until: f64,
}

impl SwitchConfig {
    pub fn new(kappa_d: f64) -> Self {
        SwitchConfig {
            persistence: 5.0,
            kappa_d,
            min_separation: 2.0,
            skip_until: 0.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SwitchReport {
    pub bimodal: bool,
    pub threshold: f64,
    /// Ashman's `D = √2 |μ₁ − μ₂| / √(σ₁² + σ₂²)` of the two classes.
    pub separation: f64,
    pub switch_times: Vec<f64>,
    /// Per-sample level (−1 below, +1 above the threshold) after
    /// persistence filtering; zero for skipped samples.
    pub levels: Vec<i8>,
}

/// Two-component Gaussian mixture fitted by expectation maximization,
/// started from the Otsu split. Returns `(threshold, separation)` where
/// the threshold is the Otsu cut and the separation is Ashman's `D` of the
/// fitted components. A unimodal sample collapses both components onto
/// each other and yields a small `D`.
pub fn two_level_threshold(values: &[f64]) -> Option<(f64, f64)> {
    if values.len() < 4 {
        return None;
    }
    let mut v: Vec<f64> = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    let mut prefix = vec![0.0; n + 1];
    for (i, x) in v.iter().enumerate() {
        prefix[i + 1] = prefix[i] + x;
    }
    let mut best: Option<(f64, usize)> = None;
    for k in 1..n {
        if v[k] == v[k - 1] {
            continue;
        }
        let (n1, n2) = (k as f64, (n - k) as f64);
        let m1 = prefix[k] / n1;
        let m2 = (prefix[n] - prefix[k]) / n2;
        let between = n1 * n2 * (m1 - m2).powi(2);
        if best.is_none_or(|(b, _)| between > b) {
            best = Some((between, k));
        }
    }
    let (_, k) = best?;
    let threshold = 0.5 * (v[k - 1] + v[k]);
    let moments = |s: &[f64]| {
        let m = s.iter().sum::<f64>() / s.len() as f64;
        (m, s.iter().map(|x| (x - m).powi(2)).sum::<f64>() / s.len() as f64)
    };
    let (mut mu1, mut var1) = moments(&v[..k]);
    let (mut mu2, mut var2) = moments(&v[k..]);
    let total_var = moments(&v).1;
    if total_var == 0.0 {
        return Some((threshold, 0.0));
    }
    let floor = 1e-12 * total_var;
    if var1 + var2 == 0.0 {
        return Some((threshold, f64::INFINITY));
    }
    let mut w1 = k as f64 / n as f64;
    let gauss = |x: f64, m: f64, s2: f64| (-(x - m).powi(2) / (2.0 * s2)).exp() / s2.sqrt();
    for _ in 0..500 {
        var1 = var1.max(floor);
        var2 = var2.max(floor);
        let (mut s0, mut s1, mut s2) = ([0.0; 2], [0.0; 2], [0.0; 2]);
        for &x in &v {
            let p1 = w1 * gauss(x, mu1, var1);
            let p2 = (1.0 - w1) * gauss(x, mu2, var2);
            let r = if p1 + p2 > 0.0 { p1 / (p1 + p2) } else { f64::from(x < threshold) };
            for (c, r) in [(0, r), (1, 1.0 - r)] {
                s0[c] += r;
                s1[c] += r * x;
                s2[c] += r * x * x;
            }
        }
        if s0[0] < 1.0 || s0[1] < 1.0 {
            return Some((threshold, 0.0));
        }
        let (o1, o2) = (mu1, mu2);
        mu1 = s1[0] / s0[0];
        mu2 = s1[1] / s0[1];
        var1 = (s2[0] / s0[0] - mu1 * mu1).max(floor);
        var2 = (s2[1] / s0[1] - mu2 * mu2).max(floor);
        w1 = s0[0] / n as f64;
        if (mu1 - o1).abs().max((mu2 - o2).abs()) < 1e-10 * total_var.sqrt() {
            break;
        }
    }
    let separation = 2f64.sqrt() * (mu1 - mu2).abs() / (var1 + var2).sqrt();
    Some((threshold, separation))
}

/// Classifies `Re I` into two levels and returns persistent switches.
/// Runs shorter than the persistence time are removed shortest first, each
/// merging with its neighbours, until every remaining run persists.
pub fn detect_switches(record: &HeterodyneRecord, cfg: &SwitchConfig) -> SwitchReport {
    let first = record.times.iter().position(|&t| t >= cfg.skip_until).unwrap_or(record.times.len());
    let values: Vec<f64> = record.current[first..].iter().map(|c| c.re).collect();
    let mut report = SwitchReport {
        bimodal: false,
        threshold: f64::NAN,
        separation: 0.0,
        switch_times: Vec::new(),
        levels: vec![0; record.times.len()],
    };
    let Some((threshold, separation)) = two_level_threshold(&values) else {
        return report;
    };
    report.threshold = threshold;
    report.separation = separation;
    if separation < cfg.min_separation {
        return report;
    }
    report.bimodal = true;
    let times = &record.times[first..];
    let hold = cfg.persistence / cfg.kappa_d;
    let mut runs: Vec<Run> = Vec::new();
    let mut start = 0;
    for i in 1..=values.len() {
        if i == values.len() || (values[i] > threshold) != (values[start] > threshold) {
            runs.push(Run {
                start,
                end: i,
                level: if values[start] > threshold { 1 } else { -1 },
                prev: runs.len().checked_sub(1),
                next: None,
                alive: true,
            });
            start = i;
        }
    }
    for i in 0..runs.len().saturating_sub(1) {
        runs[i].next = Some(i + 1);
    }
    let span = |r: &Run| {
        let end = if r.end < times.len() { times[r.end] } else { times[times.len() - 1] };
        end - times[r.start]
    };
    let mut heap: BinaryHeap<Reverse<(OrdF64, usize)>> =
        runs.iter().enumerate().map(|(i, r)| Reverse((OrdF64(span(r)), i))).collect();
    while let Some(Reverse((OrdF64(d), i))) = heap.pop() {
        if !runs[i].alive || d != span(&runs[i]) {
            continue;
        }
        if d >= hold {
            break;
        }
        let (prev, next) = (runs[i].prev, runs[i].next);
        if prev.is_none() && next.is_none() {
            break;
        }
        // Fold the run and its neighbours into the earliest of them.
        let head = prev.unwrap_or(i);
        let mut end = runs[i].end;
        let mut after = next;
        if let Some(nx) = next {
            end = runs[nx].end;
            after = runs[nx].next;
            runs[nx].alive = false;
        }
        if prev.is_some() {
            runs[i].alive = false;
        } else if let Some(nx) = next {
            runs[i].level = runs[nx].level;
        }
        runs[head].end = end;
        runs[head].next = after;
        if let Some(a) = after {
            runs[a].prev = Some(head);
        }
        heap.push(Reverse((OrdF64(span(&runs[head])), head)));
    }
    let kept: Vec<&Run> = runs.iter().filter(|r| r.alive).collect();
    for r in &kept {
        for l in &mut report.levels[first + r.start..first + r.end] {
            *l = r.level;
        }
    }
    report.switch_times = kept.iter().skip(1).map(|r| times[r.start]).collect();
    report
}

struct Run {
    start: usize,
    end: usize,
    level: i8,
    prev: Option<usize>,
    next: Option<usize>,
    alive: bool,
}

#[derive(Clone, Copy)]
struct OrdF64(f64);

impl PartialEq for OrdF64 {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other).is_eq()
    }
}

impl Eq for OrdF64 {}

impl PartialOrd for OrdF64 {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for OrdF64 {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.0.total_cmp(&other.0)
    }
}

/// Pearson correlation of two equally long series.
pub fn correlation(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len().min(b.len()) as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let mut sab = 0.0;
    let mut saa = 0.0;
    let mut sbb = 0.0;
    for (x, y) in a.iter().zip(b) {
        sab += (x - ma) * (y - mb);
        saa += (x - ma).powi(2);
        sbb += (y - mb).powi(2);
    }
    sab / (saa * sbb).sqrt()
}

/// Dominant nonzero angular frequency of a uniformly sampled complex
/// series (mean removed), searching `|ω|` up to the Nyquist limit.
pub fn dominant_frequency(series: &[C64], sample_interval: f64) -> Option<f64> {
    let n = series.len();
    if n < 4 {
        return None;
    }
    let mean: C64 = series.iter().sum::<C64>() / n as f64;
    let mut buf: Vec<rustfft::num_complex::Complex<f64>> = series
        .iter()
        .map(|c| rustfft::num_complex::Complex::new(c.re - mean.re, c.im - mean.im))
        .collect();
    FftPlanner::new().plan_fft_forward(n).process(&mut buf);
    let (k, _) = buf
        .iter()
        .enumerate()
        .skip(1)
        .max_by(|a, b| a.1.norm_sqr().total_cmp(&b.1.norm_sqr()))?;
    // Bin k > n/2 is the negative frequency k − n.
    let signed = if k <= n / 2 { k as f64 } else { k as f64 - n as f64 };
    Some((2.0 * std::f64::consts::PI * signed / (n as f64 * sample_interval)).abs())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnsembleStats {
    pub times: Vec<f64>,
    pub mean: Vec<f64>,
    pub stderr: Vec<f64>,
    pub trajectories: usize,
}

/// Pointwise mean and standard error of `observable(record)` over
/// trajectories, run in parallel with one RNG stream per configuration.
pub fn ensemble_average<F>(configs: &[TrajectoryConfig], observable: F) -> Result<EnsembleStats>
where
    F: Fn(&HeterodyneRecord) -> Vec<f64> + Sync,
{
    if configs.len() < 2 {
        return Err(Error::InvalidParameter("an ensemble needs at least two trajectories".into()));
    }
    if configs.len() < 50 {
        log::warn!("ensemble of {} trajectories; at least 50 are recommended", configs.len());
    }
    let series: Vec<(Vec<f64>, Vec<f64>)> = configs
        .par_iter()
        .map(|c| run_trajectory(c).map(|r| (r.times.clone(), observable(&r))))
        .collect::<Result<_>>()?;
    ensemble_stats(&series)
}

/// Mean and standard error of already computed `(times, values)` series.
pub fn ensemble_stats(series: &[(Vec<f64>, Vec<f64>)]) -> Result<EnsembleStats> {
    let times = series[0].0.clone();
    let len = series[0].1.len();
    if series.iter().any(|(_, v)| v.len() != len) {
        return Err(Error::Dimension("ensemble members have different lengths".into()));
    }
    let m = series.len() as f64;
    let mut mean = vec![0.0; len];
    for (_, v) in series {
        for (a, x) in mean.iter_mut().zip(v) {
            *a += x / m;
        }
    }
    let mut var = vec![0.0; len];
    for (_, v) in series {
        for ((s, x), mu) in var.iter_mut().zip(v).zip(&mean) {
            *s += (x - mu).powi(2) / (m - 1.0);
        }
    }
    Ok(EnsembleStats {
        times,
        mean,
        stderr: var.iter().map(|v| (v / m).sqrt()).collect(),
        trajectories: series.len(),
    })
}

/// Configurations for `count` trajectories sharing `base` and differing
/// only in their RNG stream.
pub fn ensemble_configs(base: &TrajectoryConfig, count: usize) -> Vec<TrajectoryConfig> {
    (0..count as u64)
        .map(|k| TrajectoryConfig {
            stream: base.stream + k,
            ..base.clone()
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::open::InitialState;

    fn config(omega: f64, epsilon: f64, n_max: usize, initial: InitialState) -> TrajectoryConfig {
        TrajectoryConfig {
            model: OpenModelParams {
                kappa: 1.0,
                omega,
                omega_r: 0.25,
                epsilon,
                n_max,
                initial_state: initial,
            },
            dt: 1e-3,
            duration: 2.0,
            kappa_d: 0.25,
            seed: 7,
            stream: 0,
            record_stride: 100,
        }
    }

    #[test]
    fn vacuum_is_dark() {
        let cfg = config(0.0, 0.0, 5, InitialState::basis(0, false, -1));
        let sys = build_open_system(&cfg.model).unwrap();
        let psi = cfg.model.initial_state.to_state(&sys.space).unwrap();
        let dz = C64::new(0.01, -0.02);
        let mut p = cfg.model.clone();
        p.omega_r = 0.0;
        let sys0 = build_open_system(&p).unwrap();
        let (out, dq) = sse_step(&sys0, &psi, 1e-3, dz).unwrap();
        assert_eq!(dq, dz);
        assert!((out.inner(&psi).norm() - 1.0).abs() < 1e-14);
        let _ = sys;
    }

    #[test]
    fn steps_stay_in_parity_sector() {
        for sector in [-1, 1] {
            let cfg = config(4.0, 1.0, 10, InitialState::parity_eigenstate(sector).unwrap());
            let sys = build_open_system(&cfg.model).unwrap();
            let outside = sys.sector_indices(-sector);
            let mut psi = cfg.model.initial_state.to_state(&sys.space).unwrap();
            let mut rng = stream_rng(1, 0);
            for _ in 0..50 {
                let dz = wiener_increment(&mut rng, 1e-3);
                psi = sse_step(&sys, &psi, 1e-3, dz).unwrap().0;
                assert!((psi.norm() - 1.0).abs() < 1e-12);
                assert!(outside.iter().all(|&i| psi.amplitudes[i].norm() == 0.0));
            }
        }
    }

    fn coherent(alpha: C64, terms: usize) -> InitialState {
        let mut c = C64::new(1.0, 0.0);
        let mut comps = Vec::new();
        for n in 0..terms {
            if n > 0 {
                c *= alpha / (n as f64).sqrt();
            }
            comps.push(crate::open::InitialComponent {
                amplitude: c,
                photons: n,
                excited: false,
                j3: -1,
            });
        }
        InitialState(comps)
    }

    #[test]
    fn noiseless_coherent_decay_converges_in_dt() {
        // Ω = ε = 0 and dZ = 0: a coherent state stays coherent with
        // α(t) = α e^{−κt}.
        let alpha = C64::new(0.8, -0.6);
        let mut cfg = config(0.0, 0.0, 18, coherent(alpha, 14));
        cfg.duration = 1.0;
        let mut errs = Vec::new();
        for dt in [2e-3, 1e-3] {
            cfg.dt = dt;
            cfg.record_stride = (1.0 / dt).round() as usize;
            let r = run_trajectory_with_noise(&cfg, false).unwrap();
            let exact = alpha * (-1.0f64).exp();
            errs.push((r.field.last().unwrap() - exact).norm());
        }
        assert!(errs[1] < 2e-3, "{errs:?}");
        let ratio = errs[0] / errs[1];
        assert!((1.6..2.4).contains(&ratio), "{errs:?}");
    }

    #[test]
    fn reproducible_and_streams_differ() {
        let cfg = config(4.0, 1.0, 10, InitialState::mixed_parity());
        let a = run_trajectory(&cfg).unwrap();
        let b = run_trajectory(&cfg).unwrap();
        assert_eq!(a, b);
        let c = run_trajectory(&TrajectoryConfig { stream: 1, ..cfg }).unwrap();
        assert_ne!(a.current, c.current);
    }

    #[test]
    fn single_parity_has_no_coherence() {
        let cfg = config(4.0, 1.0, 10, InitialState::parity_eigenstate(-1).unwrap());
        let r = run_trajectory(&cfg).unwrap();
        assert!(r.sigma_minus.iter().all(|s| s.norm() == 0.0));
        assert!(r.parity.iter().all(|p| (p + 1.0).abs() < 1e-12));
    }

    #[test]
    fn noise_statistics() {
        let mut rng = stream_rng(3, 2);
        let dt = 0.01;
        let n = 200_000;
        let (mut zz, mut z2) = (0.0, C64::new(0.0, 0.0));
        for _ in 0..n {
            let z = wiener_increment(&mut rng, dt);
            zz += z.norm_sqr();
            z2 += z * z;
        }
        assert!((zz / n as f64 / dt - 1.0).abs() < 0.02);
        assert!((z2 / n as f64 / dt).norm() < 0.02);
    }

    fn synthetic(levels: &[(f64, f64)], noise: f64, dt: f64) -> HeterodyneRecord {
        let mut rng = stream_rng(11, 0);
        let mut rec = HeterodyneRecord::default();
        let end = levels.last().unwrap().0 + 100.0;
        let mut t = 0.0;
        while t < end {
            let level = levels.iter().rev().find(|(s, _)| *s <= t).map(|l| l.1).unwrap_or(levels[0].1);
            let n: f64 = StandardNormal.sample(&mut rng);
            rec.times.push(t);
            rec.current.push(C64::new(level + noise * n, 0.0));
            t += dt;
        }
        rec
    }

    #[test]
    fn recovers_square_wave_switches() {
        let programmed = [(0.0, -1.0), (150.0, 1.0), (310.0, -1.0), (400.0, 1.0)];
        let rec = synthetic(&programmed, 0.35, 0.1);
        let cfg = SwitchConfig::new(0.25);
        let rep = detect_switches(&rec, &cfg);
        assert!(rep.bimodal);
        assert_eq!(rep.switch_times.len(), 3, "{:?}", rep.switch_times);
        for (found, (t, _)) in rep.switch_times.iter().zip(&programmed[1..]) {
            assert!((found - t).abs() <= 2.0 / 0.25, "{found} vs {t}");
        }
    }

    #[test]
    fn constant_or_unimodal_has_no_switches() {
        let mut rec = synthetic(&[(0.0, 0.5)], 0.0, 0.1);
        let rep = detect_switches(&rec, &SwitchConfig::new(0.25));
        assert!(rep.switch_times.is_empty());
        rec = synthetic(&[(0.0, 0.5)], 0.3, 0.1);
        let rep = detect_switches(&rec, &SwitchConfig::new(0.25));
        assert!(!rep.bimodal && rep.switch_times.is_empty());
    }

    #[test]
    fn dominant_frequency_of_tone() {
        let dt = 0.1;
        let w = 0.7;
        let s: Vec<C64> = (0..4096).map(|k| C64::from_polar(1.0, -w * k as f64 * dt) + 0.3).collect();
        let f = dominant_frequency(&s, dt).unwrap();
        assert!((f - w).abs() < 2.0 * std::f64::consts::PI / (4096.0 * dt));
    }

    #[test]
    fn driven_cavity_ensemble_photon_number() {
        // Ω = 0: ⟨n⟩(t) = (ε/κ)² (1 − e^{−κt})².
        let mut base = config(0.0, 1.0, 12, InitialState::basis(0, false, -1));
        base.duration = 3.0;
        base.record_stride = 500;
        let stats = ensemble_average(&ensemble_configs(&base, 60), |r| r.photons.clone()).unwrap();
        for ((t, m), s) in stats.times.iter().zip(&stats.mean).zip(&stats.stderr) {
            let exact = (1.0 - (-t).exp()).powi(2);
            assert!((m - exact).abs() <= 3.0 * s + 2e-3, "t = {t}: {m} vs {exact} ± {s}");
        }
    }
}
