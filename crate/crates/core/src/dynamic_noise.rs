//! Classical Gaussian dephasing `H = Σ_i B_i(t) σᶻ_i` under pulse control:
//! Monte Carlo trajectories, memory-limit filter functions and power-law fits.

use std::sync::Arc;

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::linalg::{self, CMatrix, CVector, C64};
use crate::liouville::{lindblad_generator_in, DensityMatrix, LindbladChannel, OperatorBasis, Superoperator};
use crate::pulses::Schedule;
use crate::spin::HilbertSpec;

/// Ornstein–Uhlenbeck process with `G(t) = σ² exp(−|t|/τ_c)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OUNoiseSpec {
    pub sigma2: f64,
    pub tau_c: f64,
}

impl OUNoiseSpec {
    pub fn new(sigma2: f64, tau_c: f64) -> Result<Self> {
        let spec = Self { sigma2, tau_c };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.sigma2 >= 0.0) || !self.sigma2.is_finite() {
            return Err(Error::InvalidInput(format!("noise variance {} must be non-negative", self.sigma2)));
        }
        if !(self.tau_c > 0.0) || !self.tau_c.is_finite() {
            return Err(Error::InvalidInput(format!("correlation time {} must be positive", self.tau_c)));
        }
        Ok(())
    }

    pub fn autocorrelation(&self, lag: f64) -> f64 {
        self.sigma2 * (-lag.abs() / self.tau_c).exp()
    }

    /// Two-sided spectrum `G(ω) = (1/2π) ∫ G(t) e^{−iωt} dt`.
    pub fn spectrum(&self, omega: f64) -> f64 {
        self.sigma2 * self.tau_c / (std::f64::consts::PI * (1.0 + (omega * self.tau_c).powi(2)))
    }

    fn stationary<R: Rng>(&self, rng: &mut R) -> f64 {
        self.sigma2.sqrt() * rng.sample::<f64, _>(StandardNormal)
    }

    fn advance<R: Rng>(&self, x: f64, dt: f64, rng: &mut R) -> f64 {
        let decay = (-dt / self.tau_c).exp();
        let kick = (self.sigma2 * (1.0 - decay * decay)).max(0.0).sqrt();
        x * decay + kick * rng.sample::<f64, _>(StandardNormal)
    }
}

/// Stationary Gaussian noise given by a tabulated two-sided spectrum `G(ω)`
/// on a grid of non-negative frequencies; sampled by spectral synthesis.
#[derive(Debug, Clone, PartialEq)]
pub struct TabulatedSpectrum {
    omegas: Vec<f64>,
    weights: Vec<f64>,
}

impl TabulatedSpectrum {
    /// `points` are `(ω, G(ω))` with strictly increasing `ω ≥ 0`.
    pub fn new(points: &[(f64, f64)]) -> Result<Self> {
        if points.len() < 2 {
            return Err(Error::InvalidInput("a tabulated spectrum needs at least two points".into()));
        }
        for w in points.windows(2) {
            if !(w[1].0 > w[0].0) {
                return Err(Error::InvalidInput("spectrum frequencies must increase".into()));
            }
        }
        if points.iter().any(|&(w, g)| !(w >= 0.0) || !(g >= 0.0) || !g.is_finite()) {
            return Err(Error::InvalidInput("spectrum needs ω ≥ 0 and finite G(ω) ≥ 0".into()));
        }
        let n = points.len();
        let mut omegas = Vec::with_capacity(n);
        let mut weights = Vec::with_capacity(n);
        for k in 0..n {
            let lo = if k == 0 { points[0].0 } else { 0.5 * (points[k - 1].0 + points[k].0) };
            let hi = if k + 1 == n { points[k].0 } else { 0.5 * (points[k].0 + points[k + 1].0) };
            omegas.push(points[k].0);
            // both signs of ω contribute
            weights.push((2.0 * points[k].1 * (hi - lo)).sqrt());
        }
        Ok(Self { omegas, weights })
    }

    pub fn variance(&self) -> f64 {
        self.weights.iter().map(|w| w * w).sum()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum DephasingNoise {
    Ou(OUNoiseSpec),
    Tabulated(TabulatedSpectrum),
}

impl DephasingNoise {
    fn max_step(&self) -> f64 {
        match self {
            DephasingNoise::Ou(ou) => ou.tau_c,
            DephasingNoise::Tabulated(t) => {
                let top = t.omegas.last().copied().unwrap_or(0.0);
                if top > 0.0 {
                    std::f64::consts::PI / top
                } else {
                    f64::INFINITY
                }
            }
        }
    }

    fn sampler(&self, n_paths: usize, rng: &mut ChaCha20Rng) -> Sampler {
        match self {
            DephasingNoise::Ou(ou) => Sampler::Ou {
                spec: *ou,
                time: 0.0,
                values: (0..n_paths).map(|_| ou.stationary(rng)).collect(),
            },
            DephasingNoise::Tabulated(t) => Sampler::Spectral {
                omegas: t.omegas.clone(),
                amps: (0..n_paths)
                    .map(|_| {
                        t.weights
                            .iter()
                            .map(|w| (w * rng.sample::<f64, _>(StandardNormal), w * rng.sample::<f64, _>(StandardNormal)))
                            .collect()
                    })
                    .collect(),
            },
        }
    }
}

enum Sampler {
    Ou { spec: OUNoiseSpec, time: f64, values: Vec<f64> },
    Spectral { omegas: Vec<f64>, amps: Vec<Vec<(f64, f64)>> },
}

impl Sampler {
    /// Values at `t`, which must not precede the previous query.
    fn at(&mut self, t: f64, rng: &mut ChaCha20Rng, out: &mut [f64]) {
        match self {
            Sampler::Ou { spec, time, values } => {
                let dt = t - *time;
                if dt > 0.0 {
                    for x in values.iter_mut() {
                        *x = spec.advance(*x, dt, rng);
                    }
                    *time = t;
                }
                out.copy_from_slice(values);
            }
            Sampler::Spectral { omegas, amps } => {
                for (o, path) in out.iter_mut().zip(amps.iter()) {
                    *o = omegas.iter().zip(path).map(|(w, (a, b))| a * (w * t).cos() + b * (w * t).sin()).sum();
                }
            }
        }
    }
}

/// Samples `n_paths` independent OU paths on `0, dt, …, duration`, starting
/// from the stationary distribution. Rows are paths.
pub fn ou_trajectory(spec: &OUNoiseSpec, n_paths: usize, dt: f64, duration: f64, seed: u64) -> Result<Array2<f64>> {
    spec.validate()?;
    if !(dt > 0.0) || dt > spec.tau_c / 10.0 {
        return Err(Error::InvalidInput(format!("step {dt} must lie in (0, τ_c/10 = {}]", spec.tau_c / 10.0)));
    }
    if !(duration >= 0.0) {
        return Err(Error::InvalidInput(format!("duration {duration} must be non-negative")));
    }
    let steps = (duration / dt).round() as usize;
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let mut out = Array2::zeros((n_paths, steps + 1));
    for p in 0..n_paths {
        let mut x = spec.stationary(&mut rng);
        out[[p, 0]] = x;
        for k in 1..=steps {
            x = spec.advance(x, dt, &mut rng);
            out[[p, k]] = x;
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ObservableStat {
    pub mean: f64,
    pub stderr: f64,
}

#[derive(Debug, Clone)]
pub struct MonteCarloOutcome {
    pub mean_state: DensityMatrix,
    pub observables: Vec<ObservableStat>,
    pub n_traj: usize,
    pub steps_per_trajectory: usize,
    pub max_trace_drift: f64,
}

/// Step control for the fixed-step integrator.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepOptions {
    /// Steps per `min(τ_c, shortest gap)`.
    pub resolution: usize,
    pub trace_tol: f64,
}

impl Default for StepOptions {
    fn default() -> Self {
        Self { resolution: 20, trace_tol: 1e-6 }
    }
}

/// Preparation generator plus stochastic `σᶻ` dephasing on every qubit.
#[derive(Debug, Clone)]
pub struct StochasticDephasing {
    prep: Superoperator,
    noise: DephasingNoise,
    /// Preparation matrix in compressed-row form.
    row_start: Vec<usize>,
    entries: Vec<(usize, C64)>,
    /// `z_i(a) − z_i(b)` for each basis pair `(a, b)`, one row per qubit.
    phase_weights: Array2<f64>,
}

impl StochasticDephasing {
    pub fn new(prep: Superoperator, noise: DephasingNoise) -> Result<Self> {
        if let DephasingNoise::Ou(ou) = &noise {
            ou.validate()?;
        }
        let space = prep.space();
        let pairs = prep.basis().pairs();
        let n = space.n_qubits();
        let z = |index: usize, site: usize| if space.is_up(index, site) { 1.0 } else { -1.0 };
        let phase_weights = Array2::from_shape_fn((n, pairs.len()), |(i, k)| {
            let (a, b) = pairs[k];
            z(a, i) - z(b, i)
        });
        let mut row_start = vec![0];
        let mut entries = Vec::new();
        for row in prep.matrix().rows() {
            entries.extend(row.iter().enumerate().filter(|(_, z)| z.norm() > 0.0).map(|(c, &z)| (c, z)));
            row_start.push(entries.len());
        }
        Ok(Self { prep, noise, row_start, entries, phase_weights })
    }

    pub fn from_channel(channel: &LindbladChannel, basis: Arc<OperatorBasis>, noise: DephasingNoise) -> Result<Self> {
        Self::new(lindblad_generator_in(channel, basis)?, noise)
    }

    pub fn space(&self) -> HilbertSpec {
        self.prep.space()
    }

    pub fn basis(&self) -> &Arc<OperatorBasis> {
        self.prep.basis()
    }

    fn step_bound(&self, schedule: &Schedule, opts: &StepOptions) -> Result<f64> {
        if opts.resolution == 0 {
            return Err(Error::InvalidInput("step resolution must be positive".into()));
        }
        let shortest = schedule
            .segments()
            .iter()
            .map(|s| s.0)
            .filter(|&d| d > 0.0)
            .fold(f64::INFINITY, f64::min);
        let scale = self.noise.max_step().min(shortest);
        if !scale.is_finite() {
            return Err(Error::InvalidInput("schedule has zero duration".into()));
        }
        Ok(scale / opts.resolution as f64)
    }

    fn trajectory(&self, v0: &CVector, segments: &[(f64, i8)], h_max: f64, rng: &mut ChaCha20Rng) -> (CVector, usize) {
        let n = self.phase_weights.nrows();
        let len = v0.len();
        let mut sampler = self.noise.sampler(n, rng);
        let mut field = vec![0.0; n];
        let mut rates = [vec![0.0; len], vec![0.0; len], vec![0.0; len]];
        let mut v: Vec<C64> = v0.to_vec();
        let mut arg = vec![C64::new(0.0, 0.0); len];
        let mut k = [vec![C64::new(0.0, 0.0); len], vec![C64::new(0.0, 0.0); len], vec![C64::new(0.0, 0.0); len], vec![C64::new(0.0, 0.0); len]];
        let mut t = 0.0;
        let mut steps = 0;
        for &(seg, sign) in segments {
            if seg <= 0.0 {
                continue;
            }
            let n_sub = (seg / h_max).ceil().max(1.0) as usize;
            let h = seg / n_sub as f64;
            let s = f64::from(sign);
            for _ in 0..n_sub {
                for (stage, dt) in [0.0, 0.5 * h, h].into_iter().enumerate() {
                    sampler.at(t + dt, rng, &mut field);
                    for (j, r) in rates[stage].iter_mut().enumerate() {
                        *r = s * (0..n).map(|i| field[i] * self.phase_weights[[i, j]]).sum::<f64>();
                    }
                }
                self.derivative(&v, &rates[0], &mut k[0]);
                for (stage, (c, rate)) in [(0.5, 1), (0.5, 1), (1.0, 2)].into_iter().enumerate() {
                    for j in 0..len {
                        arg[j] = v[j] + k[stage][j] * (c * h);
                    }
                    self.derivative(&arg, &rates[rate], &mut k[stage + 1]);
                }
                let w = h / 6.0;
                for j in 0..len {
                    v[j] += (k[0][j] + (k[1][j] + k[2][j]) * 2.0 + k[3][j]) * w;
                }
                t += h;
                steps += 1;
            }
        }
        (CVector::from(v), steps)
    }

    /// `dy = 𝓛_P,0 y − i r ⊙ y`.
    fn derivative(&self, y: &[C64], rates: &[f64], dy: &mut [C64]) {
        for (j, d) in dy.iter_mut().enumerate() {
            let mut acc = C64::new(rates[j] * y[j].im, -rates[j] * y[j].re);
            for &(col, val) in &self.entries[self.row_start[j]..self.row_start[j + 1]] {
                acc += val * y[col];
            }
            *d = acc;
        }
    }

    /// Averages `n_traj` trajectories; trajectory `k` draws its noise from
    /// stream `k` of the generator seeded with `seed`. `observables` are
    /// functionals over the basis.
    pub fn run(
        &self,
        rho0: &DensityMatrix,
        schedule: &Schedule,
        observables: &[CVector],
        n_traj: usize,
        seed: u64,
        opts: &StepOptions,
    ) -> Result<MonteCarloOutcome> {
        if n_traj == 0 {
            return Err(Error::InvalidInput("need at least one trajectory".into()));
        }
        if rho0.space() != self.space() {
            return Err(Error::Dimension("initial state on a different register".into()));
        }
        let basis = self.basis();
        for (j, w) in observables.iter().enumerate() {
            if w.len() != basis.len() {
                return Err(Error::Dimension(format!("observable {j} has {} weights for a basis of {}", w.len(), basis.len())));
            }
        }
        let h_max = self.step_bound(schedule, opts)?;
        let segments = schedule.segments();
        let v0 = basis.vectorize(rho0.entries());
        let trace_w = basis.trace_functional();
        let results: Vec<Result<(CVector, usize, f64)>> = (0..n_traj)
            .into_par_iter()
            .map(|k| {
                let mut rng = ChaCha20Rng::seed_from_u64(seed);
                rng.set_stream(k as u64);
                let (v, steps) = self.trajectory(&v0, &segments, h_max, &mut rng);
                if v.iter().any(|z| !z.is_finite()) {
                    return Err(Error::NonFinite(format!("trajectory {k} (seed {seed})")));
                }
                let tr: C64 = trace_w.iter().zip(v.iter()).map(|(w, z)| z * *w).sum();
                let drift = (tr - C64::new(1.0, 0.0)).norm();
                if drift > opts.trace_tol {
                    return Err(Error::TraceDrift { trajectory: k, seed, drift });
                }
                Ok((v, steps, drift))
            })
            .collect();
        let mut sum = CVector::zeros(basis.len());
        let mut stats = vec![(0.0f64, 0.0f64); observables.len()];
        let (mut steps, mut max_drift) = (0, 0.0f64);
        for r in results {
            let (v, s, drift) = r?;
            for (acc, w) in stats.iter_mut().zip(observables) {
                let x: f64 = w.iter().zip(v.iter()).map(|(a, b)| (a * b).re).sum();
                acc.0 += x;
                acc.1 += x * x;
            }
            sum += &v;
            steps = s;
            max_drift = max_drift.max(drift);
        }
        let nf = n_traj as f64;
        let observables = stats
            .into_iter()
            .map(|(s1, s2)| {
                let mean = s1 / nf;
                let var = if n_traj > 1 { ((s2 - nf * mean * mean) / (nf - 1.0)).max(0.0) } else { 0.0 };
                ObservableStat { mean, stderr: (var / nf).sqrt() }
            })
            .collect();
        let mean = basis.devectorize(&sum.mapv(|z| z / nf));
        let mean_state = DensityMatrix::new_unchecked(self.space(), linalg::hermitian_part(&mean))?;
        Ok(MonteCarloOutcome { mean_state, observables, n_traj, steps_per_trajectory: steps, max_trace_drift: max_drift })
    }
}

/// Trajectory-averaged state for a channel on the full operator basis.
pub fn monte_carlo_protected_run(
    prep: &LindbladChannel,
    noise: &OUNoiseSpec,
    schedule: &Schedule,
    rho0: &DensityMatrix,
    n_traj: usize,
    seed: u64,
) -> Result<MonteCarloOutcome> {
    let basis = Arc::new(OperatorBasis::full(prep.space().dim()));
    let sim = StochasticDephasing::from_channel(prep, basis, DephasingNoise::Ou(*noise))?;
    sim.run(rho0, schedule, &[], n_traj, seed, &StepOptions::default())
}

/// `χ(t)` with `⟨ρ₀₁(t)⟩ = ρ₀₁(0) e^{−χ}` for one qubit under `B(t) σᶻ`
/// with OU statistics and toggling signs `segments` (duration, sign).
pub fn ou_dephasing_exponent(spec: &OUNoiseSpec, segments: &[(f64, i8)]) -> f64 {
    let tc = spec.tau_c;
    let mut bounds = Vec::with_capacity(segments.len());
    let mut t = 0.0;
    for &(len, sign) in segments {
        bounds.push((t, t + len, f64::from(sign)));
        t += len;
    }
    // V = ∫∫ f(t₁) f(t₂) G(t₁ − t₂)
    let mut v = 0.0;
    for (i, &(a_i, b_i, s_i)) in bounds.iter().enumerate() {
        let l = b_i - a_i;
        v += 2.0 * tc * tc * (l / tc - 1.0 + (-l / tc).exp());
        for &(a_j, b_j, s_j) in bounds.iter().skip(i + 1) {
            let gap = a_j - b_i;
            v += 2.0 * s_i * s_j * tc * tc * (-gap / tc).exp() * (1.0 - (-l / tc).exp()) * (1.0 - (-(b_j - a_j) / tc).exp());
        }
    }
    // σᶻ eigenvalues differ by 2, so the relative phase is 2∫fB
    2.0 * spec.sigma2 * v
}

/// Memory-limit filter weight
/// `F(ω, t) = ∫₀ᵗ dt₁ ∫₀^{t₁} dt₂ f(t₁) f(t₁ − t₂) cos(ω t₂) = ½ |∫₀ᵗ f(s) e^{iωs} ds|²`.
pub fn memory_limit_filter(segments: &[(f64, i8)], omega: f64) -> FilterPoint {
    let mut t = 0.0;
    let mut acc = C64::new(0.0, 0.0);
    for &(len, sign) in segments {
        let s = f64::from(sign);
        let piece = if omega == 0.0 {
            C64::new(len, 0.0)
        } else {
            let x = omega * len;
            // ∫_t^{t+len} e^{iωs} ds without cancellation at small ωlen
            let phase = C64::from_polar(1.0, omega * t + 0.5 * x);
            let sinc = if x.abs() < 1e-4 { 1.0 - x * x / 24.0 } else { (0.5 * x).sin() / (0.5 * x) };
            phase * (len * sinc)
        };
        acc += piece * s;
        t += len;
    }
    FilterPoint { omega, value: 0.5 * acc.norm_sqr() }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FilterPoint {
    pub omega: f64,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExponentFit {
    pub exponent: f64,
    pub intercept: f64,
    /// Indices of points dropped for non-positive infidelity.
    pub rejected: Vec<usize>,
}

/// Least-squares slope of `log(infidelity)` against `log(τ̄)`.
pub fn suppression_exponent(curve: &[(f64, f64)]) -> Result<ExponentFit> {
    if curve.len() < 4 {
        return Err(Error::InvalidInput(format!("need at least 4 points, got {}", curve.len())));
    }
    let mut rejected = Vec::new();
    let mut pts = Vec::with_capacity(curve.len());
    for (k, &(tau, inf)) in curve.iter().enumerate() {
        if !(tau > 0.0) {
            return Err(Error::InvalidInput(format!("point {k} has non-positive interval {tau}")));
        }
        if inf > 0.0 && inf.is_finite() {
            pts.push((tau.ln(), inf.ln()));
        } else {
            rejected.push(k);
        }
    }
    if pts.len() < 2 {
        return Err(Error::InvalidInput(format!("only {} positive infidelities (rejected {rejected:?})", pts.len())));
    }
    let (slope, intercept) = linear_fit(&pts)?;
    Ok(ExponentFit { exponent: slope, intercept, rejected })
}

pub(crate) fn linear_fit(pts: &[(f64, f64)]) -> Result<(f64, f64)> {
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    if sxx == 0.0 {
        return Err(Error::InvalidInput("all abscissae coincide".into()));
    }
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let slope = sxy / sxx;
    Ok((slope, my - slope * mx))
}

/// Single-qubit `|+⟩⟨+|`.
pub fn plus_state() -> DensityMatrix {
    let space = HilbertSpec::new(1).expect("one qubit");
    let half = C64::new(0.5, 0.0);
    DensityMatrix::new(space, CMatrix::from_elem((2, 2), half)).expect("valid state")
}
