//! Toggling-frame evolution `ρ̇ = 𝓛_P,0ρ + f(t)𝓛_Nρ` under a pulse schedule.

use std::collections::HashMap;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::linalg::{self, CMatrix, CVector, C64, ONE, ZERO};
use crate::liouville::{
    iterate_to_fixed_point, magnus_convergence_bound, DensityMatrix, OperatorBasis, SpectralPropagator, Superoperator,
};
use crate::magnus::leading_generator;
use crate::ode::{integrate_adaptive, AdaptiveOptions};
use crate::pulses::{random_schedule, PulseSequence};

/// When to stop evolving.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SteadyCriterion {
    /// Successive-unit trace distance below `tol` (periodic and free runs) or
    /// successive window averages of the observable within `tol` (random runs).
    Converged { tol: f64, max_time: f64 },
    /// Evolve for a fixed preparation time.
    Horizon { time: f64 },
}

impl SteadyCriterion {
    fn validate(&self) -> Result<()> {
        match *self {
            SteadyCriterion::Converged { tol, max_time } if tol > 0.0 && max_time > 0.0 => Ok(()),
            SteadyCriterion::Horizon { time } if time > 0.0 => Ok(()),
            other => Err(Error::InvalidInput(format!("invalid steady criterion {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Backend {
    /// Dense exponentials of the interval generators.
    Exact,
    /// Dormand–Prince stepping on the state vector.
    Adaptive,
    /// `𝓛_P,0 + α₃ᵦN²τ̄²[𝓛_N,[𝓛_P,0,𝓛_N]]` (periodic units only).
    LeadingMagnus,
    /// Exact average over Poisson schedules (random protection only).
    Ensemble,
}

/// Pulse control applied during the preparation.
#[derive(Debug, Clone, PartialEq)]
pub enum Protection {
    Free,
    Periodic(PulseSequence),
    Random { density: f64, seed: u64 },
}

#[derive(Debug, Clone, Copy)]
pub struct RunOptions {
    pub backend: Backend,
    pub criterion: SteadyCriterion,
    pub magnus_guard: bool,
    pub adaptive: AdaptiveOptions,
    /// Averaging window for random-schedule convergence.
    pub window: f64,
}

impl Default for RunOptions {
    fn default() -> Self {
        Self {
            backend: Backend::Exact,
            criterion: SteadyCriterion::Converged { tol: 1e-7, max_time: 1e4 },
            magnus_guard: false,
            adaptive: AdaptiveOptions::default(),
            window: 1.0,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Diagnostics {
    /// Basic units propagated (pulse gaps for random schedules).
    pub units: u64,
    pub time: f64,
    pub trace_drift: f64,
    pub renormalized: bool,
    pub last_distance: Option<f64>,
    pub magnus_bound: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct Outcome {
    pub state: DensityMatrix,
    pub observable: f64,
    pub diagnostics: Diagnostics,
}

/// The pair of interval generators `G± = 𝓛_P,0 ± 𝓛_N`.
#[derive(Debug, Clone)]
pub struct ToggledSystem {
    l_p0: Superoperator,
    l_n: Superoperator,
    g_plus: Superoperator,
    g_minus: Superoperator,
}

impl ToggledSystem {
    pub fn new(l_p0: Superoperator, l_n: Superoperator) -> Result<Self> {
        let g_plus = l_p0.plus(&l_n)?;
        let g_minus = l_p0.minus(&l_n)?;
        Ok(Self { l_p0, l_n, g_plus, g_minus })
    }

    pub fn preparation(&self) -> &Superoperator {
        &self.l_p0
    }

    pub fn noise(&self) -> &Superoperator {
        &self.l_n
    }

    pub fn basis(&self) -> &Arc<OperatorBasis> {
        self.l_p0.basis()
    }

    pub fn generator(&self, sign: i8) -> &Superoperator {
        if sign >= 0 {
            &self.g_plus
        } else {
            &self.g_minus
        }
    }

    /// Segments of one unit starting with sign `start`.
    pub fn unit_segments(&self, seq: &PulseSequence, start: i8) -> Vec<(&Superoperator, f64)> {
        seq.segments()
            .into_iter()
            .filter(|(d, _)| *d > 0.0)
            .map(|(d, s)| (self.generator(s * start), d))
            .collect()
    }

    /// Propagator over the true period of `f`: one unit for even `N`, two
    /// units (the second with `𝓛_N` reversed) for odd `N`.
    pub fn period_propagator(&self, seq: &PulseSequence) -> Result<(CMatrix, u64)> {
        let mut segs = self.unit_segments(seq, 1);
        let units = if seq.n_pulses() % 2 == 1 {
            segs.extend(self.unit_segments(seq, -1));
            2
        } else {
            1
        };
        let mut cache: HashMap<(bool, u64), CMatrix> = HashMap::new();
        let n = self.basis().len();
        let mut u = linalg::identity(n);
        for (k, (g, d)) in segs.iter().enumerate() {
            let key = (std::ptr::eq(*g, &self.g_plus), d.to_bits());
            if !cache.contains_key(&key) {
                cache.insert(key, g.exp(*d)?);
            }
            let e = &cache[&key];
            if e.iter().any(|z| !z.is_finite()) {
                return Err(Error::NonFiniteSegment { segment: k });
            }
            u = e.dot(&u);
        }
        Ok((u, units))
    }

    /// Generator of the Poisson-averaged evolution on `(ρ₊, ρ₋)`, where `ρ±`
    /// is the ensemble part currently in sign `±`.
    pub fn telegraph_generator(&self, density: f64) -> CMatrix {
        let n = self.basis().len();
        let mut e = CMatrix::zeros((2 * n, 2 * n));
        let r = C64::new(density, 0.0);
        e.slice_mut(ndarray::s![..n, ..n]).assign(self.g_plus.matrix());
        e.slice_mut(ndarray::s![n.., n..]).assign(self.g_minus.matrix());
        for k in 0..2 * n {
            e[[k, k]] -= r;
            e[[k, (k + n) % (2 * n)]] += r;
        }
        e
    }
}

fn value(functional: &CVector, v: &CVector) -> f64 {
    functional.iter().zip(v.iter()).map(|(a, b)| (a * b).re).sum()
}

fn finish(
    basis: &OperatorBasis,
    rho0: &DensityMatrix,
    v: &CVector,
    functional: &CVector,
    mut diag: Diagnostics,
) -> Result<Outcome> {
    if v.iter().any(|z| !z.is_finite()) {
        return Err(Error::NonFinite("evolved state".into()));
    }
    let mut m = basis.devectorize(v);
    let tr = linalg::trace(&m).re;
    diag.trace_drift = (tr - 1.0).abs();
    if diag.trace_drift > 1e-8 {
        diag.renormalized = true;
        m.mapv_inplace(|z| z / tr);
    }
    let state = DensityMatrix::new_unchecked(rho0.space(), m)?;
    let v = basis.vectorize(state.entries());
    Ok(Outcome { observable: value(functional, &v), state, diagnostics: diag })
}

/// Evolves `rho0` under the toggled generators and reports `Tr(O ρ)` where
/// `functional` holds the weights of `O` (see `OperatorBasis::expectation_functional`).
pub fn evolve(
    system: &ToggledSystem,
    rho0: &DensityMatrix,
    functional: &CVector,
    protection: &Protection,
    opts: &RunOptions,
) -> Result<Outcome> {
    opts.criterion.validate()?;
    let basis = Arc::clone(system.basis());
    if basis.dim() != rho0.space().dim() {
        return Err(Error::Dimension("state and generators act on different registers".into()));
    }
    let v0 = basis.vectorize(rho0.entries());
    match (protection, opts.backend) {
        (Protection::Free, Backend::Exact | Backend::LeadingMagnus) => {
            constant_generator(&basis, rho0, &v0, functional, &system.g_plus, 1.0, opts)
        }
        (Protection::Free, Backend::Adaptive) => {
            let seq = PulseSequence::free(1.0)?;
            periodic_adaptive(system, rho0, &v0, functional, &seq, opts)
        }
        (Protection::Periodic(seq), Backend::Exact) => periodic_exact(system, rho0, &v0, functional, seq, opts),
        (Protection::Periodic(seq), Backend::Adaptive) => periodic_adaptive(system, rho0, &v0, functional, seq, opts),
        (Protection::Periodic(seq), Backend::LeadingMagnus) => {
            let g = leading_generator(&system.l_p0, &system.l_n, seq)?;
            let mut out = constant_generator(&basis, rho0, &v0, functional, &g, seq.t_p(), opts)?;
            if opts.magnus_guard {
                out.diagnostics.magnus_bound = Some(magnus_convergence_bound(&system.unit_segments(seq, 1))?);
            }
            Ok(out)
        }
        (Protection::Random { density, seed }, Backend::Exact) => {
            random_trajectory(system, rho0, &v0, functional, *density, *seed, opts)
        }
        (Protection::Random { density, .. }, Backend::Ensemble) => {
            random_ensemble(system, rho0, &v0, functional, *density, opts)
        }
        (p, b) => Err(Error::InvalidInput(format!("backend {b:?} does not support protection {p:?}"))),
    }
}

fn constant_generator(
    basis: &OperatorBasis,
    rho0: &DensityMatrix,
    v0: &CVector,
    functional: &CVector,
    g: &Superoperator,
    unit: f64,
    opts: &RunOptions,
) -> Result<Outcome> {
    match opts.criterion {
        SteadyCriterion::Horizon { time } => {
            let v = g.exp(time)?.dot(v0);
            let diag = Diagnostics { units: (time / unit).round() as u64, time, ..Default::default() };
            finish(basis, rho0, &v, functional, diag)
        }
        SteadyCriterion::Converged { tol, max_time } => {
            let u = g.exp(unit)?;
            let max_units = (max_time / unit).ceil() as u64;
            let ss = iterate_to_fixed_point(basis, rho0, &u, tol, max_units)?;
            let diag = Diagnostics {
                units: ss.units,
                time: ss.units as f64 * unit,
                last_distance: Some(ss.last_distance),
                ..Default::default()
            };
            finish(basis, rho0, &basis.vectorize(ss.state.entries()), functional, diag)
        }
    }
}

fn periodic_exact(
    system: &ToggledSystem,
    rho0: &DensityMatrix,
    v0: &CVector,
    functional: &CVector,
    seq: &PulseSequence,
    opts: &RunOptions,
) -> Result<Outcome> {
    let basis = system.basis();
    let (u, units_per_period) = system.period_propagator(seq)?;
    let period = seq.t_p() * units_per_period as f64;
    let mut out = match opts.criterion {
        SteadyCriterion::Horizon { time } => {
            let periods = ((time / period).round() as u64).max(1);
            let v = linalg::apply_power(&u, periods, v0);
            let diag = Diagnostics {
                units: periods * units_per_period,
                time: periods as f64 * period,
                ..Default::default()
            };
            finish(basis, rho0, &v, functional, diag)?
        }
        SteadyCriterion::Converged { tol, max_time } => {
            let max_periods = ((max_time / period).ceil() as u64).max(1);
            let ss = iterate_to_fixed_point(basis, rho0, &u, tol, max_periods)?;
            let diag = Diagnostics {
                units: ss.units * units_per_period,
                time: ss.units as f64 * period,
                last_distance: Some(ss.last_distance),
                ..Default::default()
            };
            finish(basis, rho0, &basis.vectorize(ss.state.entries()), functional, diag)?
        }
    };
    if opts.magnus_guard {
        out.diagnostics.magnus_bound = Some(magnus_convergence_bound(&system.unit_segments(seq, 1))?);
    }
    Ok(out)
}

fn periodic_adaptive(
    system: &ToggledSystem,
    rho0: &DensityMatrix,
    v0: &CVector,
    functional: &CVector,
    seq: &PulseSequence,
    opts: &RunOptions,
) -> Result<Outcome> {
    let basis = system.basis();
    let run_unit = |v: &CVector, start: i8| -> Result<CVector> {
        let mut v = v.clone();
        for (g, d) in system.unit_segments(seq, start) {
            let m = g.matrix();
            v = integrate_adaptive(|_, y| m.dot(y), 0.0, d, &v, opts.adaptive)?.0;
        }
        Ok(v)
    };
    let flip = if seq.n_pulses() % 2 == 1 { -1 } else { 1 };
    let mut v = v0.clone();
    let mut sign = 1i8;
    let mut units = 0u64;
    let mut diag = Diagnostics::default();
    match opts.criterion {
        SteadyCriterion::Horizon { time } => {
            let total = ((time / seq.t_p()).round() as u64).max(1);
            while units < total {
                v = run_unit(&v, sign)?;
                sign *= flip;
                units += 1;
            }
        }
        SteadyCriterion::Converged { tol, max_time } => {
            let max_units = ((max_time / seq.t_p()).ceil() as u64).max(1);
            let step = if flip == 1 { 1 } else { 2 };
            loop {
                let mut next = v.clone();
                for _ in 0..step {
                    next = run_unit(&next, sign)?;
                    sign *= flip;
                }
                units += step;
                let dist = linalg::trace_distance(&basis.devectorize(&next), &basis.devectorize(&v))?;
                v = next;
                diag.last_distance = Some(dist);
                if dist < tol {
                    break;
                }
                if units >= max_units {
                    return Err(Error::NotConverged { units, last_distance: dist });
                }
            }
        }
    }
    diag.units = units;
    diag.time = units as f64 * seq.t_p();
    finish(basis, rho0, &v, functional, diag)
}

/// Per-seed Poisson schedule, propagated in the eigenbases of `G±`.
fn random_trajectory(
    system: &ToggledSystem,
    rho0: &DensityMatrix,
    v0: &CVector,
    functional: &CVector,
    density: f64,
    seed: u64,
    opts: &RunOptions,
) -> Result<Outcome> {
    let basis = system.basis();
    let plus = SpectralPropagator::new(&system.g_plus)?;
    let minus = SpectralPropagator::new(&system.g_minus)?;
    let to_minus = minus.inverse().dot(plus.vectors());
    let to_plus = plus.inverse().dot(minus.vectors());
    let f_plus = functional.dot(plus.vectors());
    let f_minus = functional.dot(minus.vectors());
    let observe = |y: &CVector, sign: i8| -> f64 {
        let f = if sign > 0 { &f_plus } else { &f_minus };
        f.iter().zip(y.iter()).map(|(a, b)| (a * b).re).sum()
    };

    let (duration, window_tol) = match opts.criterion {
        SteadyCriterion::Horizon { time } => (time, None),
        SteadyCriterion::Converged { tol, max_time } => (max_time, Some(tol)),
    };
    let schedule = random_schedule(density, duration, seed)?;
    let mut y = plus.to_eigenbasis(v0);
    let mut sign = 1i8;
    let mut t = 0.0;
    let mut gaps = 0u64;
    let mut window_end = opts.window;
    let (mut acc, mut count) = (0.0, 0usize);
    let mut previous: Option<f64> = None;
    let mut diag = Diagnostics::default();
    let mut stopped = false;
    for pulse in schedule.flatten().into_iter().chain(std::iter::once(duration)) {
        let d = pulse - t;
        let prop = if sign > 0 { &plus } else { &minus };
        prop.evolve_eigen(&mut y, d);
        t = pulse;
        gaps += 1;
        if y.iter().any(|z| !z.is_finite()) {
            return Err(Error::NonFinite(format!("random trajectory (seed {seed}) at t = {t}")));
        }
        if let Some(tol) = window_tol {
            acc += observe(&y, sign);
            count += 1;
            if t >= window_end {
                let mean = acc / count as f64;
                if let Some(prev) = previous {
                    let dist = (mean - prev).abs();
                    diag.last_distance = Some(dist);
                    if dist < tol {
                        stopped = true;
                    }
                }
                previous = Some(mean);
                acc = 0.0;
                count = 0;
                window_end += opts.window;
            }
        }
        if stopped || t >= duration {
            break;
        }
        y = if sign > 0 { to_minus.dot(&y) } else { to_plus.dot(&y) };
        sign = -sign;
    }
    if window_tol.is_some() && !stopped {
        return Err(Error::NotConverged { units: gaps, last_distance: diag.last_distance.unwrap_or(f64::INFINITY) });
    }
    let v = if sign > 0 { plus.from_eigenbasis(&y) } else { minus.from_eigenbasis(&y) };
    diag.units = gaps;
    diag.time = t;
    finish(basis, rho0, &v, functional, diag)
}

/// Average over all Poisson schedules of rate `density` via the telegraph generator.
fn random_ensemble(
    system: &ToggledSystem,
    rho0: &DensityMatrix,
    v0: &CVector,
    functional: &CVector,
    density: f64,
    opts: &RunOptions,
) -> Result<Outcome> {
    if !(density > 0.0) {
        return Err(Error::InvalidInput(format!("pulse density {density} must be positive")));
    }
    let basis = system.basis();
    let n = basis.len();
    let e = system.telegraph_generator(density);
    let mut w = CVector::zeros(2 * n);
    w.slice_mut(ndarray::s![..n]).assign(v0);
    let collapse = |w: &CVector| -> CVector { &w.slice(ndarray::s![..n]) + &w.slice(ndarray::s![n..]) };
    let mut diag = Diagnostics::default();
    match opts.criterion {
        SteadyCriterion::Horizon { time } => {
            w = linalg::expm(&e.mapv(|z| z * time))?.dot(&w);
            diag.time = time;
            diag.units = (time * density).round() as u64;
        }
        SteadyCriterion::Converged { tol, max_time } => {
            let u = linalg::expm(&e.mapv(|z| z * opts.window))?;
            let mut prev = collapse(&w);
            loop {
                w = u.dot(&w);
                diag.time += opts.window;
                let now = collapse(&w);
                let dist = (value(functional, &now) - value(functional, &prev)).abs();
                diag.last_distance = Some(dist);
                prev = now;
                if dist < tol {
                    break;
                }
                if diag.time >= max_time {
                    return Err(Error::NotConverged { units: (diag.time / opts.window) as u64, last_distance: dist });
                }
            }
            diag.units = (diag.time * density).round() as u64;
        }
    }
    finish(basis, rho0, &collapse(&w), functional, diag)
}

/// Identity-weighted trace functional, handy for observable-free runs.
pub fn trace_functional(basis: &OperatorBasis) -> CVector {
    basis.pairs().iter().map(|&(a, b)| if a == b { ONE } else { ZERO }).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::liouville::{lindblad_generator, LindbladChannel};
    use crate::pulses::{cpmg_unit, udd_unit};
    use crate::spin::{sigma_minus, sigma_z, HilbertSpec};

    fn qubit_system(omega: f64) -> (ToggledSystem, DensityMatrix, CVector) {
        let space = HilbertSpec::new(1).unwrap();
        let damp = LindbladChannel::new(space, CMatrix::zeros((2, 2)), vec![sigma_minus()]).unwrap();
        let noise = LindbladChannel::new(space, sigma_z().mapv(|z| z * omega), vec![]).unwrap();
        let sys = ToggledSystem::new(lindblad_generator(&damp).unwrap(), lindblad_generator(&noise).unwrap()).unwrap();
        let psi = ndarray::array![ONE, ONE];
        let rho = DensityMatrix::pure(space, &psi).unwrap();
        let f = sys.basis().expectation_functional(&crate::spin::sigma_x());
        (sys, rho, f)
    }

    #[test]
    fn backends_agree_on_periodic_horizon() {
        let (sys, rho, f) = qubit_system(3.0);
        let seq = udd_unit(3, 0.2).unwrap();
        let horizon = RunOptions { criterion: SteadyCriterion::Horizon { time: 1.2 }, ..Default::default() };
        let exact = evolve(&sys, &rho, &f, &Protection::Periodic(seq.clone()), &horizon).unwrap();
        let adaptive = evolve(
            &sys,
            &rho,
            &f,
            &Protection::Periodic(seq),
            &RunOptions { backend: Backend::Adaptive, ..horizon },
        )
        .unwrap();
        assert!((exact.observable - adaptive.observable).abs() < 1e-7);
        assert_eq!(exact.diagnostics.units, 6);
    }

    #[test]
    fn random_trajectory_matches_explicit_segments() {
        let (sys, rho, f) = qubit_system(2.0);
        let opts = RunOptions { criterion: SteadyCriterion::Horizon { time: 0.8 }, ..Default::default() };
        let out = evolve(&sys, &rho, &f, &Protection::Random { density: 20.0, seed: 3 }, &opts).unwrap();
        let sched = random_schedule(20.0, 0.8, 3).unwrap();
        let mut v = sys.basis().vectorize(rho.entries());
        for (d, s) in sched.segments() {
            v = sys.generator(s).exp(d).unwrap().dot(&v);
        }
        let direct: f64 = f.iter().zip(v.iter()).map(|(a, b)| (a * b).re).sum();
        assert!((direct - out.observable).abs() < 1e-10);
    }

    #[test]
    fn telegraph_average_matches_trajectory_mean() {
        let (sys, rho, f) = qubit_system(4.0);
        let opts = RunOptions { criterion: SteadyCriterion::Horizon { time: 0.5 }, ..Default::default() };
        let ens = evolve(
            &sys,
            &rho,
            &f,
            &Protection::Random { density: 10.0, seed: 0 },
            &RunOptions { backend: Backend::Ensemble, ..opts },
        )
        .unwrap();
        let samples: Vec<f64> = (0..2000)
            .map(|s| evolve(&sys, &rho, &f, &Protection::Random { density: 10.0, seed: s }, &opts).unwrap().observable)
            .collect();
        let mean = samples.iter().sum::<f64>() / samples.len() as f64;
        let var = samples.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (samples.len() - 1) as f64;
        let stderr = (var / samples.len() as f64).sqrt();
        assert!((mean - ens.observable).abs() < 4.0 * stderr, "{mean} {} {stderr}", ens.observable);
    }

    #[test]
    fn converged_periodic_reaches_damping_fixed_point() {
        let (sys, rho, _) = qubit_system(1.0);
        let pz = sys.basis().expectation_functional(&sigma_z());
        let out = evolve(&sys, &rho, &pz, &Protection::Periodic(cpmg_unit(0.1).unwrap()), &RunOptions::default()).unwrap();
        assert!((out.observable + 1.0).abs() < 1e-6);
        assert!(out.diagnostics.last_distance.unwrap() < 1e-7);
    }

    #[test]
    fn unsupported_combination_rejected() {
        let (sys, rho, f) = qubit_system(1.0);
        let opts = RunOptions { backend: Backend::Ensemble, ..Default::default() };
        assert!(evolve(&sys, &rho, &f, &Protection::Free, &opts).is_err());
        let lead = RunOptions { backend: Backend::LeadingMagnus, ..Default::default() };
        let free_unit = PulseSequence::free(1.0).unwrap();
        assert!(evolve(&sys, &rho, &f, &Protection::Periodic(free_unit), &lead).is_err());
    }
}
