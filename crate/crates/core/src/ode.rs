//! Explicit Runge–Kutta steppers for linear and time-dependent vector ODEs.

use crate::error::{Error, Result};
use crate::linalg::{CVector, C64};

/// One classical RK4 step of `y' = f(t, y)`.
pub fn rk4_step<F>(f: &mut F, t: f64, y: &CVector, h: f64) -> CVector
where
    F: FnMut(f64, &CVector) -> CVector,
{
    let k1 = f(t, y);
    let k2 = f(t + 0.5 * h, &(y + &k1.mapv(|z| z * (0.5 * h))));
    let k3 = f(t + 0.5 * h, &(y + &k2.mapv(|z| z * (0.5 * h))));
    let k4 = f(t + h, &(y + &k3.mapv(|z| z * h)));
    let mut out = y.clone();
    let w = h / 6.0;
    out.scaled_add(C64::new(w, 0.0), &k1);
    out.scaled_add(C64::new(2.0 * w, 0.0), &k2);
    out.scaled_add(C64::new(2.0 * w, 0.0), &k3);
    out.scaled_add(C64::new(w, 0.0), &k4);
    out
}

#[derive(Debug, Clone, Copy)]
pub struct AdaptiveOptions {
    pub rtol: f64,
    pub atol: f64,
    pub initial_step: Option<f64>,
    pub max_steps: usize,
}

impl Default for AdaptiveOptions {
    fn default() -> Self {
        Self { rtol: 1e-9, atol: 1e-12, initial_step: None, max_steps: 10_000_000 }
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct AdaptiveStats {
    pub accepted: usize,
    pub rejected: usize,
    pub last_step: f64,
}

// Dormand–Prince 5(4) tableau
const C: [f64; 7] = [0.0, 1.0 / 5.0, 3.0 / 10.0, 4.0 / 5.0, 8.0 / 9.0, 1.0, 1.0];
const A: [[f64; 6]; 7] = [
    [0.0; 6],
    [1.0 / 5.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0, 0.0, 0.0],
    [9017.0 / 3168.0, -355.0 / 33.0, 46732.0 / 5247.0, 49.0 / 176.0, -5103.0 / 18656.0, 0.0],
    [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0],
];
const B5: [f64; 7] = [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0, 0.0];
const B4: [f64; 7] = [
    5179.0 / 57600.0,
    0.0,
    7571.0 / 16695.0,
    393.0 / 640.0,
    -92097.0 / 339200.0,
    187.0 / 2100.0,
    1.0 / 40.0,
];

/// Integrates `y' = f(t, y)` from `t0` to `t1` with embedded 5(4) error control.
pub fn integrate_adaptive<F>(
    mut f: F,
    t0: f64,
    t1: f64,
    y0: &CVector,
    opts: AdaptiveOptions,
) -> Result<(CVector, AdaptiveStats)>
where
    F: FnMut(f64, &CVector) -> CVector,
{
    let mut stats = AdaptiveStats::default();
    if t1 < t0 {
        return Err(Error::InvalidInput(format!("cannot integrate backwards from {t0} to {t1}")));
    }
    let span = t1 - t0;
    let mut y = y0.clone();
    if span == 0.0 {
        return Ok((y, stats));
    }
    let mut t = t0;
    let mut h = opts.initial_step.unwrap_or(span / 100.0).min(span);
    let mut k: Vec<CVector> = Vec::with_capacity(7);
    while t < t1 {
        if stats.accepted + stats.rejected >= opts.max_steps {
            return Err(Error::NonFinite(format!("adaptive stepper exceeded {} steps at t = {t}", opts.max_steps)));
        }
        let last = t + h >= t1;
        if last {
            h = t1 - t;
        }
        k.clear();
        for stage in 0..7 {
            let mut arg = y.clone();
            for (j, kj) in k.iter().enumerate() {
                let a = A[stage][j];
                if a != 0.0 {
                    arg.scaled_add(C64::new(h * a, 0.0), kj);
                }
            }
            k.push(f(t + C[stage] * h, &arg));
        }
        let mut y5 = y.clone();
        let mut err = CVector::zeros(y.len());
        for j in 0..7 {
            if B5[j] != 0.0 {
                y5.scaled_add(C64::new(h * B5[j], 0.0), &k[j]);
            }
            err.scaled_add(C64::new(h * (B5[j] - B4[j]), 0.0), &k[j]);
        }
        let norm = err
            .iter()
            .zip(y.iter().zip(y5.iter()))
            .map(|(e, (a, b))| {
                let scale = opts.atol + opts.rtol * a.norm().max(b.norm());
                (e.norm() / scale).powi(2)
            })
            .sum::<f64>()
            / y.len() as f64;
        let norm = norm.sqrt();
        if !norm.is_finite() {
            return Err(Error::NonFinite(format!("adaptive step at t = {t}")));
        }
        if norm <= 1.0 {
            t = if last { t1 } else { t + h };
            y = y5;
            stats.accepted += 1;
            stats.last_step = h;
        } else {
            stats.rejected += 1;
        }
        let factor = if norm == 0.0 { 5.0 } else { (0.9 * norm.powf(-0.2)).clamp(0.2, 5.0) };
        h *= factor;
        if h < span * 1e-15 {
            return Err(Error::NonFinite(format!("adaptive step size underflow at t = {t}")));
        }
    }
    Ok((y, stats))
}
