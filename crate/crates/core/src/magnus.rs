//! Magnus-series coefficients of a toggling sign `f(t)` and the resulting
//! effective generators.
//!
//! With `F = ∫f`, `Q = ∫(F − t f)`, `W_a = ∫(3Q − tF + t²f)` and
//! `W_b = ∫(3Qf − F² + tFf)` (all from 0), the coefficients are
//! `c₁ = F/t`, `c₂ = Q/2t²`, `c₃ₐ = W_a/12t³`, `c₃ᵦ = W_b/12t³`.
//! Because `f = ±1` is piecewise constant, every running integral is a
//! polynomial of degree ≤ 2 on each free interval and is integrated exactly.

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::liouville::{poisson_bracket, Superoperator};
use crate::pulses::PulseSequence;

/// Tolerance below which α₁ and α₂ count as vanishing.
pub const VANISHING_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MagnusCoefficients {
    pub alpha1: f64,
    pub alpha2: f64,
    pub alpha3a: f64,
    pub alpha3b: f64,
}

impl MagnusCoefficients {
    pub fn get(&self, order: MagnusOrder) -> f64 {
        match order {
            MagnusOrder::One => self.alpha1,
            MagnusOrder::Two => self.alpha2,
            MagnusOrder::ThreeA => self.alpha3a,
            MagnusOrder::ThreeB => self.alpha3b,
        }
    }
}

/// Coefficient index `n ∈ {1, 2, 3a, 3b}`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum MagnusOrder {
    One,
    Two,
    ThreeA,
    ThreeB,
}

impl MagnusOrder {
    pub const ALL: [MagnusOrder; 4] = [Self::One, Self::Two, Self::ThreeA, Self::ThreeB];

    /// The power `n` in `l^{1−n}`.
    pub fn degree(self) -> i32 {
        match self {
            Self::One => 1,
            Self::Two => 2,
            Self::ThreeA | Self::ThreeB => 3,
        }
    }
}

impl fmt::Display for MagnusOrder {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::One => "1",
            Self::Two => "2",
            Self::ThreeA => "3a",
            Self::ThreeB => "3b",
        })
    }
}

impl FromStr for MagnusOrder {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "1" => Ok(Self::One),
            "2" => Ok(Self::Two),
            "3a" => Ok(Self::ThreeA),
            "3b" => Ok(Self::ThreeB),
            other => Err(Error::InvalidInput(format!("Magnus coefficient index {other:?} not in {{1, 2, 3a, 3b}}"))),
        }
    }
}

/// A function given by a quadratic `c₀ + c₁x + c₂x²` in the local variable
/// `x = t − b_k` on each interval `[b_k, b_{k+1}]`.
#[derive(Debug, Clone, PartialEq)]
pub struct PiecewisePolynomial {
    breakpoints: Vec<f64>,
    coeffs: Vec<[f64; 3]>,
}

impl PiecewisePolynomial {
    pub fn breakpoints(&self) -> &[f64] {
        &self.breakpoints
    }

    pub fn segment_coefficients(&self) -> &[[f64; 3]] {
        &self.coeffs
    }

    pub fn eval(&self, t: f64) -> f64 {
        let last = self.coeffs.len() - 1;
        let k = self.breakpoints.partition_point(|&b| b <= t).saturating_sub(1).min(last);
        let x = t - self.breakpoints[k];
        let [c0, c1, c2] = self.coeffs[k];
        c0 + x * (c1 + x * c2)
    }
}

/// Running integrals `F, Q, W_a, W_b` of a pulse sequence.
#[derive(Debug, Clone)]
pub struct MagnusIntegrals {
    pub f: PiecewisePolynomial,
    pub q: PiecewisePolynomial,
    pub w3a: PiecewisePolynomial,
    pub w3b: PiecewisePolynomial,
    t_p: f64,
}

impl MagnusIntegrals {
    pub fn new(seq: &PulseSequence) -> Self {
        let segs = seq.segments();
        let mut breakpoints = Vec::with_capacity(segs.len() + 1);
        let (mut cf, mut cq, mut ca, mut cb) = (vec![], vec![], vec![], vec![]);
        let (mut f, mut q, mut wa, mut wb) = (0.0, 0.0, 0.0, 0.0);
        let mut t0 = 0.0;
        for (d, sign) in segs {
            let s = sign as f64;
            let a = f - s * t0;
            let a0 = 3.0 * q - t0 * f + s * t0 * t0;
            let b0 = 3.0 * s * q - f * f + s * t0 * f;
            breakpoints.push(t0);
            cf.push([f, s, 0.0]);
            cq.push([q, a, 0.0]);
            ca.push([wa, a0, a]);
            cb.push([wb, b0, s * a]);
            wa += d * (a0 + d * a);
            wb += d * (b0 + d * s * a);
            f += s * d;
            q += a * d;
            t0 += d;
        }
        breakpoints.push(seq.t_p());
        let poly = |coeffs| PiecewisePolynomial { breakpoints: breakpoints.clone(), coeffs };
        Self { f: poly(cf), q: poly(cq), w3a: poly(ca), w3b: poly(cb), t_p: seq.t_p() }
    }

    /// `c_n(t)` for `0 < t ≤ t_p`.
    pub fn coefficients_at(&self, t: f64) -> Result<MagnusCoefficients> {
        if !(t > 0.0 && t <= self.t_p * (1.0 + 1e-15)) {
            return Err(Error::InvalidInput(format!("time {t} outside (0, {}]", self.t_p)));
        }
        Ok(MagnusCoefficients {
            alpha1: self.f.eval(t) / t,
            alpha2: self.q.eval(t) / (2.0 * t * t),
            alpha3a: self.w3a.eval(t) / (12.0 * t * t * t),
            alpha3b: self.w3b.eval(t) / (12.0 * t * t * t),
        })
    }
}

/// `α_n = c_n(t_p)` of a basic unit.
pub fn coefficients(seq: &PulseSequence) -> MagnusCoefficients {
    MagnusIntegrals::new(seq)
        .coefficients_at(seq.t_p())
        .expect("t_p lies in its own unit")
}

/// `c_n(l·t_p) = l^{1−n} α_n`.
pub fn coefficients_scaled(seq: &PulseSequence, l: usize, order: MagnusOrder) -> Result<f64> {
    if l == 0 {
        return Err(Error::InvalidInput("repetition count must be ≥ 1".into()));
    }
    let alpha = coefficients(seq).get(order);
    Ok(alpha * (l as f64).powi(1 - order.degree()))
}

/// `c_n(l·t_p)` integrated directly on the `l`-fold repeated sequence.
pub fn coefficients_repeated(seq: &PulseSequence, l: usize, order: MagnusOrder) -> Result<f64> {
    Ok(coefficients(&seq.repeated(l)?).get(order))
}

/// Whether `value` differs from the printed `reference` by less than one unit
/// in its last (`figures`-th) significant digit. Zero references demand
/// `|value| < 1e-12`.
pub fn agrees_to_figures(value: f64, reference: f64, figures: i32) -> bool {
    if reference == 0.0 {
        return value.abs() < VANISHING_TOL;
    }
    let unit = 10f64.powf(reference.abs().log10().floor() - (figures - 1) as f64);
    (value - reference).abs() < unit
}

/// Magnus terms `Ω₁, Ω₂, Ω₃` at `t = l·t_p`.
#[derive(Debug, Clone)]
pub struct MagnusTerms {
    pub omega1: Superoperator,
    pub omega2: Superoperator,
    pub omega3: Superoperator,
}

impl MagnusTerms {
    pub fn total(&self) -> Result<Superoperator> {
        self.omega1.plus(&self.omega2)?.plus(&self.omega3)
    }
}

pub fn magnus_terms(
    l_p0: &Superoperator,
    l_n: &Superoperator,
    coeffs: &MagnusCoefficients,
    t_p: f64,
    l: usize,
) -> Result<MagnusTerms> {
    if l == 0 || !(t_p > 0.0) {
        return Err(Error::InvalidInput("need t_p > 0 and l ≥ 1".into()));
    }
    let t = t_p * l as f64;
    let pn = poisson_bracket(l_p0, l_n)?;
    let ppn = poisson_bracket(l_p0, &pn)?;
    let npn = poisson_bracket(l_n, &pn)?;
    let omega1 = l_p0.plus_scaled(coeffs.alpha1, l_n)?.scaled(t);
    let omega2 = pn.scaled(t * coeffs.alpha2 * t_p);
    let omega3 = ppn
        .scaled(t * coeffs.alpha3a * t_p * t_p)
        .plus_scaled(t * coeffs.alpha3b * t_p * t_p, &npn)?;
    Ok(MagnusTerms { omega1, omega2, omega3 })
}

/// `𝓛_P,0 + α₃ᵦ N² τ̄² [𝓛_N, [𝓛_P,0, 𝓛_N]]` for a unit with `α₁ = α₂ = 0`.
pub fn leading_generator(l_p0: &Superoperator, l_n: &Superoperator, seq: &PulseSequence) -> Result<Superoperator> {
    let c = coefficients(seq);
    if c.alpha1.abs() > VANISHING_TOL || c.alpha2.abs() > VANISHING_TOL {
        return Err(Error::InvalidInput(format!(
            "leading-order form needs α₁ = α₂ = 0 (got {:.3e}, {:.3e}) for {}",
            c.alpha1,
            c.alpha2,
            seq.label()
        )));
    }
    let n = seq.n_pulses() as f64;
    let tau_bar = seq.tau_bar();
    let npn = poisson_bracket(l_n, &poisson_bracket(l_p0, l_n)?)?;
    l_p0.plus_scaled(c.alpha3b * n * n * tau_bar * tau_bar, &npn)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pulses::{cdd_unit, cpmg_unit, udd_unit};

    #[test]
    fn free_unit() {
        let c = coefficients(&PulseSequence::free(1.0).unwrap());
        assert_eq!((c.alpha1, c.alpha2, c.alpha3a, c.alpha3b), (1.0, 0.0, 0.0, 0.0));
    }

    #[test]
    fn cpmg_coefficients() {
        let c = coefficients(&cpmg_unit(1.0).unwrap());
        assert!(c.alpha1.abs() < 1e-15 && c.alpha2.abs() < 1e-15);
        assert!((c.alpha3a - 1.0 / 32.0).abs() < 1e-15);
        assert!((c.alpha3b + 1.0 / 96.0).abs() < 1e-15);
    }

    #[test]
    fn udd_and_cdd_coefficients_to_three_figures() {
        let cases = [
            (udd_unit(3, 1.0).unwrap(), -5.05e-3),
            (udd_unit(4, 1.0).unwrap(), -3.04e-3),
            (udd_unit(5, 1.0).unwrap(), -2.04e-3),
            (cdd_unit(3, 1.0).unwrap(), -2.60e-3),
            (cdd_unit(4, 1.0).unwrap(), -6.51e-4),
        ];
        for (seq, expected) in cases {
            let c = coefficients(&seq);
            assert!(agrees_to_figures(c.alpha3b, expected, 3), "{} {}", seq.label(), c.alpha3b);
            assert!(c.alpha3a.abs() < 1e-14, "{} {}", seq.label(), c.alpha3a);
            assert!(c.alpha1.abs() < 1e-14 && c.alpha2.abs() < 1e-14);
        }
    }

    #[test]
    fn independent_of_unit_duration() {
        let a = coefficients(&udd_unit(5, 1.0).unwrap());
        let b = coefficients(&udd_unit(5, 3.7e-3).unwrap());
        assert!((a.alpha3b - b.alpha3b).abs() < 1e-14);
        assert!((a.alpha3a - b.alpha3a).abs() < 1e-14);
    }

    #[test]
    fn scaling_examples() {
        let cpmg = cpmg_unit(1.0).unwrap();
        let a1 = coefficients(&cpmg).alpha1;
        assert_eq!(coefficients_scaled(&cpmg, 7, MagnusOrder::One).unwrap(), a1);
        assert!(coefficients_scaled(&cpmg, 4, MagnusOrder::Two).unwrap().abs() < 1e-15);
        let udd3 = udd_unit(3, 1.0).unwrap();
        let scaled = coefficients_scaled(&udd3, 3, MagnusOrder::ThreeB).unwrap();
        let direct = coefficients_repeated(&udd3, 3, MagnusOrder::ThreeB).unwrap();
        assert!((scaled - direct).abs() < 1e-12);
        assert!((scaled - coefficients(&udd3).alpha3b / 9.0).abs() < 1e-15);
        assert!("4".parse::<MagnusOrder>().is_err());
    }

    #[test]
    fn running_integrals_continuous() {
        let seq = udd_unit(4, 2.0).unwrap();
        let ints = MagnusIntegrals::new(&seq);
        for &tau in seq.times() {
            for p in [&ints.f, &ints.q, &ints.w3a, &ints.w3b] {
                assert!((p.eval(tau - 1e-12) - p.eval(tau + 1e-12)).abs() < 1e-10);
            }
        }
    }
}
