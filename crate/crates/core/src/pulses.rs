//! π-pulse sequences, the toggling sign `f(t)` and schedules built from them.

use std::fmt;
use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, Exp};

use crate::error::{Error, Result};

/// Largest supported concatenation order.
pub const MAX_CDD_ORDER: usize = 12;

/// Sequence family tag as used in configuration files.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SequenceTag {
    None,
    Cpmg,
    Udd(usize),
    Cdd(usize),
    Random,
}

impl SequenceTag {
    /// Builds the basic unit for deterministic families.
    pub fn unit(self, t_p: f64) -> Result<PulseSequence> {
        match self {
            SequenceTag::None => PulseSequence::free(t_p),
            SequenceTag::Cpmg => cpmg_unit(t_p),
            SequenceTag::Udd(n) => udd_unit(n, t_p),
            SequenceTag::Cdd(k) => cdd_unit(k, t_p),
            SequenceTag::Random => Err(Error::InvalidInput(
                "random sequences have no basic unit; use random_schedule".into(),
            )),
        }
    }

    /// Pulse count of the basic unit, if deterministic.
    pub fn pulses_per_unit(self) -> Option<usize> {
        match self {
            SequenceTag::None => Some(0),
            SequenceTag::Cpmg => Some(2),
            SequenceTag::Udd(n) => Some(n),
            SequenceTag::Cdd(k) => cdd_pattern(k).ok().map(|p| p.len()),
            SequenceTag::Random => None,
        }
    }
}

impl fmt::Display for SequenceTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SequenceTag::None => write!(f, "none"),
            SequenceTag::Cpmg => write!(f, "cpmg"),
            SequenceTag::Udd(n) => write!(f, "udd{n}"),
            SequenceTag::Cdd(k) => write!(f, "cdd{k}"),
            SequenceTag::Random => write!(f, "random"),
        }
    }
}

impl FromStr for SequenceTag {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let lower = s.trim().to_ascii_lowercase();
        let number = |rest: &str| -> Result<usize> {
            rest.parse::<usize>()
                .map_err(|_| Error::InvalidInput(format!("unknown sequence tag {s:?}")))
        };
        match lower.as_str() {
            "none" => Ok(SequenceTag::None),
            "cpmg" => Ok(SequenceTag::Cpmg),
            "random" => Ok(SequenceTag::Random),
            t if t.starts_with("udd") => {
                let n = number(&t[3..])?;
                if n == 0 {
                    return Err(Error::InvalidInput("udd needs at least one pulse".into()));
                }
                Ok(SequenceTag::Udd(n))
            }
            t if t.starts_with("cdd") => {
                let k = number(&t[3..])?;
                if k == 0 || k > MAX_CDD_ORDER {
                    return Err(Error::InvalidInput(format!("cdd order {k} unsupported")));
                }
                Ok(SequenceTag::Cdd(k))
            }
            _ => Err(Error::InvalidInput(format!("unknown sequence tag {s:?}"))),
        }
    }
}

/// Pulse arrival times `0 < τ_1 < … < τ_N < t_p` of one basic unit.
#[derive(Debug, Clone, PartialEq)]
pub struct PulseSequence {
    t_p: f64,
    times: Vec<f64>,
    label: String,
}

impl PulseSequence {
    pub fn new(t_p: f64, times: Vec<f64>, label: impl Into<String>) -> Result<Self> {
        if !(t_p > 0.0) || !t_p.is_finite() {
            return Err(Error::InvalidInput(format!("unit duration {t_p} must be positive")));
        }
        let mut prev = 0.0;
        for (k, &t) in times.iter().enumerate() {
            if !(t > prev) || !(t < t_p) {
                return Err(Error::InvalidInput(format!(
                    "pulse {k} at {t} is not strictly inside ({prev}, {t_p})"
                )));
            }
            prev = t;
        }
        Ok(Self { t_p, times, label: label.into() })
    }

    pub fn free(t_p: f64) -> Result<Self> {
        Self::new(t_p, Vec::new(), "none")
    }

    /// Times given as fractions of the unit in `(0, 1)`.
    pub fn from_normalized(fractions: &[f64], t_p: f64, label: impl Into<String>) -> Result<Self> {
        Self::new(t_p, fractions.iter().map(|x| x * t_p).collect(), label)
    }

    pub fn t_p(&self) -> f64 {
        self.t_p
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn n_pulses(&self) -> usize {
        self.times.len()
    }

    /// Mean pulse interval `t_p/N`; infinite for a free unit.
    pub fn tau_bar(&self) -> f64 {
        self.t_p / self.times.len() as f64
    }

    /// Pulse density `N/t_p`.
    pub fn density(&self) -> f64 {
        self.times.len() as f64 / self.t_p
    }

    pub fn normalized_times(&self) -> Vec<f64> {
        self.times.iter().map(|t| t / self.t_p).collect()
    }

    /// Same pattern on a unit of duration `t_p`.
    pub fn with_duration(&self, t_p: f64) -> Result<Self> {
        Self::from_normalized(&self.normalized_times(), t_p, self.label.clone())
    }

    /// `f(t) = (−1)^i` with `i` the number of pulses at or before `t`.
    pub fn toggling_sign(&self, t: f64) -> Result<i8> {
        if !(0.0..=self.t_p).contains(&t) {
            return Err(Error::InvalidInput(format!("time {t} outside [0, {}]", self.t_p)));
        }
        let passed = self.times.partition_point(|&tau| tau <= t);
        Ok(if passed % 2 == 0 { 1 } else { -1 })
    }

    /// Free-evolution intervals `(duration, sign)` in temporal order.
    pub fn segments(&self) -> Vec<(f64, i8)> {
        let mut out = Vec::with_capacity(self.times.len() + 1);
        let mut start = 0.0;
        let mut sign = 1i8;
        for &t in self.times.iter().chain(std::iter::once(&self.t_p)) {
            out.push((t - start, sign));
            start = t;
            sign = -sign;
        }
        out
    }

    /// `Σ_i (−1)^i (τ_{i+1} − τ_i)` with `τ_0 = 0`, `τ_{N+1} = t_p`.
    pub fn signed_balance(&self) -> f64 {
        self.segments().iter().map(|&(d, s)| s as f64 * d).sum()
    }

    /// The unit repeated `l` times as one longer sequence.
    pub fn repeated(&self, l: usize) -> Result<Self> {
        if l == 0 {
            return Err(Error::InvalidInput("repetition count must be ≥ 1".into()));
        }
        let times = (0..l)
            .flat_map(|k| self.times.iter().map(move |t| t + k as f64 * self.t_p))
            .collect();
        Self::new(self.t_p * l as f64, times, format!("{}x{l}", self.label))
    }
}

/// Symmetric two-pulse unit with pulses at `t_p/4` and `3t_p/4`.
pub fn cpmg_unit(t_p: f64) -> Result<PulseSequence> {
    PulseSequence::from_normalized(&[0.25, 0.75], t_p, "cpmg")
}

/// Uhrig unit `τ_j = t_p sin²(πj/(2N+2))`.
pub fn udd_unit(n: usize, t_p: f64) -> Result<PulseSequence> {
    if n == 0 {
        return Err(Error::InvalidInput("udd needs at least one pulse".into()));
    }
    let times: Vec<f64> = (1..=n)
        .map(|j| {
            let s = (std::f64::consts::PI * j as f64 / (2 * n + 2) as f64).sin();
            s * s
        })
        .collect();
    PulseSequence::from_normalized(&times, t_p, format!("udd{n}"))
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum Token {
    Free,
    Pulse,
}

/// Pulse positions of the concatenated sequence in units of `t_p/2^order`.
///
/// `C_0` is free evolution and `C_k = C_{k−1} X C_{k−1} X`. Adjacent pulse
/// pairs cancel and a pulse at the very end of the unit is dropped.
fn cdd_pattern(order: usize) -> Result<Vec<usize>> {
    if order == 0 || order > MAX_CDD_ORDER {
        return Err(Error::InvalidInput(format!("cdd order {order} unsupported")));
    }
    let mut seq = vec![Token::Free];
    for _ in 0..order {
        let mut next: Vec<Token> = Vec::with_capacity(2 * seq.len() + 2);
        for tok in seq.iter().chain([Token::Pulse].iter()).chain(seq.iter()).chain([Token::Pulse].iter()) {
            if *tok == Token::Pulse && next.last() == Some(&Token::Pulse) {
                next.pop();
            } else {
                next.push(*tok);
            }
        }
        seq = next;
    }
    let mut positions = Vec::new();
    let mut elapsed = 0usize;
    for tok in &seq {
        match tok {
            Token::Free => elapsed += 1,
            Token::Pulse => positions.push(elapsed),
        }
    }
    let total = 1usize << order;
    positions.retain(|&p| p < total);
    Ok(positions)
}

/// Concatenated unit of the given order (order 2 is CPMG, orders 3 and 4
/// carry 5 and 10 pulses).
pub fn cdd_unit(order: usize, t_p: f64) -> Result<PulseSequence> {
    let scale = (1u64 << order.min(63)) as f64;
    let times: Vec<f64> = cdd_pattern(order)?.into_iter().map(|p| p as f64 / scale).collect();
    PulseSequence::from_normalized(&times, t_p, format!("cdd{order}"))
}

/// Pulse schedule over a whole run.
#[derive(Debug, Clone, PartialEq)]
pub enum Schedule {
    Periodic { unit: PulseSequence, repetitions: usize },
    Random { density: f64, duration: f64, seed: u64, times: Vec<f64> },
}

impl Schedule {
    pub fn duration(&self) -> f64 {
        match self {
            Schedule::Periodic { unit, repetitions } => unit.t_p() * *repetitions as f64,
            Schedule::Random { duration, .. } => *duration,
        }
    }

    pub fn n_pulses(&self) -> usize {
        match self {
            Schedule::Periodic { unit, repetitions } => unit.n_pulses() * repetitions,
            Schedule::Random { times, .. } => times.len(),
        }
    }

    /// Global pulse times in increasing order.
    pub fn flatten(&self) -> Vec<f64> {
        match self {
            Schedule::Periodic { unit, repetitions } => (0..*repetitions)
                .flat_map(|k| unit.times().iter().map(move |t| t + k as f64 * unit.t_p()))
                .collect(),
            Schedule::Random { times, .. } => times.clone(),
        }
    }

    /// Free-evolution intervals `(duration, sign)` over the whole schedule.
    pub fn segments(&self) -> Vec<(f64, i8)> {
        let times = self.flatten();
        let end = self.duration();
        let mut out = Vec::with_capacity(times.len() + 1);
        let mut start = 0.0;
        let mut sign = 1i8;
        for t in times.into_iter().chain(std::iter::once(end)) {
            if t > start {
                out.push((t - start, sign));
            }
            start = t;
            sign = -sign;
        }
        out
    }

    /// Sign `f(t)` anywhere in `[0, duration]`.
    pub fn toggling_sign(&self, t: f64) -> Result<i8> {
        if !(0.0..=self.duration()).contains(&t) {
            return Err(Error::InvalidInput(format!("time {t} outside schedule")));
        }
        let passed = match self {
            Schedule::Periodic { unit, .. } => {
                let k = (t / unit.t_p()).floor();
                let within = (t - k * unit.t_p()).clamp(0.0, unit.t_p());
                k as usize * unit.n_pulses() + unit.times().partition_point(|&tau| tau <= within)
            }
            Schedule::Random { times, .. } => times.partition_point(|&tau| tau <= t),
        };
        Ok(if passed % 2 == 0 { 1 } else { -1 })
    }
}

/// `l` back-to-back copies of `unit`.
pub fn repeat(unit: &PulseSequence, l: usize) -> Result<Schedule> {
    if l == 0 {
        return Err(Error::InvalidInput("repetition count must be ≥ 1".into()));
    }
    Ok(Schedule::Periodic { unit: unit.clone(), repetitions: l })
}

/// Poisson pulse train of rate `density` over `[0, duration]`.
pub fn random_schedule(density: f64, duration: f64, seed: u64) -> Result<Schedule> {
    if !(density > 0.0) || !density.is_finite() {
        return Err(Error::InvalidInput(format!("pulse density {density} must be positive")));
    }
    if !(duration > 0.0) || !duration.is_finite() {
        return Err(Error::InvalidInput(format!("duration {duration} must be positive")));
    }
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let gap = Exp::new(density).map_err(|e| Error::InvalidInput(e.to_string()))?;
    let mut times = Vec::new();
    let mut t = gap.sample(&mut rng);
    while t < duration {
        if times.last().is_none_or(|&last| t > last) {
            times.push(t);
        }
        t += gap.sample(&mut rng);
    }
    Ok(Schedule::Random { density, duration, seed, times })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: &[f64], b: &[f64], tol: f64) -> bool {
        a.len() == b.len() && a.iter().zip(b).all(|(x, y)| (x - y).abs() < tol)
    }

    #[test]
    fn toggling_sign_examples() {
        let free = PulseSequence::free(1.0).unwrap();
        assert_eq!(free.toggling_sign(0.7).unwrap(), 1);
        assert_eq!(cpmg_unit(1.0).unwrap().toggling_sign(0.5).unwrap(), -1);
        assert_eq!(udd_unit(3, 1.0).unwrap().toggling_sign(0.6).unwrap(), 1);
        assert_eq!(cpmg_unit(1.0).unwrap().toggling_sign(0.0).unwrap(), 1);
        assert!(cpmg_unit(1.0).unwrap().toggling_sign(1.5).is_err());
    }

    #[test]
    fn cpmg_is_balanced() {
        let c = cpmg_unit(1.0).unwrap();
        assert_eq!(c.times(), &[0.25, 0.75]);
        let even: f64 = c.segments().iter().filter(|s| s.1 > 0).map(|s| s.0).sum();
        assert_eq!(even, 0.5);
    }

    #[test]
    fn udd_closed_form() {
        let u = udd_unit(3, 1.0).unwrap();
        assert!(close(u.times(), &[0.14645, 0.5, 0.85355], 1e-5));
        assert!(close(udd_unit(1, 1.0).unwrap().times(), &[0.5], 1e-15));
        assert!(udd_unit(4, 1.0).unwrap().signed_balance().abs() < 1e-15);
        assert!(udd_unit(0, 1.0).is_err());
    }

    #[test]
    fn cdd_counts_and_times() {
        assert_eq!(cdd_unit(2, 1.0).unwrap().times(), cpmg_unit(1.0).unwrap().times());
        let c3 = cdd_unit(3, 1.0).unwrap();
        assert!(close(c3.times(), &[0.125, 0.375, 0.5, 0.625, 0.875], 1e-15));
        let c4 = cdd_unit(4, 1.0).unwrap();
        assert_eq!(c4.n_pulses(), 10);
        let expected: Vec<f64> = [1, 3, 4, 5, 7, 9, 11, 12, 13, 15].iter().map(|k| *k as f64 / 16.0).collect();
        assert!(close(c4.times(), &expected, 1e-15));
        assert!(cdd_unit(0, 1.0).is_err());
        assert!(cdd_unit(MAX_CDD_ORDER + 1, 1.0).is_err());
    }

    #[test]
    fn builtin_units_are_balanced() {
        for tag in ["cpmg", "udd1", "udd2", "udd3", "udd4", "udd5", "udd10", "cdd2", "cdd3", "cdd4", "cdd5"] {
            let seq = tag.parse::<SequenceTag>().unwrap().unit(1.0).unwrap();
            assert!(seq.signed_balance().abs() < 1e-14, "{tag}");
        }
    }

    #[test]
    fn tags_round_trip() {
        for tag in ["none", "cpmg", "udd7", "cdd3", "random"] {
            assert_eq!(tag.parse::<SequenceTag>().unwrap().to_string(), tag);
        }
        assert!("xy4".parse::<SequenceTag>().is_err());
        assert!("udd".parse::<SequenceTag>().is_err());
        assert_eq!(SequenceTag::Cdd(4).pulses_per_unit(), Some(10));
    }

    #[test]
    fn repetition_and_flatten() {
        let s = repeat(&cpmg_unit(1.0).unwrap(), 2).unwrap();
        assert_eq!(s.flatten(), vec![0.25, 0.75, 1.25, 1.75]);
        assert_eq!(s.n_pulses(), 4);
        assert_eq!(s.toggling_sign(1.0).unwrap(), 1);
        let odd = repeat(&udd_unit(3, 1.0).unwrap(), 2).unwrap();
        assert_eq!(odd.toggling_sign(1.0).unwrap(), -1);
        assert!(repeat(&cpmg_unit(1.0).unwrap(), 0).is_err());
    }

    #[test]
    fn invalid_times_rejected() {
        assert!(PulseSequence::new(1.0, vec![0.5, 0.4], "x").is_err());
        assert!(PulseSequence::new(1.0, vec![0.0], "x").is_err());
        assert!(PulseSequence::new(1.0, vec![1.0], "x").is_err());
        assert!(PulseSequence::new(0.0, vec![], "x").is_err());
    }

    #[test]
    fn random_schedule_is_deterministic() {
        let a = random_schedule(50.0, 10.0, 7).unwrap();
        let b = random_schedule(50.0, 10.0, 7).unwrap();
        let c = random_schedule(50.0, 10.0, 8).unwrap();
        assert_eq!(a, b);
        assert_ne!(a.flatten(), c.flatten());
        let n = a.n_pulses() as f64;
        assert!((n - 500.0).abs() < 3.0 * 500f64.sqrt());
        assert!(random_schedule(0.0, 1.0, 1).is_err());
    }
}
