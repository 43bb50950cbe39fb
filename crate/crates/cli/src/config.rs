//! Experiment configuration: a JSON document with `experiment`, `system`,
//! `noise`, `schedule`, `grid` and `run` blocks.
//!
//! Times are in units of `Λ_i⁻¹` for singlet experiments and `γ⁻¹` for the
//! cluster experiment; rates and frequencies use the matching inverse unit.
//! Unknown keys are rejected. Experiment-dependent defaults are filled in by
//! [`parse_config`], so the validated form serializes back to itself.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use ddprep_core::pulses::{PulseSequence, SequenceTag};
use serde::{Deserialize, Serialize};

use crate::registry::ExperimentId;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("{path}: {message}")]
pub struct ConfigError {
    pub path: String,
    pub message: String,
}

impl ConfigError {
    fn at(path: impl Into<String>, message: impl Into<String>) -> Self {
        Self { path: path.into(), message: message.into() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub experiment: ExperimentId,
    #[serde(default)]
    pub system: SystemConfig,
    #[serde(default)]
    pub noise: NoiseConfig,
    #[serde(default)]
    pub schedule: ScheduleConfig,
    #[serde(default)]
    pub grid: GridConfig,
    #[serde(default)]
    pub run: RunConfig,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemConfig {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub n_qubits: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lambda_h: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lambda_i: Option<f64>,
    /// Stabilizer pump rate (cluster experiment).
    #[serde(skip_serializing_if = "Option::is_none")]
    pub gamma: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NoiseKind {
    Inhomogeneous,
    Ou,
    Tabulated,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseConfig {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub kind: Option<NoiseKind>,
    /// Offsets `ω_i/Δ`; the evenly spread profile when absent.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub profile: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sigma2: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tau_c: Option<f64>,
    /// `(ω, G(ω))` pairs for tabulated spectra.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub spectrum: Option<Vec<[f64; 2]>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Pumping {
    Simultaneous,
    Sequential,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScheduleConfig {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sequences: Option<Vec<String>>,
    /// Fixed basic-unit duration.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub t_p: Option<f64>,
    /// Fixed mean pulse interval.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tau_bar: Option<f64>,
    /// Fixed pulse density.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub nbar: Option<f64>,
    /// Preparation time.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub duration: Option<f64>,
    /// Named sequences given as normalized pulse times in (0, 1).
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub custom: BTreeMap<String, Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub pumping: Option<Pumping>,
    /// Slot length for sequential pumping.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub slot: Option<f64>,
}

/// Values of a swept parameter: an explicit list, or `{"logspace": [a, b, n]}`
/// (`10^a … 10^b`) or `{"linspace": [a, b, n]}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Axis {
    List(Vec<f64>),
    Log { logspace: [f64; 3] },
    Lin { linspace: [f64; 3] },
}

impl Axis {
    pub fn values(&self) -> Vec<f64> {
        let span = |a: f64, b: f64, n: f64| -> Vec<f64> {
            let n = n as usize;
            match n {
                0 => vec![],
                1 => vec![a],
                _ => (0..n).map(|k| a + (b - a) * k as f64 / (n - 1) as f64).collect(),
            }
        };
        match self {
            Axis::List(v) => v.clone(),
            Axis::Log { logspace: [a, b, n] } => span(*a, *b, *n).into_iter().map(|e| 10f64.powf(e)).collect(),
            Axis::Lin { linspace: [a, b, n] } => span(*a, *b, *n),
        }
    }

    fn check(&self, path: &str) -> Result<(), ConfigError> {
        if let Axis::Log { logspace: [_, _, n] } | Axis::Lin { linspace: [_, _, n] } = self {
            if *n < 1.0 || n.fract() != 0.0 {
                return Err(ConfigError::at(path, format!("point count {n} must be a positive integer")));
            }
        }
        let v = self.values();
        if v.is_empty() {
            return Err(ConfigError::at(path, "grid range is empty"));
        }
        if v.iter().any(|x| !x.is_finite()) {
            return Err(ConfigError::at(path, "grid values must be finite"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub delta: Option<Axis>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub nbar: Option<Axis>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tau_bar: Option<Axis>,
    /// Frequencies for the memory-limit filter table.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub omega: Option<Axis>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BackendChoice {
    Exact,
    Adaptive,
    Leading,
    Ensemble,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CriterionMode {
    Horizon,
    Converged,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub backend: Option<BackendChoice>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub criterion: Option<CriterionMode>,
    /// Convergence tolerance (`converged` mode).
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tol: Option<f64>,
    /// Time cap (`converged` mode).
    #[serde(skip_serializing_if = "Option::is_none")]
    pub max_time: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub magnus_guard: Option<bool>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub workers: Option<usize>,
    /// Random schedules averaged per grid point.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seeds_per_point: Option<usize>,
    /// Monte Carlo trajectories per grid point.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub n_traj: Option<usize>,
}

/// A sequence entry resolved against the built-in families and `custom`.
#[derive(Debug, Clone, PartialEq)]
pub enum SequenceSpec {
    Tag(SequenceTag),
    Custom { name: String, times: Vec<f64> },
}

impl SequenceSpec {
    pub fn name(&self) -> String {
        match self {
            SequenceSpec::Tag(t) => t.to_string(),
            SequenceSpec::Custom { name, .. } => name.clone(),
        }
    }

    /// Pulses per basic unit; `None` for random schedules.
    pub fn pulses(&self) -> Option<usize> {
        match self {
            SequenceSpec::Tag(t) => t.pulses_per_unit(),
            SequenceSpec::Custom { times, .. } => Some(times.len()),
        }
    }

    pub fn unit(&self, t_p: f64) -> ddprep_core::Result<PulseSequence> {
        match self {
            SequenceSpec::Tag(t) => t.unit(t_p),
            SequenceSpec::Custom { name, times } => PulseSequence::from_normalized(times, t_p, name.clone()),
        }
    }

    pub fn is_random(&self) -> bool {
        matches!(self, SequenceSpec::Tag(SequenceTag::Random))
    }

    pub fn is_free(&self) -> bool {
        self.pulses() == Some(0)
    }
}

impl fmt::Display for SequenceSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.name())
    }
}

const REQUIRED_KEYS: &[&str] = &["experiment"];

/// Parses, fills defaults and validates.
pub fn parse_config(text: &str) -> Result<ExperimentConfig, ConfigError> {
    let value: serde_json::Value =
        serde_json::from_str(text).map_err(|e| ConfigError::at("<document>", format!("not valid JSON: {e}")))?;
    let missing: Vec<&str> = match &value {
        serde_json::Value::Object(map) => REQUIRED_KEYS.iter().copied().filter(|k| !map.contains_key(*k)).collect(),
        _ => return Err(ConfigError::at("<document>", "expected a JSON object")),
    };
    if !missing.is_empty() {
        return Err(ConfigError::at("<document>", format!("missing required keys: {}", missing.join(", "))));
    }
    let raw: ExperimentConfig = serde_path_to_error::deserialize(value).map_err(|e| {
        let path = e.path().to_string();
        ConfigError::at(if path.is_empty() || path == "." { "<document>".to_string() } else { path }, e.into_inner().to_string())
    })?;
    let filled = raw.with_defaults();
    filled.validate()?;
    Ok(filled)
}

pub fn to_json(config: &ExperimentConfig) -> String {
    serde_json::to_string_pretty(config).expect("configs serialize")
}

fn positive(path: &str, v: Option<f64>) -> Result<(), ConfigError> {
    match v {
        Some(x) if !(x > 0.0) || !x.is_finite() => Err(ConfigError::at(path, format!("must be positive, got {x}"))),
        _ => Ok(()),
    }
}

fn positive_axis(path: &str, axis: &Option<Axis>, allow_zero: bool) -> Result<(), ConfigError> {
    if let Some(a) = axis {
        a.check(path)?;
        let ok = |x: f64| if allow_zero { x >= 0.0 } else { x > 0.0 };
        if let Some(bad) = a.values().into_iter().find(|&x| !ok(x)) {
            return Err(ConfigError::at(path, format!("value {bad} out of range")));
        }
    }
    Ok(())
}

impl ExperimentConfig {
    /// Fills experiment-dependent defaults; idempotent.
    pub fn with_defaults(mut self) -> Self {
        use ExperimentId::*;
        let id = self.experiment;
        let sys = &mut self.system;
        let sched = &mut self.schedule;
        let grid = &mut self.grid;
        let run = &mut self.run;
        let noise = &mut self.noise;
        let seqs = |v: &[&str]| v.iter().map(|s| s.to_string()).collect::<Vec<_>>();
        let log = |a: f64, b: f64, n: usize| Axis::Log { logspace: [a, b, n as f64] };
        run.seed.get_or_insert(0);
        match id {
            Table1 => {
                sched.sequences.get_or_insert_with(|| seqs(&["none", "cpmg", "cdd3", "cdd4", "udd3", "udd4", "udd5"]));
            }
            Fig3a | Fig3b | Fig4 | Fig5 | Fig6 => {
                sys.n_qubits.get_or_insert(6);
                sys.lambda_h.get_or_insert(if matches!(id, Fig3a | Fig3b) { 10.0 } else { 100.0 });
                sys.lambda_i.get_or_insert(1.0);
                noise.kind.get_or_insert(NoiseKind::Inhomogeneous);
                sched.duration.get_or_insert(50.0);
                run.backend.get_or_insert(BackendChoice::Exact);
                run.criterion.get_or_insert(CriterionMode::Horizon);
                run.magnus_guard.get_or_insert(false);
                match id {
                    Fig3a => {
                        sched.sequences.get_or_insert_with(|| seqs(&["cpmg", "cdd3", "cdd4", "udd5", "udd10"]));
                        sched.t_p.get_or_insert(1e-3);
                        grid.delta.get_or_insert_with(|| log(-1.0, 3.0, 9));
                    }
                    Fig3b => {
                        sched.sequences.get_or_insert_with(|| seqs(&["cpmg", "cdd3", "udd5", "udd10"]));
                        sched.tau_bar.get_or_insert(1e-4);
                        grid.delta.get_or_insert_with(|| log(-1.0, 3.0, 9));
                    }
                    Fig4 => {
                        sched.sequences.get_or_insert_with(|| seqs(&["cpmg"]));
                        grid.delta.get_or_insert_with(|| log(0.0, 2.0, 5));
                        grid.nbar.get_or_insert_with(|| log(2.0, 4.0, 5));
                    }
                    Fig5 => {
                        sched.sequences.get_or_insert_with(|| seqs(&["cpmg", "udd3"]));
                        sched.nbar.get_or_insert(10f64.powf(2.75));
                        grid.delta.get_or_insert_with(|| log(0.5, 2.5, 6));
                    }
                    _ => {
                        sched.sequences.get_or_insert_with(|| seqs(&["random"]));
                        grid.delta.get_or_insert_with(|| log(-0.5, 0.5, 3));
                        grid.nbar.get_or_insert_with(|| log(3.0, 4.0, 3));
                        run.seeds_per_point.get_or_insert(8);
                    }
                }
            }
            Fig8 => {
                sys.n_qubits.get_or_insert(4);
                sys.gamma.get_or_insert(1.0);
                noise.kind.get_or_insert(NoiseKind::Inhomogeneous);
                sched.sequences.get_or_insert_with(|| seqs(&["none", "cpmg"]));
                sched.duration.get_or_insert(50.0);
                sched.pumping.get_or_insert(Pumping::Simultaneous);
                grid.delta.get_or_insert_with(|| Axis::List(vec![0.0, 0.05, 0.1, 0.25, 0.5]));
                grid.nbar.get_or_insert_with(|| log(1.0, 3.0, 5));
                run.backend.get_or_insert(BackendChoice::Exact);
                run.criterion.get_or_insert(CriterionMode::Horizon);
            }
            DynamicNoiseScaling => {
                sys.n_qubits.get_or_insert(4);
                sys.lambda_h.get_or_insert(10.0);
                sys.lambda_i.get_or_insert(1.0);
                noise.kind.get_or_insert(NoiseKind::Ou);
                noise.sigma2.get_or_insert(4.0);
                noise.tau_c.get_or_insert(1.0);
                sched.sequences.get_or_insert_with(|| seqs(&["cpmg"]));
                sched.duration.get_or_insert(10.0);
                grid.tau_bar.get_or_insert_with(|| Axis::List(vec![0.02, 0.0141, 0.01, 0.00707]));
                run.n_traj.get_or_insert(256);
            }
        }
        if run.criterion == Some(CriterionMode::Converged) {
            run.tol.get_or_insert(1e-7);
            run.max_time.get_or_insert(1e4);
        }
        self
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        use ExperimentId::*;
        let id = self.experiment;
        positive("system.lambda_h", self.system.lambda_h)?;
        positive("system.lambda_i", self.system.lambda_i)?;
        positive("system.gamma", self.system.gamma)?;
        positive("schedule.t_p", self.schedule.t_p)?;
        positive("schedule.tau_bar", self.schedule.tau_bar)?;
        positive("schedule.nbar", self.schedule.nbar)?;
        positive("schedule.duration", self.schedule.duration)?;
        positive("schedule.slot", self.schedule.slot)?;
        positive("noise.tau_c", self.noise.tau_c)?;
        positive("run.tol", self.run.tol)?;
        positive("run.max_time", self.run.max_time)?;
        if let Some(s) = self.noise.sigma2 {
            if !(s >= 0.0) || !s.is_finite() {
                return Err(ConfigError::at("noise.sigma2", format!("must be non-negative, got {s}")));
            }
        }
        if let Some(n) = self.system.n_qubits {
            let ok = match id {
                Fig8 => (2..=8).contains(&n),
                _ => n >= 2 && n % 2 == 0 && n <= 8,
            };
            if !ok {
                return Err(ConfigError::at("system.n_qubits", format!("{n} qubits not supported here")));
            }
        }
        if self.run.workers == Some(0) {
            return Err(ConfigError::at("run.workers", "must be at least 1"));
        }
        if self.run.seeds_per_point == Some(0) {
            return Err(ConfigError::at("run.seeds_per_point", "must be at least 1"));
        }
        if self.run.n_traj == Some(0) {
            return Err(ConfigError::at("run.n_traj", "must be at least 1"));
        }
        positive_axis("grid.delta", &self.grid.delta, true)?;
        positive_axis("grid.nbar", &self.grid.nbar, false)?;
        positive_axis("grid.tau_bar", &self.grid.tau_bar, false)?;
        positive_axis("grid.omega", &self.grid.omega, true)?;
        if let Some(p) = &self.noise.profile {
            if p.iter().any(|x| !x.is_finite()) {
                return Err(ConfigError::at("noise.profile", "offsets must be finite"));
            }
            if let Some(n) = self.system.n_qubits {
                if p.len() != n {
                    return Err(ConfigError::at("noise.profile", format!("{} offsets for {n} qubits", p.len())));
                }
            }
        }
        for (name, times) in &self.schedule.custom {
            let path = format!("schedule.custom.{name}");
            if SequenceTag::from_str(name).is_ok() {
                return Err(ConfigError::at(path, "name shadows a built-in sequence tag"));
            }
            PulseSequence::from_normalized(times, 1.0, name.clone()).map_err(|e| ConfigError::at(path, e.to_string()))?;
        }
        let seqs = self.sequences()?;
        match id {
            Table1 => {
                if seqs.iter().any(|s| s.is_random()) {
                    return Err(ConfigError::at("schedule.sequences", "random schedules have no Table I coefficients"));
                }
            }
            Fig3a | Fig3b | Fig5 => {
                let (key, fixed) = match id {
                    Fig3a => ("schedule.t_p", self.schedule.t_p),
                    Fig3b => ("schedule.tau_bar", self.schedule.tau_bar),
                    _ => ("schedule.nbar", self.schedule.nbar),
                };
                if fixed.is_none() {
                    return Err(ConfigError::at(key, "required for this experiment"));
                }
                if let Some((k, s)) = seqs.iter().enumerate().find(|(_, s)| s.is_random() || s.is_free()) {
                    return Err(ConfigError::at(format!("schedule.sequences[{k}]"), format!("{s} has no basic unit to fix")));
                }
                if self.grid.delta.is_none() {
                    return Err(ConfigError::at("grid.delta", "required for this experiment"));
                }
            }
            Fig4 | Fig6 | Fig8 => {
                if self.grid.delta.is_none() || self.grid.nbar.is_none() {
                    return Err(ConfigError::at("grid", "needs both delta and nbar axes"));
                }
            }
            DynamicNoiseScaling => {
                if self.grid.tau_bar.is_none() {
                    return Err(ConfigError::at("grid.tau_bar", "required for this experiment"));
                }
                if let Some((k, s)) = seqs.iter().enumerate().find(|(_, s)| s.is_free() || s.is_random()) {
                    return Err(ConfigError::at(format!("schedule.sequences[{k}]"), format!("{s} has no fixed pulse interval")));
                }
            }
        }
        match (id, self.noise.kind) {
            (DynamicNoiseScaling, Some(NoiseKind::Inhomogeneous)) => {
                return Err(ConfigError::at("noise.kind", "dynamic noise needs an ou or tabulated spectrum"));
            }
            (DynamicNoiseScaling, Some(NoiseKind::Ou)) => {
                if self.noise.sigma2.is_none() || self.noise.tau_c.is_none() {
                    return Err(ConfigError::at("noise", "ou noise needs sigma2 and tau_c"));
                }
            }
            (DynamicNoiseScaling, Some(NoiseKind::Tabulated)) => {
                let pts = self.noise.spectrum.as_ref().ok_or_else(|| ConfigError::at("noise.spectrum", "required for tabulated noise"))?;
                let pts: Vec<(f64, f64)> = pts.iter().map(|p| (p[0], p[1])).collect();
                ddprep_core::dynamic_noise::TabulatedSpectrum::new(&pts).map_err(|e| ConfigError::at("noise.spectrum", e.to_string()))?;
            }
            (Table1, _) | (DynamicNoiseScaling, None) => {}
            (_, Some(NoiseKind::Inhomogeneous)) | (_, None) => {}
            (_, Some(_)) => return Err(ConfigError::at("noise.kind", "this experiment uses static inhomogeneous offsets")),
        }
        if self.schedule.pumping == Some(Pumping::Sequential) && self.schedule.slot.is_none() {
            return Err(ConfigError::at("schedule.slot", "sequential pumping needs a slot length"));
        }
        match (self.run.backend, id) {
            (Some(BackendChoice::Leading), Fig5) | (None, _) | (Some(BackendChoice::Exact), _) => {}
            (Some(BackendChoice::Ensemble), Fig6) => {}
            (Some(BackendChoice::Adaptive), Fig3a | Fig3b | Fig4 | Fig5 | Fig8) => {}
            (Some(b), _) => {
                return Err(ConfigError::at("run.backend", format!("{b:?} backend not available for {id}").to_lowercase()));
            }
        }
        Ok(())
    }

    /// Sequence entries resolved in order.
    pub fn sequences(&self) -> Result<Vec<SequenceSpec>, ConfigError> {
        let list = self.schedule.sequences.clone().unwrap_or_default();
        if list.is_empty() && self.experiment != ExperimentId::Table1 {
            return Err(ConfigError::at("schedule.sequences", "at least one sequence is required"));
        }
        list.iter()
            .enumerate()
            .map(|(k, name)| {
                if let Some(times) = self.schedule.custom.get(name) {
                    return Ok(SequenceSpec::Custom { name: name.clone(), times: times.clone() });
                }
                SequenceTag::from_str(name)
                    .map(SequenceSpec::Tag)
                    .map_err(|e| ConfigError::at(format!("schedule.sequences[{k}]"), e.to_string()))
            })
            .collect()
    }

    pub fn seed(&self) -> u64 {
        self.run.seed.unwrap_or(0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_fig3a_config_fills_caption_parameters() {
        let cfg = parse_config(
            r#"{"experiment": "fig3a", "system": {"n_qubits": 6, "lambda_h": 10},
                "schedule": {"t_p": 1e-3, "sequences": ["cpmg", "cdd3", "cdd4", "udd5", "udd10"]}}"#,
        )
        .unwrap();
        assert_eq!(cfg.system.lambda_i, Some(1.0));
        assert_eq!(cfg.schedule.t_p, Some(1e-3));
        assert_eq!(cfg.sequences().unwrap().len(), 5);
    }

    #[test]
    fn empty_document_lists_required_keys() {
        let err = parse_config("{}").unwrap_err();
        assert!(err.message.contains("experiment"), "{err}");
        assert!(parse_config("").is_err());
    }

    #[test]
    fn negative_rate_reported_at_key_path() {
        let err = parse_config(r#"{"experiment": "fig4", "system": {"lambda_i": -1}}"#).unwrap_err();
        assert_eq!(err.path, "system.lambda_i");
    }

    #[test]
    fn unknown_keys_and_tags_rejected() {
        let err = parse_config(r#"{"experiment": "fig4", "system": {"lamda_h": 1}}"#).unwrap_err();
        assert!(err.path.starts_with("system"), "{err}");
        let err = parse_config(r#"{"experiment": "fig4", "schedule": {"sequences": ["xy4"]}}"#).unwrap_err();
        assert_eq!(err.path, "schedule.sequences[0]");
        assert!(parse_config(r#"{"experiment": "fig9"}"#).is_err());
    }

    #[test]
    fn custom_sequences_resolve() {
        let cfg = parse_config(
            r#"{"experiment": "table1", "schedule": {"sequences": ["mine"], "custom": {"mine": [0.25, 0.75]}}}"#,
        )
        .unwrap();
        assert_eq!(cfg.sequences().unwrap()[0].pulses(), Some(2));
        assert!(parse_config(r#"{"experiment": "table1", "schedule": {"custom": {"cpmg": [0.5]}}}"#).is_err());
    }

    #[test]
    fn round_trip_is_identity() {
        for id in crate::registry::REGISTRY.iter().map(|e| e.id) {
            let text = format!(r#"{{"experiment": "{id}"}}"#);
            let cfg = parse_config(&text).unwrap();
            let again = parse_config(&to_json(&cfg)).unwrap();
            assert_eq!(cfg, again, "{id}");
        }
    }

    #[test]
    fn axes_expand() {
        assert_eq!(Axis::Log { logspace: [0.0, 2.0, 3.0] }.values(), vec![1.0, 10.0, 100.0]);
        assert_eq!(Axis::Lin { linspace: [1.0, 2.0, 3.0] }.values(), vec![1.0, 1.5, 2.0]);
        let err = parse_config(r#"{"experiment": "fig4", "grid": {"nbar": {"logspace": [1, 2, 0]}}}"#).unwrap_err();
        assert_eq!(err.path, "grid.nbar");
    }
}
