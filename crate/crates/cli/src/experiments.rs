//! Grid planning, per-point evaluation and post-run checks.

use ddprep_core::cluster::{run_protected_cluster, run_sequential_cluster, ClusterScheme};
use ddprep_core::dynamic_noise::{
    memory_limit_filter, suppression_exponent, DephasingNoise, OUNoiseSpec, StepOptions, StochasticDephasing,
    TabulatedSpectrum,
};
use ddprep_core::magnus::{agrees_to_figures, coefficients};
use ddprep_core::protocol::{Backend, Protection, RunOptions, SteadyCriterion};
use ddprep_core::pulses::repeat;
use ddprep_core::singlet::{
    fit_residue_exponents, run_protected_preparation, InhomogeneousNoiseSpec, SingletChannelSpec, SingletScheme,
};
use serde::Serialize;

use crate::config::{BackendChoice, CriterionMode, ExperimentConfig, NoiseKind, Pumping, SequenceSpec};
use crate::registry::ExperimentId;
use crate::table::{num, ResultTable};

const SINGLET_COLUMNS: [&str; 9] =
    ["experiment", "sequence", "delta", "t_p", "n_pulses", "nbar", "p_j0", "p_j0_stderr", "units_to_converge"];

/// One independent unit of work.
#[derive(Debug, Clone, PartialEq)]
pub enum Point {
    Coefficients { seq: SequenceSpec },
    Singlet { seq: SequenceSpec, delta: f64, t_p: Option<f64>, nbar: f64, backend: BackendChoice },
    Cluster { seq: SequenceSpec, delta: f64, nbar: f64 },
    Dynamic { seq: SequenceSpec, tau_bar: f64 },
}

impl Point {
    pub fn label(&self) -> String {
        match self {
            Point::Coefficients { seq } => format!("sequence={seq}"),
            Point::Singlet { seq, delta, nbar, backend, .. } => {
                format!("sequence={seq} delta={delta} nbar={nbar} backend={backend:?}").to_lowercase()
            }
            Point::Cluster { seq, delta, nbar } => format!("sequence={seq} delta={delta} nbar={nbar}"),
            Point::Dynamic { seq, tau_bar } => format!("sequence={seq} tau_bar={tau_bar}"),
        }
    }
}

pub struct Plan {
    pub columns: Vec<&'static str>,
    pub points: Vec<Point>,
}

fn values(axis: &Option<crate::config::Axis>) -> Vec<f64> {
    axis.as_ref().map(|a| a.values()).unwrap_or_default()
}

/// Enumerates grid points in a fixed order; rows are written in this order.
pub fn plan(cfg: &ExperimentConfig) -> Plan {
    use ExperimentId::*;
    let seqs = cfg.sequences().expect("validated config");
    let deltas = values(&cfg.grid.delta);
    let nbars = values(&cfg.grid.nbar);
    let backend = cfg.run.backend.unwrap_or(BackendChoice::Exact);
    let mut points = Vec::new();
    let columns: Vec<&'static str> = match cfg.experiment {
        Table1 => {
            points.extend(seqs.into_iter().map(|seq| Point::Coefficients { seq }));
            vec!["sequence", "N", "alpha1", "alpha2", "alpha3a", "alpha3b", "alpha3b_N2"]
        }
        Fig3a | Fig3b | Fig5 => {
            for seq in &seqs {
                let n = seq.pulses().expect("validated: deterministic sequence") as f64;
                let t_p = match cfg.experiment {
                    Fig3a => cfg.schedule.t_p.unwrap(),
                    Fig3b => n * cfg.schedule.tau_bar.unwrap(),
                    _ => n / cfg.schedule.nbar.unwrap(),
                };
                for &delta in &deltas {
                    let backends: &[BackendChoice] =
                        if cfg.experiment == Fig5 { &[BackendChoice::Exact, BackendChoice::Leading] } else { &[backend] };
                    for &b in backends {
                        let b = if cfg.experiment == Fig5 && b == BackendChoice::Exact { backend } else { b };
                        points.push(Point::Singlet { seq: seq.clone(), delta, t_p: Some(t_p), nbar: n / t_p, backend: b });
                    }
                }
            }
            let mut c = SINGLET_COLUMNS.to_vec();
            if cfg.experiment == Fig5 {
                c.push("backend");
            }
            c
        }
        Fig4 | Fig6 => {
            for seq in &seqs {
                for &delta in &deltas {
                    for &nbar in &nbars {
                        let t_p = seq.pulses().filter(|&n| n > 0).map(|n| n as f64 / nbar);
                        points.push(Point::Singlet { seq: seq.clone(), delta, t_p, nbar, backend });
                    }
                }
            }
            SINGLET_COLUMNS.to_vec()
        }
        Fig8 => {
            for seq in &seqs {
                for &delta in &deltas {
                    if seq.is_free() {
                        points.push(Point::Cluster { seq: seq.clone(), delta, nbar: 0.0 });
                    } else {
                        points.extend(nbars.iter().map(|&nbar| Point::Cluster { seq: seq.clone(), delta, nbar }));
                    }
                }
            }
            vec!["delta", "nbar", "sequence", "fidelity", "units_to_converge"]
        }
        DynamicNoiseScaling => {
            for seq in &seqs {
                points.extend(values(&cfg.grid.tau_bar).into_iter().map(|tau_bar| Point::Dynamic { seq: seq.clone(), tau_bar }));
            }
            vec!["sequence", "tau_bar", "sigma2", "tau_c", "infidelity", "stderr", "n_traj"]
        }
    };
    Plan { columns, points }
}

fn run_options(cfg: &ExperimentConfig, backend: BackendChoice) -> RunOptions {
    let criterion = match cfg.run.criterion.unwrap_or(CriterionMode::Horizon) {
        CriterionMode::Horizon => SteadyCriterion::Horizon { time: cfg.schedule.duration.unwrap_or(50.0) },
        CriterionMode::Converged => SteadyCriterion::Converged {
            tol: cfg.run.tol.unwrap_or(1e-7),
            max_time: cfg.run.max_time.unwrap_or(1e4),
        },
    };
    RunOptions {
        backend: match backend {
            BackendChoice::Exact => Backend::Exact,
            BackendChoice::Adaptive => Backend::Adaptive,
            BackendChoice::Leading => Backend::LeadingMagnus,
            BackendChoice::Ensemble => Backend::Ensemble,
        },
        criterion,
        magnus_guard: cfg.run.magnus_guard.unwrap_or(false),
        ..Default::default()
    }
}

fn inhomogeneous(cfg: &ExperimentConfig, n: usize, delta: f64) -> ddprep_core::Result<InhomogeneousNoiseSpec> {
    match &cfg.noise.profile {
        Some(p) => InhomogeneousNoiseSpec::new(p.iter().map(|x| x * delta).collect()),
        None => InhomogeneousNoiseSpec::linear(n, delta),
    }
}

fn singlet_scheme(cfg: &ExperimentConfig, delta: f64) -> ddprep_core::Result<SingletScheme> {
    let n = cfg.system.n_qubits.unwrap_or(6);
    let spec = SingletChannelSpec::new(n, cfg.system.lambda_h.unwrap_or(10.0), cfg.system.lambda_i.unwrap_or(1.0))?;
    SingletScheme::new(spec, inhomogeneous(cfg, n, delta)?)
}

fn mean_stderr(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

/// Seed of the `k`-th random schedule of a point.
fn sub_seed(point_seed: u64, k: usize) -> u64 {
    use rand::{RngCore, SeedableRng};
    let mut rng = rand_chacha::ChaCha20Rng::seed_from_u64(point_seed);
    rng.set_stream(k as u64 + 1);
    rng.next_u64()
}

/// Evaluates one point into a row.
pub fn evaluate(cfg: &ExperimentConfig, point: &Point, seed: u64) -> ddprep_core::Result<Vec<String>> {
    match point {
        Point::Coefficients { seq } => {
            let unit = seq.unit(1.0)?;
            let c = coefficients(&unit);
            let n = unit.n_pulses() as f64;
            Ok(vec![
                seq.name(),
                num(n),
                num(c.alpha1),
                num(c.alpha2),
                num(c.alpha3a),
                num(c.alpha3b),
                num(c.alpha3b * n * n),
            ])
        }
        Point::Singlet { seq, delta, t_p, nbar, backend } => {
            let scheme = singlet_scheme(cfg, *delta)?;
            let opts = run_options(cfg, *backend);
            let (p, se, units, t_p_out, n_out) = if seq.is_random() {
                if *backend == BackendChoice::Ensemble {
                    let out = run_protected_preparation(&scheme, &Protection::Random { density: *nbar, seed }, &opts)?;
                    (out.p_j0, 0.0, out.diagnostics.units, 1.0 / nbar, 1.0)
                } else {
                    let seeds = cfg.run.seeds_per_point.unwrap_or(8);
                    let mut ps = Vec::with_capacity(seeds);
                    let mut units = 0;
                    for k in 0..seeds {
                        let prot = Protection::Random { density: *nbar, seed: sub_seed(seed, k) };
                        let out = run_protected_preparation(&scheme, &prot, &opts)?;
                        ps.push(out.p_j0);
                        units = units.max(out.diagnostics.units);
                    }
                    let (m, s) = mean_stderr(&ps);
                    (m, s, units, 1.0 / nbar, 1.0)
                }
            } else {
                let (prot, tp, n) = match t_p {
                    Some(tp) if !seq.is_free() => {
                        let unit = seq.unit(*tp)?;
                        let n = unit.n_pulses() as f64;
                        (Protection::Periodic(unit), *tp, n)
                    }
                    _ => (Protection::Free, 0.0, 0.0),
                };
                let out = run_protected_preparation(&scheme, &prot, &opts)?;
                (out.p_j0, 0.0, out.diagnostics.units, tp, n)
            };
            let mut row = vec![
                cfg.experiment.to_string(),
                seq.name(),
                num(*delta),
                num(t_p_out),
                num(n_out),
                num(if n_out > 0.0 { *nbar } else { 0.0 }),
                num(p),
                num(se),
                units.to_string(),
            ];
            if cfg.experiment == ExperimentId::Fig5 {
                row.push(format!("{backend:?}").to_lowercase());
            }
            Ok(row)
        }
        Point::Cluster { seq, delta, nbar } => {
            let n = cfg.system.n_qubits.unwrap_or(4);
            let gamma = cfg.system.gamma.unwrap_or(1.0);
            let scheme = ClusterScheme::linear(n, gamma, *delta)?;
            let opts = run_options(cfg, cfg.run.backend.unwrap_or(BackendChoice::Exact));
            let protections: Vec<Protection> = if seq.is_free() {
                vec![Protection::Free]
            } else if seq.is_random() {
                (0..cfg.run.seeds_per_point.unwrap_or(1))
                    .map(|k| Protection::Random { density: *nbar, seed: sub_seed(seed, k) })
                    .collect()
            } else {
                let n_p = seq.pulses().unwrap_or(0) as f64;
                vec![Protection::Periodic(seq.unit(n_p / nbar)?)]
            };
            let mut fids = Vec::new();
            let mut units = 0;
            for prot in &protections {
                let out = match cfg.schedule.pumping.unwrap_or(Pumping::Simultaneous) {
                    Pumping::Simultaneous => run_protected_cluster(&scheme, prot, &opts)?,
                    Pumping::Sequential => run_sequential_cluster(
                        &scheme,
                        &InhomogeneousNoiseSpec::linear(n, *delta)?,
                        prot,
                        cfg.schedule.slot.unwrap_or(1.0),
                        cfg.schedule.duration.unwrap_or(50.0),
                    )?,
                };
                fids.push(out.fidelity);
                units = units.max(out.diagnostics.units);
            }
            let (f, _) = mean_stderr(&fids);
            Ok(vec![num(*delta), num(*nbar), seq.name(), num(f), units.to_string()])
        }
        Point::Dynamic { seq, tau_bar } => {
            let n = cfg.system.n_qubits.unwrap_or(4);
            let spec = SingletChannelSpec::new(n, cfg.system.lambda_h.unwrap_or(10.0), cfg.system.lambda_i.unwrap_or(1.0))?;
            let scheme = SingletScheme::with_linear_profile(spec, 0.0)?;
            let duration = cfg.schedule.duration.unwrap_or(10.0);
            let horizon = RunOptions { criterion: SteadyCriterion::Horizon { time: duration }, ..Default::default() };
            let p0 = run_protected_preparation(&scheme, &Protection::Free, &horizon)?.p_j0;
            let (noise, sigma2, tau_c) = dephasing_noise(cfg)?;
            let sim = StochasticDephasing::new(scheme.system().preparation().clone(), noise)?;
            let n_p = seq.pulses().unwrap_or(2).max(1);
            let t_p = n_p as f64 * tau_bar;
            let reps = ((duration / t_p).round() as usize).max(1);
            let sched = repeat(&seq.unit(t_p)?, reps)?;
            let n_traj = cfg.run.n_traj.unwrap_or(256);
            let out = sim.run(
                scheme.initial_state(),
                &sched,
                &[scheme.population_functional().clone()],
                n_traj,
                seed,
                &StepOptions::default(),
            )?;
            let stat = out.observables[0];
            Ok(vec![
                seq.name(),
                num(*tau_bar),
                num(sigma2),
                num(tau_c),
                num(p0 - stat.mean),
                num(stat.stderr),
                n_traj.to_string(),
            ])
        }
    }
}

fn dephasing_noise(cfg: &ExperimentConfig) -> ddprep_core::Result<(DephasingNoise, f64, f64)> {
    match cfg.noise.kind {
        Some(NoiseKind::Tabulated) => {
            let pts: Vec<(f64, f64)> = cfg.noise.spectrum.iter().flatten().map(|p| (p[0], p[1])).collect();
            let tab = TabulatedSpectrum::new(&pts)?;
            let var = tab.variance();
            Ok((DephasingNoise::Tabulated(tab), var, 0.0))
        }
        _ => {
            let ou = OUNoiseSpec::new(cfg.noise.sigma2.unwrap_or(4.0), cfg.noise.tau_c.unwrap_or(1.0))?;
            Ok((DephasingNoise::Ou(ou), ou.sigma2, ou.tau_c))
        }
    }
}

/// Memory-limit filter of each basic unit over `grid.omega`.
pub fn filter_table(cfg: &ExperimentConfig) -> ddprep_core::Result<Option<ResultTable>> {
    let Some(omegas) = cfg.grid.omega.as_ref().map(|a| a.values()) else { return Ok(None) };
    let mut table = ResultTable::new(&["sequence", "tau_bar", "omega", "value"]);
    for seq in cfg.sequences().expect("validated config") {
        for tau_bar in values(&cfg.grid.tau_bar) {
            let n = seq.pulses().unwrap_or(1).max(1) as f64;
            let segs = seq.unit(n * tau_bar)?.segments();
            for &w in &omegas {
                table.push(vec![seq.name(), num(tau_bar), num(w), num(memory_limit_filter(&segs, w).value)]);
            }
        }
    }
    Ok(Some(table))
}

/// Outcome of a post-run consistency check, recorded in the metadata.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Check {
    pub name: String,
    pub value: f64,
    pub target: String,
    pub pass: bool,
}

/// Published coefficients `(tag, α₁, α₂, α₃ₐ, α₃ᵦ)`.
const REFERENCE: [(&str, f64, f64, f64, f64); 7] = [
    ("none", 1.0, 0.0, 0.0, 0.0),
    ("cpmg", 0.0, 0.0, 3.12e-2, -1.04e-2),
    ("cdd3", 0.0, 0.0, 0.0, -2.60e-3),
    ("cdd4", 0.0, 0.0, 0.0, -6.51e-4),
    ("udd3", 0.0, 0.0, 0.0, -5.05e-3),
    ("udd4", 0.0, 0.0, 0.0, -3.04e-3),
    ("udd5", 0.0, 0.0, 0.0, -2.04e-3),
];

fn contour_check(name: &str, table: &ResultTable, p0: f64, target: f64, slack: f64) -> Option<Check> {
    let pts: Vec<(f64, f64, f64)> = table
        .numbers("delta")
        .into_iter()
        .zip(table.numbers("nbar"))
        .zip(table.numbers("p_j0"))
        .filter(|((d, nb), _)| *d > 0.0 && *nb > 0.0)
        .map(|((d, nb), p)| (d, 1.0 / nb, p0 - p))
        .filter(|p| p.2 < 0.25 * p0)
        .collect();
    let fit = fit_residue_exponents(&pts).ok()?;
    let slope = fit.contour_slope();
    Some(Check {
        name: name.into(),
        value: slope,
        target: format!("{target} ± {slack}"),
        pass: (slope - target).abs() <= slack,
    })
}

/// Consistency checks derived from a finished table.
pub fn checks(cfg: &ExperimentConfig, table: &ResultTable) -> ddprep_core::Result<Vec<Check>> {
    use ExperimentId::*;
    let mut out = Vec::new();
    match cfg.experiment {
        Table1 => {
            for row in &table.rows {
                if let Some(r) = REFERENCE.iter().find(|r| r.0 == row[0]) {
                    let vals: Vec<f64> = row[2..6].iter().map(|c| c.parse().unwrap_or(f64::NAN)).collect();
                    let pass = [r.1, r.2, r.3, r.4].iter().zip(&vals).all(|(p, v)| agrees_to_figures(*v, *p, 3));
                    out.push(Check { name: format!("coefficients_{}", r.0), value: vals[3], target: format!("{:e}", r.4), pass });
                }
            }
        }
        Fig3a | Fig3b => {
            let deltas = table.numbers("delta");
            let ps = table.numbers("p_j0");
            let mut spread: f64 = 0.0;
            for d in values(&cfg.grid.delta) {
                let at: Vec<f64> = deltas.iter().zip(&ps).filter(|(x, _)| **x == d).map(|(_, p)| *p).collect();
                let (lo, hi) = at.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &p| (a.min(p), b.max(p)));
                spread = spread.max(hi - lo);
            }
            out.push(Check { name: "max_sequence_spread".into(), value: spread, target: "< 0.02".into(), pass: spread < 0.02 });
        }
        Fig5 => {
            let ps = table.numbers("p_j0");
            let diff = ps.chunks(2).map(|c| (c[0] - c[1]).abs()).fold(0.0, f64::max);
            out.push(Check { name: "max_exact_vs_leading".into(), value: diff, target: "< 0.02".into(), pass: diff < 0.02 });
        }
        Fig4 | Fig6 => {
            let scheme = singlet_scheme(cfg, 0.0)?;
            let horizon = run_options(cfg, BackendChoice::Exact);
            let p0 = run_protected_preparation(&scheme, &Protection::Free, &horizon)?.p_j0;
            let (target, slack) = if cfg.experiment == Fig4 { (1.0, 0.2) } else { (2.0, 0.3) };
            out.extend(contour_check("contour_slope", table, p0, target, slack));
        }
        Fig8 => {
            let d = table.numbers("delta");
            let nb = table.numbers("nbar");
            let f = table.numbers("fidelity");
            let seq_col = table.column("sequence").unwrap();
            let mut monotone = true;
            let mut beats = true;
            for delta in values(&cfg.grid.delta) {
                let free = (0..f.len()).find(|&k| d[k] == delta && nb[k] == 0.0).map(|k| f[k]);
                let mut dd: Vec<(f64, f64)> =
                    (0..f.len()).filter(|&k| d[k] == delta && nb[k] > 0.0 && table.rows[k][seq_col] != "none").map(|k| (nb[k], f[k])).collect();
                dd.sort_by(|a, b| a.0.total_cmp(&b.0));
                monotone &= dd.windows(2).all(|w| w[1].1 >= w[0].1 - 1e-3);
                if let Some(free) = free {
                    beats &= dd.iter().filter(|(n, _)| n / cfg.system.gamma.unwrap_or(1.0) >= 10.0).all(|(_, x)| *x >= free);
                }
            }
            out.push(Check { name: "fidelity_monotone_in_nbar".into(), value: monotone as u8 as f64, target: "1".into(), pass: monotone });
            out.push(Check { name: "dd_beats_free".into(), value: beats as u8 as f64, target: "1".into(), pass: beats });
        }
        DynamicNoiseScaling => {
            let curve: Vec<(f64, f64)> = table.numbers("tau_bar").into_iter().zip(table.numbers("infidelity")).collect();
            if let Ok(fit) = suppression_exponent(&curve) {
                out.push(Check {
                    name: "suppression_exponent".into(),
                    value: fit.exponent,
                    target: "2 ± 0.3".into(),
                    pass: (fit.exponent - 2.0).abs() <= 0.3,
                });
            }
        }
    }
    Ok(out)
}
