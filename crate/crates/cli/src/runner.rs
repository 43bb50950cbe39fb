//! Sweep execution: per-point seeding, worker pool, resumable partial output.

use std::collections::BTreeMap;
use std::fs::{self, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::Mutex;
use std::time::{SystemTime, UNIX_EPOCH};

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::{ConfigError, ExperimentConfig};
use crate::experiments::{checks, evaluate, filter_table, plan, Check};
use crate::table::ResultTable;

#[derive(Debug, thiserror::Error)]
pub enum RunError {
    #[error("invalid config: {0}")]
    Config(#[from] ConfigError),
    #[error("cannot resume: {0}")]
    Resume(String),
    #[error("I/O error on {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("grid point {index} ({label}) failed: {source}")]
    Point { index: usize, label: String, source: ddprep_core::Error },
}

impl RunError {
    /// 1 for problems with the input, 2 for failures during the run.
    pub fn exit_code(&self) -> i32 {
        match self {
            RunError::Config(_) | RunError::Resume(_) => 1,
            RunError::Io { .. } | RunError::Point { .. } => 2,
        }
    }
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> RunError + '_ {
    move |source| RunError::Io { path: path.to_path_buf(), source }
}

#[derive(Debug, Clone, Default)]
pub struct RunRequest {
    pub out_dir: PathBuf,
    pub seed: Option<u64>,
    pub workers: Option<usize>,
    pub resume: bool,
}

#[derive(Debug, Clone)]
pub struct RunSummary {
    pub csv: PathBuf,
    pub meta: PathBuf,
    pub table: ResultTable,
    pub checks: Vec<Check>,
    pub resumed_points: usize,
}

#[derive(Serialize)]
struct Meta<'a> {
    experiment: String,
    anchor: &'static str,
    config: &'a ExperimentConfig,
    seed: u64,
    timestamp_unix: u64,
    code_version: &'static str,
    units: &'static str,
    columns: &'a [String],
    n_rows: usize,
    checks: &'a [Check],
}

#[derive(Serialize, Deserialize)]
struct PartialRow {
    index: usize,
    row: Vec<String>,
}

/// Seed handed to grid point `index`.
pub fn point_seed(master: u64, index: usize) -> u64 {
    let mut rng = ChaCha20Rng::seed_from_u64(master);
    rng.set_stream(index as u64);
    rng.next_u64()
}

/// First line of the partial file: the config without the worker count.
pub fn fingerprint(cfg: &ExperimentConfig) -> String {
    let mut c = cfg.clone();
    c.run.workers = None;
    serde_json::to_string(&c).expect("configs serialize")
}

fn units(cfg: &ExperimentConfig) -> &'static str {
    use crate::registry::ExperimentId::*;
    match cfg.experiment {
        Table1 => "dimensionless (coefficients of t_p^(n-1))",
        Fig8 => "times in 1/gamma, rates in gamma",
        _ => "times in 1/Lambda_i, rates and frequencies in Lambda_i",
    }
}

fn load_partial(path: &Path, fp: &str) -> Result<BTreeMap<usize, Vec<String>>, RunError> {
    let file = fs::File::open(path).map_err(io_err(path))?;
    let mut lines = BufReader::new(file).lines();
    let head = lines.next().transpose().map_err(io_err(path))?.unwrap_or_default();
    if head != fp {
        return Err(RunError::Resume(format!("{} was written for a different config or seed", path.display())));
    }
    let mut done = BTreeMap::new();
    for line in lines {
        let line = line.map_err(io_err(path))?;
        // A line cut short by an interruption is simply recomputed.
        if let Ok(p) = serde_json::from_str::<PartialRow>(&line) {
            done.insert(p.index, p.row);
        }
    }
    Ok(done)
}

/// Runs every grid point of `cfg`, writing `<id>.csv` and `<id>.meta.json`
/// into `req.out_dir`.
pub fn run_experiment(cfg: &ExperimentConfig, req: &RunRequest) -> Result<RunSummary, RunError> {
    let mut cfg = cfg.clone();
    if let Some(s) = req.seed {
        cfg.run.seed = Some(s);
    }
    if let Some(w) = req.workers {
        cfg.run.workers = Some(w);
    }
    cfg.validate()?;
    let seed = cfg.seed();
    let id = cfg.experiment.as_str();
    fs::create_dir_all(&req.out_dir).map_err(io_err(&req.out_dir))?;
    let partial_path = req.out_dir.join(format!("{id}.partial.jsonl"));
    let fp = fingerprint(&cfg);

    let done = if req.resume && partial_path.exists() { load_partial(&partial_path, &fp)? } else { BTreeMap::new() };
    let resumed_points = done.len();
    {
        let mut f = fs::File::create(&partial_path).map_err(io_err(&partial_path))?;
        writeln!(f, "{fp}").map_err(io_err(&partial_path))?;
        for (&index, row) in &done {
            writeln!(f, "{}", serde_json::to_string(&PartialRow { index, row: row.clone() }).unwrap())
                .map_err(io_err(&partial_path))?;
        }
    }
    let sink = Mutex::new(OpenOptions::new().append(true).open(&partial_path).map_err(io_err(&partial_path))?);

    let plan = plan(&cfg);
    let todo: Vec<usize> = (0..plan.points.len()).filter(|k| !done.contains_key(k)).collect();
    let workers = cfg.run.workers.unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()));
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| RunError::Resume(format!("worker pool: {e}")))?;

    let fresh: Vec<(usize, Vec<String>)> = pool.install(|| {
        todo.par_iter()
            .map(|&index| {
                let point = &plan.points[index];
                let row = evaluate(&cfg, point, point_seed(seed, index))
                    .map_err(|source| RunError::Point { index, label: point.label(), source })?;
                let line = serde_json::to_string(&PartialRow { index, row: row.clone() }).unwrap();
                let mut f = sink.lock().unwrap();
                writeln!(f, "{line}").and_then(|_| f.flush()).map_err(io_err(&partial_path))?;
                Ok((index, row))
            })
            .collect::<Result<_, RunError>>()
    })?;

    let mut rows = done;
    rows.extend(fresh);
    let mut table = ResultTable::new(&plan.columns);
    for (_, row) in rows {
        table.push(row);
    }
    let csv = req.out_dir.join(format!("{id}.csv"));
    table.write_csv(&csv).map_err(io_err(&csv))?;
    let filter = filter_table(&cfg).map_err(|source| RunError::Point { index: 0, label: "filter".into(), source })?;
    if let Some(ft) = filter {
        let path = req.out_dir.join(format!("{id}.filter.csv"));
        ft.write_csv(&path).map_err(io_err(&path))?;
    }
    let checks = checks(&cfg, &table).map_err(|source| RunError::Point { index: 0, label: "post-check".into(), source })?;

    let meta_path = req.out_dir.join(format!("{id}.meta.json"));
    let meta = Meta {
        experiment: id.to_string(),
        anchor: cfg.experiment.entry().anchor,
        config: &cfg,
        seed,
        timestamp_unix: SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs()),
        code_version: env!("CARGO_PKG_VERSION"),
        units: units(&cfg),
        columns: &table.columns,
        n_rows: table.rows.len(),
        checks: &checks,
    };
    fs::write(&meta_path, serde_json::to_string_pretty(&meta).unwrap()).map_err(io_err(&meta_path))?;
    drop(sink);
    fs::remove_file(&partial_path).map_err(io_err(&partial_path))?;
    Ok(RunSummary { csv, meta: meta_path, table, checks, resumed_points })
}
