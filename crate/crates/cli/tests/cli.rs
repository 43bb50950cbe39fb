use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use ddprep_cli::config::parse_config;
use ddprep_cli::runner::{fingerprint, run_experiment, RunRequest};

fn ddprep(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ddprep")).args(args).output().unwrap()
}

fn write(dir: &Path, name: &str, text: &str) -> String {
    let p = dir.join(name);
    fs::write(&p, text).unwrap();
    p.to_string_lossy().into_owned()
}

const SMALL_FIG8: &str = r#"{"experiment": "fig8",
    "schedule": {"sequences": ["none", "cpmg", "random"]},
    "grid": {"delta": [0, 0.25], "nbar": [10, 30]},
    "run": {"seeds_per_point": 2}}"#;

#[test]
fn list_prints_registry() {
    let out = ddprep(&["list"]);
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.contains("fig5 — Magnus convergence check"));
    assert!(text.contains("table1 — Magnus coefficients"));
    assert!(text.lines().count() >= 8);
}

#[test]
fn coefficients_for_tag_and_file() {
    let out = ddprep(&["coefficients", "cpmg"]);
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.starts_with("sequence,N,alpha1,alpha2,alpha3a,alpha3b,alpha3b_N2\n"));
    assert!(text.contains("\ncpmg,2,0,0,0.03125,"));

    let dir = tempfile::tempdir().unwrap();
    let f = write(dir.path(), "mine.txt", "0.25\n0.75\n");
    let text = String::from_utf8(ddprep(&["coefficients", &f]).stdout).unwrap();
    assert!(text.contains("\nmine,2,0,0,0.03125,"), "{text}");

    assert_eq!(ddprep(&["coefficients", "xy8"]).status.code(), Some(1));
}

#[test]
fn table1_run_matches_published_cpmg_row() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "t1.json", r#"{"experiment": "table1"}"#);
    let out_dir = dir.path().to_string_lossy().into_owned();
    let out = ddprep(&["run", &cfg, "--out", &out_dir]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = fs::read_to_string(dir.path().join("table1.csv")).unwrap();
    let row = csv.lines().find(|l| l.starts_with("cpmg,")).unwrap();
    let cells: Vec<f64> = row.split(',').skip(1).map(|c| c.parse().unwrap()).collect();
    assert_eq!(cells[0], 2.0);
    assert_eq!(format!("{:.2e}", cells[3]), "3.12e-2");
    assert_eq!(format!("{:.2e}", cells[4]), "-1.04e-2");
    let meta: serde_json::Value = serde_json::from_str(&fs::read_to_string(dir.path().join("table1.meta.json")).unwrap()).unwrap();
    assert_eq!(meta["seed"], 0);
    assert!(meta["checks"].as_array().unwrap().iter().all(|c| c["pass"] == true), "{meta}");
    assert!(meta["code_version"].is_string() && meta["timestamp_unix"].is_u64());
    assert!(!dir.path().join("table1.partial.jsonl").exists());
}

#[test]
fn same_seed_gives_identical_csv_across_worker_counts() {
    let cfg = parse_config(SMALL_FIG8).unwrap();
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let c = tempfile::tempdir().unwrap();
    let run = |dir: &Path, seed, workers| {
        let req = RunRequest { out_dir: dir.to_path_buf(), seed: Some(seed), workers: Some(workers), resume: false };
        fs::read(run_experiment(&cfg, &req).unwrap().csv).unwrap()
    };
    let one = run(a.path(), 11, 1);
    assert_eq!(one, run(b.path(), 11, 4));
    assert_ne!(one, run(c.path(), 12, 4));
}

#[test]
fn resume_reuses_completed_points() {
    let cfg = parse_config(SMALL_FIG8).unwrap();
    let full = tempfile::tempdir().unwrap();
    let req = RunRequest { out_dir: full.path().to_path_buf(), seed: Some(5), workers: Some(2), resume: false };
    let reference = run_experiment(&cfg, &req).unwrap();

    let dir = tempfile::tempdir().unwrap();
    let mut seeded = cfg.clone();
    seeded.run.seed = Some(5);
    let mut partial = format!("{}\n", fingerprint(&seeded));
    for (index, row) in reference.table.rows.iter().enumerate().take(3) {
        partial += &serde_json::json!({"index": index, "row": row}).to_string();
        partial.push('\n');
    }
    partial += "{\"index\": 4, \"ro";
    fs::write(dir.path().join("fig8.partial.jsonl"), partial).unwrap();
    let req = RunRequest { out_dir: dir.path().to_path_buf(), seed: Some(5), workers: Some(1), resume: true };
    let resumed = run_experiment(&cfg, &req).unwrap();
    assert_eq!(resumed.resumed_points, 3);
    assert_eq!(fs::read(&resumed.csv).unwrap(), fs::read(&reference.csv).unwrap());

    fs::write(dir.path().join("fig8.partial.jsonl"), "{}\n").unwrap();
    let err = run_experiment(&cfg, &RunRequest { resume: true, ..req }).unwrap_err();
    assert_eq!(err.exit_code(), 1);
}

#[test]
fn exit_codes_distinguish_input_and_runtime_errors() {
    let dir = tempfile::tempdir().unwrap();
    let out_dir = dir.path().to_string_lossy().into_owned();
    let bad = write(dir.path(), "bad.json", r#"{"experiment": "fig4", "system": {"lambda_i": -1}}"#);
    let out = ddprep(&["run", &bad, "--out", &out_dir]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("system.lambda_i"));
    assert_eq!(ddprep(&["run", "/nonexistent/config.json"]).status.code(), Some(1));
    assert_eq!(ddprep(&["frobnicate"]).status.code(), Some(1));

    let stuck = write(
        dir.path(),
        "stuck.json",
        r#"{"experiment": "fig3a", "system": {"n_qubits": 2}, "schedule": {"sequences": ["cpmg"]},
            "grid": {"delta": [1]}, "run": {"criterion": "converged", "tol": 1e-300, "max_time": 0.01}}"#,
    );
    let out = ddprep(&["run", &stuck, "--out", &out_dir]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("grid point 0"), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn config_round_trip_is_identity() {
    for id in ["table1", "fig3a", "fig3b", "fig4", "fig5", "fig6", "fig8", "dynamic_noise_scaling"] {
        let cfg = parse_config(&format!(r#"{{"experiment": "{id}"}}"#)).unwrap();
        let again = parse_config(&ddprep_cli::config::to_json(&cfg)).unwrap();
        assert_eq!(cfg, again);
    }
}
