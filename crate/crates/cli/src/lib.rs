//! Config-driven experiment runner for the `ddprep` binary.

pub mod config;
pub mod experiments;
pub mod registry;
pub mod runner;
pub mod table;

use std::str::FromStr;

use ddprep_core::pulses::SequenceTag;

use config::SequenceSpec;
use experiments::{evaluate, Point};
use table::ResultTable;

/// Resolves a sequence tag, or reads normalized pulse times (numbers separated
/// by whitespace or commas) from a file of that name.
pub fn resolve_sequence(arg: &str) -> Result<SequenceSpec, String> {
    if let Ok(tag) = SequenceTag::from_str(arg) {
        return Ok(SequenceSpec::Tag(tag));
    }
    let text = std::fs::read_to_string(arg).map_err(|e| format!("'{arg}' is neither a sequence tag nor a readable file: {e}"))?;
    let times = text
        .split(|c: char| c.is_whitespace() || c == ',')
        .filter(|s| !s.is_empty())
        .map(|s| s.parse::<f64>().map_err(|_| format!("{arg}: '{s}' is not a number")))
        .collect::<Result<Vec<_>, _>>()?;
    let name = std::path::Path::new(arg).file_stem().map_or("custom".into(), |s| s.to_string_lossy().into_owned());
    let spec = SequenceSpec::Custom { name, times };
    spec.unit(1.0).map_err(|e| format!("{arg}: {e}"))?;
    Ok(spec)
}

/// Table-I-style coefficient table for a single sequence.
pub fn coefficient_table(seq: &SequenceSpec) -> Result<ResultTable, String> {
    if seq.is_random() {
        return Err("random schedules have no basic unit".into());
    }
    let cfg = config::parse_config(r#"{"experiment": "table1"}"#).expect("built-in config");
    let plan = experiments::plan(&cfg);
    let mut t = ResultTable::new(&plan.columns);
    t.push(evaluate(&cfg, &Point::Coefficients { seq: seq.clone() }, 0).map_err(|e| e.to_string())?);
    Ok(t)
}
