//! Files written for an experiment: `raw.csv`, `summary.toml` and
//! `scenario.resolved.toml`.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::HarnessError;
use crate::experiment::{Aggregate, ExperimentResult, RunRecord};
use crate::scenario::{Algorithm, Scenario};

pub const RAW_FILE: &str = "raw.csv";
pub const SUMMARY_FILE: &str = "summary.toml";
pub const RESOLVED_FILE: &str = "scenario.resolved.toml";

pub const RAW_HEADER: [&str; 4] = ["algorithm", "seed", "checkpoint", "cum_regret"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RawRow {
    pub algorithm: Algorithm,
    pub seed: u64,
    pub checkpoint: u64,
    pub cum_regret: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub algorithm: Algorithm,
    pub checkpoint: u64,
    pub mean: f64,
    pub std: f64,
    pub runs: usize,
}

impl From<&Aggregate> for SummaryRow {
    fn from(a: &Aggregate) -> Self {
        SummaryRow { algorithm: a.algorithm, checkpoint: a.checkpoint, mean: a.mean, std: a.std, runs: a.runs }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub scenario: String,
    #[serde(default)]
    pub rows: Vec<SummaryRow>,
}

/// Paths of the files written by [`emit_outputs`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OutputPaths {
    pub raw: PathBuf,
    pub summary: PathBuf,
    pub resolved: PathBuf,
}

impl OutputPaths {
    pub fn in_dir(dir: &Path) -> Self {
        OutputPaths { raw: dir.join(RAW_FILE), summary: dir.join(SUMMARY_FILE), resolved: dir.join(RESOLVED_FILE) }
    }
}

pub fn raw_rows(runs: &[RunRecord]) -> impl Iterator<Item = RawRow> + '_ {
    runs.iter().flat_map(|r| {
        r.checkpoints.iter().zip(&r.cum_regret).map(move |(&checkpoint, &cum_regret)| RawRow {
            algorithm: r.algorithm,
            seed: r.seed,
            checkpoint,
            cum_regret,
        })
    })
}

/// Raw CSV as bytes; the header is always present.
pub fn raw_csv(runs: &[RunRecord]) -> Result<Vec<u8>, csv::Error> {
    let mut w = csv::WriterBuilder::new().has_headers(false).terminator(csv::Terminator::Any(b'\n')).from_writer(Vec::new());
    w.write_record(RAW_HEADER)?;
    for row in raw_rows(runs) {
        w.serialize(row)?;
    }
    w.into_inner().map_err(|e| csv::Error::from(e.into_error()))
}

pub fn read_raw_csv(path: &Path) -> Result<Vec<RawRow>, HarnessError> {
    let csv_err = |source| HarnessError::Csv { path: path.to_path_buf(), source };
    let mut r = csv::Reader::from_path(path).map_err(csv_err)?;
    r.deserialize().collect::<Result<Vec<RawRow>, _>>().map_err(csv_err)
}

pub fn summary_toml(scenario: &Scenario, result: &ExperimentResult) -> Result<String, HarnessError> {
    let summary = Summary { scenario: scenario.name.clone(), rows: result.aggregates.iter().map(SummaryRow::from).collect() };
    Ok(toml::to_string(&summary)?)
}

pub fn read_summary(path: &Path) -> Result<Summary, HarnessError> {
    let text = fs::read_to_string(path).map_err(|e| HarnessError::io(path, e))?;
    toml::from_str(&text).map_err(|source| HarnessError::Parse { path: path.to_path_buf(), source })
}

/// The scenario with its checkpoints spelled out, followed by the means each
/// seed sees as comments. Loading it back gives the same runs.
pub fn resolved_toml(scenario: &Scenario) -> Result<String, HarnessError> {
    let mut resolved = scenario.clone();
    resolved.checkpoints = Some(scenario.checkpoints());
    let mut text = toml::to_string(&resolved)?;
    text.push_str("\n# per-seed arm means\n");
    for &seed in &scenario.seeds {
        let means: Vec<String> = scenario.means_for(seed).iter().map(|m| m.to_string()).collect();
        let _ = writeln!(text, "# seed {seed}: [{}]", means.join(", "));
    }
    Ok(text)
}

/// Writes all three files into `dir`, creating it if needed.
pub fn emit_outputs(scenario: &Scenario, result: &ExperimentResult, dir: &Path) -> Result<OutputPaths, HarnessError> {
    fs::create_dir_all(dir).map_err(|e| HarnessError::io(dir, e))?;
    let paths = OutputPaths::in_dir(dir);
    let raw = raw_csv(&result.runs).map_err(|source| HarnessError::Csv { path: paths.raw.clone(), source })?;
    fs::write(&paths.raw, raw).map_err(|e| HarnessError::io(&paths.raw, e))?;
    fs::write(&paths.summary, summary_toml(scenario, result)?).map_err(|e| HarnessError::io(&paths.summary, e))?;
    fs::write(&paths.resolved, resolved_toml(scenario)?).map_err(|e| HarnessError::io(&paths.resolved, e))?;
    Ok(paths)
}
