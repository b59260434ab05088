use mmab_sa::baselines::{HighestReward, IdlestArm};
use mmab_sa::dpe::{DpeConfig, DpeSdi};
use mmab_sa::sic::{SicConfig, SicSda};
use mmab_sa::{run, RunOptions, RunTrace};
use rayon::prelude::*;

use crate::error::HarnessError;
use crate::scenario::{Algorithm, Scenario};

/// One (algorithm, seed) run sampled at the checkpoints.
#[derive(Debug, Clone, PartialEq)]
pub struct RunRecord {
    pub algorithm: Algorithm,
    pub seed: u64,
    pub checkpoints: Vec<u64>,
    pub cum_regret: Vec<f64>,
}

impl RunRecord {
    pub fn final_regret(&self) -> f64 {
        self.cum_regret.last().copied().unwrap_or(0.0)
    }
}

/// Mean and population standard deviation across seeds at one checkpoint.
#[derive(Debug, Clone, PartialEq)]
pub struct Aggregate {
    pub algorithm: Algorithm,
    pub checkpoint: u64,
    pub mean: f64,
    pub std: f64,
    pub runs: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentResult {
    /// Ordered by algorithm (scenario order), then seed (scenario order).
    pub runs: Vec<RunRecord>,
    pub aggregates: Vec<Aggregate>,
}

impl ExperimentResult {
    pub fn runs_of(&self, algorithm: Algorithm) -> impl Iterator<Item = &RunRecord> {
        self.runs.iter().filter(move |r| r.algorithm == algorithm)
    }

    /// Mean regret at the last checkpoint.
    pub fn mean_final(&self, algorithm: Algorithm) -> Option<f64> {
        self.aggregates.iter().filter(|a| a.algorithm == algorithm).last().map(|a| a.mean)
    }
}

/// Full per-slot trace of one run.
pub fn run_trace(
    scenario: &Scenario,
    algorithm: Algorithm,
    seed: u64,
    options: RunOptions,
) -> Result<RunTrace, HarnessError> {
    let spec = scenario.env_spec(algorithm, seed);
    let result = match algorithm {
        Algorithm::DpeSdi => run(&DpeSdi::factory(DpeConfig { delta: scenario.delta }), spec, options),
        Algorithm::SicSda | Algorithm::SicSdi => {
            run(&SicSda::factory(SicConfig { delta: scenario.delta }), spec, options)
        }
        Algorithm::HighestReward => run(&HighestReward::factory(), spec, options),
        Algorithm::IdlestArm => run(&IdlestArm::factory(), spec, options),
    };
    result.map_err(|source| HarnessError::Run { algorithm: algorithm.as_str(), seed, source })
}

fn run_record(scenario: &Scenario, algorithm: Algorithm, seed: u64, checkpoints: &[u64]) -> Result<RunRecord, HarnessError> {
    let trace = run_trace(scenario, algorithm, seed, RunOptions::default())?;
    let cumulative = trace.cumulative();
    let cum_regret = checkpoints.iter().map(|&c| cumulative[c as usize - 1]).collect();
    Ok(RunRecord { algorithm, seed, checkpoints: checkpoints.to_vec(), cum_regret })
}

/// Runs every (algorithm, seed) pair of `scenario` on `jobs` worker threads
/// (0 picks the number of CPUs) and aggregates the results.
pub fn run_experiment(scenario: &Scenario, jobs: usize) -> Result<ExperimentResult, HarnessError> {
    scenario.validate()?;
    let checkpoints = scenario.checkpoints();
    let pairs: Vec<(Algorithm, u64)> =
        scenario.algorithms.iter().flat_map(|&a| scenario.seeds.iter().map(move |&s| (a, s))).collect();
    let pool = rayon::ThreadPoolBuilder::new().num_threads(jobs).build()?;
    let runs = pool.install(|| {
        pairs
            .par_iter()
            .map(|&(algorithm, seed)| {
                let record = run_record(scenario, algorithm, seed, &checkpoints)?;
                eprintln!(
                    "{} {algorithm} seed {seed}: final regret {:.1}",
                    scenario.name,
                    record.final_regret()
                );
                Ok(record)
            })
            .collect::<Result<Vec<_>, HarnessError>>()
    })?;
    let aggregates = aggregate(&runs, &scenario.algorithms, &checkpoints);
    Ok(ExperimentResult { runs, aggregates })
}

/// Per (algorithm, checkpoint) mean and population standard deviation.
pub fn aggregate(runs: &[RunRecord], algorithms: &[Algorithm], checkpoints: &[u64]) -> Vec<Aggregate> {
    let mut out = Vec::new();
    for &algorithm in algorithms {
        let mine: Vec<&RunRecord> = runs.iter().filter(|r| r.algorithm == algorithm).collect();
        if mine.is_empty() {
            continue;
        }
        for (i, &checkpoint) in checkpoints.iter().enumerate() {
            let values: Vec<f64> = mine.iter().map(|r| r.cum_regret[i]).collect();
            let n = values.len() as f64;
            let mean = values.iter().sum::<f64>() / n;
            let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
            out.push(Aggregate { algorithm, checkpoint, mean, std: var.max(0.0).sqrt(), runs: values.len() });
        }
    }
    out
}
