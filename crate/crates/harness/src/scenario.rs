use std::fmt;
use std::path::Path;
use std::str::FromStr;

use mmab_sa::rng::{derive_seed, stream};
use mmab_sa::{EnvSpec, FeedbackMode};
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::HarnessError;

const PERMUTATION_DOMAIN: u64 = 0x7065_726d_7574_6531;

/// Policies the harness knows how to run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Algorithm {
    DpeSdi,
    SicSda,
    SicSdi,
    HighestReward,
    IdlestArm,
}

impl Algorithm {
    pub const ALL: [Algorithm; 5] =
        [Algorithm::DpeSdi, Algorithm::SicSda, Algorithm::SicSdi, Algorithm::HighestReward, Algorithm::IdlestArm];

    pub fn as_str(self) -> &'static str {
        match self {
            Algorithm::DpeSdi => "dpe-sdi",
            Algorithm::SicSda => "sic-sda",
            Algorithm::SicSdi => "sic-sdi",
            Algorithm::HighestReward => "highest-reward",
            Algorithm::IdlestArm => "idlest-arm",
        }
    }

    /// Feedback the algorithm runs under. Heuristics follow the scenario.
    pub fn feedback(self, scenario: FeedbackMode) -> FeedbackMode {
        match self {
            Algorithm::DpeSdi | Algorithm::SicSdi => FeedbackMode::Sdi,
            Algorithm::SicSda => FeedbackMode::Sda,
            Algorithm::HighestReward | Algorithm::IdlestArm => scenario,
        }
    }
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Algorithm {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        Algorithm::ALL
            .into_iter()
            .find(|a| a.as_str() == s)
            .ok_or_else(|| format!("unknown algorithm {s:?}"))
    }
}

/// How arm means are produced for a seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum MeansSpec {
    Fixed { values: Vec<f64> },
    /// `start, start - step, ...` over all arms, optionally shuffled per seed.
    Decreasing { start: f64, step: f64, permute: bool },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub name: String,
    pub num_players: u32,
    pub capacities: Vec<u32>,
    pub horizon: u64,
    #[serde(with = "feedback_serde")]
    pub feedback: FeedbackMode,
    pub algorithms: Vec<Algorithm>,
    pub seeds: Vec<u64>,
    /// Slots at which cumulative regret is sampled; log-spaced by default.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub checkpoints: Option<Vec<u64>>,
    /// Capacity confidence level; `2 / T` by default.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub delta: Option<f64>,
    pub means: MeansSpec,
}

impl Scenario {
    pub fn num_arms(&self) -> usize {
        self.capacities.len()
    }

    /// Arm means for `seed`.
    pub fn means_for(&self, seed: u64) -> Vec<f64> {
        match &self.means {
            MeansSpec::Fixed { values } => values.clone(),
            MeansSpec::Decreasing { start, step, permute } => {
                let mut means: Vec<f64> = (0..self.num_arms()).map(|i| start - step * i as f64).collect();
                if *permute {
                    means.shuffle(&mut stream(derive_seed(seed, PERMUTATION_DOMAIN, 0)));
                }
                means
            }
        }
    }

    /// The concrete instance `algorithm` faces on `seed`.
    pub fn env_spec(&self, algorithm: Algorithm, seed: u64) -> EnvSpec {
        EnvSpec {
            means: self.means_for(seed),
            capacities: self.capacities.clone(),
            num_players: self.num_players,
            horizon: self.horizon,
            feedback: algorithm.feedback(self.feedback),
            seed,
        }
    }

    pub fn checkpoints(&self) -> Vec<u64> {
        self.checkpoints.clone().unwrap_or_else(|| default_checkpoints(self.horizon))
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        if self.algorithms.is_empty() {
            return Err(HarnessError::Config("no algorithms".into()));
        }
        if self.seeds.is_empty() {
            return Err(HarnessError::Config("no seeds".into()));
        }
        if let MeansSpec::Fixed { values } = &self.means {
            if values.len() != self.num_arms() {
                return Err(HarnessError::Config(format!(
                    "{} means for {} capacities",
                    values.len(),
                    self.num_arms()
                )));
            }
        }
        let checkpoints = self.checkpoints();
        if checkpoints.is_empty() {
            return Err(HarnessError::Config("no checkpoints".into()));
        }
        if checkpoints.windows(2).any(|w| w[0] >= w[1]) {
            return Err(HarnessError::Config("checkpoints must be strictly increasing".into()));
        }
        if checkpoints[0] == 0 || *checkpoints.last().unwrap() > self.horizon {
            return Err(HarnessError::Config(format!("checkpoints must lie in 1..={}", self.horizon)));
        }
        if let Some(delta) = self.delta {
            if !(delta > 0.0 && delta < 1.0) {
                return Err(HarnessError::Config(format!("delta {delta} outside (0, 1)")));
            }
        }
        for &algorithm in &self.algorithms {
            self.env_spec(algorithm, self.seeds[0]).validate()?;
        }
        Ok(())
    }

    pub fn from_toml(text: &str, path: &Path) -> Result<Self, HarnessError> {
        toml::from_str(text).map_err(|source| HarnessError::Parse { path: path.to_path_buf(), source })
    }

    pub fn load(path: &Path) -> Result<Self, HarnessError> {
        let text = std::fs::read_to_string(path).map_err(|e| HarnessError::io(path, e))?;
        Self::from_toml(&text, path)
    }

    /// A preset by name, or else a TOML file at that path.
    pub fn resolve(name_or_path: &str) -> Result<Self, HarnessError> {
        if let Some(s) = preset(name_or_path) {
            return Ok(s);
        }
        let path = Path::new(name_or_path);
        if path.is_file() {
            return Self::load(path);
        }
        Err(HarnessError::UnknownScenario(name_or_path.to_string()))
    }
}

mod feedback_serde {
    use mmab_sa::FeedbackMode;
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(mode: &FeedbackMode, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(mode.as_str())
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<FeedbackMode, D::Error> {
        let text = String::deserialize(d)?;
        super::parse_feedback(&text).map_err(serde::de::Error::custom)
    }
}

pub fn parse_feedback(text: &str) -> Result<FeedbackMode, String> {
    match text.to_ascii_lowercase().as_str() {
        "sdi" => Ok(FeedbackMode::Sdi),
        "sda" => Ok(FeedbackMode::Sda),
        _ => Err(format!("unknown feedback mode {text:?} (expected sdi or sda)")),
    }
}

/// 20 log-spaced slots from 1 to `T`, deduplicated, then `T` itself.
pub fn default_checkpoints(horizon: u64) -> Vec<u64> {
    let top = (horizon.max(1) as f64).log10();
    let mut points: Vec<u64> =
        (0..20).map(|i| 10f64.powf(top * i as f64 / 20.0).round().max(1.0) as u64).collect();
    points.push(horizon);
    points.dedup();
    points.retain(|&c| c <= horizon);
    points
}

pub const DEFAULT_HORIZON: u64 = 100_000;
pub const DEFAULT_SEEDS: u64 = 20;

pub const SYNTHETIC_CAPACITIES: [u32; 9] = [3, 2, 4, 2, 1, 5, 2, 1, 3];
pub const SYNTHETIC_GAPS: [&str; 4] = ["0.001", "0.012", "0.025", "0.037"];

/// CPU speed in GHz and cores of the edge nodes.
pub const EDGE_GHZ: [f64; 7] = [1.5, 2.1, 1.2, 2.5, 2.0, 1.3, 2.6];
pub const EDGE_CORES: [u32; 7] = [3, 2, 4, 2, 1, 2, 3];

/// Round-trip time (100 ms units) and throughput (100 Mbps units) of the
/// base stations.
pub const NETWORK_RTT: [f64; 20] =
    [1.2, 1.1, 4.2, 4.0, 4.5, 3.5, 5.0, 4.2, 5.5, 3.9, 4.8, 5.5, 3.7, 4.7, 3.2, 5.1, 4.4, 5.3, 4.9, 4.1];
pub const NETWORK_THR: [f64; 20] =
    [9.2, 8.1, 1.2, 1.2, 1.4, 1.1, 1.3, 1.2, 1.1, 1.4, 1.0, 1.1, 1.2, 1.0, 1.3, 1.2, 1.0, 1.1, 1.3, 1.2];

fn default_seeds() -> Vec<u64> {
    (0..DEFAULT_SEEDS).collect()
}

pub fn synthetic(step: f64) -> Scenario {
    Scenario {
        name: format!("synthetic-{step}"),
        num_players: 6,
        capacities: SYNTHETIC_CAPACITIES.to_vec(),
        horizon: DEFAULT_HORIZON,
        feedback: FeedbackMode::Sdi,
        algorithms: vec![Algorithm::DpeSdi, Algorithm::SicSda, Algorithm::SicSdi],
        seeds: default_seeds(),
        checkpoints: None,
        delta: None,
        means: MeansSpec::Decreasing { start: 0.9, step, permute: true },
    }
}

pub fn edge_computing() -> Scenario {
    Scenario {
        name: "edge-computing".into(),
        num_players: 6,
        capacities: EDGE_CORES.to_vec(),
        horizon: DEFAULT_HORIZON,
        feedback: FeedbackMode::Sdi,
        algorithms: vec![Algorithm::DpeSdi, Algorithm::HighestReward, Algorithm::IdlestArm],
        seeds: default_seeds(),
        checkpoints: None,
        delta: None,
        means: MeansSpec::Fixed { values: EDGE_GHZ.iter().map(|g| g / 3.0).collect() },
    }
}

pub fn network() -> Scenario {
    let players = 18;
    Scenario {
        name: "5g-4g".into(),
        num_players: players,
        capacities: NETWORK_THR.iter().map(|t| (t.round() as u32).clamp(1, players)).collect(),
        horizon: DEFAULT_HORIZON,
        feedback: FeedbackMode::Sda,
        algorithms: vec![Algorithm::SicSda, Algorithm::HighestReward, Algorithm::IdlestArm],
        seeds: default_seeds(),
        checkpoints: None,
        delta: None,
        means: MeansSpec::Fixed { values: NETWORK_RTT.iter().map(|r| 1.0 / r).collect() },
    }
}

pub fn presets() -> Vec<Scenario> {
    let mut all: Vec<Scenario> = SYNTHETIC_GAPS.iter().map(|g| synthetic(g.parse().unwrap())).collect();
    all.push(edge_computing());
    all.push(network());
    all
}

pub fn preset_names() -> Vec<String> {
    presets().into_iter().map(|s| s.name).collect()
}

pub fn preset(name: &str) -> Option<Scenario> {
    presets().into_iter().find(|s| s.name == name)
}
