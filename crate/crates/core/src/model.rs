//! Ground truth: instances, assignment profiles, the optimal-assignment
//! oracle and per-slot pseudo-regret.

use alloc::format;
use alloc::vec::Vec;
use core::cmp::Ordering;

use crate::error::ModelError;

/// What players on an arm learn besides the arm's reward.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum FeedbackMode {
    /// Sharing demand information: the number of players on the arm.
    Sdi,
    /// Sharing demand awareness: only whether the arm is shared.
    Sda,
}

impl FeedbackMode {
    pub fn as_str(self) -> &'static str {
        match self {
            FeedbackMode::Sdi => "sdi",
            FeedbackMode::Sda => "sda",
        }
    }
}

/// A complete problem instance.
#[derive(Debug, Clone, PartialEq)]
pub struct EnvSpec {
    /// Per-load reward means, one per arm, in `[0, 1]`. Need not be sorted.
    pub means: Vec<f64>,
    /// Shareable-resource capacities, one per arm, each in `[1, M]`.
    pub capacities: Vec<u32>,
    pub num_players: u32,
    pub horizon: u64,
    pub feedback: FeedbackMode,
    pub seed: u64,
}

impl EnvSpec {
    pub fn num_arms(&self) -> usize {
        self.means.len()
    }

    /// Checks the standing assumptions: `M < K`, `1 <= m_k <= M`, means in
    /// `[0, 1]`, a positive horizon and enough capacity for every player.
    pub fn validate(&self) -> Result<(), ModelError> {
        let k = self.means.len();
        if self.capacities.len() != k {
            return Err(ModelError::DimensionMismatch { expected: k, found: self.capacities.len() });
        }
        if self.num_players == 0 {
            return Err(ModelError::InvalidArgument("at least one player is required".into()));
        }
        if self.num_players as usize >= k {
            return Err(ModelError::InvalidArgument(format!(
                "need fewer players than arms (M = {}, K = {k})",
                self.num_players
            )));
        }
        if self.horizon == 0 {
            return Err(ModelError::InvalidArgument("horizon must be positive".into()));
        }
        if let Some((arm, mu)) = self.means.iter().enumerate().find(|(_, mu)| !(0.0..=1.0).contains(*mu)) {
            return Err(ModelError::InvalidArgument(format!("mean of arm {arm} is {mu}, outside [0, 1]")));
        }
        if let Some((arm, m)) = self
            .capacities
            .iter()
            .enumerate()
            .find(|(_, &m)| m == 0 || m > self.num_players)
        {
            return Err(ModelError::InvalidArgument(format!(
                "capacity of arm {arm} is {m}, outside [1, {}]",
                self.num_players
            )));
        }
        check_feasible(&self.capacities, self.num_players)
    }

    pub fn expected_reward(&self, profile: &AssignmentProfile) -> Result<f64, ModelError> {
        expected_reward(profile, &self.means, &self.capacities)
    }

    pub fn optimal(&self) -> Result<OptimalProfile, ModelError> {
        oracle(&self.means, &self.capacities, self.num_players)
    }
}

fn check_feasible(capacities: &[u32], players: u32) -> Result<(), ModelError> {
    let total_capacity: u64 = capacities.iter().map(|&m| u64::from(m)).sum();
    if total_capacity < u64::from(players) {
        return Err(ModelError::Infeasible { total_capacity, players });
    }
    Ok(())
}

/// Number of players on each arm during one slot.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Default)]
pub struct AssignmentProfile(Vec<u32>);

impl AssignmentProfile {
    pub fn new(counts: Vec<u32>) -> Self {
        AssignmentProfile(counts)
    }

    pub fn zeros(num_arms: usize) -> Self {
        AssignmentProfile(alloc::vec![0; num_arms])
    }

    /// Builds the profile induced by a list of chosen arms.
    pub fn from_arms(num_arms: usize, arms: impl IntoIterator<Item = usize>) -> Self {
        let mut counts = alloc::vec![0u32; num_arms];
        for arm in arms {
            counts[arm] += 1;
        }
        AssignmentProfile(counts)
    }

    pub fn counts(&self) -> &[u32] {
        &self.0
    }

    pub fn num_arms(&self) -> usize {
        self.0.len()
    }

    pub fn total(&self) -> u64 {
        self.0.iter().map(|&a| u64::from(a)).sum()
    }

    pub fn get(&self, arm: usize) -> u32 {
        self.0[arm]
    }

    pub fn into_inner(self) -> Vec<u32> {
        self.0
    }
}

/// The reward-maximising profile of an instance.
#[derive(Debug, Clone, PartialEq)]
pub struct OptimalProfile {
    pub profile: AssignmentProfile,
    /// Original index of the last arm filled (it may be only partly filled).
    pub least_favored: usize,
    /// Expected per-slot reward of `profile`.
    pub value: f64,
}

/// Expected total reward `sum_k min(a_k, m_k) * mu_k`.
pub fn expected_reward(
    profile: &AssignmentProfile,
    means: &[f64],
    capacities: &[u32],
) -> Result<f64, ModelError> {
    let k = profile.num_arms();
    if means.len() != k {
        return Err(ModelError::DimensionMismatch { expected: k, found: means.len() });
    }
    if capacities.len() != k {
        return Err(ModelError::DimensionMismatch { expected: k, found: capacities.len() });
    }
    Ok(profile
        .counts()
        .iter()
        .zip(means)
        .zip(capacities)
        .map(|((&a, &mu), &m)| f64::from(a.min(m)) * mu)
        .sum())
}

/// Arm indices sorted by descending mean; equal means keep index order.
pub fn rank_by_mean(means: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..means.len()).collect();
    order.sort_by(|&a, &b| means[b].partial_cmp(&means[a]).unwrap_or(Ordering::Equal));
    order
}

/// Greedy capacity filling in descending-mean order.
///
/// Arms are visited from the highest mean down (ties by lower index); each
/// takes `min(m_k, remaining)` players until all `M` are seated. The last arm
/// touched is the least-favored arm `L`.
pub fn oracle(means: &[f64], capacities: &[u32], num_players: u32) -> Result<OptimalProfile, ModelError> {
    if means.len() != capacities.len() {
        return Err(ModelError::DimensionMismatch { expected: means.len(), found: capacities.len() });
    }
    if num_players == 0 {
        return Err(ModelError::InvalidArgument("at least one player is required".into()));
    }
    check_feasible(capacities, num_players)?;

    let mut counts = alloc::vec![0u32; means.len()];
    let mut remaining = num_players;
    let mut least_favored = 0;
    for arm in rank_by_mean(means) {
        if remaining == 0 {
            break;
        }
        let take = capacities[arm].min(remaining);
        if take == 0 {
            continue;
        }
        counts[arm] = take;
        remaining -= take;
        least_favored = arm;
    }
    let profile = AssignmentProfile(counts);
    let value = expected_reward(&profile, means, capacities)?;
    Ok(OptimalProfile { profile, least_favored, value })
}

/// Pseudo-regret of one slot: `f(a*) - f(a_t)`.
///
/// `profile` must seat exactly `M` players. Values within `1e-12` below zero
/// are floating noise and are clamped to zero.
pub fn per_slot_regret(
    profile: &AssignmentProfile,
    opt: &OptimalProfile,
    spec: &EnvSpec,
) -> Result<f64, ModelError> {
    if profile.num_arms() != spec.num_arms() {
        return Err(ModelError::DimensionMismatch { expected: spec.num_arms(), found: profile.num_arms() });
    }
    if profile.total() != u64::from(spec.num_players) {
        return Err(ModelError::ProfileSize { expected: spec.num_players, found: profile.total() });
    }
    let gap = opt.value - spec.expected_reward(profile)?;
    debug_assert!(gap >= -1e-12, "profile beats the oracle by {gap}");
    Ok(gap.max(0.0))
}
