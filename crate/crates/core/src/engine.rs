//! Slot-synchronous simulator.
//!
//! Each slot the engine polls every player for an arm, draws one per-load
//! reward per arm, and hands each player an [`Observation`] about its own arm
//! only. Policies never see each other: the only cross-player channel is the
//! arm-level aggregate (total reward and the count or sharing flag).

use alloc::vec::Vec;

use rand::Rng;

use crate::error::{EngineError, PolicyError};
use crate::model::{per_slot_regret, AssignmentProfile, EnvSpec, FeedbackMode, OptimalProfile};
use crate::rng::{arm_stream, player_seed, StreamRng};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Action {
    pub arm: usize,
}

impl Action {
    pub fn new(arm: usize) -> Self {
        Action { arm }
    }
}

/// The feedback half of an observation.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FeedbackSignal {
    /// Number of players on the arm (always at least one).
    Count(u32),
    /// Whether anyone else is on the arm.
    Shared(bool),
}

impl FeedbackSignal {
    pub fn is_shared(self) -> bool {
        match self {
            FeedbackSignal::Count(n) => n > 1,
            FeedbackSignal::Shared(flag) => flag,
        }
    }

    pub fn count(self) -> Option<u32> {
        match self {
            FeedbackSignal::Count(n) => Some(n),
            FeedbackSignal::Shared(_) => None,
        }
    }
}

/// What one player learns at the end of a slot.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Observation {
    pub arm: usize,
    /// The arm's total reward `min(a_k, m_k) * X_k`, identical for everyone on it.
    pub reward: f64,
    pub feedback: FeedbackSignal,
}

/// Coarse role a player is in during a slot. Used to annotate traces.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Phase {
    Init,
    Explore,
    Comm,
    Exploit,
}

impl Phase {
    pub const ALL: [Phase; 4] = [Phase::Init, Phase::Explore, Phase::Comm, Phase::Exploit];

    pub fn bit(self) -> u8 {
        match self {
            Phase::Init => 1,
            Phase::Explore => 2,
            Phase::Comm => 4,
            Phase::Exploit => 8,
        }
    }
}

/// Everything a player is told at construction.
///
/// Means, capacities and the number of players are deliberately absent:
/// policies must learn them through feedback.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PlayerContext {
    pub num_arms: usize,
    pub horizon: u64,
    pub feedback: FeedbackMode,
    /// Seed for the player's private randomness.
    pub seed: u64,
}

/// A decentralized player.
pub trait Policy: Send {
    fn next_action(&mut self) -> Result<Action, PolicyError>;
    fn observe(&mut self, obs: &Observation) -> Result<(), PolicyError>;
    fn phase(&self) -> Phase;
}

/// Builds one independent policy instance per player.
pub trait PolicyFactory {
    type Policy: Policy;
    fn build(&self, ctx: &PlayerContext) -> Result<Self::Policy, PolicyError>;
}

impl<P, F> PolicyFactory for F
where
    P: Policy,
    F: Fn(&PlayerContext) -> Result<P, PolicyError>,
{
    type Policy = P;
    fn build(&self, ctx: &PlayerContext) -> Result<P, PolicyError> {
        self(ctx)
    }
}

impl<P: Policy + ?Sized> Policy for alloc::boxed::Box<P> {
    fn next_action(&mut self) -> Result<Action, PolicyError> {
        (**self).next_action()
    }
    fn observe(&mut self, obs: &Observation) -> Result<(), PolicyError> {
        (**self).observe(obs)
    }
    fn phase(&self) -> Phase {
        (**self).phase()
    }
}

/// Resolves one slot given everyone's action and every arm's per-load draw.
///
/// Returns the assignment profile and one observation per player, in player
/// order.
pub fn resolve_slot(
    spec: &EnvSpec,
    actions: &[Action],
    draws: &[f64],
) -> Result<(AssignmentProfile, Vec<Observation>), EngineError> {
    let num_arms = spec.num_arms();
    if actions.len() != spec.num_players as usize {
        return Err(EngineError::ActionCount { expected: spec.num_players as usize, found: actions.len() });
    }
    if draws.len() != num_arms {
        return Err(EngineError::Model(crate::ModelError::DimensionMismatch {
            expected: num_arms,
            found: draws.len(),
        }));
    }
    if let Some((player, a)) = actions.iter().enumerate().find(|(_, a)| a.arm >= num_arms) {
        return Err(EngineError::InvalidAction { player, arm: a.arm, num_arms });
    }
    let profile = AssignmentProfile::from_arms(num_arms, actions.iter().map(|a| a.arm));
    let observations = actions
        .iter()
        .map(|a| {
            let load = profile.get(a.arm);
            let reward = f64::from(load.min(spec.capacities[a.arm])) * draws[a.arm];
            let feedback = match spec.feedback {
                FeedbackMode::Sdi => FeedbackSignal::Count(load),
                FeedbackMode::Sda => FeedbackSignal::Shared(load > 1),
            };
            Observation { arm: a.arm, reward, feedback }
        })
        .collect();
    Ok((profile, observations))
}

/// The stochastic side of the simulator: per-arm Bernoulli streams plus the
/// regret reference.
#[derive(Debug, Clone)]
pub struct Environment {
    spec: EnvSpec,
    optimal: OptimalProfile,
    arm_rngs: Vec<StreamRng>,
    draws: Vec<f64>,
}

impl Environment {
    pub fn new(spec: EnvSpec) -> Result<Self, EngineError> {
        spec.validate()?;
        let optimal = spec.optimal()?;
        let arm_rngs = (0..spec.num_arms()).map(|k| arm_stream(spec.seed, k)).collect();
        let draws = alloc::vec![0.0; spec.num_arms()];
        Ok(Environment { spec, optimal, arm_rngs, draws })
    }

    pub fn spec(&self) -> &EnvSpec {
        &self.spec
    }

    pub fn optimal(&self) -> &OptimalProfile {
        &self.optimal
    }

    /// Plays one slot. Every arm consumes exactly one draw per slot, occupied
    /// or not, so streams stay aligned across policies.
    pub fn step(&mut self, actions: &[Action]) -> Result<SlotOutcome, EngineError> {
        for ((draw, rng), &mu) in self.draws.iter_mut().zip(&mut self.arm_rngs).zip(&self.spec.means) {
            *draw = if rng.gen_bool(mu) { 1.0 } else { 0.0 };
        }
        let (profile, observations) = resolve_slot(&self.spec, actions, &self.draws)?;
        let regret = per_slot_regret(&profile, &self.optimal, &self.spec)?;
        Ok(SlotOutcome { profile, observations, regret })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SlotOutcome {
    pub profile: AssignmentProfile,
    pub observations: Vec<Observation>,
    pub regret: f64,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct RunOptions {
    /// Keep every slot's assignment profile in the trace.
    pub record_profiles: bool,
}

/// Result of a full run.
#[derive(Debug, Clone, PartialEq)]
pub struct RunTrace {
    pub num_arms: usize,
    /// Pseudo-regret of each slot; index 0 is slot 1.
    pub slot_regret: Vec<f64>,
    /// Bitmask of [`Phase::bit`] over all players, per slot.
    pub phases: Vec<u8>,
    /// Flattened `T x K` profiles when requested.
    pub profiles: Option<Vec<u16>>,
}

impl RunTrace {
    pub fn len(&self) -> usize {
        self.slot_regret.len()
    }

    pub fn is_empty(&self) -> bool {
        self.slot_regret.is_empty()
    }

    pub fn cumulative(&self) -> Vec<f64> {
        let mut acc = 0.0;
        self.slot_regret
            .iter()
            .map(|r| {
                acc += r;
                acc
            })
            .collect()
    }

    /// Cumulative regret after `slot` slots (1-based; 0 gives 0).
    pub fn cumulative_at(&self, slot: u64) -> f64 {
        let end = (slot as usize).min(self.slot_regret.len());
        self.slot_regret[..end].iter().sum()
    }

    pub fn total(&self) -> f64 {
        self.slot_regret.iter().sum()
    }

    /// Profile of 1-based `slot`, when profiles were recorded.
    pub fn profile(&self, slot: u64) -> Option<&[u16]> {
        let profiles = self.profiles.as_ref()?;
        let start = (slot as usize).checked_sub(1)? * self.num_arms;
        profiles.get(start..start + self.num_arms)
    }

    /// Fraction of the slots in `range` (0-based indices) with zero regret.
    pub fn optimal_fraction(&self, range: core::ops::Range<usize>) -> f64 {
        let slots = &self.slot_regret[range];
        if slots.is_empty() {
            return 0.0;
        }
        slots.iter().filter(|&&r| r <= 1e-12).count() as f64 / slots.len() as f64
    }
}

/// A run in progress. Tests drive it slot by slot to inspect players.
pub struct Simulation<P> {
    env: Environment,
    players: Vec<P>,
    actions: Vec<Action>,
    slot: u64,
    options: RunOptions,
    trace: RunTrace,
}

impl<P: Policy> Simulation<P> {
    pub fn new<F>(factory: &F, spec: EnvSpec, options: RunOptions) -> Result<Self, EngineError>
    where
        F: PolicyFactory<Policy = P> + ?Sized,
    {
        let env = Environment::new(spec)?;
        let spec = env.spec();
        let players = (0..spec.num_players as usize)
            .map(|player| {
                let ctx = PlayerContext {
                    num_arms: spec.num_arms(),
                    horizon: spec.horizon,
                    feedback: spec.feedback,
                    seed: player_seed(spec.seed, player),
                };
                factory.build(&ctx).map_err(|source| EngineError::Policy { player, slot: 0, source })
            })
            .collect::<Result<Vec<_>, _>>()?;
        Ok(Self::from_parts(env, players, options))
    }

    /// Wraps pre-built players. Intended for tests that need custom wiring.
    pub fn from_parts(env: Environment, players: Vec<P>, options: RunOptions) -> Self {
        let horizon = env.spec().horizon as usize;
        let num_arms = env.spec().num_arms();
        let trace = RunTrace {
            num_arms,
            slot_regret: Vec::with_capacity(horizon),
            phases: Vec::with_capacity(horizon),
            profiles: options.record_profiles.then(|| Vec::with_capacity(horizon * num_arms)),
        };
        Simulation { env, actions: Vec::with_capacity(players.len()), players, slot: 0, options, trace }
    }

    pub fn spec(&self) -> &EnvSpec {
        self.env.spec()
    }

    pub fn optimal(&self) -> &OptimalProfile {
        self.env.optimal()
    }

    pub fn players(&self) -> &[P] {
        &self.players
    }

    /// Number of slots already played.
    pub fn slot(&self) -> u64 {
        self.slot
    }

    pub fn is_done(&self) -> bool {
        self.slot >= self.env.spec().horizon
    }

    /// Plays one slot and returns its outcome.
    pub fn step(&mut self) -> Result<SlotOutcome, EngineError> {
        let slot = self.slot + 1;
        self.actions.clear();
        for (player, policy) in self.players.iter_mut().enumerate() {
            let action = policy.next_action().map_err(|source| EngineError::Policy { player, slot, source })?;
            self.actions.push(action);
        }
        let outcome = self.env.step(&self.actions)?;
        let mut mask = 0u8;
        for (player, (policy, obs)) in self.players.iter_mut().zip(&outcome.observations).enumerate() {
            mask |= policy.phase().bit();
            policy.observe(obs).map_err(|source| EngineError::Policy { player, slot, source })?;
        }
        self.slot = slot;
        self.trace.slot_regret.push(outcome.regret);
        self.trace.phases.push(mask);
        if let Some(profiles) = self.trace.profiles.as_mut() {
            profiles.extend(outcome.profile.counts().iter().map(|&a| a as u16));
        }
        Ok(outcome)
    }

    pub fn run_to_end(mut self) -> Result<RunTrace, EngineError> {
        while !self.is_done() {
            self.step()?;
        }
        Ok(self.finish())
    }

    pub fn finish(self) -> RunTrace {
        let _ = self.options;
        self.trace
    }
}

/// Runs `spec.horizon` slots with one fresh policy per player.
pub fn run<F>(factory: &F, spec: EnvSpec, options: RunOptions) -> Result<RunTrace, EngineError>
where
    F: PolicyFactory + ?Sized,
{
    Simulation::new(factory, spec, options)?.run_to_end()
}
