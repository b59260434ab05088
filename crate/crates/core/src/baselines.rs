//! Heuristic comparison policies and fixed dummies.
//!
//! The heuristics act on their own observations only. Both start with a
//! round-robin warm-up of `K` slots from a private offset; players carry no
//! index, so the offset is drawn from the player's seed.

use alloc::vec::Vec;

use rand::Rng;

use crate::engine::{Action, Observation, Phase, PlayerContext, Policy};
use crate::error::PolicyError;
use crate::rng::stream;

/// Per-arm tallies of one player's own observations.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct HeuristicState {
    pub pulls: Vec<u64>,
    pub reward_sums: Vec<f64>,
    pub shared: Vec<u64>,
}

impl HeuristicState {
    pub fn new(num_arms: usize) -> Self {
        HeuristicState {
            pulls: alloc::vec![0; num_arms],
            reward_sums: alloc::vec![0.0; num_arms],
            shared: alloc::vec![0; num_arms],
        }
    }

    pub fn record(&mut self, obs: &Observation) {
        self.pulls[obs.arm] += 1;
        self.reward_sums[obs.arm] += obs.reward;
        if obs.feedback.is_shared() {
            self.shared[obs.arm] += 1;
        }
    }

    /// Arm with the highest empirical mean reward; lower index on ties.
    pub fn highest_reward(&self) -> usize {
        argbest(self.pulls.iter().zip(&self.reward_sums).map(|(&n, &s)| (n > 0).then(|| s / n as f64)), |a, b| a > b)
    }

    /// Arm with the lowest share rate among pulled arms; lower index on ties.
    pub fn idlest(&self) -> usize {
        argbest(self.pulls.iter().zip(&self.shared).map(|(&n, &s)| (n > 0).then(|| s as f64 / n as f64)), |a, b| a < b)
    }
}

fn argbest(scores: impl Iterator<Item = Option<f64>>, better: impl Fn(f64, f64) -> bool) -> usize {
    let mut best: Option<(usize, f64)> = None;
    for (k, s) in scores.enumerate() {
        if let Some(s) = s {
            if best.map_or(true, |(_, b)| better(s, b)) {
                best = Some((k, s));
            }
        }
    }
    best.map_or(0, |(k, _)| k)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Rule {
    HighestReward,
    Idlest,
}

#[derive(Debug, Clone)]
struct Heuristic {
    rule: Rule,
    num_arms: usize,
    offset: usize,
    slot: u64,
    state: HeuristicState,
}

impl Heuristic {
    fn new(rule: Rule, ctx: &PlayerContext) -> Result<Self, PolicyError> {
        if ctx.num_arms == 0 {
            return Err(PolicyError::InvalidArgument("no arms".into()));
        }
        let offset = stream(ctx.seed).gen_range(0..ctx.num_arms);
        Ok(Self::with_offset(rule, ctx.num_arms, offset))
    }

    fn with_offset(rule: Rule, num_arms: usize, offset: usize) -> Self {
        Heuristic { rule, num_arms, offset: offset % num_arms, slot: 0, state: HeuristicState::new(num_arms) }
    }

    fn in_warm_up(&self) -> bool {
        self.slot < self.num_arms as u64
    }

    fn next_arm(&self) -> usize {
        if self.in_warm_up() {
            return (self.offset + self.slot as usize) % self.num_arms;
        }
        match self.rule {
            Rule::HighestReward => self.state.highest_reward(),
            Rule::Idlest => self.state.idlest(),
        }
    }

    fn observe(&mut self, obs: &Observation) {
        self.state.record(obs);
        self.slot += 1;
    }

    fn phase(&self) -> Phase {
        if self.in_warm_up() {
            Phase::Explore
        } else {
            Phase::Exploit
        }
    }
}

macro_rules! heuristic_policy {
    ($(#[$doc:meta])* $name:ident, $rule:expr) => {
        $(#[$doc])*
        #[derive(Debug, Clone)]
        pub struct $name(Heuristic);

        impl $name {
            pub fn new(ctx: &PlayerContext) -> Result<Self, PolicyError> {
                Heuristic::new($rule, ctx).map($name)
            }

            /// Warm-up starting on arm `offset` instead of a random one.
            pub fn with_offset(num_arms: usize, offset: usize) -> Self {
                $name(Heuristic::with_offset($rule, num_arms, offset))
            }

            pub fn factory() -> impl Fn(&PlayerContext) -> Result<Self, PolicyError> + Send + Sync + Copy {
                |ctx: &PlayerContext| Self::new(ctx)
            }

            pub fn state(&self) -> &HeuristicState {
                &self.0.state
            }
        }

        impl Policy for $name {
            fn next_action(&mut self) -> Result<Action, PolicyError> {
                Ok(Action::new(self.0.next_arm()))
            }

            fn observe(&mut self, obs: &Observation) -> Result<(), PolicyError> {
                self.0.observe(obs);
                Ok(())
            }

            fn phase(&self) -> Phase {
                self.0.phase()
            }
        }
    };
}

heuristic_policy!(
    /// Plays the arm with the highest empirical mean of its observed reward.
    HighestReward,
    Rule::HighestReward
);

heuristic_policy!(
    /// Plays the arm it has found shared least often, relative to its pulls.
    IdlestArm,
    Rule::Idlest
);

/// Plays a fixed arm forever.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FixedArms {
    arm: usize,
}

impl FixedArms {
    pub fn new(arm: usize) -> Self {
        FixedArms { arm }
    }

    /// A factory handing out arms so the players jointly realise `counts`.
    ///
    /// Players are built in order, so the `i`-th build gets the `i`-th seat.
    /// For tests only: this deliberately bypasses learning.
    pub fn factory_for_profile(counts: &[u32]) -> impl Fn(&PlayerContext) -> Result<FixedArms, PolicyError> {
        let seats: Vec<usize> =
            counts.iter().enumerate().flat_map(|(k, &n)| core::iter::repeat(k).take(n as usize)).collect();
        let next = core::sync::atomic::AtomicUsize::new(0);
        move |_ctx: &PlayerContext| {
            let i = next.fetch_add(1, core::sync::atomic::Ordering::Relaxed);
            seats
                .get(i % seats.len().max(1))
                .map(|&arm| FixedArms::new(arm))
                .ok_or_else(|| PolicyError::InvalidArgument("empty profile".into()))
        }
    }
}

impl Policy for FixedArms {
    fn next_action(&mut self) -> Result<Action, PolicyError> {
        Ok(Action::new(self.arm))
    }

    fn observe(&mut self, _obs: &Observation) -> Result<(), PolicyError> {
        Ok(())
    }

    fn phase(&self) -> Phase {
        Phase::Exploit
    }
}
