//! Multi-player multi-armed bandits with finite shareable-resource arms.
//!
//! Several players may pull the same arm in a slot. Arm `k` carries a
//! capacity `m_k` and a per-load reward `X_k`; the players on it jointly
//! collect `min(a_k, m_k) * X_k`. This crate holds everything that is pure
//! computation:
//!
//! - [`model`]: ground-truth instances, the optimal-assignment oracle and
//!   pseudo-regret.
//! - [`engine`]: the slot-synchronous simulator and the [`Policy`] interface.
//! - [`stats`]: KL-UCB, the capacity confidence interval and the separation
//!   test used for successive accept/reject.
//! - [`dpe`]: the leader/follower policy for count (SDI) feedback.
//! - [`sic`]: the phase-based policy for 1-bit sharing (SDA) feedback.
//! - [`baselines`]: heuristic comparison policies and fixed dummies.
//!
//! The crate is `no_std` (it needs `alloc`). File formats, sweeps and the
//! command line live in the harness crate.

#![cfg_attr(not(test), no_std)]

extern crate alloc;

pub mod baselines;
pub mod dpe;
pub mod engine;
mod error;
pub mod model;
pub mod rng;
pub mod sic;
pub mod stats;

pub use engine::{
    run, Action, FeedbackSignal, Observation, Phase, PlayerContext, Policy, PolicyFactory,
    RunOptions, RunTrace, Simulation,
};
pub use error::{EngineError, ModelError, PolicyError};
pub use model::{
    expected_reward, oracle, per_slot_regret, AssignmentProfile, EnvSpec, FeedbackMode,
    OptimalProfile,
};
