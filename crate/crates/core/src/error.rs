use alloc::string::String;
use core::fmt;

/// Errors raised while validating instances or evaluating profiles.
#[derive(Debug, Clone, PartialEq)]
pub enum ModelError {
    /// Two vectors that must describe the same arms have different lengths.
    DimensionMismatch { expected: usize, found: usize },
    /// Capacities cannot seat every player.
    Infeasible { total_capacity: u64, players: u32 },
    /// A profile does not place exactly `M` players.
    ProfileSize { expected: u32, found: u64 },
    InvalidArgument(String),
}

impl fmt::Display for ModelError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ModelError::DimensionMismatch { expected, found } => {
                write!(f, "dimension mismatch: expected {expected} arms, found {found}")
            }
            ModelError::Infeasible { total_capacity, players } => write!(
                f,
                "infeasible instance: total capacity {total_capacity} < {players} players"
            ),
            ModelError::ProfileSize { expected, found } => {
                write!(f, "profile places {found} players, expected {expected}")
            }
            ModelError::InvalidArgument(msg) => write!(f, "invalid argument: {msg}"),
        }
    }
}

impl core::error::Error for ModelError {}

/// Errors raised by a policy while acting or digesting feedback.
#[derive(Debug, Clone, PartialEq)]
pub enum PolicyError {
    /// The policy cannot run under the environment's feedback mode.
    UnsupportedFeedback(&'static str),
    /// Shared state between players went out of sync. This is a bug in the
    /// protocol or a violated confidence event, never expected in normal runs.
    ProtocolCorruption(String),
    InvalidArgument(String),
}

impl fmt::Display for PolicyError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PolicyError::UnsupportedFeedback(what) => write!(f, "unsupported feedback: {what}"),
            PolicyError::ProtocolCorruption(msg) => write!(f, "protocol corruption: {msg}"),
            PolicyError::InvalidArgument(msg) => write!(f, "invalid argument: {msg}"),
        }
    }
}

impl core::error::Error for PolicyError {}

/// Errors raised by the simulator.
#[derive(Debug, Clone, PartialEq)]
pub enum EngineError {
    Model(ModelError),
    /// A player asked for an arm that does not exist.
    InvalidAction { player: usize, arm: usize, num_arms: usize },
    /// Wrong number of actions for the slot.
    ActionCount { expected: usize, found: usize },
    /// A policy failed; `slot` is 1-based.
    Policy { player: usize, slot: u64, source: PolicyError },
}

impl fmt::Display for EngineError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            EngineError::Model(e) => write!(f, "{e}"),
            EngineError::InvalidAction { player, arm, num_arms } => write!(
                f,
                "player {player} chose arm {arm}, but only {num_arms} arms exist"
            ),
            EngineError::ActionCount { expected, found } => {
                write!(f, "expected {expected} actions, got {found}")
            }
            EngineError::Policy { player, slot, source } => {
                write!(f, "player {player} failed at slot {slot}: {source}")
            }
        }
    }
}

impl core::error::Error for EngineError {
    fn source(&self) -> Option<&(dyn core::error::Error + 'static)> {
        match self {
            EngineError::Model(e) => Some(e),
            EngineError::Policy { source, .. } => Some(source),
            _ => None,
        }
    }
}

impl From<ModelError> for EngineError {
    fn from(e: ModelError) -> Self {
        EngineError::Model(e)
    }
}
