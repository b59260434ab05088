//! Leader/follower policy for count (SDI) feedback.
//!
//! Players rally on arm 0 to learn `M`, orthogonalise into ranks `1..=M`
//! (rank 1 leads) and sweep every arm once alone. From then on time is cut
//! into rounds that every player can delimit from the shared information
//! `(S, L, m^l, m^u)`:
//!
//! - an exploration round plays the recovered profile by rotation for `M`
//!   slots, then rallies once on each arm of `S` whose capacity is not yet
//!   pinned down;
//! - a communication round (`M + 5K` slots) starts with the leader leaving
//!   its rotation seat, which some follower sees as an impossible count, then
//!   carries five `K`-slot steps in which a full count `M` on arm `k` is a
//!   signal about `k`.
//!
//! Only the leader keeps statistics. Followers learn nothing but what the
//! leader signals.

use alloc::vec::Vec;

use rand::Rng;

use crate::engine::{Action, Observation, Phase, PlayerContext, Policy};
use crate::error::PolicyError;
use crate::model::{oracle, AssignmentProfile, FeedbackMode};
use crate::rng::{stream, StreamRng};
use crate::stats::{klucb_index, CapacityBounds, PlayerStats};

/// Number of signalling steps after the opening of a communication round.
pub const COMM_STEPS: usize = 5;

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct DpeConfig {
    /// Confidence level of the capacity intervals; `2 / T` when unset.
    pub delta: Option<f64>,
}

impl DpeConfig {
    pub fn delta_for(&self, horizon: u64) -> f64 {
        self.delta.unwrap_or(2.0 / horizon.max(1) as f64).clamp(1e-300, 0.5)
    }
}

/// The information every player holds in common.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DpeSharedInfo {
    /// Membership of the empirical optimal set `S`.
    pub optimal_set: Vec<bool>,
    pub least_favored: usize,
    pub bounds: CapacityBounds,
}

impl DpeSharedInfo {
    /// The state everyone agrees on before any signal: `S = {0..M-1}`,
    /// `L = M - 1`, bounds `[1, M]`.
    pub fn initial(num_arms: usize, num_players: u32) -> Self {
        let m = num_players as usize;
        DpeSharedInfo {
            optimal_set: (0..num_arms).map(|k| k < m).collect(),
            least_favored: m.saturating_sub(1),
            bounds: CapacityBounds::new(num_arms, num_players),
        }
    }

    pub fn num_arms(&self) -> usize {
        self.optimal_set.len()
    }

    pub fn support(&self) -> impl Iterator<Item = usize> + '_ {
        self.optimal_set.iter().enumerate().filter(|(_, &s)| s).map(|(k, _)| k)
    }

    pub fn support_size(&self) -> usize {
        self.optimal_set.iter().filter(|&&s| s).count()
    }

    /// Arms of `S` whose capacity interval has not collapsed.
    pub fn undetermined(&self) -> Vec<usize> {
        self.support().filter(|&k| !self.bounds.is_learned(k)).collect()
    }
}

/// Rebuilds the profile `a*` from the shared information: `m^l_k` players on
/// each arm of `S` except `L`, which takes the remainder.
pub fn recover_profile(info: &DpeSharedInfo, num_players: u32) -> Result<AssignmentProfile, PolicyError> {
    let l = info.least_favored;
    if l >= info.num_arms() || !info.optimal_set[l] {
        return Err(PolicyError::ProtocolCorruption(alloc::format!("least-favored arm {l} is outside S")));
    }
    let mut counts = alloc::vec![0u32; info.num_arms()];
    let mut used = 0u64;
    for k in info.support().filter(|&k| k != l) {
        counts[k] = info.bounds.lower(k);
        used += u64::from(counts[k]);
    }
    if used >= u64::from(num_players) {
        return Err(PolicyError::ProtocolCorruption(alloc::format!(
            "optimal set seats {used} players before L, only {num_players} exist"
        )));
    }
    counts[l] = num_players - used as u32;
    Ok(AssignmentProfile::new(counts))
}

/// Arm of the player with 1-based `rank` at 1-based `slot` under the
/// rotation: circulating rank `c = ((rank + slot - 1) mod M) + 1` takes the
/// arm whose prefix sum of `profile` first reaches `c`.
pub fn rotation_arm(rank: u32, slot: u64, profile: &[u32], num_players: u32) -> usize {
    let m = u64::from(num_players);
    let c = ((u64::from(rank) + slot - 1) % m) + 1;
    let mut prefix = 0u64;
    for (k, &a) in profile.iter().enumerate() {
        prefix += u64::from(a);
        if prefix >= c {
            return k;
        }
    }
    profile.len() - 1
}

/// Result of the leader's periodic recomputation.
#[derive(Debug, Clone, PartialEq)]
pub struct LeaderUpdate {
    pub target: DpeSharedInfo,
    /// Unused arms whose KL-UCB index still reaches the mean of `L`.
    pub exploration_set: Vec<usize>,
    /// Capacity intervals that crossed and were repaired.
    pub crossings: u32,
}

/// Tightens capacity bounds from the leader's statistics (arms with at least
/// one united sample only), solves the oracle on the empirical means with
/// `m^l` as capacities and builds the exploration set.
///
/// Every arm must already have an individual sample.
pub fn leader_update(
    stats: &PlayerStats,
    bounds: &CapacityBounds,
    delta: f64,
    t: u64,
    num_players: u32,
) -> Result<LeaderUpdate, PolicyError> {
    let mut bounds = bounds.clone();
    let mut crossings = 0;
    for k in 0..stats.num_arms() {
        if stats.arm(k).ue_count > 0 && bounds.update_arm(k, stats.arm(k), delta, num_players) {
            crossings += 1;
        }
    }
    let means = stats.means();
    let opt = oracle(&means, &bounds.lowers(), num_players)
        .map_err(|e| PolicyError::ProtocolCorruption(alloc::format!("oracle failed: {e}")))?;
    let l = opt.least_favored;
    let threshold = means[l];
    let exploration_set = (0..stats.num_arms())
        .filter(|&k| opt.profile.get(k) == 0)
        .filter(|&k| {
            let a = stats.arm(k);
            a.ie_count > 0 && klucb_index(means[k], a.ie_count, t) >= threshold
        })
        .collect();
    let target = DpeSharedInfo {
        optimal_set: opt.profile.counts().iter().map(|&a| a > 0).collect(),
        least_favored: l,
        bounds,
    };
    Ok(LeaderUpdate { target, exploration_set, crossings })
}

/// Content of one communication round. Bounds move by at most one unit per
/// round; `S` and `L` are sent in full.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CommMessage {
    pub remove: Vec<bool>,
    pub add: Vec<bool>,
    pub least_favored: usize,
    pub raise_lower: Vec<bool>,
    pub drop_upper: Vec<bool>,
}

impl CommMessage {
    /// The next message moving `shared` towards `target`.
    pub fn between(shared: &DpeSharedInfo, target: &DpeSharedInfo) -> Self {
        let k = shared.num_arms();
        CommMessage {
            remove: (0..k).map(|j| shared.optimal_set[j] && !target.optimal_set[j]).collect(),
            add: (0..k).map(|j| !shared.optimal_set[j] && target.optimal_set[j]).collect(),
            least_favored: target.least_favored,
            raise_lower: (0..k).map(|j| target.bounds.lower(j) > shared.bounds.lower(j)).collect(),
            drop_upper: (0..k).map(|j| target.bounds.upper(j) < shared.bounds.upper(j)).collect(),
        }
    }

    /// Whether the leader signals arm `k` during `step` (0-based, `0..5`).
    pub fn signals(&self, step: usize, k: usize) -> bool {
        match step {
            0 => self.remove[k],
            1 => self.add[k],
            2 => self.least_favored == k,
            3 => self.raise_lower[k],
            4 => self.drop_upper[k],
            _ => false,
        }
    }

    /// Applies the message. A raised lower bound above the upper one drags
    /// the upper bound along.
    pub fn apply(&self, shared: &DpeSharedInfo, num_players: u32) -> Result<DpeSharedInfo, PolicyError> {
        let mut next = shared.clone();
        for k in 0..shared.num_arms() {
            if self.remove[k] {
                if !next.optimal_set[k] {
                    return Err(corrupt("removal of an arm outside S"));
                }
                next.optimal_set[k] = false;
            }
            if self.add[k] {
                if shared.optimal_set[k] {
                    return Err(corrupt("addition of an arm already in S"));
                }
                next.optimal_set[k] = true;
            }
            let mut b = next.bounds.get(k);
            if self.raise_lower[k] {
                b.lower += 1;
            }
            if self.drop_upper[k] {
                b.upper = b.upper.checked_sub(1).ok_or_else(|| corrupt("upper bound below zero"))?;
            }
            b.upper = b.upper.max(b.lower);
            if b.lower == 0 || b.upper > num_players {
                return Err(corrupt("capacity bound outside [1, M]"));
            }
            next.bounds.set(k, b);
        }
        next.least_favored = self.least_favored;
        recover_profile(&next, num_players)?;
        Ok(next)
    }
}

fn corrupt(msg: &str) -> PolicyError {
    PolicyError::ProtocolCorruption(msg.into())
}

/// Leader's arm at sub-slot `k` of signalling `step`: `k` to signal,
/// otherwise `(k + 1) mod M`, which is never `k` when `M >= 2`.
pub fn leader_signal_arm(msg: &CommMessage, step: usize, k: usize, num_players: u32) -> usize {
    if msg.signals(step, k) {
        k
    } else {
        (k + 1) % num_players as usize
    }
}

/// Rebuilds a [`CommMessage`] from observed counts.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CommDecoder {
    msg: CommMessage,
    least_seen: bool,
}

impl CommDecoder {
    pub fn new(num_arms: usize) -> Self {
        let none = alloc::vec![false; num_arms];
        CommDecoder {
            msg: CommMessage {
                remove: none.clone(),
                add: none.clone(),
                least_favored: 0,
                raise_lower: none.clone(),
                drop_upper: none,
            },
            least_seen: false,
        }
    }

    /// Feeds the count seen on arm `k` during `step`.
    pub fn record(&mut self, step: usize, k: usize, count: u32, num_players: u32) -> Result<(), PolicyError> {
        let signalled = if count == num_players {
            true
        } else if count + 1 == num_players {
            false
        } else {
            return Err(PolicyError::ProtocolCorruption(alloc::format!(
                "count {count} on arm {k} while signalling with {num_players} players"
            )));
        };
        if !signalled {
            return Ok(());
        }
        match step {
            0 => self.msg.remove[k] = true,
            1 => self.msg.add[k] = true,
            2 => {
                if self.least_seen {
                    return Err(corrupt("two least-favored signals"));
                }
                self.msg.least_favored = k;
                self.least_seen = true;
            }
            3 => self.msg.raise_lower[k] = true,
            4 => self.msg.drop_upper[k] = true,
            _ => return Err(corrupt("signal outside the five steps")),
        }
        Ok(())
    }

    pub fn finish(self) -> Result<CommMessage, PolicyError> {
        if !self.least_seen {
            return Err(corrupt("no least-favored signal"));
        }
        Ok(self.msg)
    }
}

#[derive(Debug, Clone)]
struct LeaderState {
    stats: PlayerStats,
    target: DpeSharedInfo,
    exploration_set: Vec<usize>,
    crossings: u64,
}

#[derive(Debug, Clone)]
enum RoundKind {
    Explore,
    /// Leader side: the message being sent. Follower side: the decoder.
    Comm { park: usize, msg: Option<CommMessage>, decoder: Option<CommDecoder> },
}

#[derive(Debug, Clone)]
struct Round {
    kind: RoundKind,
    /// 0-based slot within the round.
    r: u64,
    /// Profile recovered from the shared information at the round start.
    profile: Vec<u32>,
    undetermined: Vec<usize>,
}

#[derive(Debug, Clone)]
enum Stage {
    Rally,
    Orthogonalise { sub: u32, saw_sharing: bool },
    WarmUp { s: usize },
    Round(Round),
}

/// One DPE-SDI player.
#[derive(Debug, Clone)]
pub struct DpeSdi {
    num_arms: usize,
    delta: f64,
    rng: StreamRng,
    /// Slots already played.
    t: u64,
    num_players: u32,
    /// 1-based; 0 while unranked.
    rank: u32,
    stage: Stage,
    shared: DpeSharedInfo,
    leader: Option<LeaderState>,
    explored_last: bool,
}

impl DpeSdi {
    pub fn new(ctx: &PlayerContext, config: DpeConfig) -> Result<Self, PolicyError> {
        if ctx.feedback != FeedbackMode::Sdi {
            return Err(PolicyError::UnsupportedFeedback("DPE-SDI needs sharing-demand counts"));
        }
        if ctx.num_arms < 2 {
            return Err(PolicyError::InvalidArgument("DPE-SDI needs at least two arms".into()));
        }
        Ok(DpeSdi {
            num_arms: ctx.num_arms,
            delta: config.delta_for(ctx.horizon),
            rng: stream(ctx.seed),
            t: 0,
            num_players: 0,
            rank: 0,
            stage: Stage::Rally,
            shared: DpeSharedInfo::initial(ctx.num_arms, 1),
            leader: None,
            explored_last: false,
        })
    }

    pub fn factory(config: DpeConfig) -> impl Fn(&PlayerContext) -> Result<Self, PolicyError> + Send + Sync + Copy {
        move |ctx: &PlayerContext| Self::new(ctx, config)
    }

    /// Learned number of players (0 before the rally).
    pub fn num_players(&self) -> u32 {
        self.num_players
    }

    /// 1-based rank, 0 while unranked.
    pub fn rank(&self) -> u32 {
        self.rank
    }

    pub fn is_leader(&self) -> bool {
        self.rank == 1
    }

    /// True once ranks are fixed.
    pub fn is_initialised(&self) -> bool {
        matches!(self.stage, Stage::WarmUp { .. } | Stage::Round(_))
    }

    pub fn shared_info(&self) -> &DpeSharedInfo {
        &self.shared
    }

    /// The leader's private target state.
    pub fn target_info(&self) -> Option<&DpeSharedInfo> {
        self.leader.as_ref().map(|l| &l.target)
    }

    pub fn stats(&self) -> Option<&PlayerStats> {
        self.leader.as_ref().map(|l| &l.stats)
    }

    pub fn exploration_set(&self) -> Option<&[usize]> {
        self.leader.as_ref().map(|l| l.exploration_set.as_slice())
    }

    /// Capacity intervals that had to be repaired so far (leader only).
    pub fn crossings(&self) -> u64 {
        self.leader.as_ref().map_or(0, |l| l.crossings)
    }

    /// Profile every player is following, once rounds have started.
    pub fn recovered_profile(&self) -> Option<&[u32]> {
        match &self.stage {
            Stage::Round(round) => Some(&round.profile),
            _ => None,
        }
    }

    /// True while the player is inside a communication round.
    pub fn in_comm(&self) -> bool {
        matches!(&self.stage, Stage::Round(Round { kind: RoundKind::Comm { .. }, .. }))
    }

    /// True at the first slot of a round.
    pub fn at_round_start(&self) -> bool {
        matches!(&self.stage, Stage::Round(Round { r: 0, .. }))
    }

    fn m(&self) -> usize {
        self.num_players as usize
    }

    fn comm_len(&self) -> u64 {
        (self.m() + COMM_STEPS * self.num_arms) as u64
    }

    fn round_len(&self, round: &Round) -> u64 {
        match round.kind {
            RoundKind::Explore => (self.m() + round.undetermined.len()) as u64,
            RoundKind::Comm { .. } => self.comm_len(),
        }
    }

    fn explore_round(&self) -> Result<Round, PolicyError> {
        let profile = recover_profile(&self.shared, self.num_players)?.into_inner();
        Ok(Round { kind: RoundKind::Explore, r: 0, profile, undetermined: self.shared.undetermined() })
    }

    /// Leader-side choice at a round boundary.
    fn next_round_as_leader(&mut self, refresh: bool) -> Result<Round, PolicyError> {
        let m = self.num_players;
        let leader = self.leader.as_mut().expect("leader state");
        if refresh {
            let up = leader_update(&leader.stats, &leader.target.bounds, self.delta, self.t, m)?;
            leader.target = up.target;
            leader.exploration_set = up.exploration_set;
            leader.crossings += u64::from(up.crossings);
        }
        if m == 1 {
            self.shared = leader.target.clone();
        }
        if self.shared == leader.target {
            return self.explore_round();
        }
        let msg = CommMessage::between(&self.shared, &leader.target);
        let means = leader.stats.means();
        let in_set: Vec<usize> = self.shared.support().collect();
        let candidates: Vec<usize> = if in_set.len() >= 2 {
            in_set
        } else {
            (0..self.num_arms).filter(|&k| !self.shared.optimal_set[k]).collect()
        };
        let park = best_mean(&candidates, &means);
        let mut round = self.explore_round()?;
        round.kind = RoundKind::Comm { park, msg: Some(msg), decoder: None };
        Ok(round)
    }

    fn start_round(&mut self, after_explore: bool) -> Result<(), PolicyError> {
        let round = if self.is_leader() { self.next_round_as_leader(after_explore)? } else { self.explore_round()? };
        self.stage = Stage::Round(round);
        Ok(())
    }

    fn round_action(&mut self) -> usize {
        let m = self.m();
        let slot = self.t + 1;
        let rank = self.rank;
        let num_players = self.num_players;
        let Stage::Round(round) = &self.stage else { unreachable!() };
        let r = round.r as usize;
        match &round.kind {
            RoundKind::Explore => {
                if r >= m {
                    return round.undetermined[r - m];
                }
                let arm = rotation_arm(rank, slot, &round.profile, num_players);
                if let Some(leader) = &self.leader {
                    let quiet = r == 0 && self.shared.support_size() == 1;
                    if arm == self.shared.least_favored
                        && !leader.exploration_set.is_empty()
                        && !quiet
                        && self.rng.gen_bool(0.5)
                    {
                        let i = self.rng.gen_range(0..leader.exploration_set.len());
                        self.explored_last = true;
                        return leader.exploration_set[i];
                    }
                }
                arm
            }
            RoundKind::Comm { park, msg, .. } => {
                if r < m {
                    return *park;
                }
                let step = (r - m) / self.num_arms;
                let k = (r - m) % self.num_arms;
                match msg {
                    Some(msg) => leader_signal_arm(msg, step, k, num_players),
                    None => k,
                }
            }
        }
    }

    fn observe_round(&mut self, obs: &Observation, count: u32) -> Result<(), PolicyError> {
        let m = self.m();
        let k_arms = self.num_arms;
        let num_players = self.num_players;
        let single = self.shared.support_size() == 1;
        let explored = core::mem::take(&mut self.explored_last);
        let Stage::Round(round) = &mut self.stage else { unreachable!() };
        let r = round.r as usize;
        match &mut round.kind {
            RoundKind::Explore => {
                if let Some(leader) = self.leader.as_mut() {
                    if r < m {
                        let divisor = if explored { 1 } else { round.profile[obs.arm].max(1) };
                        leader.stats.record_individual(obs.arm, obs.reward / f64::from(divisor));
                    } else {
                        leader.stats.record_united(obs.arm, obs.reward);
                    }
                } else if r < m {
                    let expected = round.profile[obs.arm];
                    if count > expected || (single && r == 0 && count < expected) {
                        round.kind =
                            RoundKind::Comm { park: obs.arm, msg: None, decoder: Some(CommDecoder::new(k_arms)) };
                    }
                }
            }
            RoundKind::Comm { decoder, .. } => {
                if r >= m {
                    if let Some(decoder) = decoder.as_mut() {
                        decoder.record((r - m) / k_arms, (r - m) % k_arms, count, num_players)?;
                    }
                }
            }
        }
        round.r += 1;
        let Stage::Round(round) = &self.stage else { unreachable!() };
        if round.r < self.round_len(round) {
            return Ok(());
        }
        let Stage::Round(round) = core::mem::replace(&mut self.stage, Stage::Rally) else { unreachable!() };
        match round.kind {
            RoundKind::Explore => self.start_round(true),
            RoundKind::Comm { msg, decoder, .. } => {
                let msg = match (msg, decoder) {
                    (Some(msg), _) => msg,
                    (None, Some(decoder)) => decoder.finish()?,
                    (None, None) => return Err(corrupt("communication round without content")),
                };
                self.shared = msg.apply(&self.shared, self.num_players)?;
                self.start_round(false)
            }
        }
    }
}

fn best_mean(candidates: &[usize], means: &[f64]) -> usize {
    let mut best = candidates[0];
    for &k in &candidates[1..] {
        if means[k] > means[best] {
            best = k;
        }
    }
    best
}

impl Policy for DpeSdi {
    fn next_action(&mut self) -> Result<Action, PolicyError> {
        let arm = match &self.stage {
            Stage::Rally => 0,
            Stage::Orthogonalise { sub, .. } => {
                let m = self.num_players;
                if *sub == 0 {
                    if self.rank == 0 {
                        self.rng.gen_range(0..self.m())
                    } else {
                        (self.rank - 1) as usize
                    }
                } else if self.rank == 0 || *sub == self.rank {
                    m as usize
                } else {
                    (self.rank - 1) as usize
                }
            }
            Stage::WarmUp { s } => (self.rank as usize - 1 + s) % self.num_arms,
            Stage::Round(_) => self.round_action(),
        };
        Ok(Action::new(arm))
    }

    fn observe(&mut self, obs: &Observation) -> Result<(), PolicyError> {
        let count = obs
            .feedback
            .count()
            .ok_or(PolicyError::UnsupportedFeedback("DPE-SDI needs sharing-demand counts"))?;
        match &mut self.stage {
            Stage::Rally => {
                if count as usize >= self.num_arms {
                    return Err(PolicyError::InvalidArgument(alloc::format!(
                        "{count} players need more than {} arms",
                        self.num_arms
                    )));
                }
                self.num_players = count;
                self.shared = DpeSharedInfo::initial(self.num_arms, count);
                self.stage = Stage::Orthogonalise { sub: 0, saw_sharing: false };
            }
            Stage::Orthogonalise { sub, saw_sharing } => {
                if *sub == 0 {
                    if self.rank == 0 && count == 1 {
                        self.rank = obs.arm as u32 + 1;
                    }
                } else if count > 1 {
                    *saw_sharing = true;
                }
                *sub += 1;
                if *sub > self.num_players {
                    if *saw_sharing {
                        *sub = 0;
                        *saw_sharing = false;
                    } else if self.rank == 0 {
                        return Err(corrupt("orthogonalisation ended without a rank"));
                    } else {
                        if self.rank == 1 {
                            self.leader = Some(LeaderState {
                                stats: PlayerStats::new(self.num_arms),
                                target: self.shared.clone(),
                                exploration_set: Vec::new(),
                                crossings: 0,
                            });
                        }
                        self.stage = Stage::WarmUp { s: 0 };
                    }
                }
            }
            Stage::WarmUp { s } => {
                *s += 1;
                let done = *s >= self.num_arms;
                if let Some(leader) = self.leader.as_mut() {
                    leader.stats.record_individual(obs.arm, obs.reward / f64::from(count.max(1)));
                }
                if done {
                    self.t += 1;
                    return self.start_round(true);
                }
            }
            Stage::Round(_) => {
                self.t += 1;
                return self.observe_round(obs, count);
            }
        }
        self.t += 1;
        Ok(())
    }

    fn phase(&self) -> Phase {
        match &self.stage {
            Stage::Rally | Stage::Orthogonalise { .. } => Phase::Init,
            Stage::WarmUp { .. } => Phase::Explore,
            Stage::Round(round) => match round.kind {
                RoundKind::Comm { .. } => Phase::Comm,
                RoundKind::Explore if round.r as usize >= self.m() => Phase::Explore,
                RoundKind::Explore if self.explored_last => Phase::Explore,
                RoundKind::Explore => Phase::Exploit,
            },
        }
    }
}
