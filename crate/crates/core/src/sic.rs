//! Phase-based successive accept/reject policy for 1-bit sharing (SDA)
//! feedback. It also runs under count feedback by reducing counts to the
//! sharing flag, which yields the SDI variant.
//!
//! Initialisation orthogonalises players over arms `0..K-1` (arm `K-1` is
//! the escape arm) and then runs a `2K-2` slot rank assignment in which every
//! pair of players shares an arm exactly once. Afterwards, phase `p`:
//!
//! 1. individual exploration, `K_t 2^p` slots;
//! 2. united exploration, `2^p` slots per arm with an open capacity interval;
//! 3. back-communication: followers stream their per-phase raw reward sums to
//!    the leader bit by bit;
//! 4. the leader accepts, rejects or settles the least-favored arm;
//! 5. forth-communication of that decision and of the bound changes;
//! 6. everyone updates; players no longer needed on active arms exploit.

use alloc::vec::Vec;

use rand::Rng;

use crate::engine::{Action, Observation, Phase, PlayerContext, Policy};
use crate::error::PolicyError;
use crate::rng::{stream, StreamRng};
use crate::stats::{separation_indicator, ArmBounds, CapacityBounds, PlayerStats};

fn corrupt(msg: impl Into<alloc::string::String>) -> PolicyError {
    PolicyError::ProtocolCorruption(msg.into())
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct SicConfig {
    /// Confidence level of the capacity intervals; `2 / T` when unset.
    pub delta: Option<f64>,
}

impl SicConfig {
    pub fn delta_for(&self, horizon: u64) -> f64 {
        self.delta.unwrap_or(2.0 / horizon.max(1) as f64).clamp(1e-300, 0.5)
    }
}

/// `ceil(log2 x)`, with `ceil_log2(1) = 0`.
pub fn ceil_log2(x: u32) -> u32 {
    if x <= 1 {
        0
    } else {
        32 - (x - 1).leading_zeros()
    }
}

/// Number of binary digits of `x` (0 for 0).
pub fn bit_width(x: u32) -> u32 {
    32 - x.leading_zeros()
}

/// Bits per back-communication cell in phase `p` with `M` players: a raw
/// per-phase sum is at most `M 2^p`.
pub fn back_bits(p: u32, num_players: u32) -> u32 {
    p + 1 + ceil_log2(num_players)
}

/// Bit `index` (0 = most significant) of `value` written on `width` bits.
pub fn bit_of(value: u64, index: u32, width: u32) -> bool {
    debug_assert!(index < width);
    (value >> (width - 1 - index)) & 1 == 1
}

/// MSB-first encoding.
pub fn encode_bits(value: u64, width: u32) -> impl Iterator<Item = bool> {
    (0..width).map(move |i| bit_of(value, i, width))
}

/// Inverse of [`encode_bits`].
pub fn decode_bits(bits: impl IntoIterator<Item = bool>) -> u64 {
    bits.into_iter().fold(0, |acc, b| (acc << 1) | u64::from(b))
}

/// Arm played by external rank `ext` (1-based) at rank-assignment slot `s`
/// (1-based, `1..=2K-2`): its own arm `ext - 1` for `s <= 2 ext` and
/// `s >= K + ext`, otherwise arm `s - ext - 1`.
pub fn rank_assign_arm(ext: u32, s: u32, num_arms: usize) -> usize {
    let k = num_arms as u32;
    if s <= 2 * ext || s >= k + ext {
        (ext - 1) as usize
    } else {
        (s - ext - 1) as usize
    }
}

/// State every active player holds in common.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SicSharedState {
    /// Active arms in ascending index order.
    pub active: Vec<usize>,
    /// Players still exploring.
    pub active_players: u32,
    pub bounds: CapacityBounds,
    /// Current phase, starting at 1.
    pub phase: u32,
}

impl SicSharedState {
    pub fn initial(num_arms: usize, num_players: u32) -> Self {
        SicSharedState {
            active: (0..num_arms).collect(),
            active_players: num_players,
            bounds: CapacityBounds::new(num_arms, num_players),
            phase: 1,
        }
    }

    /// Active arms whose capacity interval is still open.
    pub fn undetermined(&self) -> Vec<usize> {
        self.active.iter().copied().filter(|&k| !self.bounds.is_learned(k)).collect()
    }

    pub fn position(&self, arm: usize) -> Option<usize> {
        self.active.iter().position(|&k| k == arm)
    }

    /// Players on each active arm during individual exploration: one
    /// rotating player, plus the surplus `M_t - K_t` stacked arm by arm up
    /// to `m^l`.
    pub fn allocation(&self) -> Result<Vec<u32>, PolicyError> {
        let mut b = alloc::vec![1u32; self.active.len()];
        let mut surplus = self.active_players.saturating_sub(self.active.len() as u32);
        for (pos, &k) in self.active.iter().enumerate() {
            let extra = (self.bounds.lower(k) - 1).min(surplus);
            b[pos] += extra;
            surplus -= extra;
        }
        if surplus > 0 {
            return Err(corrupt(alloc::format!(
                "{} players do not fit under the lower capacity bounds",
                self.active_players
            )));
        }
        Ok(b)
    }
}

/// Arm of active rank `rank` at 0-based exploration slot `s`.
///
/// Ranks up to `K_t` rotate over active positions `(rank + s) mod K_t`.
/// Higher ranks stay on the first active arm whose spare capacity prefix
/// `sum (m^l - 1)` reaches `rank - K_t`.
pub fn ie_arm(rank: u32, s: u64, state: &SicSharedState) -> Result<usize, PolicyError> {
    let kt = state.active.len() as u64;
    if kt == 0 {
        return Err(corrupt("no active arm to explore"));
    }
    if u64::from(rank) <= kt {
        return Ok(state.active[((u64::from(rank) + s) % kt) as usize]);
    }
    let need = u64::from(rank) - kt;
    let mut prefix = 0u64;
    for &k in &state.active {
        prefix += u64::from(state.bounds.lower(k) - 1);
        if prefix >= need {
            return Ok(k);
        }
    }
    Err(corrupt(alloc::format!("rank {rank} has no seat under the lower capacity bounds")))
}

/// Accept, reject and least-favored sets chosen by the leader.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct AccRej {
    pub accept: Vec<usize>,
    pub reject: Vec<usize>,
    pub least_favored: Option<usize>,
}

/// Successive accept/reject over the active arms given the leader's merged
/// statistics and already updated bounds.
///
/// - accept `k` (capacity learned) when the arms not surely worse than it,
///   itself included, cannot absorb more than `M_t` players by `m^u`;
/// - reject `k` when the arms surely better than it already seat `M_t` by
///   `m^l`;
/// - `L` is an arm surely better than every other active arm with
///   `m^l >= M_t`.
pub fn acc_rej(stats: &PlayerStats, state: &SicSharedState, horizon: u64) -> AccRej {
    let m_t = state.active_players;
    let kt = state.active.len();
    let est = |k: usize| (stats.mean(k).unwrap_or(0.0), stats.arm(k).ie_count.max(1));
    let g = |k: usize, j: usize| k != j && separation_indicator(est(k), est(j), horizon);
    let mut out = AccRej::default();
    for &k in &state.active {
        let better_lower: u64 =
            state.active.iter().filter(|&&j| g(j, k)).map(|&j| u64::from(state.bounds.lower(j))).sum();
        if better_lower >= u64::from(m_t) {
            out.reject.push(k);
        }
    }
    for &k in &state.active {
        let wins = state.active.iter().filter(|&&j| g(k, j)).count();
        if wins + 1 == kt && state.bounds.lower(k) >= m_t && !out.reject.contains(&k) {
            out.least_favored = Some(k);
            break;
        }
    }
    for &k in &state.active {
        if !state.bounds.is_learned(k) || out.reject.contains(&k) || out.least_favored == Some(k) {
            continue;
        }
        let rivals: u64 =
            state.active.iter().filter(|&&j| !g(k, j)).map(|&j| u64::from(state.bounds.upper(j))).sum();
        if rivals <= u64::from(m_t) {
            out.accept.push(k);
        }
    }
    out
}

/// Everything the forth-communication carries. Vectors are indexed by arm.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ForthMessage {
    pub reject: Vec<bool>,
    pub accept: Vec<bool>,
    pub least_favored: Option<usize>,
    /// Increase of `m^l`, only for arms with an open interval.
    pub raise_lower: Vec<u32>,
    /// Decrease of `m^u`, only for arms with an open interval.
    pub drop_upper: Vec<u32>,
}

impl ForthMessage {
    pub fn empty(num_arms: usize) -> Self {
        ForthMessage {
            reject: alloc::vec![false; num_arms],
            accept: alloc::vec![false; num_arms],
            least_favored: None,
            raise_lower: alloc::vec![0; num_arms],
            drop_upper: alloc::vec![0; num_arms],
        }
    }

    /// Message describing `decision` and the move from `old` to `new` bounds.
    pub fn new(decision: &AccRej, old: &CapacityBounds, new: &CapacityBounds) -> Self {
        let mut msg = ForthMessage::empty(old.num_arms());
        for &k in &decision.reject {
            msg.reject[k] = true;
        }
        for &k in &decision.accept {
            msg.accept[k] = true;
        }
        msg.least_favored = decision.least_favored;
        for k in 0..old.num_arms() {
            msg.raise_lower[k] = new.lower(k).saturating_sub(old.lower(k));
            msg.drop_upper[k] = old.upper(k).saturating_sub(new.upper(k));
        }
        msg
    }

    /// Whether the leader signals at bit `bit` of a cell about `arm` in
    /// `step` (`0..5`: reject, accept, least-favored, lower, upper).
    pub fn signals(&self, step: usize, arm: usize, bit: u32, width: u32) -> bool {
        match step {
            0 => self.reject[arm],
            1 => self.accept[arm],
            2 => self.least_favored == Some(arm),
            3 => bit_of(u64::from(self.raise_lower[arm]), bit, width),
            4 => bit_of(u64::from(self.drop_upper[arm]), bit, width),
            _ => false,
        }
    }

    /// Records a received signal.
    pub fn set(&mut self, step: usize, arm: usize, bit: u32, width: u32) -> Result<(), PolicyError> {
        match step {
            0 => self.reject[arm] = true,
            1 => self.accept[arm] = true,
            2 => {
                if self.least_favored.is_some_and(|l| l != arm) {
                    return Err(corrupt("two least-favored signals"));
                }
                self.least_favored = Some(arm);
            }
            3 => self.raise_lower[arm] |= 1 << (width - 1 - bit),
            4 => self.drop_upper[arm] |= 1 << (width - 1 - bit),
            _ => return Err(corrupt("signal outside the five steps")),
        }
        Ok(())
    }
}

/// One slot of the forth-communication.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ForthCell {
    pub step: usize,
    /// Arm the message bit is about; the receiver sits on it.
    pub arm: usize,
    /// Arm the leader uses when not signalling; idlers park there too.
    pub next_arm: usize,
    /// Rank of the follower listening in this slot.
    pub receiver: u32,
    pub bit: u32,
    pub width: u32,
}

/// Forth-communication layout: steps 0-2 use one slot per (active arm,
/// follower) cell, steps 3-4 use `bit_width(M_t - 1)` slots per (open arm,
/// follower) cell.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ForthSchedule {
    active: Vec<usize>,
    open: Vec<usize>,
    followers: u64,
    width: u32,
}

impl ForthSchedule {
    pub fn new(state: &SicSharedState, open: &[usize]) -> Self {
        let m_t = state.active_players;
        ForthSchedule {
            active: state.active.clone(),
            open: open.to_vec(),
            followers: u64::from(m_t.saturating_sub(1)),
            width: bit_width(m_t.saturating_sub(1)),
        }
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    fn flag_block(&self) -> u64 {
        self.active.len() as u64 * self.followers
    }

    fn bound_block(&self) -> u64 {
        self.open.len() as u64 * self.followers * u64::from(self.width)
    }

    pub fn len(&self) -> u64 {
        if self.active.len() < 2 || self.followers == 0 {
            return 0;
        }
        3 * self.flag_block() + 2 * self.bound_block()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn next_of(&self, arm: usize) -> usize {
        let pos = self.active.iter().position(|&k| k == arm).expect("active arm");
        self.active[(pos + 1) % self.active.len()]
    }

    pub fn cell(&self, offset: u64) -> ForthCell {
        let flags = self.flag_block();
        let (step, arm, receiver, bit, width) = if offset < 3 * flags {
            let step = (offset / flags) as usize;
            let within = offset % flags;
            let arm = self.active[(within / self.followers) as usize];
            (step, arm, 2 + (within % self.followers) as u32, 0, 1)
        } else {
            let rest = offset - 3 * flags;
            let block = self.bound_block();
            let step = 3 + (rest / block) as usize;
            let within = rest % block;
            let w = u64::from(self.width);
            let arm = self.open[(within / (self.followers * w)) as usize];
            let receiver = 2 + ((within / w) % self.followers) as u32;
            (step, arm, receiver, (within % w) as u32, self.width)
        };
        ForthCell { step, arm, next_arm: self.next_of(arm), receiver, bit, width }
    }
}

/// Result of applying a decision on one player.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SicUpdate {
    pub state: SicSharedState,
    pub exploit: Option<usize>,
}

/// Applies the leader's decision for the player of active rank `rank`.
pub fn sic_update(state: &SicSharedState, msg: &ForthMessage, open: &[usize], rank: u32) -> Result<SicUpdate, PolicyError> {
    let mut next = state.clone();
    for &k in open {
        let b = state.bounds.get(k);
        let lower = b.lower + msg.raise_lower[k];
        let upper = b.upper.checked_sub(msg.drop_upper[k]).ok_or_else(|| corrupt("upper bound below zero"))?.max(lower);
        if lower == 0 || upper > state.active_players {
            return Err(corrupt("capacity bound outside [1, M_t]"));
        }
        next.bounds.set(k, ArmBounds { lower, upper });
    }
    let num_arms = msg.accept.len();
    for k in 0..num_arms {
        let flagged = u32::from(msg.accept[k]) + u32::from(msg.reject[k]) + u32::from(msg.least_favored == Some(k));
        if flagged > 1 {
            return Err(corrupt(alloc::format!("arm {k} both accepted and rejected")));
        }
        if flagged == 1 && state.position(k).is_none() {
            return Err(corrupt(alloc::format!("decision about inactive arm {k}")));
        }
    }
    let accepted: Vec<usize> = state.active.iter().copied().filter(|&k| msg.accept[k]).collect();
    let seats: u32 = accepted.iter().map(|&k| next.bounds.lower(k)).sum();
    let m_t = state
        .active_players
        .checked_sub(seats)
        .ok_or_else(|| corrupt("accepted arms seat more than the active players"))?;
    next.active_players = m_t;
    next.active.retain(|&k| !msg.accept[k] && !msg.reject[k] && msg.least_favored != Some(k));
    next.phase += 1;

    let mut exploit = None;
    if rank > m_t {
        let need = rank - m_t;
        let mut prefix = 0;
        for &k in &accepted {
            prefix += next.bounds.lower(k);
            if prefix >= need {
                exploit = Some(k);
                break;
            }
        }
        if exploit.is_none() {
            return Err(corrupt(alloc::format!("rank {rank} finds no accepted seat")));
        }
    } else if let Some(l) = msg.least_favored {
        exploit = Some(l);
    } else if next.active.len() == 1 {
        exploit = Some(next.active[0]);
    } else if next.active.is_empty() {
        return Err(corrupt(alloc::format!("{m_t} players left without active arms")));
    }
    if msg.least_favored.is_some() {
        next.active_players = 0;
    }
    for &k in &next.active {
        next.bounds.cap_arm(k, next.active_players.max(1));
    }
    if exploit.is_none() {
        next.allocation()?;
    }
    Ok(SicUpdate { state: next, exploit })
}

#[derive(Debug, Clone)]
struct PhaseRun {
    offset: u64,
    ie_len: u64,
    ue_len: u64,
    back_len: u64,
    forth: ForthSchedule,
    open: Vec<usize>,
    alloc: Vec<u32>,
    /// Raw reward sums per active position, rotating followers only.
    raw: Vec<u64>,
    back_bits: u32,
    back_value: u64,
    message: Option<ForthMessage>,
    received: ForthMessage,
}

impl PhaseRun {
    fn back_start(&self) -> u64 {
        self.ie_len + self.ue_len
    }

    fn forth_start(&self) -> u64 {
        self.back_start() + self.back_len
    }

    fn len(&self) -> u64 {
        self.forth_start() + self.forth.len()
    }
}

#[derive(Debug, Clone)]
enum Stage {
    Orthogonalise { sub: u32, saw_sharing: bool },
    RankAssign { s: u32, early: u32, total: u32 },
    Phase(PhaseRun),
    Exploit(usize),
}

/// One SIC player. Runs under SDA feedback, or under SDI through the
/// sharing flag.
#[derive(Debug, Clone)]
pub struct SicSda {
    num_arms: usize,
    horizon: u64,
    delta: f64,
    rng: StreamRng,
    /// External rank from orthogonalisation, 1-based; 0 while unranked.
    ext_rank: u32,
    /// Rank after rank assignment, 1-based; 0 before.
    rank: u32,
    num_players: u32,
    stage: Stage,
    state: SicSharedState,
    stats: Option<PlayerStats>,
    crossings: u64,
}

/// The count-feedback variant is the same machine.
pub type SicSdi = SicSda;

impl SicSda {
    pub fn new(ctx: &PlayerContext, config: SicConfig) -> Result<Self, PolicyError> {
        if ctx.num_arms < 2 {
            return Err(PolicyError::InvalidArgument("SIC needs at least two arms".into()));
        }
        Ok(SicSda {
            num_arms: ctx.num_arms,
            horizon: ctx.horizon,
            delta: config.delta_for(ctx.horizon),
            rng: stream(ctx.seed),
            ext_rank: 0,
            rank: 0,
            num_players: 0,
            stage: Stage::Orthogonalise { sub: 0, saw_sharing: false },
            state: SicSharedState::initial(ctx.num_arms, 1),
            stats: None,
            crossings: 0,
        })
    }

    pub fn factory(config: SicConfig) -> impl Fn(&PlayerContext) -> Result<Self, PolicyError> + Send + Sync + Copy {
        move |ctx: &PlayerContext| Self::new(ctx, config)
    }

    pub fn external_rank(&self) -> u32 {
        self.ext_rank
    }

    /// 1-based rank, 0 before rank assignment ends.
    pub fn rank(&self) -> u32 {
        self.rank
    }

    /// Learned number of players, 0 before rank assignment ends.
    pub fn num_players(&self) -> u32 {
        self.num_players
    }

    pub fn is_leader(&self) -> bool {
        self.rank == 1
    }

    pub fn is_initialised(&self) -> bool {
        matches!(self.stage, Stage::Phase(_) | Stage::Exploit(_))
    }

    pub fn shared_state(&self) -> &SicSharedState {
        &self.state
    }

    pub fn stats(&self) -> Option<&PlayerStats> {
        self.stats.as_ref()
    }

    pub fn exploit_arm(&self) -> Option<usize> {
        match self.stage {
            Stage::Exploit(k) => Some(k),
            _ => None,
        }
    }

    /// Capacity intervals that had to be repaired so far (leader only).
    pub fn crossings(&self) -> u64 {
        self.crossings
    }

    /// True at the first slot of a phase.
    pub fn at_phase_start(&self) -> bool {
        matches!(&self.stage, Stage::Phase(run) if run.offset == 0)
    }

    /// Remaining slots of the current phase, when exploring.
    pub fn phase_remaining(&self) -> Option<u64> {
        match &self.stage {
            Stage::Phase(run) => Some(run.len() - run.offset),
            _ => None,
        }
    }

    fn begin_phase(&mut self) -> Result<(), PolicyError> {
        let p = self.state.phase;
        let reps = 1u64 << p.min(40);
        let kt = self.state.active.len() as u64;
        let open = self.state.undetermined();
        let senders = u64::from(self.state.active_players.min(kt as u32).saturating_sub(1));
        let bits = back_bits(p, self.num_players);
        let back_len = if kt >= 2 { senders * kt * u64::from(bits) } else { 0 };
        let forth = ForthSchedule::new(&self.state, &open);
        let alloc = self.state.allocation()?;
        self.stage = Stage::Phase(PhaseRun {
            offset: 0,
            ie_len: kt * reps,
            ue_len: open.len() as u64 * reps,
            back_len,
            forth,
            open,
            alloc,
            raw: alloc::vec![0; kt as usize],
            back_bits: bits,
            back_value: 0,
            message: None,
            received: ForthMessage::empty(self.num_arms),
        });
        Ok(())
    }

    fn phase_action(&self, run: &PhaseRun) -> Result<usize, PolicyError> {
        let o = run.offset;
        let active = &self.state.active;
        if o < run.ie_len {
            return ie_arm(self.rank, o, &self.state);
        }
        if o < run.back_start() {
            let i = (o - run.ie_len) as usize;
            return Ok(run.open[i % run.open.len()]);
        }
        if o < run.forth_start() {
            if self.is_leader() {
                return Ok(active[0]);
            }
            let (sender, pos, bit) = self.back_cell(run, o - run.back_start());
            if sender == self.rank && bit_of(run.raw[pos], bit, run.back_bits) {
                return Ok(active[0]);
            }
            return Ok(active[1]);
        }
        let cell = run.forth.cell(o - run.forth_start());
        if self.is_leader() {
            let msg = run.message.as_ref().ok_or_else(|| corrupt("leader has no decision to send"))?;
            return Ok(if msg.signals(cell.step, cell.arm, cell.bit, cell.width) { cell.arm } else { cell.next_arm });
        }
        Ok(if cell.receiver == self.rank { cell.arm } else { cell.next_arm })
    }

    /// (sender rank, active position, bit index) of a back-communication slot.
    fn back_cell(&self, run: &PhaseRun, offset: u64) -> (u32, usize, u32) {
        let bits = u64::from(run.back_bits);
        let kt = self.state.active.len() as u64;
        let sender = 2 + (offset / (kt * bits)) as u32;
        let pos = ((offset / bits) % kt) as usize;
        (sender, pos, (offset % bits) as u32)
    }

    fn observe_phase(&mut self, obs: &Observation) -> Result<(), PolicyError> {
        let shared = obs.feedback.is_shared();
        let rank = self.rank;
        let kt = self.state.active.len();
        let p = self.state.phase;
        let Stage::Phase(mut run) = core::mem::replace(&mut self.stage, Stage::Exploit(0)) else { unreachable!() };
        let o = run.offset;
        if o < run.ie_len {
            if rank as usize <= kt {
                let pos = self.state.position(obs.arm).ok_or_else(|| corrupt("explored an inactive arm"))?;
                run.raw[pos] += libm::round(obs.reward) as u64;
                if let Some(stats) = self.stats.as_mut() {
                    stats.record_individual(obs.arm, obs.reward / f64::from(run.alloc[pos]));
                }
            }
        } else if o < run.back_start() {
            if let Some(stats) = self.stats.as_mut() {
                stats.record_united(obs.arm, obs.reward);
            }
        } else if o < run.forth_start() {
            let (_, pos, bit) = self.back_cell(&run, o - run.back_start());
            if let Some(stats) = self.stats.as_mut() {
                run.back_value = (run.back_value << 1) | u64::from(shared);
                if bit + 1 == run.back_bits {
                    let value = run.back_value;
                    run.back_value = 0;
                    let reps = 1u64 << p.min(40);
                    if value > reps * u64::from(run.alloc[pos]) {
                        return Err(corrupt(alloc::format!("decoded sum {value} exceeds {reps} pulls")));
                    }
                    let arm = self.state.active[pos];
                    stats.merge_individual(arm, value as f64 / f64::from(run.alloc[pos]), reps);
                }
            }
        } else if !self.is_leader() {
            let cell = run.forth.cell(o - run.forth_start());
            if cell.receiver == rank && shared {
                run.received.set(cell.step, cell.arm, cell.bit, cell.width)?;
            }
        }
        run.offset += 1;
        if run.offset == run.forth_start() && self.is_leader() {
            run.message = Some(self.decide(&run)?);
        }
        if run.offset < run.len() {
            self.stage = Stage::Phase(run);
            return Ok(());
        }
        let msg = if self.is_leader() { run.message.take().expect("decision") } else { run.received };
        let up = sic_update(&self.state, &msg, &run.open, rank)?;
        self.state = up.state;
        match up.exploit {
            Some(k) => {
                self.stage = Stage::Exploit(k);
                Ok(())
            }
            None => self.begin_phase(),
        }
    }

    /// Leader: tighten bounds, run accept/reject and build the message.
    fn decide(&mut self, run: &PhaseRun) -> Result<ForthMessage, PolicyError> {
        let stats = self.stats.as_ref().expect("leader statistics");
        let mut bounds = self.state.bounds.clone();
        for &k in &run.open {
            if bounds.update_arm(k, stats.arm(k), self.delta, self.state.active_players) {
                self.crossings += 1;
            }
        }
        let updated = SicSharedState { bounds: bounds.clone(), ..self.state.clone() };
        let decision = acc_rej(stats, &updated, self.horizon);
        Ok(ForthMessage::new(&decision, &self.state.bounds, &bounds))
    }
}

impl Policy for SicSda {
    fn next_action(&mut self) -> Result<Action, PolicyError> {
        let escape = self.num_arms - 1;
        let arm = match &self.stage {
            Stage::Orthogonalise { sub, .. } => {
                if *sub == 0 {
                    if self.ext_rank == 0 {
                        self.rng.gen_range(0..escape)
                    } else {
                        (self.ext_rank - 1) as usize
                    }
                } else if self.ext_rank == 0 || *sub == self.ext_rank {
                    escape
                } else {
                    (self.ext_rank - 1) as usize
                }
            }
            Stage::RankAssign { s, .. } => rank_assign_arm(self.ext_rank, s + 1, self.num_arms),
            Stage::Phase(run) => self.phase_action(run)?,
            Stage::Exploit(k) => *k,
        };
        Ok(Action::new(arm))
    }

    fn observe(&mut self, obs: &Observation) -> Result<(), PolicyError> {
        let shared = obs.feedback.is_shared();
        let escape = (self.num_arms - 1) as u32;
        match &mut self.stage {
            Stage::Orthogonalise { sub, saw_sharing } => {
                if *sub == 0 {
                    if self.ext_rank == 0 && !shared {
                        self.ext_rank = obs.arm as u32 + 1;
                    }
                } else if shared {
                    *saw_sharing = true;
                }
                *sub += 1;
                if *sub > escape {
                    if *saw_sharing {
                        *sub = 0;
                        *saw_sharing = false;
                    } else if self.ext_rank == 0 {
                        return Err(corrupt("orthogonalisation ended without a rank"));
                    } else {
                        self.stage = Stage::RankAssign { s: 0, early: 0, total: 0 };
                    }
                }
            }
            Stage::RankAssign { s, early, total } => {
                *s += 1;
                if shared {
                    *total += 1;
                    if *s <= 2 * self.ext_rank {
                        *early += 1;
                    }
                }
                if *s == 2 * escape {
                    self.rank = 1 + *early;
                    self.num_players = 1 + *total;
                    self.state = SicSharedState::initial(self.num_arms, self.num_players);
                    if self.rank == 1 {
                        self.stats = Some(PlayerStats::new(self.num_arms));
                    }
                    return self.begin_phase();
                }
            }
            Stage::Phase(_) => return self.observe_phase(obs),
            Stage::Exploit(_) => {}
        }
        Ok(())
    }

    fn phase(&self) -> Phase {
        match &self.stage {
            Stage::Orthogonalise { .. } | Stage::RankAssign { .. } => Phase::Init,
            Stage::Phase(run) if run.offset < run.back_start() => Phase::Explore,
            Stage::Phase(_) => Phase::Comm,
            Stage::Exploit(_) => Phase::Exploit,
        }
    }
}
