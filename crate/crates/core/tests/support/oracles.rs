//! Brute-force references for the tests. Nothing here calls into the crate:
//! the arithmetic is written out again on purpose.

#![allow(dead_code)]

/// Best profile found by exhaustive enumeration.
#[derive(Debug, Clone, PartialEq)]
pub struct BruteForceResult {
    pub profile: Vec<u32>,
    pub value: f64,
    /// Profiles visited.
    pub enumerated: u64,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TooLarge {
    pub num_arms: usize,
    pub num_players: u32,
}

pub const MAX_ARMS: usize = 6;
pub const MAX_PLAYERS: u32 = 8;

fn value_of(profile: &[u32], means: &[f64], capacities: &[u32]) -> f64 {
    let mut v = 0.0;
    for k in 0..profile.len() {
        let used = if profile[k] < capacities[k] { profile[k] } else { capacities[k] };
        v += used as f64 * means[k];
    }
    v
}

/// Maximises `sum_k min(a_k, m_k) mu_k` over every way of placing `M`
/// players on `K` arms (each arm may take up to all `M`). The first profile
/// reaching the best value in enumeration order wins.
pub fn brute_force_optimal(means: &[f64], capacities: &[u32], num_players: u32) -> Result<BruteForceResult, TooLarge> {
    let k = means.len();
    if k > MAX_ARMS || num_players > MAX_PLAYERS || k == 0 {
        return Err(TooLarge { num_arms: k, num_players });
    }
    let mut best = BruteForceResult { profile: vec![], value: f64::NEG_INFINITY, enumerated: 0 };
    let mut current = vec![0u32; k];
    fn walk(
        arm: usize,
        left: u32,
        current: &mut Vec<u32>,
        means: &[f64],
        capacities: &[u32],
        best: &mut BruteForceResult,
    ) {
        if arm + 1 == current.len() {
            current[arm] = left;
            best.enumerated += 1;
            let v = value_of(current, means, capacities);
            if v > best.value {
                best.value = v;
                best.profile = current.clone();
            }
            return;
        }
        for a in 0..=left {
            current[arm] = a;
            walk(arm + 1, left - a, current, means, capacities, best);
        }
    }
    walk(0, num_players, &mut current, means, capacities, &mut best);
    Ok(best)
}

/// Number of weak compositions of `n` into `k` parts: `C(n + k - 1, k - 1)`.
pub fn weak_compositions(n: u64, k: u64) -> u64 {
    let mut c = 1u64;
    for i in 1..k {
        c = c * (n + i) / i;
    }
    c
}

fn kl(p: f64, q: f64) -> f64 {
    let term = |a: f64, b: f64| if a == 0.0 { 0.0 } else { a * (a / b).ln() };
    term(p, q) + term(1.0 - p, 1.0 - q)
}

fn budget(t: u64) -> f64 {
    let t = if t < 3 { 3.0 } else { t as f64 };
    t.ln() + 4.0 * t.ln().ln()
}

/// Largest point `q` of the grid `mu_hat + i * resolution` (capped below 1)
/// with `tau * kl(mu_hat, q) <= ln t + 4 ln ln t`, found by a coarse scan
/// followed by a fine one. Returns 1 when `mu_hat` is 1.
pub fn klucb_grid(mu_hat: f64, tau: u64, t: u64, resolution: f64) -> f64 {
    assert!(resolution <= 1e-6);
    if mu_hat >= 1.0 {
        return 1.0;
    }
    let b = budget(t);
    let ok = |q: f64| q < 1.0 && tau as f64 * kl(mu_hat, q) <= b;
    let coarse = 1e-3;
    let mut q = mu_hat;
    while ok(q + coarse) {
        q += coarse;
    }
    let mut i = 1u64;
    let mut last = q;
    loop {
        let next = q + i as f64 * resolution;
        if !ok(next) {
            break;
        }
        last = next;
        i += 1;
    }
    last
}

/// Arms played in rank assignment by the player with external rank `ext`
/// (1-based) on `K` arms, written as a walk: stay on the own arm `ext - 1`
/// for `2 ext` slots, sweep arms `ext, ext + 1, ..., K - 2`, then return home.
pub fn rank_assign_walk(ext: u32, num_arms: usize) -> Vec<usize> {
    let slots = 2 * num_arms - 2;
    let home = ext as usize - 1;
    let mut arms = Vec::with_capacity(slots);
    for _ in 0..(2 * ext as usize).min(slots) {
        arms.push(home);
    }
    let mut sweep = ext as usize;
    while arms.len() < slots && sweep <= num_arms - 2 {
        arms.push(sweep);
        sweep += 1;
    }
    while arms.len() < slots {
        arms.push(home);
    }
    arms
}

/// Hand simulation of rank assignment. Returns, per player, its sharing
/// flag in every slot.
pub fn rank_assign_transcript(ext_ranks: &[u32], num_arms: usize) -> Vec<Vec<bool>> {
    let walks: Vec<Vec<usize>> = ext_ranks.iter().map(|&e| rank_assign_walk(e, num_arms)).collect();
    let slots = 2 * num_arms - 2;
    walks
        .iter()
        .map(|mine| (0..slots).map(|s| walks.iter().filter(|w| w[s] == mine[s]).count() > 1).collect())
        .collect()
}

/// Rank and player count a player infers from its flags: `1 + flags in the
/// first 2 ext slots` and `1 + all flags`.
pub fn rank_assign_inference(ext: u32, flags: &[bool]) -> (u32, u32) {
    let early = flags.iter().take(2 * ext as usize).filter(|&&f| f).count() as u32;
    let total = flags.iter().filter(|&&f| f).count() as u32;
    (1 + early, 1 + total)
}

/// Counts the followers see during one signalling step of a DPE
/// communication round: at sub-slot `k` all followers sit on arm `k` and the
/// leader joins them iff `signal[k]`, otherwise it stands on some other arm.
pub fn dpe_step_counts(signal: &[bool], num_players: u32) -> Vec<u32> {
    signal.iter().map(|&s| if s { num_players } else { num_players - 1 }).collect()
}

/// Sharing flags the leader sees while a back-communication sender transmits
/// `value` on `width` bits, most significant first: the sender joins the
/// leader's arm for a 1 and stays away for a 0.
pub fn sic_back_flags(value: u64, width: u32) -> Vec<bool> {
    let mut flags = Vec::with_capacity(width as usize);
    for i in (0..width).rev() {
        flags.push(value / 2u64.pow(i) % 2 == 1);
    }
    flags
}

/// One cell of the forth-communication: `(step, arm, receiver, bit)`.
pub type ForthSlot = (usize, usize, u32, u32);

/// Slot order of the forth-communication: reject, accept and least-favored
/// flags over every active arm and every follower `2..=M_t`, then lower and
/// upper bound deltas over the open arms, each on `bits(M_t - 1)` slots.
pub fn sic_forth_layout(active: &[usize], open: &[usize], active_players: u32) -> Vec<ForthSlot> {
    let mut out = Vec::new();
    if active.len() < 2 || active_players < 2 {
        return out;
    }
    let mut width = 0;
    while (1u32 << width) <= active_players - 1 {
        width += 1;
    }
    for step in 0..3 {
        for &arm in active {
            for j in 2..=active_players {
                out.push((step, arm, j, 0));
            }
        }
    }
    for step in 3..5 {
        for &arm in open {
            for j in 2..=active_players {
                for bit in 0..width {
                    out.push((step, arm, j, bit));
                }
            }
        }
    }
    out
}
