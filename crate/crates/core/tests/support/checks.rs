//! Property checks shared by the core integration tests and the acceptance
//! target. Each returns a [`Check`] rather than panicking so callers can
//! report every outcome.

#![allow(dead_code)]

use std::collections::BTreeSet;
use std::time::{Duration, Instant};

use mmab_sa::baselines::{HighestReward, IdlestArm};
use mmab_sa::dpe::{leader_signal_arm, CommDecoder, CommMessage, DpeConfig, DpeSdi, DpeSharedInfo, COMM_STEPS};
use mmab_sa::rng::stream;
use mmab_sa::sic::{
    back_bits, decode_bits, encode_bits, sic_update, AccRej, ForthMessage, ForthSchedule, SicConfig, SicSda,
    SicSharedState,
};
use mmab_sa::stats::{klucb_index, CapacityBounds, PlayerStats};
use mmab_sa::{
    oracle, EnvSpec, FeedbackMode, Observation, Policy, PlayerContext, PolicyError, RunOptions, Simulation,
};
use rand::seq::SliceRandom;
use rand::Rng;

use super::oracles::{
    brute_force_optimal, dpe_step_counts, klucb_grid, sic_back_flags, sic_forth_layout, weak_compositions,
};

#[derive(Debug, Clone)]
pub struct Check {
    pub passed: bool,
    pub detail: String,
}

impl Check {
    fn new(passed: bool, detail: String) -> Self {
        Check { passed, detail }
    }

    fn within(self, started: Instant, limit: Duration) -> Self {
        let took = started.elapsed();
        let passed = self.passed && took < limit;
        Check::new(passed, format!("{} ({:.2}s, limit {}s)", self.detail, took.as_secs_f64(), limit.as_secs()))
    }
}

/// Oracle against exhaustive search on random instances with `K <= 5`,
/// `M <= 6`, `m_k <= 3`.
pub fn oracle_equivalence(instances: usize, seed: u64) -> Check {
    let started = Instant::now();
    let mut rng = stream(seed);
    let mut mismatches = 0;
    let mut first = String::new();
    for _ in 0..instances {
        let (means, caps, m) = loop {
            let k = rng.gen_range(1..=5);
            let m = rng.gen_range(1..=6u32);
            let caps: Vec<u32> = (0..k).map(|_| rng.gen_range(1..=3)).collect();
            if caps.iter().sum::<u32>() >= m {
                let means: Vec<f64> = (0..k).map(|_| rng.gen::<f64>()).collect();
                break (means, caps, m);
            }
        };
        let fast = oracle(&means, &caps, m).expect("feasible instance");
        let slow = brute_force_optimal(&means, &caps, m).expect("within budget");
        let count_ok = slow.enumerated == weak_compositions(u64::from(m), means.len() as u64);
        let profile_ok = fast.profile.total() == u64::from(m);
        if (fast.value - slow.value).abs() > 1e-9 || !count_ok || !profile_ok {
            mismatches += 1;
            if first.is_empty() {
                first = format!("; first: means {means:?} caps {caps:?} M {m}: {} vs {}", fast.value, slow.value);
            }
        }
    }
    Check::new(mismatches == 0, format!("{mismatches}/{instances} mismatches{first}"))
        .within(started, Duration::from_secs(10))
}

/// Bisection KL-UCB against the grid scan at resolution `1e-6`.
pub fn klucb_equivalence(samples: usize, seed: u64) -> Check {
    let started = Instant::now();
    let resolution = 1e-6;
    let mut rng = stream(seed);
    let mut worst: f64 = 0.0;
    let mut worst_at = (0.0, 0, 0);
    for i in 0..samples {
        let mu = match i % 50 {
            0 => 0.0,
            1 => 1.0,
            _ => rng.gen::<f64>(),
        };
        let tau = 10f64.powf(rng.gen_range(0.0..5.0)).round().max(1.0) as u64;
        let t = tau + 10f64.powf(rng.gen_range(0.0..6.0)) as u64;
        let gap = (klucb_index(mu, tau, t) - klucb_grid(mu, tau, t, resolution)).abs();
        if gap > worst {
            worst = gap;
            worst_at = (mu, tau, t);
        }
    }
    Check::new(
        worst <= 2.0 * resolution,
        format!("max gap {worst:.2e} over {samples} inputs at (mu, tau, t) = {worst_at:?}"),
    )
    .within(started, Duration::from_secs(5))
}

/// Per-arm outcome of [`capacity_coverage`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CoverageStats {
    pub mu: f64,
    pub capacity: u32,
    pub budget: u64,
    pub covered: f64,
    pub collapsed: f64,
}

/// Samples one arm `reps` times: each step adds one individual sample
/// `X ~ Bern(mu)` and one united sample `m X'`, then tightens the interval.
/// Runs for `49 m^2 / mu^2 ln(2 / delta)` steps.
pub fn coverage_for(mu: f64, capacity: u32, cap_max: u32, delta: f64, reps: usize, seed: u64) -> CoverageStats {
    let budget = (49.0 * f64::from(capacity * capacity) / (mu * mu) * (2.0 / delta).ln()).ceil() as u64;
    let mut rng = stream(seed);
    let mut covered = 0;
    let mut collapsed = 0;
    for _ in 0..reps {
        let mut stats = PlayerStats::new(1);
        let mut bounds = CapacityBounds::new(1, cap_max);
        let mut ok = true;
        for _ in 0..budget {
            let x = f64::from(u8::from(rng.gen_bool(mu)));
            let y = f64::from(u8::from(rng.gen_bool(mu)));
            stats.record_individual(0, x);
            stats.record_united(0, f64::from(capacity) * y);
            bounds.update_arm(0, stats.arm(0), delta, cap_max);
            let b = bounds.get(0);
            ok &= b.lower <= capacity && capacity <= b.upper;
        }
        covered += usize::from(ok);
        let b = bounds.get(0);
        collapsed += usize::from(b.lower == capacity && b.upper == capacity);
    }
    CoverageStats {
        mu,
        capacity,
        budget,
        covered: covered as f64 / reps as f64,
        collapsed: collapsed as f64 / reps as f64,
    }
}

pub fn capacity_coverage(reps: usize, seed: u64) -> Check {
    let started = Instant::now();
    let delta = 0.05;
    let mut passed = true;
    let mut parts = Vec::new();
    for (i, &(mu, m)) in [(0.5, 2u32), (0.7, 3)].iter().enumerate() {
        let s = coverage_for(mu, m, 6, delta, reps, seed + i as u64);
        passed &= s.covered >= 0.94 && s.collapsed >= 1.0 - delta - 0.02;
        parts.push(format!(
            "(mu {mu}, m {m}): covered {:.3}, collapsed within {} samples {:.3}",
            s.covered, s.budget, s.collapsed
        ));
    }
    Check::new(passed, parts.join("; ")).within(started, Duration::from_secs(60))
}

/// A random shared state with `|S| >= 1`, `L` in `S` and lower bounds of
/// `S \ {L}` seating fewer than `M`.
fn random_dpe_state(rng: &mut impl Rng, k: usize, m: u32) -> DpeSharedInfo {
    let mut arms: Vec<usize> = (0..k).collect();
    arms.shuffle(rng);
    let size = rng.gen_range(1..=(m as usize).min(k));
    let support = &arms[..size];
    let l = support[rng.gen_range(0..size)];
    let mut info = DpeSharedInfo::initial(k, m);
    info.optimal_set = (0..k).map(|j| support.contains(&j)).collect();
    info.least_favored = l;
    for j in 0..k {
        let lower = if info.optimal_set[j] && j != l { rng.gen_range(1..=2) } else { rng.gen_range(1..=m) };
        let upper = rng.gen_range(lower..=m);
        info.bounds.set(j, mmab_sa::stats::ArmBounds { lower, upper });
    }
    info
}

fn seats_before_l(info: &DpeSharedInfo) -> u32 {
    info.support().filter(|&j| j != info.least_favored).map(|j| info.bounds.lower(j)).sum()
}

/// A target the leader could reach from `shared`: a new `S` and `L`,
/// lower bounds only raised and upper bounds only lowered.
fn random_dpe_target(rng: &mut impl Rng, shared: &DpeSharedInfo, m: u32) -> Option<DpeSharedInfo> {
    let k = shared.num_arms();
    for _ in 0..50 {
        let mut target = shared.clone();
        for j in 0..k {
            let b = shared.bounds.get(j);
            if rng.gen_bool(0.3) {
                let lower = rng.gen_range(b.lower..=b.upper);
                let upper = rng.gen_range(lower..=b.upper);
                target.bounds.set(j, mmab_sa::stats::ArmBounds { lower, upper });
            }
        }
        let mut arms: Vec<usize> = (0..k).collect();
        arms.shuffle(rng);
        let size = rng.gen_range(1..=(m as usize).min(k));
        target.optimal_set = (0..k).map(|j| arms[..size].contains(&j)).collect();
        target.least_favored = arms[rng.gen_range(0..size)];
        if seats_before_l(&target) < m {
            return Some(target);
        }
    }
    None
}

/// Sends `target` to the followers one message at a time through the
/// count channel and checks that both sides hold identical states after
/// every round. Returns the number of rounds used.
pub fn dpe_transfer(shared: &DpeSharedInfo, target: &DpeSharedInfo, m: u32) -> Result<usize, String> {
    let k = shared.num_arms();
    let mut leader = shared.clone();
    let mut follower = shared.clone();
    for round in 1..=(m as usize + 2) {
        let msg = CommMessage::between(&leader, target);
        let mut decoder = CommDecoder::new(k);
        for step in 0..COMM_STEPS {
            let signal: Vec<bool> = (0..k).map(|j| msg.signals(step, j)).collect();
            let expected = dpe_step_counts(&signal, m);
            for j in 0..k {
                let count = (m - 1) + u32::from(leader_signal_arm(&msg, step, j, m) == j);
                if count != expected[j] {
                    return Err(format!("step {step} arm {j}: count {count}, schedule says {}", expected[j]));
                }
                decoder.record(step, j, count, m).map_err(|e| e.to_string())?;
            }
        }
        let decoded = decoder.finish().map_err(|e| e.to_string())?;
        if decoded != msg {
            return Err(format!("round {round}: decoded {decoded:?}, sent {msg:?}"));
        }
        leader = msg.apply(&leader, m).map_err(|e| e.to_string())?;
        follower = decoded.apply(&follower, m).map_err(|e| e.to_string())?;
        if leader != follower {
            return Err(format!("round {round}: states diverged"));
        }
        if leader == *target {
            return Ok(round);
        }
    }
    Err("target not reached".into())
}

pub fn dpe_comm_fuzz(mutations: usize, seed: u64) -> (usize, usize, String) {
    let mut rng = stream(seed);
    let mut errors = 0;
    let mut done = 0;
    let mut first = String::new();
    while done < mutations {
        let k = rng.gen_range(3..=9);
        let m = rng.gen_range(2..k as u32);
        let shared = random_dpe_state(&mut rng, k, m);
        if seats_before_l(&shared) >= m {
            continue;
        }
        let Some(target) = random_dpe_target(&mut rng, &shared, m) else { continue };
        done += 1;
        if let Err(e) = dpe_transfer(&shared, &target, m) {
            errors += 1;
            if first.is_empty() {
                first = e;
            }
        }
    }
    (done, errors, first)
}

/// Round-trips every value `0..=M 2^p` through the back channel for
/// `p in 1..=10`, `M in 2..=8`.
pub fn sic_back_roundtrip() -> (u64, u64) {
    let mut checked = 0;
    let mut errors = 0;
    for m in 2..=8u32 {
        for p in 1..=10u32 {
            let width = back_bits(p, m);
            for value in 0..=(u64::from(m) << p) {
                let sent: Vec<bool> = encode_bits(value, width).collect();
                let seen = sic_back_flags(value, width);
                checked += 1;
                if sent != seen || decode_bits(seen) != value {
                    errors += 1;
                }
            }
        }
    }
    (checked, errors)
}

/// A random phase state with at least two active arms.
fn random_sic_state(rng: &mut impl Rng) -> SicSharedState {
    let k = rng.gen_range(3..=9);
    let m_t = rng.gen_range(2..=8u32);
    let mut arms: Vec<usize> = (0..k).collect();
    arms.shuffle(rng);
    let mut active: Vec<usize> = arms[..rng.gen_range(2..=k)].to_vec();
    active.sort_unstable();
    let mut state = SicSharedState::initial(k, m_t);
    state.active = active;
    state.active_players = m_t;
    state.phase = rng.gen_range(1..=10);
    for j in 0..k {
        let lower = rng.gen_range(1..=m_t);
        let upper = rng.gen_range(lower..=m_t);
        state.bounds.set(j, mmab_sa::stats::ArmBounds { lower, upper });
    }
    state
}

/// Sends a random decision through the forth schedule. Each follower
/// listens only to its own cells.
fn sic_forth_once(rng: &mut impl Rng) -> Result<(), String> {
    let state = random_sic_state(rng);
    let k = state.bounds.num_arms();
    let open = state.undetermined();
    let mut new_bounds = state.bounds.clone();
    for &j in &open {
        let b = state.bounds.get(j);
        let lower = rng.gen_range(b.lower..=b.upper);
        let upper = rng.gen_range(lower..=b.upper);
        new_bounds.set(j, mmab_sa::stats::ArmBounds { lower, upper });
    }
    let mut decision = AccRej::default();
    for &j in &state.active {
        match rng.gen_range(0..4) {
            0 => decision.reject.push(j),
            1 if new_bounds.is_learned(j) => decision.accept.push(j),
            2 if decision.least_favored.is_none() => decision.least_favored = Some(j),
            _ => {}
        }
    }
    let msg = ForthMessage::new(&decision, &state.bounds, &new_bounds);
    let schedule = ForthSchedule::new(&state, &open);
    let layout = sic_forth_layout(&state.active, &open, state.active_players);
    if schedule.len() != layout.len() as u64 {
        return Err(format!("schedule has {} slots, layout {}", schedule.len(), layout.len()));
    }
    let mut received: Vec<ForthMessage> = (0..state.active_players).map(|_| ForthMessage::empty(k)).collect();
    for (offset, &(step, arm, receiver, bit)) in layout.iter().enumerate() {
        let cell = schedule.cell(offset as u64);
        if (cell.step, cell.arm, cell.receiver, cell.bit) != (step, arm, receiver, bit) {
            return Err(format!("slot {offset}: cell {cell:?}, layout {:?}", (step, arm, receiver, bit)));
        }
        if cell.next_arm == cell.arm {
            return Err(format!("slot {offset}: leader has no silent arm"));
        }
        let leader_arm = if msg.signals(step, arm, bit, cell.width) { cell.arm } else { cell.next_arm };
        // The receiver sits on `arm`; everyone else idles on `next_arm`.
        if leader_arm == arm {
            received[receiver as usize - 1].set(step, arm, bit, cell.width).map_err(|e| e.to_string())?;
        }
    }
    for (i, got) in received.iter().enumerate().skip(1) {
        if *got != msg {
            return Err(format!("follower {} decoded {got:?}, sent {msg:?}", i + 1));
        }
    }
    let mine = sic_update(&state, &msg, &open, 1).map(|u| u.state);
    for (i, got) in received.iter().enumerate().skip(1) {
        let theirs = sic_update(&state, got, &open, i as u32 + 1).map(|u| u.state);
        // Random states can leave a given rank without a seat; that error is
        // rank-specific, so only successful updates are compared.
        if matches!((&mine, &theirs), (Ok(a), Ok(b)) if a != b) {
            return Err(format!("follower {} updated differently", i + 1));
        }
    }
    Ok(())
}

pub fn sic_forth_fuzz(mutations: usize, seed: u64) -> (usize, String) {
    let mut rng = stream(seed);
    let mut errors = 0;
    let mut first = String::new();
    for _ in 0..mutations {
        if let Err(e) = sic_forth_once(&mut rng) {
            errors += 1;
            if first.is_empty() {
                first = e;
            }
        }
    }
    (errors, first)
}

pub fn protocol_losslessness(mutations: usize, seed: u64) -> Check {
    let started = Instant::now();
    let (dpe_done, dpe_errors, dpe_first) = dpe_comm_fuzz(mutations, seed);
    let (back_checked, back_errors) = sic_back_roundtrip();
    let (forth_errors, forth_first) = sic_forth_fuzz(mutations, seed + 1);
    let passed = dpe_errors == 0 && back_errors == 0 && forth_errors == 0;
    let mut detail = format!(
        "DPE comm {dpe_errors}/{dpe_done} errors, CommBack {back_errors}/{back_checked} errors, CommForth {forth_errors}/{mutations} errors"
    );
    for first in [dpe_first, forth_first] {
        if !first.is_empty() {
            detail.push_str("; ");
            detail.push_str(&first);
        }
    }
    Check::new(passed, detail).within(started, Duration::from_secs(60))
}

/// Random instance with `K` arms and `M` players, capacities in `1..=M`.
pub fn random_spec(k: usize, m: u32, horizon: u64, feedback: FeedbackMode, seed: u64) -> EnvSpec {
    let mut rng = stream(seed ^ 0x5eed);
    EnvSpec {
        means: (0..k).map(|_| rng.gen_range(0.05..0.95)).collect(),
        capacities: (0..k).map(|_| rng.gen_range(1..=m)).collect(),
        num_players: m,
        horizon,
        feedback,
        seed,
    }
}

/// Outcome of DPE initialisation on one seed.
#[derive(Debug, Clone, PartialEq)]
pub struct DpeInit {
    pub rally_ok: bool,
    pub ranks_ok: bool,
    /// Slots between the rally and the last player fixing its rank.
    pub orth_slots: u64,
}

pub fn dpe_init(k: usize, m: u32, seed: u64) -> Result<DpeInit, String> {
    let spec = random_spec(k, m, 1_000_000, FeedbackMode::Sdi, seed);
    let factory = DpeSdi::factory(DpeConfig::default());
    let mut sim = Simulation::new(&factory, spec, RunOptions::default()).map_err(|e| e.to_string())?;
    sim.step().map_err(|e| e.to_string())?;
    let rally_ok = sim.players().iter().all(|p| p.num_players() == m);
    while !sim.players().iter().all(|p| p.is_initialised()) {
        if sim.slot() > 200_000 {
            return Err(format!("seed {seed}: orthogonalisation did not finish"));
        }
        sim.step().map_err(|e| e.to_string())?;
    }
    let ranks: BTreeSet<u32> = sim.players().iter().map(|p| p.rank()).collect();
    let ranks_ok = ranks == (1..=m).collect();
    Ok(DpeInit { rally_ok, ranks_ok, orth_slots: sim.slot() - 1 })
}

/// Ranks and the player count after SIC initialisation.
pub fn sic_init(k: usize, m: u32, seed: u64) -> Result<bool, String> {
    let spec = random_spec(k, m, 1_000_000, FeedbackMode::Sda, seed);
    let factory = SicSda::factory(SicConfig::default());
    let mut sim = Simulation::new(&factory, spec, RunOptions::default()).map_err(|e| e.to_string())?;
    while !sim.players().iter().all(|p| p.is_initialised()) {
        if sim.slot() > 200_000 {
            return Err(format!("seed {seed}: initialisation did not finish"));
        }
        sim.step().map_err(|e| e.to_string())?;
    }
    let ranks: BTreeSet<u32> = sim.players().iter().map(|p| p.rank()).collect();
    Ok(ranks == (1..=m).collect() && sim.players().iter().all(|p| p.num_players() == m))
}

pub fn initialisation(seeds: u64) -> Check {
    let started = Instant::now();
    let mut passed = true;
    let mut parts = Vec::new();
    for m in 2..=6u32 {
        let mut rally_bad = 0;
        let mut ranks_bad = 0;
        let mut total = 0u64;
        let mut sic_bad = 0;
        for seed in 0..seeds {
            match dpe_init(9, m, seed) {
                Ok(r) => {
                    rally_bad += u32::from(!r.rally_ok);
                    ranks_bad += u32::from(!r.ranks_ok);
                    total += r.orth_slots;
                }
                Err(_) => ranks_bad += 1,
            }
            if !sic_init(9, m, seed).unwrap_or(false) {
                sic_bad += 1;
            }
        }
        let mean = total as f64 / seeds as f64;
        let m64 = f64::from(m);
        let bound = m64.powi(4) + 2.0 * m64.powi(3) + m64 * m64;
        let ok = rally_bad == 0 && ranks_bad == 0 && sic_bad == 0 && mean <= bound;
        passed &= ok;
        parts.push(format!(
            "M={m}: rally misses {rally_bad}, rank failures {ranks_bad}, mean orth slots {mean:.1} <= {bound}, SIC failures {sic_bad}"
        ));
    }
    Check::new(passed, format!("{seeds} seeds per M; {}", parts.join("; "))).within(started, Duration::from_secs(120))
}

// Adding a field to either struct breaks these patterns, and with them the
// build of every test that includes this file.
fn context_fields(ctx: &PlayerContext) -> (usize, u64, FeedbackMode, u64) {
    let PlayerContext { num_arms, horizon, feedback, seed } = *ctx;
    (num_arms, horizon, feedback, seed)
}

fn observation_fields(obs: &Observation) -> (usize, f64, mmab_sa::FeedbackSignal) {
    let Observation { arm, reward, feedback } = *obs;
    (arm, reward, feedback)
}

/// Runs `spec`, records every context handed to a constructor and every
/// observation handed to each player, then rebuilds each player from its
/// context alone and replays its observations. Actions must match.
pub fn replay_audit<P, F>(factory: F, spec: EnvSpec, slots: u64) -> Result<Vec<PlayerContext>, String>
where
    P: Policy,
    F: Fn(&PlayerContext) -> Result<P, PolicyError>,
{
    let contexts = std::sync::Mutex::new(Vec::new());
    let recording = |ctx: &PlayerContext| {
        contexts.lock().unwrap().push(*ctx);
        factory(ctx)
    };
    let mut sim = Simulation::new(&recording, spec, RunOptions::default()).map_err(|e| e.to_string())?;
    let mut seen: Vec<Vec<Observation>> = vec![Vec::new(); sim.players().len()];
    for _ in 0..slots {
        let out = sim.step().map_err(|e| e.to_string())?;
        for (i, obs) in out.observations.iter().enumerate() {
            let _ = observation_fields(obs);
            seen[i].push(*obs);
        }
    }
    let contexts = contexts.into_inner().unwrap();
    for (i, ctx) in contexts.iter().enumerate() {
        let _ = context_fields(ctx);
        let mut fresh = factory(ctx).map_err(|e| e.to_string())?;
        for (s, obs) in seen[i].iter().enumerate() {
            let arm = fresh.next_action().map_err(|e| e.to_string())?.arm;
            if arm != obs.arm {
                return Err(format!("player {i} slot {}: replay chose {arm}, run chose {}", s + 1, obs.arm));
            }
            fresh.observe(obs).map_err(|e| e.to_string())?;
        }
    }
    Ok(contexts)
}

/// Contexts must not change when means, capacities and the player count do,
/// and every policy must be a function of its context and observations.
pub fn decentralisation_audit() -> Check {
    let started = Instant::now();
    let base = random_spec(9, 6, 3000, FeedbackMode::Sdi, 11);
    let mut other = random_spec(9, 4, 3000, FeedbackMode::Sdi, 99);
    other.seed = base.seed;
    let sda = |s: &EnvSpec| EnvSpec { feedback: FeedbackMode::Sda, ..s.clone() };
    let mut problems = Vec::new();
    let mut compare = |name: &str, a: Result<Vec<PlayerContext>, String>, b: Result<Vec<PlayerContext>, String>| {
        match (a, b) {
            (Ok(a), Ok(b)) => {
                if a[..b.len()] != b[..] {
                    problems.push(format!("{name}: contexts depend on the instance"));
                }
            }
            (Err(e), _) | (_, Err(e)) => problems.push(format!("{name}: {e}")),
        }
    };
    let dpe = DpeSdi::factory(DpeConfig::default());
    compare("dpe-sdi", replay_audit(dpe, base.clone(), 3000), replay_audit(dpe, other.clone(), 3000));
    let sic = SicSda::factory(SicConfig::default());
    compare("sic-sda", replay_audit(sic, sda(&base), 3000), replay_audit(sic, sda(&other), 3000));
    compare("sic-sdi", replay_audit(sic, base.clone(), 3000), replay_audit(sic, other.clone(), 3000));
    let hr = HighestReward::factory();
    compare("highest-reward", replay_audit(hr, base.clone(), 3000), replay_audit(hr, other.clone(), 3000));
    let ia = IdlestArm::factory();
    compare("idlest-arm", replay_audit(ia, sda(&base), 3000), replay_audit(ia, sda(&other), 3000));
    let detail = if problems.is_empty() {
        "constructors see only (K, T, feedback, seed); 5 policies replay exactly from their own observations".into()
    } else {
        problems.join("; ")
    };
    Check::new(problems.is_empty(), detail).within(started, Duration::from_secs(60))
}
