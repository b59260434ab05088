//! Statistical kernel shared by both protocols: Bernoulli KL divergence,
//! KL-UCB, the capacity confidence interval and the separation test.
//!
//! All logarithms are natural.

use alloc::vec::Vec;

use libm::{ceil, floor, log, sqrt};

/// Upper end of the KL-UCB search interval; keeps `kl` finite.
pub const KLUCB_CEILING: f64 = 1.0 - 1e-12;
/// Bisection steps for KL-UCB (interval width below `1e-7` well before this).
pub const KLUCB_ITERATIONS: u32 = 60;

/// Bernoulli KL divergence `kl(p, q)` with the `0 ln 0 = 0` convention.
///
/// `q` must lie in `(0, 1)`; callers clamp it.
pub fn bern_kl(p: f64, q: f64) -> f64 {
    debug_assert!((0.0..=1.0).contains(&p), "p = {p}");
    debug_assert!(q > 0.0 && q < 1.0, "q = {q}");
    let mut kl = 0.0;
    if p > 0.0 {
        kl += p * log(p / q);
    }
    if p < 1.0 {
        kl += (1.0 - p) * log((1.0 - p) / (1.0 - q));
    }
    kl.max(0.0)
}

/// Exploration budget `f(t) = ln t + 4 ln ln t`, with `t` clamped to at
/// least 3 so the double logarithm stays positive.
pub fn exploration_budget(t: u64) -> f64 {
    let t = t.max(3) as f64;
    log(t) + 4.0 * log(log(t))
}

/// KL-UCB index `sup { q in [mu_hat, 1) : pulls * kl(mu_hat, q) <= f(t) }`.
pub fn klucb_index(mu_hat: f64, pulls: u64, t: u64) -> f64 {
    debug_assert!(pulls >= 1);
    let mu_hat = mu_hat.clamp(0.0, 1.0);
    if mu_hat >= KLUCB_CEILING {
        return 1.0;
    }
    let budget = exploration_budget(t) / pulls as f64;
    if bern_kl(mu_hat, KLUCB_CEILING) <= budget {
        return 1.0;
    }
    // kl(mu_hat, .) is 0 at mu_hat (or tiny when mu_hat = 0) and increasing.
    let mut lo = mu_hat;
    let mut hi = KLUCB_CEILING;
    for _ in 0..KLUCB_ITERATIONS {
        let mid = 0.5 * (lo + hi);
        if bern_kl(mu_hat, mid.max(f64::MIN_POSITIVE)) <= budget {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    lo
}

/// Radius of the anytime confidence interval on a `[0, 1]` mean after `x`
/// samples: `sqrt((1 + 1/x) ln(2 sqrt(x + 1) / delta) / (2x))`.
pub fn phi(x: u64, delta: f64) -> f64 {
    debug_assert!(x >= 1);
    debug_assert!(delta > 0.0 && delta < 1.0);
    let x = x as f64;
    sqrt((1.0 + 1.0 / x) * log(2.0 * sqrt(x + 1.0) / delta) / (2.0 * x))
}

/// True when arm `k` beats arm `j` with high confidence:
/// `mu_k - 3 sqrt(ln T / 2 tau_k) >= mu_j + 3 sqrt(ln T / 2 tau_j)`.
pub fn separation_indicator(k: (f64, u64), j: (f64, u64), horizon: u64) -> bool {
    let (mu_k, tau_k) = k;
    let (mu_j, tau_j) = j;
    debug_assert!(tau_k >= 1 && tau_j >= 1);
    let log_t = log(horizon.max(1) as f64);
    let radius = |tau: u64| 3.0 * sqrt(log_t / (2.0 * tau as f64));
    mu_k - radius(tau_k) >= mu_j + radius(tau_j)
}

/// Individual- and united-exploration tallies of one arm.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct ArmStats {
    /// Sum of per-load rewards from individual exploration.
    pub ie_sum: f64,
    pub ie_count: u64,
    /// Sum of arm totals from united exploration.
    pub ue_sum: f64,
    pub ue_count: u64,
}

impl ArmStats {
    pub fn mean(&self) -> Option<f64> {
        (self.ie_count > 0).then(|| self.ie_sum / self.ie_count as f64)
    }

    pub fn united_mean(&self) -> Option<f64> {
        (self.ue_count > 0).then(|| self.ue_sum / self.ue_count as f64)
    }
}

/// Per-arm exploration statistics held by one player.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct PlayerStats {
    arms: Vec<ArmStats>,
}

impl PlayerStats {
    pub fn new(num_arms: usize) -> Self {
        PlayerStats { arms: alloc::vec![ArmStats::default(); num_arms] }
    }

    pub fn arm(&self, k: usize) -> &ArmStats {
        &self.arms[k]
    }

    pub fn arms(&self) -> &[ArmStats] {
        &self.arms
    }

    pub fn num_arms(&self) -> usize {
        self.arms.len()
    }

    pub fn record_individual(&mut self, k: usize, per_load: f64) {
        let a = &mut self.arms[k];
        a.ie_sum += per_load;
        a.ie_count += 1;
    }

    /// Folds in `count` individual samples summing to `sum`.
    pub fn merge_individual(&mut self, k: usize, sum: f64, count: u64) {
        let a = &mut self.arms[k];
        a.ie_sum += sum;
        a.ie_count += count;
    }

    pub fn record_united(&mut self, k: usize, total: f64) {
        let a = &mut self.arms[k];
        a.ue_sum += total;
        a.ue_count += 1;
    }

    pub fn mean(&self, k: usize) -> Option<f64> {
        self.arms[k].mean()
    }

    /// Empirical means; arms never explored read as 0.
    pub fn means(&self) -> Vec<f64> {
        self.arms.iter().map(|a| a.mean().unwrap_or(0.0)).collect()
    }
}

/// Integer confidence interval `[lower, upper]` on one arm's capacity.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ArmBounds {
    pub lower: u32,
    pub upper: u32,
}

impl ArmBounds {
    pub fn is_learned(self) -> bool {
        self.lower == self.upper
    }
}

/// Outcome of one interval update.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BoundUpdate {
    pub bounds: ArmBounds,
    /// The raw update inverted the interval and was repaired.
    pub crossed: bool,
}

/// Tightens `[lower, upper]` given estimates of `mu` and `m * mu` and the
/// summed radius `phi(tau) + phi(iota)`.
///
/// `lower <- max(lower, ceil(nu / (mu + r)))`,
/// `upper <- min(upper, floor(nu / (mu - r)))` (skipped while `mu <= r`),
/// both clamped into `[1, cap_max]`. An inverted result collapses onto the
/// new lower bound and is reported as crossed.
pub fn tighten_bounds(bounds: ArmBounds, mu_hat: f64, nu_hat: f64, radius: f64, cap_max: u32) -> BoundUpdate {
    let cap_max = cap_max.max(1);
    let mut lower = bounds.lower;
    let mut upper = bounds.upper;
    let lo_den = mu_hat + radius;
    if lo_den > 0.0 {
        let raw = ceil(nu_hat / lo_den);
        if raw.is_finite() && raw > f64::from(lower) {
            lower = if raw >= f64::from(cap_max) { cap_max } else { raw as u32 };
        }
    }
    let up_den = mu_hat - radius;
    if up_den > 0.0 {
        let raw = floor(nu_hat / up_den);
        if raw.is_finite() && raw < f64::from(upper) {
            upper = if raw <= 1.0 { 1 } else { raw as u32 };
        }
    }
    lower = lower.clamp(1, cap_max);
    upper = upper.clamp(1, cap_max);
    let crossed = lower > upper;
    if crossed {
        upper = lower;
    }
    BoundUpdate { bounds: ArmBounds { lower, upper }, crossed }
}

/// Applies [`tighten_bounds`] with the radius built from the arm's sample
/// counts. Returns `None` while either count is zero.
pub fn update_capacity_bounds(bounds: ArmBounds, stats: &ArmStats, delta: f64, cap_max: u32) -> Option<BoundUpdate> {
    let mu_hat = stats.mean()?;
    let nu_hat = stats.united_mean()?;
    let radius = phi(stats.ie_count, delta) + phi(stats.ue_count, delta);
    Some(tighten_bounds(bounds, mu_hat, nu_hat, radius, cap_max))
}

/// Capacity intervals for every arm.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CapacityBounds {
    arms: Vec<ArmBounds>,
}

impl CapacityBounds {
    /// Fresh intervals `[1, max_capacity]`.
    pub fn new(num_arms: usize, max_capacity: u32) -> Self {
        CapacityBounds { arms: alloc::vec![ArmBounds { lower: 1, upper: max_capacity.max(1) }; num_arms] }
    }

    pub fn from_vecs(lower: &[u32], upper: &[u32]) -> Self {
        CapacityBounds {
            arms: lower.iter().zip(upper).map(|(&lower, &upper)| ArmBounds { lower, upper }).collect(),
        }
    }

    pub fn num_arms(&self) -> usize {
        self.arms.len()
    }

    pub fn get(&self, k: usize) -> ArmBounds {
        self.arms[k]
    }

    pub fn set(&mut self, k: usize, b: ArmBounds) {
        self.arms[k] = b;
    }

    pub fn lower(&self, k: usize) -> u32 {
        self.arms[k].lower
    }

    pub fn upper(&self, k: usize) -> u32 {
        self.arms[k].upper
    }

    pub fn lowers(&self) -> Vec<u32> {
        self.arms.iter().map(|b| b.lower).collect()
    }

    pub fn is_learned(&self, k: usize) -> bool {
        self.arms[k].is_learned()
    }

    /// Updates arm `k` from its statistics; returns whether the interval
    /// crossed and had to be repaired.
    pub fn update_arm(&mut self, k: usize, stats: &ArmStats, delta: f64, cap_max: u32) -> bool {
        match update_capacity_bounds(self.arms[k], stats, delta, cap_max) {
            Some(u) => {
                self.arms[k] = u.bounds;
                u.crossed
            }
            None => false,
        }
    }

    /// Caps both ends of arm `k` at `max`.
    pub fn cap_arm(&mut self, k: usize, max: u32) {
        let b = &mut self.arms[k];
        b.lower = b.lower.min(max).max(1);
        b.upper = b.upper.min(max).max(1);
    }
}
