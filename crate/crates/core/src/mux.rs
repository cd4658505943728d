//! Bufferless statistical multiplexing of trace-driven streams.
//!
//! `J` homogeneous streams play the same demand sequence, each starting at
//! an independent uniformly random phase in `1..=M` and wrapping around.
//! The link transmits at most `C / f` bits per frame period and has no
//! buffer, so in each period the aggregate demand beyond the budget is
//! lost. A replication plays all `M` periods and reports the information
//! loss ratio `lost / offered`.
//!
//! [`estimate_loss`] runs replications until the Student-t confidence
//! interval of the mean loss ratio is tighter than a relative target, then
//! reports the estimate as of that deterministic stopping index. Phases for
//! replication `i` come from a counter-based ChaCha generator keyed by
//! `(seed, i)`, so results are bit-identical across thread counts and
//! platforms, and two scenarios sharing a seed see common random phases
//! (which bisection exploits as common random numbers).
//!
//! The per-period budget is computed exactly: the frame rate is interpreted
//! as the decimal number it displays as, the budget is `floor(C * q / p)`
//! for `f = p / q` in lowest decimal terms, so capacity comparisons in the
//! search layer are free of float rounding surprises.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use statrs::distribution::{ContinuousCDF, Normal, StudentsT};
use thiserror::Error;

use crate::streamshape::DemandSequence;

#[derive(Debug, Error)]
pub enum MuxError {
    #[error("stream count must be >= 1")]
    NoStreams,
    #[error("link rate must be > 0")]
    ZeroLinkRate,
    #[error("frame rate must be finite and > 0, got {0}")]
    BadFrameRate(f64),
    #[error("demand sequence is empty")]
    EmptyDemand,
    #[error("aggregate of {streams} streams would overflow 64-bit accumulation")]
    AggregateOverflow { streams: u32 },
    #[error("per-period budget {budget} bits does not fit in 64 bits")]
    BudgetOverflow { budget: u128 },
    #[error("expected {expected} phases, got {got}")]
    PhaseCount { expected: u32, got: usize },
    #[error("phase {phase} out of range 1..={periods}")]
    PhaseOutOfRange { phase: u64, periods: usize },
    #[error("enumerating {tuples} phase tuples exceeds the limit of {limit}")]
    EnumerationLimit { tuples: u128, limit: u128 },
}

/// Frame rate as an exact ratio `p / q`, read from the decimal digits of
/// its shortest display form (`24 -> 24/1`, `23.976 -> 23976/1000`).
fn frame_rate_ratio(f: f64) -> Result<(u128, u128), MuxError> {
    if !(f.is_finite() && f > 0.0) {
        return Err(MuxError::BadFrameRate(f));
    }
    let text = format!("{f}");
    // Display of finite f64 never uses exponent notation, but guard anyway.
    if text.contains(['e', 'E']) {
        return Err(MuxError::BadFrameRate(f));
    }
    let (int_part, frac_part) = match text.split_once('.') {
        Some((i, fr)) => (i, fr),
        None => (text.as_str(), ""),
    };
    let mut p: u128 = int_part.parse().map_err(|_| MuxError::BadFrameRate(f))?;
    let mut q: u128 = 1;
    for ch in frac_part.chars() {
        let d = ch.to_digit(10).ok_or(MuxError::BadFrameRate(f))?;
        p = p * 10 + u128::from(d);
        q *= 10;
    }
    if p == 0 {
        return Err(MuxError::BadFrameRate(f));
    }
    Ok((p, q))
}

/// Exact per-period budget `floor(C / f)` in bits for a link of `link_rate`
/// bits per second.
pub fn per_period_budget(link_rate: u64, frame_rate: f64) -> Result<u64, MuxError> {
    let (p, q) = frame_rate_ratio(frame_rate)?;
    let budget = u128::from(link_rate) * q / p;
    u64::try_from(budget).map_err(|_| MuxError::BudgetOverflow { budget })
}

/// A fully specified multiplexing experiment: `num_streams` copies of
/// `demand` offered to a bufferless link of `link_rate` bits per second.
#[derive(Debug, Clone, Copy)]
pub struct MuxScenario<'a> {
    demand: &'a DemandSequence,
    num_streams: u32,
    link_rate: u64,
    budget: u64,
}

impl<'a> MuxScenario<'a> {
    pub fn new(
        demand: &'a DemandSequence,
        num_streams: u32,
        link_rate: u64,
    ) -> Result<Self, MuxError> {
        if num_streams == 0 {
            return Err(MuxError::NoStreams);
        }
        if link_rate == 0 {
            return Err(MuxError::ZeroLinkRate);
        }
        if demand.demand.is_empty() {
            return Err(MuxError::EmptyDemand);
        }
        // Per-period aggregates and the offered total must fit u64:
        // aggregate <= J * max <= J * total = offered.
        if demand.total_bits() * u128::from(num_streams) > u128::from(u64::MAX) {
            return Err(MuxError::AggregateOverflow { streams: num_streams });
        }
        let budget = per_period_budget(link_rate, demand.frame_rate)?;
        Ok(MuxScenario { demand, num_streams, link_rate, budget })
    }

    pub fn demand(&self) -> &DemandSequence {
        self.demand
    }

    pub fn num_streams(&self) -> u32 {
        self.num_streams
    }

    pub fn link_rate(&self) -> u64 {
        self.link_rate
    }

    /// Bits the link can carry per frame period, `floor(C / f)`.
    pub fn budget_bits(&self) -> u64 {
        self.budget
    }

    pub fn periods(&self) -> usize {
        self.demand.demand.len()
    }

    fn check_phases(&self, phases: &[u64]) -> Result<(), MuxError> {
        if phases.len() != self.num_streams as usize {
            return Err(MuxError::PhaseCount {
                expected: self.num_streams,
                got: phases.len(),
            });
        }
        let m = self.periods();
        for &p in phases {
            if p == 0 || p > m as u64 {
                return Err(MuxError::PhaseOutOfRange { phase: p, periods: m });
            }
        }
        Ok(())
    }

    /// Core loop: aggregate the J phase-shifted copies period by period,
    /// feeding each period's (aggregate, excess) to `visit`.
    fn walk_periods(&self, phases: &[u64], mut visit: impl FnMut(u64, u64)) {
        let d = &self.demand.demand;
        let m = d.len();
        let mut cursor: Vec<usize> = phases.iter().map(|&p| (p - 1) as usize).collect();
        for _ in 0..m {
            let mut aggregate = 0u64;
            for c in cursor.iter_mut() {
                aggregate += d[*c];
                *c += 1;
                if *c == m {
                    *c = 0;
                }
            }
            visit(aggregate, aggregate.saturating_sub(self.budget));
        }
    }
}

/// Outcome of one replication.
#[derive(Debug, Clone, PartialEq)]
pub struct ReplicationResult {
    pub lost_bits: u64,
    pub offered_bits: u64,
    /// `lost / offered`, or 0 when nothing was offered.
    pub loss_ratio: f64,
}

/// Plays all `M` periods for one phase assignment (1-based start indices,
/// one per stream) and tallies offered and lost bits.
pub fn simulate_replication(
    scenario: &MuxScenario,
    phases: &[u64],
) -> Result<ReplicationResult, MuxError> {
    scenario.check_phases(phases)?;
    let mut offered = 0u64;
    let mut lost = 0u64;
    scenario.walk_periods(phases, |aggregate, excess| {
        offered += aggregate;
        lost += excess;
    });
    let loss_ratio = if offered == 0 { 0.0 } else { lost as f64 / offered as f64 };
    Ok(ReplicationResult { lost_bits: lost, offered_bits: offered, loss_ratio })
}

/// Bits lost in each period for one phase assignment. Useful for
/// period-level comparisons, e.g. monotonicity checks.
pub fn period_losses(scenario: &MuxScenario, phases: &[u64]) -> Result<Vec<u64>, MuxError> {
    scenario.check_phases(phases)?;
    let mut losses = Vec::with_capacity(scenario.periods());
    scenario.walk_periods(phases, |_, excess| losses.push(excess));
    Ok(losses)
}

/// Stopping rule for [`estimate_loss`]: run at least `min_replications`,
/// then stop at the first count where the two-sided Student-t confidence
/// interval half-width drops below `rel_half_width` times the sample mean,
/// or at `max_replications`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StopConfig {
    pub rel_half_width: f64,
    pub confidence: f64,
    pub min_replications: u64,
    pub max_replications: u64,
}

impl Default for StopConfig {
    fn default() -> Self {
        StopConfig {
            rel_half_width: 0.10,
            confidence: 0.95,
            min_replications: 100,
            max_replications: 500_000,
        }
    }
}

impl StopConfig {
    fn checked(&self) -> &Self {
        assert!(
            self.rel_half_width > 0.0 && self.rel_half_width.is_finite(),
            "rel_half_width must be positive"
        );
        assert!(
            self.confidence > 0.0 && self.confidence < 1.0,
            "confidence must be in (0, 1)"
        );
        assert!(self.min_replications >= 2, "need at least 2 replications for a CI");
        assert!(self.max_replications >= self.min_replications, "max must be >= min");
        self
    }
}

/// Monte Carlo estimate of the information loss probability.
#[derive(Debug, Clone, PartialEq)]
pub struct LossEstimate {
    /// Sample mean of the per-replication loss ratios.
    pub p_hat: f64,
    /// Student-t half-width of the confidence interval at `confidence`.
    pub ci_half_width: f64,
    pub confidence: f64,
    /// Replications the estimate is based on (the stopping index).
    pub replications: u64,
    /// True when no replication lost a single bit; `p_hat` is then 0 and
    /// only an upper bound like 3/n is meaningful.
    pub zero_loss: bool,
    /// Total lost over total offered bits across the replications, a
    /// variance-reduced companion to `p_hat`.
    pub pooled_ratio: f64,
}

fn t_quantile(confidence: f64, df: f64) -> f64 {
    StudentsT::new(0.0, 1.0, df)
        .expect("degrees of freedom >= 1")
        .inverse_cdf(0.5 + confidence / 2.0)
}

/// Uniform phases for replication `index` under `seed`. The generator key
/// is the (seed, index) pair itself, not a derived stream, so any subset of
/// replications can be produced independently and in parallel.
fn phases_for(seed: u64, index: u64, num_streams: u32, periods: u64) -> Vec<u64> {
    let mut key = [0u8; 32];
    key[..8].copy_from_slice(&seed.to_le_bytes());
    key[8..16].copy_from_slice(&index.to_le_bytes());
    let mut rng = ChaCha8Rng::from_seed(key);
    (0..num_streams).map(|_| rng.random_range(1..=periods)).collect()
}

struct Welford {
    n: u64,
    mean: f64,
    m2: f64,
}

impl Welford {
    fn new() -> Self {
        Welford { n: 0, mean: 0.0, m2: 0.0 }
    }

    fn push(&mut self, x: f64) {
        self.n += 1;
        let delta = x - self.mean;
        self.mean += delta / self.n as f64;
        self.m2 += delta * (x - self.mean);
    }

    fn std_dev(&self) -> f64 {
        if self.n < 2 {
            return 0.0;
        }
        (self.m2 / (self.n - 1) as f64).max(0.0).sqrt()
    }
}

/// Runs replications under the stopping rule and reports the estimate at
/// the stopping index. Deterministic for fixed (scenario, seed, stop):
/// the rayon batch runner may compute replications past the stopping index,
/// but they never influence the result.
pub fn estimate_loss(scenario: &MuxScenario, seed: u64, stop: &StopConfig) -> LossEstimate {
    estimate_loss_detailed(scenario, seed, stop).0
}

/// [`estimate_loss`] plus the per-replication loss ratios up to the
/// stopping index, for callers that aggregate them further.
pub fn estimate_loss_detailed(
    scenario: &MuxScenario,
    seed: u64,
    stop: &StopConfig,
) -> (LossEstimate, Vec<f64>) {
    let stop = stop.checked();
    let periods = scenario.periods() as u64;

    // Largest and limiting t quantiles bound the exact check: t(df) falls
    // monotonically toward the normal quantile as df grows, so most
    // replications need no quantile evaluation at all.
    let t_max = t_quantile(stop.confidence, (stop.min_replications - 1) as f64);
    let z_min = Normal::new(0.0, 1.0)
        .expect("unit normal")
        .inverse_cdf(0.5 + stop.confidence / 2.0);

    let mut results: Vec<(u64, u64)> = Vec::new();
    let mut welford = Welford::new();
    let mut scanned = 0usize;
    let mut lost_total = 0u128;
    let mut offered_total = 0u128;
    let mut stopped_at: Option<u64> = None;

    let mut target = stop.min_replications;
    'outer: loop {
        let from = results.len() as u64;
        let batch: Vec<(u64, u64)> = (from..target)
            .into_par_iter()
            .map(|i| {
                let phases = phases_for(seed, i, scenario.num_streams, periods);
                let r = simulate_replication(scenario, &phases)
                    .expect("generated phases are in range");
                (r.lost_bits, r.offered_bits)
            })
            .collect();
        results.extend(batch);

        while scanned < results.len() {
            let (lost, offered) = results[scanned];
            scanned += 1;
            let ratio = if offered == 0 { 0.0 } else { lost as f64 / offered as f64 };
            welford.push(ratio);
            lost_total += u128::from(lost);
            offered_total += u128::from(offered);
            let n = scanned as u64;
            if n >= stop.min_replications {
                let sd = welford.std_dev();
                let target_hw = stop.rel_half_width * welford.mean;
                let scale = sd / (n as f64).sqrt();
                // Cheap bounds first, exact quantile only in the gap.
                let hit = if t_max * scale < target_hw {
                    true
                } else if z_min * scale >= target_hw {
                    false
                } else {
                    t_quantile(stop.confidence, (n - 1) as f64) * scale < target_hw
                };
                if hit || n == stop.max_replications {
                    stopped_at = Some(n);
                    break 'outer;
                }
            }
        }

        if target == stop.max_replications {
            break;
        }
        target = target.saturating_mul(2).min(stop.max_replications);
    }

    let n = stopped_at.unwrap_or(scanned as u64);
    let sd = welford.std_dev();
    let ci_half_width = if welford.n < 2 || sd == 0.0 {
        0.0
    } else {
        t_quantile(stop.confidence, (n - 1) as f64) * sd / (n as f64).sqrt()
    };
    let estimate = LossEstimate {
        p_hat: welford.mean,
        ci_half_width,
        confidence: stop.confidence,
        replications: n,
        zero_loss: lost_total == 0,
        pooled_ratio: if offered_total == 0 {
            0.0
        } else {
            lost_total as f64 / offered_total as f64
        },
    };
    let ratios = results[..n as usize]
        .iter()
        .map(|&(lost, offered)| if offered == 0 { 0.0 } else { lost as f64 / offered as f64 })
        .collect();
    (estimate, ratios)
}

/// Exact mean loss ratio over all `M^J` phase assignments, by full
/// enumeration with the default tuple limit of 10^7.
pub fn exact_loss_oracle(scenario: &MuxScenario) -> Result<f64, MuxError> {
    exact_loss_oracle_with_limit(scenario, 10_000_000)
}

/// [`exact_loss_oracle`] with an explicit enumeration limit.
///
/// The offered total is phase-independent (each stream offers its whole
/// sequence once per wrap), so the mean ratio is the exact integer sum of
/// lost bits divided by `M^J * offered`, computed in 128-bit arithmetic.
pub fn exact_loss_oracle_with_limit(
    scenario: &MuxScenario,
    limit: u128,
) -> Result<f64, MuxError> {
    let m = scenario.periods() as u64;
    let j = scenario.num_streams;
    let mut tuples: u128 = 1;
    for _ in 0..j {
        tuples = tuples.saturating_mul(u128::from(m));
        if tuples > limit {
            return Err(MuxError::EnumerationLimit { tuples, limit });
        }
    }

    let offered = scenario.demand.total_bits() * u128::from(j);
    if offered == 0 {
        return Ok(0.0);
    }

    let mut lost_sum: u128 = 0;
    let mut phases = vec![1u64; j as usize];
    loop {
        let r = simulate_replication(scenario, &phases)?;
        lost_sum += u128::from(r.lost_bits);
        // Odometer over 1..=m, least significant last.
        let mut pos = phases.len();
        loop {
            if pos == 0 {
                return Ok(lost_sum as f64 / (tuples * offered) as f64);
            }
            pos -= 1;
            if phases[pos] < m {
                phases[pos] += 1;
                for p in &mut phases[pos + 1..] {
                    *p = 1;
                }
                break;
            }
        }
    }
}
