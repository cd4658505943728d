//! Loss-constrained capacity and admission searches.
//!
//! [`find_cmin`] answers "how much link capacity do J streams need so the
//! information loss probability stays below epsilon", [`find_jmax`] answers
//! "how many streams fit on a given link". Both wrap the Monte Carlo
//! estimator in a bracketed binary search and reuse one seed everywhere, so
//! every candidate sees common random phases: raising capacity under the
//! same phases can only reduce loss, which keeps the feasibility predicate
//! effectively monotone and the searches stable.
//!
//! Feasibility of a candidate follows the estimate: `p_hat <= epsilon` when
//! losses were observed; with zero observed losses the rule-of-three upper
//! bound `3 / replications <= epsilon` must hold, which is why a
//! configuration must budget at least `3 / epsilon` replications.
//!
//! The initial upper bracket is the exact peak rate: the smallest capacity
//! whose per-period budget is at least `J * max(demand)`. No aggregate can
//! exceed that budget, so the search always starts from a provably feasible
//! point and expansion beyond it is a defensive fallback.

use std::collections::BTreeMap;

use thiserror::Error;

use crate::mux::{
    estimate_loss_detailed, per_period_budget, LossEstimate, MuxError, MuxScenario, StopConfig,
};
use crate::streamshape::DemandSequence;

#[derive(Debug, Error)]
pub enum SearchError {
    #[error("demand stream offers no bits, any capacity is feasible")]
    DegenerateDemand,
    #[error("no feasible upper capacity after {attempts} expansions (last tried {last} bit/s)")]
    BracketExhausted { attempts: u32, last: u64 },
    #[error("admission search exceeded {0} streams")]
    StreamLimit(u32),
    #[error("invalid search config: {0}")]
    BadConfig(String),
    #[error(transparent)]
    Mux(#[from] MuxError),
}

/// Tuning of the searches. `runs * sims_per_run` is the total replication
/// budget per candidate; the estimator may stop earlier when its confidence
/// interval closes.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SearchConfig {
    /// Loss target epsilon.
    pub epsilon: f64,
    /// Number of runs; also the divisor for run-level summary statistics.
    pub runs: u64,
    /// Replications per run.
    pub sims_per_run: u64,
    /// Seed shared by every candidate evaluation.
    pub seed: u64,
    /// Relative capacity resolution of the bisection.
    pub bisect_rel_tol: f64,
    /// Geometric factor for bracket expansion and shrinking.
    pub bracket_expansion: f64,
}

impl Default for SearchConfig {
    fn default() -> Self {
        SearchConfig {
            epsilon: 1e-5,
            runs: 500,
            sims_per_run: 1000,
            seed: 0,
            bisect_rel_tol: 1e-3,
            bracket_expansion: 2.0,
        }
    }
}

impl SearchConfig {
    fn validate(&self) -> Result<(), SearchError> {
        let bad = |msg: String| Err(SearchError::BadConfig(msg));
        if !(self.epsilon > 0.0 && self.epsilon < 1.0) {
            return bad(format!("epsilon must be in (0, 1), got {}", self.epsilon));
        }
        if self.runs == 0 || self.sims_per_run == 0 {
            return bad("runs and sims_per_run must be >= 1".to_string());
        }
        let Some(total) = self.runs.checked_mul(self.sims_per_run) else {
            return bad("runs * sims_per_run overflows".to_string());
        };
        // Zero-loss feasibility uses the rule of three: certifying
        // p <= epsilon needs at least 3 / epsilon replications.
        if 3.0 / total as f64 > self.epsilon {
            return bad(format!(
                "runs * sims_per_run = {total} cannot certify epsilon = {}; need at least {}",
                self.epsilon,
                (3.0 / self.epsilon).ceil()
            ));
        }
        if !(self.bisect_rel_tol > 0.0 && self.bisect_rel_tol.is_finite()) {
            return bad(format!("bisect_rel_tol must be positive, got {}", self.bisect_rel_tol));
        }
        if !(self.bracket_expansion > 1.0 && self.bracket_expansion.is_finite()) {
            return bad(format!("bracket_expansion must be > 1, got {}", self.bracket_expansion));
        }
        Ok(())
    }

    fn stop(&self) -> StopConfig {
        StopConfig {
            min_replications: self.sims_per_run.max(2),
            max_replications: self.runs * self.sims_per_run,
            ..StopConfig::default()
        }
    }
}

/// Summary of per-run mean loss ratios at the returned capacity, one run
/// being `sims_per_run` consecutive replications (the last may be shorter
/// when the estimator stopped early).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RunStats {
    pub mean: f64,
    pub min: f64,
    pub max: f64,
    pub runs: u64,
}

fn run_stats(ratios: &[f64], sims_per_run: u64) -> RunStats {
    let mut means = Vec::new();
    for chunk in ratios.chunks(sims_per_run as usize) {
        means.push(chunk.iter().sum::<f64>() / chunk.len() as f64);
    }
    let runs = means.len() as u64;
    let mean = means.iter().sum::<f64>() / runs as f64;
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for &m in &means {
        lo = lo.min(m);
        hi = hi.max(m);
    }
    RunStats { mean, min: lo, max: hi, runs }
}

/// Result of [`find_cmin`].
#[derive(Debug, Clone, PartialEq)]
pub struct CapacityResult {
    /// Smallest capacity (bit/s) found feasible.
    pub c_min: u64,
    /// Largest capacity found infeasible; 0 when feasibility held all the
    /// way down (capacity 0 is infeasible by definition for nonzero demand).
    pub bracket_infeasible: u64,
    /// Equals `c_min`; kept separate so the bracket reads as a pair.
    pub bracket_feasible: u64,
    /// The loss estimate that certified `c_min`.
    pub loss: LossEstimate,
    /// Run-level summary of the loss ratios behind `loss`.
    pub run_stats: RunStats,
    /// Number of capacity candidates evaluated.
    pub evaluations: u32,
}

/// Smallest link rate whose per-period budget reaches `budget` bits.
fn link_rate_for_budget(budget: u64, frame_rate: f64) -> Result<u64, MuxError> {
    // Smallest C with floor(C * q / p) >= budget is ceil(budget * p / q).
    // Probe by doubling then bisect on the exact floor form, so no second
    // rational parser is needed here.
    let mut hi = 1u64;
    while per_period_budget(hi, frame_rate)? < budget {
        hi = hi
            .checked_mul(2)
            .ok_or(MuxError::BudgetOverflow { budget: u128::from(budget) })?;
    }
    let mut lo = 0u64;
    while hi - lo > 1 {
        let mid = lo + (hi - lo) / 2;
        if per_period_budget(mid, frame_rate)? >= budget {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(hi)
}

struct Evaluator<'a> {
    demand: &'a DemandSequence,
    streams: u32,
    cfg: &'a SearchConfig,
    stop: StopConfig,
    evaluations: u32,
    /// Lowest feasible capacity seen so far, with its evidence.
    best: Option<(u64, LossEstimate, Vec<f64>)>,
}

impl<'a> Evaluator<'a> {
    fn feasible_at(&mut self, link_rate: u64) -> Result<bool, SearchError> {
        let scenario = MuxScenario::new(self.demand, self.streams, link_rate)?;
        let (est, ratios) = estimate_loss_detailed(&scenario, self.cfg.seed, &self.stop);
        self.evaluations += 1;
        let feasible = if est.zero_loss {
            3.0 / est.replications as f64 <= self.cfg.epsilon
        } else {
            est.p_hat <= self.cfg.epsilon
        };
        if feasible {
            // Candidates are evaluated in strictly bracket-narrowing order,
            // so a feasible one is always the lowest seen.
            self.best = Some((link_rate, est, ratios));
        }
        Ok(feasible)
    }
}

/// Finds the smallest capacity at which `streams` copies of `demand` meet
/// the loss target, by bracketed bisection down to
/// `max(1, bisect_rel_tol * c_min)` bits per second.
pub fn find_cmin(
    demand: &DemandSequence,
    streams: u32,
    cfg: &SearchConfig,
) -> Result<CapacityResult, SearchError> {
    cfg.validate()?;
    if streams == 0 {
        return Err(SearchError::Mux(MuxError::NoStreams));
    }
    let total = demand.total_bits();
    if total == 0 {
        return Err(SearchError::DegenerateDemand);
    }

    let mut ev = Evaluator { demand, streams, cfg, stop: cfg.stop(), evaluations: 0, best: None };

    // Peak-rate upper bracket: a budget of J * max(demand) forbids any loss.
    let peak = u128::from(streams) * u128::from(demand.max_bits());
    let peak = u64::try_from(peak).map_err(|_| MuxError::AggregateOverflow { streams })?;
    let mut hi = link_rate_for_budget(peak.max(1), demand.frame_rate)?;
    let mut attempts = 0u32;
    while !ev.feasible_at(hi)? {
        attempts += 1;
        let next = (hi as f64 * cfg.bracket_expansion).ceil();
        let next = if next >= u64::MAX as f64 { u64::MAX } else { next as u64 };
        if attempts >= 64 || next == hi {
            return Err(SearchError::BracketExhausted { attempts, last: hi });
        }
        hi = next;
    }

    // Mean-rate lower seed; walk down while even that stays feasible.
    let mut lo = {
        let guess = (streams as f64 * demand.frame_rate * demand.mean_bits()) as u64;
        let guess = guess.min(hi.saturating_sub(1));
        if guess == 0 {
            0
        } else if ev.feasible_at(guess)? {
            hi = guess;
            let mut cur = guess;
            loop {
                let next = (cur as f64 / cfg.bracket_expansion).floor() as u64;
                if next == 0 {
                    break 0;
                }
                if ev.feasible_at(next)? {
                    hi = next;
                    cur = next;
                } else {
                    break next;
                }
            }
        } else {
            guess
        }
    };

    while hi - lo > 1 && (hi - lo) as f64 > cfg.bisect_rel_tol * hi as f64 {
        let mid = lo + (hi - lo) / 2;
        if ev.feasible_at(mid)? {
            hi = mid;
        } else {
            lo = mid;
        }
    }

    let (c_min, loss, ratios) = ev.best.expect("upper bracket was feasible");
    debug_assert_eq!(c_min, hi);
    Ok(CapacityResult {
        c_min: hi,
        bracket_infeasible: lo,
        bracket_feasible: hi,
        loss,
        run_stats: run_stats(&ratios, cfg.sims_per_run),
        evaluations: ev.evaluations,
    })
}

/// Finds the largest stream count admissible on `link_rate` at the loss
/// target; 0 when even a single stream misses it.
pub fn find_jmax(
    demand: &DemandSequence,
    link_rate: u64,
    cfg: &SearchConfig,
) -> Result<u64, SearchError> {
    cfg.validate()?;
    if demand.total_bits() == 0 {
        return Err(SearchError::DegenerateDemand);
    }
    let stop = cfg.stop();
    let mut memo: BTreeMap<u32, bool> = BTreeMap::new();
    let mut feasible = |j: u32| -> Result<bool, SearchError> {
        if let Some(&ok) = memo.get(&j) {
            return Ok(ok);
        }
        let scenario = MuxScenario::new(demand, j, link_rate)?;
        let (est, _) = estimate_loss_detailed(&scenario, cfg.seed, &stop);
        let ok = if est.zero_loss {
            3.0 / est.replications as f64 <= cfg.epsilon
        } else {
            est.p_hat <= cfg.epsilon
        };
        memo.insert(j, ok);
        Ok(ok)
    };

    if !feasible(1)? {
        return Ok(0);
    }
    const LIMIT: u32 = 1 << 31;
    let mut lo = 1u32;
    let mut hi = 2u32;
    while feasible(hi)? {
        lo = hi;
        hi = hi.checked_mul(2).filter(|&h| h <= LIMIT).ok_or(SearchError::StreamLimit(LIMIT))?;
    }
    while hi - lo > 1 {
        let mid = lo + (hi - lo) / 2;
        if feasible(mid)? {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(u64::from(lo))
}
