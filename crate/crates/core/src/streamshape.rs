//! Reshaping a trace into the stream a network actually carries.
//!
//! A multiview trace can be offered to a link in several shapes:
//!
//! * per view: each view as its own elementary stream;
//! * sequential (`S`): views interleaved frame by frame at rate `V * f`,
//!   the transmission order of a frame-sequential system;
//! * combined (`C`): the `V` frames of each time slot aggregated into one
//!   transmission unit at rate `f`, the natural unit for multiplexing;
//! * GoP-smoothed (`smoothG`): the combined stream with each GoP's bits
//!   spread evenly across its `G` periods, the classic a-priori smoothing
//!   that trades one GoP of latency for lower variability.
//!
//! Smoothing works on whole bits in exact integer arithmetic: totals are
//! conserved exactly and within each block the per-period shares differ by
//! at most one bit.

use std::fmt;
use std::str::FromStr;

use thiserror::Error;

use crate::trace::{MultiviewTrace, TraceMeta};

#[derive(Debug, Error)]
pub enum ShapeError {
    #[error("gop length for smoothing must be >= 1")]
    ZeroGop,
    #[error("gop length {gop} exceeds the {periods} demand periods")]
    GopExceedsLength { gop: u64, periods: usize },
    #[error("alignment offset {offset} must be < gop length {gop}")]
    BadAlignment { offset: u64, gop: u64 },
    #[error("shaping {0} does not describe a multiplexable demand stream")]
    NotADemandShape(Shaping),
}

/// Views interleaved frame by frame: `X_1(1), X_1(2), ..., X_1(V), X_2(1), ...`
/// at `V * f` units per second.
#[derive(Debug, Clone, PartialEq)]
pub struct MergedSequence {
    pub sizes: Vec<i64>,
    /// Seconds per transmission unit, `1 / (V * f)`.
    pub unit_duration: f64,
    pub meta: TraceMeta,
}

/// Per-slot aggregate `X_m = sum_v X_m(v)` at `f` units per second.
#[derive(Debug, Clone, PartialEq)]
pub struct CombinedSequence {
    pub sizes: Vec<i64>,
    /// Seconds per transmission unit, `1 / f`.
    pub unit_duration: f64,
    pub meta: TraceMeta,
}

/// Bits offered per frame period, the input to the multiplexer model.
#[derive(Debug, Clone, PartialEq)]
pub struct DemandSequence {
    /// Bits offered in each of the `T` periods.
    pub demand: Vec<u64>,
    /// Periods per second.
    pub frame_rate: f64,
}

impl DemandSequence {
    pub fn period_count(&self) -> usize {
        self.demand.len()
    }

    /// Exact total of all periods in bits.
    pub fn total_bits(&self) -> u128 {
        self.demand.iter().map(|&d| u128::from(d)).sum()
    }

    pub fn max_bits(&self) -> u64 {
        self.demand.iter().copied().max().unwrap_or(0)
    }

    /// Mean bits per period.
    pub fn mean_bits(&self) -> f64 {
        if self.demand.is_empty() {
            return 0.0;
        }
        self.total_bits() as f64 / self.demand.len() as f64
    }
}

/// Interleaves the views of `trace` in time. For `V = 1` this is the stored
/// sequence itself.
pub fn sequential_merge(trace: &MultiviewTrace) -> MergedSequence {
    let v = trace.views.len().max(1);
    let m = trace.views.first().map_or(0, Vec::len);
    let mut sizes = Vec::with_capacity(v * m);
    for mi in 0..m {
        for view in &trace.views {
            sizes.push(view[mi].size);
        }
    }
    MergedSequence {
        sizes,
        unit_duration: 1.0 / (v as f64 * trace.meta.frame_rate),
        meta: trace.meta.clone(),
    }
}

/// Aggregates the `V` frames of each time slot into one unit.
pub fn combine(trace: &MultiviewTrace) -> CombinedSequence {
    let m = trace.views.first().map_or(0, Vec::len);
    let mut sizes = Vec::with_capacity(m);
    for mi in 0..m {
        sizes.push(trace.views.iter().map(|view| view[mi].size).sum());
    }
    CombinedSequence { sizes, unit_duration: 1.0 / trace.meta.frame_rate, meta: trace.meta.clone() }
}

/// Converts a combined sequence (bytes per slot) into bits per period.
/// The input must come from a validated trace: sizes are nonnegative.
pub fn to_demand(combined: &CombinedSequence) -> DemandSequence {
    let demand = combined
        .sizes
        .iter()
        .map(|&s| u64::try_from(i128::from(s) * 8).expect("combined sizes must be nonnegative"))
        .collect();
    DemandSequence { demand, frame_rate: combined.meta.frame_rate }
}

/// Spreads each GoP's bits evenly over its periods.
///
/// Blocks are `[1 .. offset]` (when `offset > 0`), then full blocks of `g`,
/// then a trailing partial block; `offset` is the number of periods the
/// first full GoP boundary is into the sequence, used when a trace does not
/// start on a GoP boundary. Within a block of length `L` and total `B`,
/// every period gets `floor(B / L)` bits and the first `B mod L` periods one
/// extra bit, so block totals, and hence the overall total, are conserved
/// exactly.
pub fn gop_smooth(
    demand: &DemandSequence,
    g: u64,
    alignment_offset: u64,
) -> Result<DemandSequence, ShapeError> {
    if g == 0 {
        return Err(ShapeError::ZeroGop);
    }
    let t = demand.demand.len();
    if g as usize > t {
        return Err(ShapeError::GopExceedsLength { gop: g, periods: t });
    }
    if alignment_offset >= g {
        return Err(ShapeError::BadAlignment { offset: alignment_offset, gop: g });
    }

    let mut out = Vec::with_capacity(t);
    let mut spread = |block: &[u64]| {
        let len = block.len() as u128;
        let total: u128 = block.iter().map(|&d| u128::from(d)).sum();
        let share = (total / len) as u64;
        let extra = (total % len) as usize;
        for i in 0..block.len() {
            out.push(share + u64::from(i < extra));
        }
    };

    let head = alignment_offset as usize;
    if head > 0 {
        spread(&demand.demand[..head]);
    }
    for block in demand.demand[head..].chunks(g as usize) {
        spread(block);
    }

    Ok(DemandSequence { demand: out, frame_rate: demand.frame_rate })
}

/// How a trace is shaped before analysis or multiplexing.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Shaping {
    /// A single view as its own stream.
    View(u32),
    /// Sequential (interleaved) stream.
    Sequential,
    /// Combined (aggregated) stream.
    Combined,
    /// GoP-smoothed combined stream; `None` takes the GoP length from the
    /// trace metadata.
    Smoothed(Option<u64>),
}

impl fmt::Display for Shaping {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Shaping::View(v) => write!(f, "view{v}"),
            Shaping::Sequential => f.write_str("S"),
            Shaping::Combined => f.write_str("C"),
            Shaping::Smoothed(None) => f.write_str("smooth"),
            Shaping::Smoothed(Some(g)) => write!(f, "smooth{g}"),
        }
    }
}

impl FromStr for Shaping {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "S" => return Ok(Shaping::Sequential),
            "C" => return Ok(Shaping::Combined),
            "view" => return Ok(Shaping::View(1)),
            "smooth" => return Ok(Shaping::Smoothed(None)),
            _ => {}
        }
        if let Some(digits) = s.strip_prefix("view") {
            let v: u32 = digits
                .parse()
                .map_err(|_| format!("bad view number in shaping {s:?}"))?;
            if v == 0 {
                return Err("view number must be >= 1".to_string());
            }
            return Ok(Shaping::View(v));
        }
        if let Some(digits) = s.strip_prefix("smooth") {
            let g: u64 = digits
                .parse()
                .map_err(|_| format!("bad gop length in shaping {s:?}"))?;
            if g == 0 {
                return Err("smoothing gop length must be >= 1".to_string());
            }
            return Ok(Shaping::Smoothed(Some(g)));
        }
        Err(format!("unknown shaping {s:?}, expected viewN, S, C, or smoothG"))
    }
}

/// Demand stream a multiplexer sees for `shaping`. Only aggregate shapes
/// (`C`, `smoothG`) can be multiplexed; per-view and sequential streams are
/// analysis-only.
pub fn demand_for(trace: &MultiviewTrace, shaping: Shaping) -> Result<DemandSequence, ShapeError> {
    match shaping {
        Shaping::Combined => Ok(to_demand(&combine(trace))),
        Shaping::Smoothed(g) => {
            let g = g.unwrap_or(trace.meta.gop_length);
            gop_smooth(&to_demand(&combine(trace)), g, 0)
        }
        other => Err(ShapeError::NotADemandShape(other)),
    }
}
