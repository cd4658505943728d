//! Traffic statistics of trace streams.
//!
//! All first and second moments over frame sizes are accumulated in 128-bit
//! integers and divided exactly at the end, so a statistic like the
//! coefficient of variation is 0 precisely when the data is constant, and
//! results do not depend on summation order. PSNR means use compensated
//! floating-point summation.
//!
//! Variability of the sequential (interleaved) stream supports two
//! normalizations of the pooled sample variance: `Paper`, the
//! `(M - 1)(V - 1)` denominator conventional in the multiview traffic
//! literature, and `Standard`, the ordinary `V * M - 1` sample variance.
//! Both divide the same exact sum of squared deviations from the grand mean.

use std::fmt;
use std::str::FromStr;

use thiserror::Error;

use crate::streamshape::{self, DemandSequence, ShapeError, Shaping};
use crate::trace::MultiviewTrace;

#[derive(Debug, Error)]
pub enum MetricsError {
    #[error("need at least 2 frames per view for variance, trace has {0}")]
    TooFewFrames(u64),
    #[error("view {v} out of range 1..={views}")]
    ViewOutOfRange { v: u32, views: u32 },
    #[error("paper normalization needs at least 2 views; use standard for single-view traces")]
    SingleViewPaperNormalization,
    #[error("need at least 2 demand periods for variability, got {0}")]
    TooFewPeriods(usize),
    #[error("demand stream has zero mean")]
    ZeroMeanDemand,
    #[error("frame {m} of view {v} carries no psnr")]
    MissingPsnr { m: u64, v: u32 },
    #[error("curve input is empty")]
    NoEncodings,
    #[error(transparent)]
    Shape(#[from] ShapeError),
}

/// Denominator convention for the sequential-stream variance.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Normalization {
    /// `(M - 1)(V - 1)`; requires `V >= 2`.
    Paper,
    /// `V * M - 1`, the plain pooled sample variance.
    Standard,
}

impl fmt::Display for Normalization {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Normalization::Paper => "paper",
            Normalization::Standard => "standard",
        })
    }
}

impl FromStr for Normalization {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "paper" => Ok(Normalization::Paper),
            "standard" => Ok(Normalization::Standard),
            other => Err(format!("unknown normalization {other:?}, expected paper or standard")),
        }
    }
}

/// Mean, dispersion, and rate summary of one stream shape.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StreamStats {
    /// Mean size per unit (bytes for frame streams, bits for demand streams).
    pub mean: f64,
    /// Sample variance in squared units.
    pub variance: f64,
    /// Square root of `variance`.
    pub std_dev: f64,
    /// Coefficient of variation, `std_dev / mean`; exactly 0 for constant data.
    pub cov: f64,
    /// Mean bitrate in bits per second.
    pub mean_bitrate: f64,
    /// Number of units the statistics pool.
    pub samples: u64,
}

/// Exact integer accumulation: count, sum, sum of squares.
fn int_sums<I: IntoIterator<Item = i64>>(values: I) -> (u64, i128, i128) {
    let mut n = 0u64;
    let mut sum = 0i128;
    let mut sumsq = 0i128;
    for x in values {
        let x = i128::from(x);
        n += 1;
        sum += x;
        sumsq += x * x;
    }
    (n, sum, sumsq)
}

/// Sample variance with an explicit denominator `denom`, from exact sums:
/// `(n * sumsq - sum^2) / (n * denom)`. The numerator is the exact scaled
/// sum of squared deviations from the mean, so it is 0 iff the data is
/// constant.
fn variance_from_sums(n: u64, sum: i128, sumsq: i128, denom: u64) -> f64 {
    let num = i128::from(n) * sumsq - sum * sum;
    debug_assert!(num >= 0);
    num as f64 / (n as f64 * denom as f64)
}

fn stats_from_sums(n: u64, sum: i128, sumsq: i128, denom: u64, rate_factor: f64) -> StreamStats {
    let mean = sum as f64 / n as f64;
    let num = i128::from(n) * sumsq - sum * sum;
    let variance = variance_from_sums(n, sum, sumsq, denom);
    let std_dev = variance.sqrt();
    // Branch keeps the constant-data case exact instead of 0/0 or eps/mean.
    let cov = if num == 0 { 0.0 } else { std_dev / mean };
    StreamStats { mean, variance, std_dev, cov, mean_bitrate: rate_factor * mean, samples: n }
}

/// Per-view frame statistics: mean frame size, sample variance, CoV, and the
/// mean view bitrate `8 * f * mean` in bits per second.
pub fn view_stats(trace: &MultiviewTrace, v: u32) -> Result<StreamStats, MetricsError> {
    let views = trace.views.len() as u32;
    let frames = trace
        .view(v)
        .ok_or(MetricsError::ViewOutOfRange { v, views })?;
    let m = frames.len() as u64;
    if m < 2 {
        return Err(MetricsError::TooFewFrames(m));
    }
    let (n, sum, sumsq) = int_sums(frames.iter().map(|r| r.size));
    Ok(stats_from_sums(n, sum, sumsq, n - 1, 8.0 * trace.meta.frame_rate))
}

/// Location summary of the whole trace; dispersion of the merged stream is
/// a normalization question answered by [`sequential_variability`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MergedMean {
    /// Grand mean frame size in bytes over all `V * M` frames.
    pub mean: f64,
    /// Mean trace bitrate `8 * V * f * mean` in bits per second.
    pub mean_bitrate: f64,
    pub samples: u64,
}

/// Grand mean frame size over all views and the mean bitrate of the whole
/// trace. Callers must pass a validated trace with at least one frame.
pub fn merged_mean(trace: &MultiviewTrace) -> MergedMean {
    let (n, sum, _) = int_sums(trace.frames().map(|r| r.size));
    let v = trace.views.len() as f64;
    let mean = sum as f64 / n as f64;
    MergedMean { mean, mean_bitrate: 8.0 * v * trace.meta.frame_rate * mean, samples: n }
}

/// Variability of the sequential (interleaved) stream: all `V * M` frame
/// sizes pooled around the grand mean, divided by the chosen normalization.
pub fn sequential_variability(
    trace: &MultiviewTrace,
    normalization: Normalization,
) -> Result<StreamStats, MetricsError> {
    let v = trace.views.len() as u64;
    let m = trace.views.first().map_or(0, Vec::len) as u64;
    if m < 2 {
        return Err(MetricsError::TooFewFrames(m));
    }
    let denom = match normalization {
        Normalization::Paper => {
            if v < 2 {
                return Err(MetricsError::SingleViewPaperNormalization);
            }
            (m - 1) * (v - 1)
        }
        Normalization::Standard => v * m - 1,
    };
    let (n, sum, sumsq) = int_sums(trace.frames().map(|r| r.size));
    // The sequential stream runs at V * f units per second, so its mean rate
    // is 8 * V * f * mean, the trace bitrate.
    Ok(stats_from_sums(n, sum, sumsq, denom, 8.0 * v as f64 * trace.meta.frame_rate))
}

/// Variability of the combined (aggregated) stream: the per-slot sums
/// `X_m = sum_v X_m(v)` as `M` samples. The CoV divides by the mean
/// aggregate `V * grand_mean`, so constant aggregates give exactly 0 even
/// when individual views vary.
pub fn combined_variability(trace: &MultiviewTrace) -> Result<StreamStats, MetricsError> {
    let m = trace.views.first().map_or(0, Vec::len) as u64;
    if m < 2 {
        return Err(MetricsError::TooFewFrames(m));
    }
    let combined = streamshape::combine(trace);
    let (n, sum, sumsq) = int_sums(combined.sizes.iter().copied());
    Ok(stats_from_sums(n, sum, sumsq, n - 1, 8.0 * trace.meta.frame_rate))
}

/// Coefficient of variation of a demand stream (bits per period).
pub fn demand_cov(demand: &DemandSequence) -> Result<f64, MetricsError> {
    Ok(demand_stats(demand)?.cov)
}

/// Full statistics of a demand stream: mean bits per period, sample
/// variance, CoV, and mean bitrate `mean * f`.
pub fn demand_stats(demand: &DemandSequence) -> Result<StreamStats, MetricsError> {
    let t = demand.demand.len();
    if t < 2 {
        return Err(MetricsError::TooFewPeriods(t));
    }
    if demand.total_bits() == 0 {
        return Err(MetricsError::ZeroMeanDemand);
    }
    let (n, sum, sumsq) = int_sums(demand.demand.iter().map(|&d| {
        i64::try_from(d).expect("demand entries exceed i64")
    }));
    Ok(stats_from_sums(n, sum, sumsq, n - 1, demand.frame_rate))
}

/// Mean PSNR over all `V * M` frames, in dB. Uses compensated summation so
/// the result is independent of accumulation order in practice.
pub fn average_psnr(trace: &MultiviewTrace) -> Result<f64, MetricsError> {
    let mut sum = 0.0f64;
    let mut comp = 0.0f64;
    let mut n = 0u64;
    for rec in trace.frames() {
        let p = rec.psnr.ok_or(MetricsError::MissingPsnr { m: rec.frame_index, v: rec.view })?;
        // Neumaier's variant of Kahan summation.
        let t = sum + p;
        if sum.abs() >= p.abs() {
            comp += (sum - t) + p;
        } else {
            comp += (p - t) + sum;
        }
        sum = t;
        n += 1;
    }
    if n == 0 {
        return Err(MetricsError::TooFewFrames(0));
    }
    Ok((sum + comp) / n as f64)
}

/// Which axis pair a curve point belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CurveKind {
    /// Rate-distortion: mean bitrate vs quality.
    RateDistortion,
    /// Variability-distortion: CoV vs quality.
    VariabilityDistortion,
}

impl fmt::Display for CurveKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            CurveKind::RateDistortion => "RD",
            CurveKind::VariabilityDistortion => "VD",
        })
    }
}

/// One point of a rate-distortion or variability-distortion curve.
#[derive(Debug, Clone, PartialEq)]
pub struct CurvePoint {
    pub kind: CurveKind,
    /// Trace identity plus shaping, e.g. `clip MV qp28 C`.
    pub label: String,
    pub avg_psnr: f64,
    /// Mean bitrate in bits per second; RD points only.
    pub avg_bitrate: Option<f64>,
    /// Coefficient of variation under the requested shaping; VD points only.
    pub cov: Option<f64>,
}

/// Builds RD and VD points for each encoding under its shaping, sorted by
/// ascending PSNR within each kind (RD block first). Every trace must carry
/// per-frame PSNR.
pub fn build_curves(
    encodings: &[(MultiviewTrace, Shaping)],
    normalization: Normalization,
) -> Result<Vec<CurvePoint>, MetricsError> {
    if encodings.is_empty() {
        return Err(MetricsError::NoEncodings);
    }
    let mut rd = Vec::with_capacity(encodings.len());
    let mut vd = Vec::with_capacity(encodings.len());
    for (trace, shaping) in encodings {
        let psnr = average_psnr(trace)?;
        let bitrate = merged_mean(trace).mean_bitrate;
        let cov = match *shaping {
            Shaping::View(v) => view_stats(trace, v)?.cov,
            Shaping::Sequential => sequential_variability(trace, normalization)?.cov,
            Shaping::Combined => combined_variability(trace)?.cov,
            Shaping::Smoothed(g) => {
                let g = g.unwrap_or(trace.meta.gop_length);
                let demand = streamshape::gop_smooth(
                    &streamshape::to_demand(&streamshape::combine(trace)),
                    g,
                    0,
                )?;
                demand_cov(&demand)?
            }
        };
        let qp = trace.meta.quantizer.map(|q| format!(" qp{q}")).unwrap_or_default();
        let label = format!("{} {}{} {}", trace.meta.video_name, trace.meta.representation, qp, shaping);
        rd.push(CurvePoint {
            kind: CurveKind::RateDistortion,
            label: label.clone(),
            avg_psnr: psnr,
            avg_bitrate: Some(bitrate),
            cov: None,
        });
        vd.push(CurvePoint {
            kind: CurveKind::VariabilityDistortion,
            label,
            avg_psnr: psnr,
            avg_bitrate: None,
            cov: Some(cov),
        });
    }
    rd.sort_by(|a, b| a.avg_psnr.total_cmp(&b.avg_psnr));
    vd.sort_by(|a, b| a.avg_psnr.total_cmp(&b.avg_psnr));
    rd.extend(vd);
    Ok(rd)
}
