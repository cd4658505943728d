//! Trace-driven traffic analysis for 3D video.
//!
//! The library covers two halves of the same workflow:
//!
//! * **Characterization**: frame-size traces of multiview (MV), frame-sequential
//!   (FS), and side-by-side (SBS) encodings are parsed, validated, reshaped into
//!   the stream actually offered to a network (per-view, sequential, combined,
//!   GoP-smoothed), and summarized by mean bitrate, variance, and coefficient of
//!   variation, including rate-distortion / variability-distortion curves.
//! * **Multiplexing**: a bufferless link of capacity `C` serves `J` homogeneous
//!   trace-driven streams with independent uniform random phases. Monte Carlo
//!   estimation of the information loss probability drives searches for the
//!   minimum capacity at a loss target and the maximum admissible stream count.
//!
//! Statistics over integer frame sizes are computed in exact integer
//! arithmetic and converted to floating point once at the end, so results are
//! reproducible bit-for-bit across platforms and thread counts.

pub mod cli;
pub mod metrics;
pub mod mux;
pub mod report;
pub mod search;
pub mod streamshape;
pub mod trace;

#[cfg(test)]
pub(crate) mod testutil;
