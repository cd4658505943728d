//! Frame-size traces of 3D video encodings.
//!
//! A [`MultiviewTrace`] holds per-view, per-frame encoded sizes (bytes) plus
//! optional per-frame quality (PSNR, dB), together with metadata describing
//! how the video was encoded. Three representation formats are in scope:
//!
//! | format | views stored | meaning                                         |
//! |--------|--------------|-------------------------------------------------|
//! | `MV`   | 2            | multiview: left and right views coded jointly   |
//! | `FS`   | 1            | frame sequential: views interleaved in time     |
//! | `SBS`  | 1            | side by side: views packed into one frame       |
//!
//! FS and SBS traces arrive already merged, so they carry a single view; the
//! declared frame rate is the rate of the stored sequence (for FS that is
//! twice the per-view rate).
//!
//! Frame and view indices are 1-based throughout, matching the on-disk
//! format in [`format`].

mod format;
mod synth;

pub use format::{parse_trace, parse_trace_str, serialize_trace, serialize_trace_to_string, ParseError, TraceMetaOverrides};
pub use synth::{synthesize_trace, FrameSizeModel, SizeDistribution, SynthError, SynthSpec};

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

/// Representation format of a 3D video trace.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Representation {
    /// Multiview: both views stored separately in one trace.
    MV,
    /// Frame sequential: views interleaved, stored as one view at twice the rate.
    FS,
    /// Side by side: views spatially packed, stored as one view.
    SBS,
}

impl Representation {
    /// Number of views a valid trace of this representation stores.
    pub fn expected_views(self) -> u32 {
        match self {
            Representation::MV => 2,
            Representation::FS | Representation::SBS => 1,
        }
    }
}

impl fmt::Display for Representation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Representation::MV => "MV",
            Representation::FS => "FS",
            Representation::SBS => "SBS",
        })
    }
}

impl FromStr for Representation {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "MV" => Ok(Representation::MV),
            "FS" => Ok(Representation::FS),
            "SBS" => Ok(Representation::SBS),
            other => Err(format!("unknown representation {other:?}, expected MV, FS, or SBS")),
        }
    }
}

/// GoP structure of the encoding.
///
/// `B1` alternates one B frame between anchors (IBPBP...), `B7` places seven
/// B frames between anchors (IBBBBBBBP...). Anything else is `Other`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum GopPattern {
    B1,
    B7,
    Other,
}

impl fmt::Display for GopPattern {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            GopPattern::B1 => "B1",
            GopPattern::B7 => "B7",
            GopPattern::Other => "other",
        })
    }
}

impl FromStr for GopPattern {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "B1" => Ok(GopPattern::B1),
            "B7" => Ok(GopPattern::B7),
            _ => Ok(GopPattern::Other),
        }
    }
}

/// Frame type within the GoP.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum FrameType {
    I,
    P,
    B,
    Unknown,
}

impl fmt::Display for FrameType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            FrameType::I => "I",
            FrameType::P => "P",
            FrameType::B => "B",
            FrameType::Unknown => "U",
        })
    }
}

impl FromStr for FrameType {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "I" => Ok(FrameType::I),
            "P" => Ok(FrameType::P),
            "B" => Ok(FrameType::B),
            "U" => Ok(FrameType::Unknown),
            other => Err(format!("unknown frame type {other:?}, expected I, P, B, or U")),
        }
    }
}

/// Metadata describing one encoded trace.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceMeta {
    pub video_name: String,
    pub representation: Representation,
    /// Number of views V stored in the trace. MV stores 2, FS and SBS store 1.
    pub num_views: u32,
    /// Number of frames M per view.
    pub num_frames: u64,
    /// Frame rate f of the stored sequence, frames per second.
    pub frame_rate: f64,
    /// GoP length G in frames.
    pub gop_length: u64,
    pub gop_pattern: GopPattern,
    /// Quantization parameter, when the encoding fixed one.
    pub quantizer: Option<u32>,
}

/// One frame of one view.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameRecord {
    /// 1-based frame index m.
    pub frame_index: u64,
    /// 1-based view index v.
    pub view: u32,
    pub frame_type: FrameType,
    /// Encoded size in bytes. Valid traces have `size >= 0`; the field is
    /// signed so that out-of-range inputs survive long enough for
    /// [`MultiviewTrace::validate`] to report them.
    pub size: i64,
    /// Luminance PSNR in dB, if the trace carries quality data.
    pub psnr: Option<f64>,
}

/// A parsed trace: metadata plus `V` views of `M` frames each.
///
/// `views[v - 1][m - 1]` is frame `m` of view `v`. The constructors in this
/// crate only produce well-formed traces; hand-built values should be run
/// through [`MultiviewTrace::validate`] before analysis.
#[derive(Debug, Clone, PartialEq)]
pub struct MultiviewTrace {
    pub meta: TraceMeta,
    pub views: Vec<Vec<FrameRecord>>,
}

impl MultiviewTrace {
    /// Frames of view `v` (1-based), if the view exists.
    pub fn view(&self, v: u32) -> Option<&[FrameRecord]> {
        if v == 0 {
            return None;
        }
        self.views.get(v as usize - 1).map(Vec::as_slice)
    }

    /// All frame records, view by view.
    pub fn frames(&self) -> impl Iterator<Item = &FrameRecord> {
        self.views.iter().flatten()
    }

    /// Sum of all frame sizes in bytes.
    pub fn total_bytes(&self) -> i128 {
        self.frames().map(|r| i128::from(r.size)).sum()
    }

    /// Checks every structural and value rule and returns the violations,
    /// one message each, naming the offending field and location. An empty
    /// list means the trace is valid.
    pub fn validate(&self) -> Vec<String> {
        let mut v = Vec::new();
        let meta = &self.meta;

        if meta.num_views == 0 {
            v.push("meta.views: must be >= 1".to_string());
        }
        if meta.num_frames == 0 {
            v.push("meta.frames: must be >= 1".to_string());
        }
        if !(meta.frame_rate.is_finite() && meta.frame_rate > 0.0) {
            v.push(format!("meta.fps: must be finite and > 0, got {}", meta.frame_rate));
        }
        if meta.gop_length == 0 {
            v.push("meta.gop: must be >= 1".to_string());
        }
        let expected = meta.representation.expected_views();
        if meta.num_views != expected {
            v.push(format!(
                "meta.views: representation {} requires {expected} view(s), got {}",
                meta.representation, meta.num_views
            ));
        }

        if self.views.len() != meta.num_views as usize {
            v.push(format!(
                "views: trace stores {} view(s) but meta.views={}",
                self.views.len(),
                meta.num_views
            ));
        }

        for (vi, frames) in self.views.iter().enumerate() {
            let view_no = vi as u32 + 1;
            if frames.len() as u64 != meta.num_frames {
                v.push(format!(
                    "view {view_no}: has {} frame(s) but meta.frames={}",
                    frames.len(),
                    meta.num_frames
                ));
            }
            for (mi, rec) in frames.iter().enumerate() {
                let m = mi as u64 + 1;
                if rec.frame_index != m {
                    v.push(format!(
                        "view {view_no} position {m}: frame_index is {}, records must be dense and sorted",
                        rec.frame_index
                    ));
                }
                if rec.view != view_no {
                    v.push(format!(
                        "view {view_no} frame {m}: record carries view {}",
                        rec.view
                    ));
                }
                if rec.size < 0 {
                    v.push(format!(
                        "view {view_no} frame {m}: size must be >= 0, got {}",
                        rec.size
                    ));
                }
                if let Some(p) = rec.psnr {
                    if !(p.is_finite() && p > 0.0) {
                        v.push(format!(
                            "view {view_no} frame {m}: psnr must be finite and > 0, got {p}"
                        ));
                    }
                }
            }
        }
        v
    }

    /// True when [`validate`](Self::validate) reports nothing.
    pub fn is_valid(&self) -> bool {
        self.validate().is_empty()
    }
}
