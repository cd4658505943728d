//! Synthetic trace generation.
//!
//! Real traces are large and encumbered, so tests and demos build traces from
//! a compact [`SynthSpec`]: per-frame-type lognormal size distributions laid
//! out on a fixed GoP grid. Generation is a pure function of (spec, seed).
//!
//! ```toml
//! name = "synthetic"
//! views = 2
//! frames = 96
//! fps = 24.0
//! gop = 16
//! pattern = "B1"
//! inter_view_scale = 0.6
//! psnr = 41.5
//!
//! [sizes.i]
//! location = 90000.0
//! dispersion = 0.3
//! [sizes.p]
//! location = 30000.0
//! dispersion = 0.4
//! [sizes.b]
//! location = 12000.0
//! dispersion = 0.5
//! ```

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, LogNormal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{FrameRecord, FrameType, GopPattern, MultiviewTrace, Representation, TraceMeta};

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("invalid spec: {0}")]
    InvalidSpec(String),
}

/// Lognormal frame-size model for one frame type. `location` is the median
/// size in bytes; `dispersion` is the standard deviation of the underlying
/// normal (0 makes every draw exactly `location`).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SizeDistribution {
    pub location: f64,
    pub dispersion: f64,
}

/// Size models keyed by frame type.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FrameSizeModel {
    pub i: SizeDistribution,
    pub p: SizeDistribution,
    pub b: SizeDistribution,
}

impl FrameSizeModel {
    fn for_type(&self, ft: FrameType) -> SizeDistribution {
        match ft {
            FrameType::I => self.i,
            FrameType::P => self.p,
            // Unknown only occurs in parsed traces, never in generated ones.
            FrameType::B | FrameType::Unknown => self.b,
        }
    }
}

fn default_name() -> String {
    "synthetic".to_string()
}

fn default_scale() -> f64 {
    1.0
}

/// Recipe for a synthetic trace.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthSpec {
    #[serde(default = "default_name")]
    pub name: String,
    pub views: u32,
    pub frames: u64,
    pub fps: f64,
    pub gop: u64,
    pub pattern: GopPattern,
    pub sizes: FrameSizeModel,
    /// Multiplier applied to view 2 sizes; inter-view prediction makes the
    /// dependent view cheaper, so this is usually < 1.
    #[serde(default = "default_scale")]
    pub inter_view_scale: f64,
    /// Defaults to MV for two views, FS for one.
    #[serde(default)]
    pub representation: Option<Representation>,
    #[serde(default)]
    pub qp: Option<u32>,
    /// When set, every frame is stamped with this PSNR.
    #[serde(default)]
    pub psnr: Option<f64>,
}

impl SynthSpec {
    fn validate(&self) -> Result<(), SynthError> {
        let err = |msg: String| Err(SynthError::InvalidSpec(msg));
        if self.views == 0 || self.views > 2 {
            return err(format!("views must be 1 or 2, got {}", self.views));
        }
        if self.frames == 0 {
            return err("frames must be >= 1".to_string());
        }
        if !(self.fps.is_finite() && self.fps > 0.0) {
            return err(format!("fps must be finite and > 0, got {}", self.fps));
        }
        if self.gop == 0 {
            return err("gop must be >= 1".to_string());
        }
        for (name, d) in [("i", self.sizes.i), ("p", self.sizes.p), ("b", self.sizes.b)] {
            if !(d.location.is_finite() && d.location > 0.0) {
                return err(format!("sizes.{name}.location must be finite and > 0, got {}", d.location));
            }
            if !(d.dispersion.is_finite() && d.dispersion >= 0.0) {
                return err(format!("sizes.{name}.dispersion must be finite and >= 0, got {}", d.dispersion));
            }
        }
        if !(self.inter_view_scale.is_finite()
            && self.inter_view_scale > 0.0
            && self.inter_view_scale <= 1.0)
        {
            return err(format!("inter_view_scale must be in (0, 1], got {}", self.inter_view_scale));
        }
        if let Some(p) = self.psnr {
            if !(p.is_finite() && p > 0.0) {
                return err(format!("psnr must be finite and > 0, got {p}"));
            }
        }
        let representation = self.effective_representation();
        if representation.expected_views() != self.views {
            return err(format!(
                "representation {representation} requires {} view(s), got {}",
                representation.expected_views(),
                self.views
            ));
        }
        Ok(())
    }

    fn effective_representation(&self) -> Representation {
        self.representation.unwrap_or(if self.views == 2 {
            Representation::MV
        } else {
            Representation::FS
        })
    }
}

/// Frame type at 1-based index `m` on the GoP grid.
pub fn frame_type_at(m: u64, gop: u64, pattern: GopPattern) -> FrameType {
    let pos = (m - 1) % gop;
    if pos == 0 {
        return FrameType::I;
    }
    match pattern {
        // I B P B P ...: odd positions are B, even positions are anchors.
        GopPattern::B1 => {
            if pos % 2 == 1 {
                FrameType::B
            } else {
                FrameType::P
            }
        }
        // I BBBBBBB P BBBBBBB ...: anchors every 8 frames.
        GopPattern::B7 => {
            if pos.is_multiple_of(8) {
                FrameType::P
            } else {
                FrameType::B
            }
        }
        GopPattern::Other => FrameType::P,
    }
}

/// Generates a trace from `spec`. Deterministic: equal (spec, seed) pairs
/// produce identical traces. The result always passes
/// [`MultiviewTrace::validate`].
pub fn synthesize_trace(spec: &SynthSpec, seed: u64) -> Result<MultiviewTrace, SynthError> {
    spec.validate()?;

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut views: Vec<Vec<FrameRecord>> =
        (0..spec.views).map(|_| Vec::with_capacity(spec.frames as usize)).collect();

    // Draw order is fixed (frame major, view minor) so that determinism does
    // not depend on collection order.
    for m in 1..=spec.frames {
        let ft = frame_type_at(m, spec.gop, spec.pattern);
        let dist = spec.sizes.for_type(ft);
        for v in 1..=spec.views {
            let mut x = if dist.dispersion == 0.0 {
                dist.location
            } else {
                let ln = LogNormal::new(dist.location.ln(), dist.dispersion)
                    .expect("dispersion validated nonnegative");
                ln.sample(&mut rng)
            };
            if v >= 2 {
                x *= spec.inter_view_scale;
            }
            let size = x.round().max(0.0) as i64;
            views[v as usize - 1].push(FrameRecord {
                frame_index: m,
                view: v,
                frame_type: ft,
                size,
                psnr: spec.psnr,
            });
        }
    }

    Ok(MultiviewTrace {
        meta: TraceMeta {
            video_name: spec.name.clone(),
            representation: spec.effective_representation(),
            num_views: spec.views,
            num_frames: spec.frames,
            frame_rate: spec.fps,
            gop_length: spec.gop,
            gop_pattern: spec.pattern,
            quantizer: spec.qp,
        },
        views,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::trace::serialize_trace_to_string;

    fn base_spec() -> SynthSpec {
        SynthSpec {
            name: "synthetic".to_string(),
            views: 2,
            frames: 48,
            fps: 24.0,
            gop: 16,
            pattern: GopPattern::B1,
            sizes: FrameSizeModel {
                i: SizeDistribution { location: 90000.0, dispersion: 0.3 },
                p: SizeDistribution { location: 30000.0, dispersion: 0.4 },
                b: SizeDistribution { location: 12000.0, dispersion: 0.5 },
            },
            inter_view_scale: 0.6,
            representation: None,
            qp: None,
            psnr: Some(41.5),
        }
    }

    #[test]
    fn generation_is_deterministic_in_spec_and_seed() {
        let spec = base_spec();
        let a = synthesize_trace(&spec, 7).unwrap();
        let b = synthesize_trace(&spec, 7).unwrap();
        assert_eq!(a, b);
        assert_eq!(serialize_trace_to_string(&a), serialize_trace_to_string(&b));
        let c = synthesize_trace(&spec, 8).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn generated_traces_validate_clean() {
        let t = synthesize_trace(&base_spec(), 42).unwrap();
        assert_eq!(t.validate(), Vec::<String>::new());
        assert_eq!(t.meta.representation, Representation::MV);
        assert_eq!(t.views.len(), 2);
        assert_eq!(t.views[0].len(), 48);
    }

    #[test]
    fn b1_grid_places_frame_types() {
        // G = 16, B1: I at 1, 17, 33, ...; B at even offsets; P between.
        assert_eq!(frame_type_at(1, 16, GopPattern::B1), FrameType::I);
        assert_eq!(frame_type_at(2, 16, GopPattern::B1), FrameType::B);
        assert_eq!(frame_type_at(3, 16, GopPattern::B1), FrameType::P);
        assert_eq!(frame_type_at(16, 16, GopPattern::B1), FrameType::B);
        assert_eq!(frame_type_at(17, 16, GopPattern::B1), FrameType::I);
    }

    #[test]
    fn b7_grid_places_frame_types() {
        assert_eq!(frame_type_at(1, 16, GopPattern::B7), FrameType::I);
        for m in 2..=8 {
            assert_eq!(frame_type_at(m, 16, GopPattern::B7), FrameType::B, "m={m}");
        }
        assert_eq!(frame_type_at(9, 16, GopPattern::B7), FrameType::P);
        assert_eq!(frame_type_at(10, 16, GopPattern::B7), FrameType::B);
        assert_eq!(frame_type_at(17, 16, GopPattern::B7), FrameType::I);
    }

    #[test]
    fn zero_dispersion_gives_exact_sizes_and_scaling() {
        let mut spec = base_spec();
        spec.sizes.i.dispersion = 0.0;
        spec.sizes.p.dispersion = 0.0;
        spec.sizes.b.dispersion = 0.0;
        spec.inter_view_scale = 0.5;
        let t = synthesize_trace(&spec, 0).unwrap();
        for (r1, r2) in t.views[0].iter().zip(&t.views[1]) {
            let want = match r1.frame_type {
                FrameType::I => 90000,
                FrameType::P => 30000,
                _ => 12000,
            };
            assert_eq!(r1.size, want);
            assert_eq!(r2.size, want / 2);
        }
    }

    #[test]
    fn psnr_stamp_is_applied() {
        let t = synthesize_trace(&base_spec(), 1).unwrap();
        assert!(t.frames().all(|r| r.psnr == Some(41.5)));
        let mut spec = base_spec();
        spec.psnr = None;
        let t = synthesize_trace(&spec, 1).unwrap();
        assert!(t.frames().all(|r| r.psnr.is_none()));
    }

    #[test]
    fn invalid_specs_are_rejected() {
        let mut s = base_spec();
        s.views = 3;
        assert!(synthesize_trace(&s, 0).is_err());

        let mut s = base_spec();
        s.sizes.p.location = 0.0;
        assert!(synthesize_trace(&s, 0).is_err());

        let mut s = base_spec();
        s.sizes.b.dispersion = -0.1;
        assert!(synthesize_trace(&s, 0).is_err());

        let mut s = base_spec();
        s.inter_view_scale = 0.0;
        assert!(synthesize_trace(&s, 0).is_err());

        let mut s = base_spec();
        s.representation = Some(Representation::FS);
        assert!(synthesize_trace(&s, 0).is_err());
    }

    #[test]
    fn spec_round_trips_through_toml() {
        let spec = base_spec();
        let text = toml::to_string(&spec).unwrap();
        let back: SynthSpec = toml::from_str(&text).unwrap();
        assert_eq!(back, spec);
    }

    #[test]
    fn spec_defaults_apply() {
        let text = "\
views = 1
frames = 4
fps = 48.0
gop = 32
pattern = \"B7\"
[sizes.i]
location = 1000.0
dispersion = 0.0
[sizes.p]
location = 500.0
dispersion = 0.0
[sizes.b]
location = 100.0
dispersion = 0.0
";
        let spec: SynthSpec = toml::from_str(text).unwrap();
        assert_eq!(spec.name, "synthetic");
        assert_eq!(spec.inter_view_scale, 1.0);
        assert_eq!(spec.representation, None);
        let t = synthesize_trace(&spec, 0).unwrap();
        assert_eq!(t.meta.representation, Representation::FS);
        assert!(t.is_valid());
    }
}
