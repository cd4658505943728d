//! Small trace builders shared by the unit tests.

use crate::trace::{FrameRecord, FrameType, GopPattern, MultiviewTrace, Representation, TraceMeta};

pub(crate) fn record(m: u64, v: u32, ft: FrameType, size: i64) -> FrameRecord {
    FrameRecord { frame_index: m, view: v, frame_type: ft, size, psnr: None }
}

/// Builds a trace with one inner vec of sizes per view, all P frames,
/// f = 24, G = 16, pattern B1. Representation is MV for two views and FS
/// for one, so the result is valid whenever the views are rectangular.
pub(crate) fn trace_from_sizes(sizes: &[Vec<i64>]) -> MultiviewTrace {
    let views: Vec<Vec<FrameRecord>> = sizes
        .iter()
        .enumerate()
        .map(|(vi, col)| {
            col.iter()
                .enumerate()
                .map(|(mi, &s)| record(mi as u64 + 1, vi as u32 + 1, FrameType::P, s))
                .collect()
        })
        .collect();
    let num_views = views.len() as u32;
    let num_frames = views.first().map_or(0, |f| f.len() as u64);
    MultiviewTrace {
        meta: TraceMeta {
            video_name: "test".to_string(),
            representation: if num_views == 2 { Representation::MV } else { Representation::FS },
            num_views,
            num_frames,
            frame_rate: 24.0,
            gop_length: 16,
            gop_pattern: GopPattern::B1,
            quantizer: None,
        },
        views,
    }
}

/// Same trace with every frame of every view given the same PSNR.
pub(crate) fn with_constant_psnr(mut t: MultiviewTrace, psnr: f64) -> MultiviewTrace {
    for view in &mut t.views {
        for rec in view {
            rec.psnr = Some(psnr);
        }
    }
    t
}

/// Per-view PSNR values, one per view, applied to every frame of that view.
pub(crate) fn with_view_psnr(mut t: MultiviewTrace, psnr: &[f64]) -> MultiviewTrace {
    for (view, &p) in t.views.iter_mut().zip(psnr) {
        for rec in view {
            rec.psnr = Some(p);
        }
    }
    t
}
