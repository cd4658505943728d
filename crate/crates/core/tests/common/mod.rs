//! Helpers shared by the integration test crates.

#![allow(dead_code)]

use mvtraffic::streamshape::DemandSequence;
use mvtraffic::trace::{
    FrameRecord, FrameType, GopPattern, MultiviewTrace, Representation, TraceMeta,
};

pub fn demand(entries: &[u64], frame_rate: f64) -> DemandSequence {
    DemandSequence { demand: entries.to_vec(), frame_rate }
}

/// A minimal valid trace at 24 fps with the given per-view frame sizes.
/// One view is stored as FS, two as MV.
pub fn trace_from_sizes(views: &[Vec<i64>]) -> MultiviewTrace {
    let num_views = views.len() as u32;
    let num_frames = views[0].len() as u64;
    let representation =
        if num_views == 1 { Representation::FS } else { Representation::MV };
    let meta = TraceMeta {
        video_name: "clip".to_string(),
        representation,
        num_views,
        num_frames,
        frame_rate: 24.0,
        gop_length: 16,
        gop_pattern: GopPattern::B1,
        quantizer: None,
    };
    let views = views
        .iter()
        .enumerate()
        .map(|(vi, sizes)| {
            sizes
                .iter()
                .enumerate()
                .map(|(mi, &size)| FrameRecord {
                    frame_index: mi as u64 + 1,
                    view: vi as u32 + 1,
                    frame_type: FrameType::P,
                    size,
                    psnr: None,
                })
                .collect()
        })
        .collect();
    MultiviewTrace { meta, views }
}

/// Runs the CLI against byte buffers and returns (exit code, stdout, stderr).
pub fn run_cli(args: &[&str]) -> (i32, String, String) {
    let mut out = Vec::new();
    let mut err = Vec::new();
    let code = mvtraffic::cli::run(args.iter().copied(), &mut out, &mut err);
    (
        code,
        String::from_utf8(out).expect("stdout is UTF-8"),
        String::from_utf8(err).expect("stderr is UTF-8"),
    )
}

/// Parses CSV text into (header, rows).
pub fn parse_csv(text: &str) -> (Vec<String>, Vec<Vec<String>>) {
    let mut reader = csv::Reader::from_reader(text.as_bytes());
    let header = reader
        .headers()
        .expect("CSV header")
        .iter()
        .map(str::to_string)
        .collect();
    let rows = reader
        .records()
        .map(|r| r.expect("CSV record").iter().map(str::to_string).collect())
        .collect();
    (header, rows)
}

/// Column index by name, panicking with the header contents on a miss.
pub fn column(header: &[String], name: &str) -> usize {
    header
        .iter()
        .position(|h| h == name)
        .unwrap_or_else(|| panic!("no column {name} in {header:?}"))
}
