//! Canonical on-disk trace format.
//!
//! ```text
//! #!video=Alien Movie
//! #!representation=MV
//! #!views=2
//! #!frames=51200
//! #!fps=24
//! #!gop=16
//! #!pattern=B1
//! #!qp=28
//! # frame_index,view,frame_type,size_bytes[,psnr_db]
//! 1,1,I,53112,41.23
//! 1,2,I,21840,40.87
//! 2,1,B,9120,40.02
//! ...
//! ```
//!
//! `#!key=value` lines carry metadata and must precede the data rows. `qp` is
//! optional; everything else is mandatory unless supplied through
//! [`TraceMetaOverrides`]. Plain `#` lines and blank lines are ignored. Data
//! rows have 4 or 5 comma-separated fields; the serializer emits them sorted
//! by frame index, then view. Parsing a serialized trace reproduces the
//! original field for field.

use std::collections::HashMap;
use std::io::{self, BufRead, Write};
use std::str::FromStr;

use thiserror::Error;

use super::{FrameRecord, FrameType, GopPattern, MultiviewTrace, Representation, TraceMeta};

#[derive(Debug, Error)]
pub enum ParseError {
    #[error("line {line}: {msg}")]
    Malformed { line: usize, msg: String },
    #[error("line {line}: duplicate record for frame {frame}, view {view}")]
    DuplicateRecord { line: usize, frame: u64, view: u32 },
    #[error("missing header field(s): {0}")]
    MissingHeader(String),
    #[error("inconsistent frame counts: {0}")]
    FrameCount(String),
    #[error(transparent)]
    Io(#[from] io::Error),
}

/// Metadata supplied by the caller for inputs whose header is absent or
/// incomplete, e.g. bare frame-size dumps. Header fields present in the
/// input win over overrides.
#[derive(Debug, Clone, Default)]
pub struct TraceMetaOverrides {
    pub video: Option<String>,
    pub representation: Option<Representation>,
    pub views: Option<u32>,
    pub frames: Option<u64>,
    pub fps: Option<f64>,
    pub gop: Option<u64>,
    pub pattern: Option<GopPattern>,
    pub qp: Option<u32>,
}

fn malformed(line: usize, msg: impl Into<String>) -> ParseError {
    ParseError::Malformed { line, msg: msg.into() }
}

fn parse_field<T: FromStr>(line: usize, what: &str, raw: &str) -> Result<T, ParseError>
where
    T::Err: std::fmt::Display,
{
    raw.trim()
        .parse::<T>()
        .map_err(|e| malformed(line, format!("bad {what} {raw:?}: {e}")))
}

struct HeaderFields {
    values: HashMap<String, (usize, String)>,
}

impl HeaderFields {
    const KNOWN: [&'static str; 8] =
        ["video", "representation", "views", "frames", "fps", "gop", "pattern", "qp"];

    fn new() -> Self {
        HeaderFields { values: HashMap::new() }
    }

    fn insert(&mut self, line: usize, raw: &str) -> Result<(), ParseError> {
        let Some((key, value)) = raw.split_once('=') else {
            return Err(malformed(line, format!("header line {raw:?} is not key=value")));
        };
        let key = key.trim();
        if !Self::KNOWN.contains(&key) {
            return Err(malformed(line, format!("unknown header key {key:?}")));
        }
        if self.values.insert(key.to_string(), (line, value.trim().to_string())).is_some() {
            return Err(malformed(line, format!("duplicate header key {key:?}")));
        }
        Ok(())
    }

    fn take<T: FromStr>(&mut self, key: &str, fallback: Option<T>) -> Result<Option<T>, ParseError>
    where
        T::Err: std::fmt::Display,
    {
        match self.values.remove(key) {
            Some((line, raw)) => parse_field::<T>(line, key, &raw).map(Some),
            None => Ok(fallback),
        }
    }

    fn finish(mut self, ov: &TraceMetaOverrides) -> Result<TraceMeta, ParseError> {
        let video = match self.values.remove("video") {
            Some((_, raw)) => Some(raw),
            None => ov.video.clone(),
        };
        let representation = self.take("representation", ov.representation)?;
        let views = self.take("views", ov.views)?;
        let frames = self.take("frames", ov.frames)?;
        let fps = self.take("fps", ov.fps)?;
        let gop = self.take("gop", ov.gop)?;
        let pattern = self.take("pattern", ov.pattern)?;
        let qp = self.take("qp", ov.qp)?;

        let mut missing = Vec::new();
        for (name, present) in [
            ("video", video.is_some()),
            ("representation", representation.is_some()),
            ("views", views.is_some()),
            ("frames", frames.is_some()),
            ("fps", fps.is_some()),
            ("gop", gop.is_some()),
            ("pattern", pattern.is_some()),
        ] {
            if !present {
                missing.push(name);
            }
        }
        if !missing.is_empty() {
            return Err(ParseError::MissingHeader(missing.join(", ")));
        }

        Ok(TraceMeta {
            video_name: video.unwrap(),
            representation: representation.unwrap(),
            num_views: views.unwrap(),
            num_frames: frames.unwrap(),
            frame_rate: fps.unwrap(),
            gop_length: gop.unwrap(),
            gop_pattern: pattern.unwrap(),
            quantizer: qp,
        })
    }
}

/// Parses a trace from a reader, filling header gaps from `overrides`.
///
/// Data rows may arrive in any order; the result is stored sorted by
/// (frame, view). Errors carry the 1-based line number of the offending
/// input line where one exists.
pub fn parse_trace<R: BufRead>(
    reader: R,
    overrides: &TraceMetaOverrides,
) -> Result<MultiviewTrace, ParseError> {
    let mut headers = Some(HeaderFields::new());
    let mut meta: Option<TraceMeta> = None;
    // slots[v - 1][m - 1] = (line, record)
    let mut slots: Vec<Vec<Option<(usize, FrameRecord)>>> = Vec::new();

    for (idx, line) in reader.lines().enumerate() {
        let lineno = idx + 1;
        let line = line?;
        let trimmed = line.trim();
        if trimmed.is_empty() {
            continue;
        }
        if let Some(header) = trimmed.strip_prefix("#!") {
            match headers.as_mut() {
                Some(h) => h.insert(lineno, header)?,
                None => {
                    return Err(malformed(lineno, "header line after the first data row"));
                }
            }
            continue;
        }
        if trimmed.starts_with('#') {
            continue;
        }

        // First data row freezes the header section.
        if meta.is_none() {
            let m = headers.take().unwrap().finish(overrides)?;
            slots = vec![vec![None; m.num_frames as usize]; m.num_views as usize];
            meta = Some(m);
        }
        let meta = meta.as_ref().unwrap();

        let fields: Vec<&str> = trimmed.split(',').collect();
        if fields.len() != 4 && fields.len() != 5 {
            return Err(malformed(
                lineno,
                format!("expected 4 or 5 comma-separated fields, got {}", fields.len()),
            ));
        }
        let frame_index: u64 = parse_field(lineno, "frame_index", fields[0])?;
        let view: u32 = parse_field(lineno, "view", fields[1])?;
        let frame_type: FrameType = parse_field(lineno, "frame_type", fields[2])?;
        let size: i64 = parse_field(lineno, "size_bytes", fields[3])?;
        let psnr: Option<f64> = match fields.get(4) {
            Some(raw) => Some(parse_field(lineno, "psnr_db", raw)?),
            None => None,
        };

        if frame_index == 0 || frame_index > meta.num_frames {
            return Err(malformed(
                lineno,
                format!("frame_index {frame_index} out of range 1..={}", meta.num_frames),
            ));
        }
        if view == 0 || view > meta.num_views {
            return Err(malformed(
                lineno,
                format!("view {view} out of range 1..={}", meta.num_views),
            ));
        }
        if size < 0 {
            return Err(malformed(lineno, format!("size_bytes must be >= 0, got {size}")));
        }
        if let Some(p) = psnr {
            if !(p.is_finite() && p > 0.0) {
                return Err(malformed(lineno, format!("psnr_db must be finite and > 0, got {p}")));
            }
        }

        let slot = &mut slots[view as usize - 1][frame_index as usize - 1];
        if slot.is_some() {
            return Err(ParseError::DuplicateRecord { line: lineno, frame: frame_index, view });
        }
        *slot = Some((lineno, FrameRecord { frame_index, view, frame_type, size, psnr }));
    }

    let meta = match meta {
        Some(m) => m,
        // No data rows at all: still finalize so header errors surface first.
        None => {
            let m = headers.take().unwrap().finish(overrides)?;
            slots = vec![vec![None; m.num_frames as usize]; m.num_views as usize];
            m
        }
    };

    let mut views = Vec::with_capacity(slots.len());
    let mut counts = Vec::with_capacity(slots.len());
    for (vi, col) in slots.into_iter().enumerate() {
        let mut frames = Vec::with_capacity(col.len());
        let mut have = 0u64;
        for rec in col.into_iter().flatten() {
            have += 1;
            frames.push(rec.1);
        }
        counts.push((vi as u32 + 1, have));
        views.push(frames);
    }
    if counts.iter().any(|&(_, have)| have != meta.num_frames) {
        let detail = counts
            .iter()
            .map(|(v, have)| format!("view {v} has {have}"))
            .collect::<Vec<_>>()
            .join(", ");
        return Err(ParseError::FrameCount(format!(
            "{detail}; header declares frames={}",
            meta.num_frames
        )));
    }

    Ok(MultiviewTrace { meta, views })
}

/// [`parse_trace`] over an in-memory string with no overrides.
pub fn parse_trace_str(input: &str) -> Result<MultiviewTrace, ParseError> {
    parse_trace(input.as_bytes(), &TraceMetaOverrides::default())
}

/// Writes a trace in the canonical format. Inverse of [`parse_trace`]:
/// parsing the output reproduces the trace field for field.
pub fn serialize_trace<W: Write>(trace: &MultiviewTrace, mut w: W) -> io::Result<()> {
    let meta = &trace.meta;
    writeln!(w, "#!video={}", meta.video_name)?;
    writeln!(w, "#!representation={}", meta.representation)?;
    writeln!(w, "#!views={}", meta.num_views)?;
    writeln!(w, "#!frames={}", meta.num_frames)?;
    writeln!(w, "#!fps={}", meta.frame_rate)?;
    writeln!(w, "#!gop={}", meta.gop_length)?;
    writeln!(w, "#!pattern={}", meta.gop_pattern)?;
    if let Some(qp) = meta.quantizer {
        writeln!(w, "#!qp={qp}")?;
    }
    writeln!(w, "# frame_index,view,frame_type,size_bytes[,psnr_db]")?;
    for m in 0..meta.num_frames as usize {
        for view in &trace.views {
            let Some(rec) = view.get(m) else { continue };
            match rec.psnr {
                Some(p) => writeln!(
                    w,
                    "{},{},{},{},{}",
                    rec.frame_index, rec.view, rec.frame_type, rec.size, p
                )?,
                None => {
                    writeln!(w, "{},{},{},{}", rec.frame_index, rec.view, rec.frame_type, rec.size)?
                }
            }
        }
    }
    Ok(())
}

/// [`serialize_trace`] into a `String`.
pub fn serialize_trace_to_string(trace: &MultiviewTrace) -> String {
    let mut buf = Vec::new();
    serialize_trace(trace, &mut buf).expect("writing to a Vec cannot fail");
    String::from_utf8(buf).expect("serialized trace is UTF-8")
}
