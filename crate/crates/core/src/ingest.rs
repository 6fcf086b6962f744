//! Pose-log CSV reading and writing, and repetition segmentation.
//!
//! Log schema (header mandatory, UTF-8, `.` decimal separator):
//!
//! ```text
//! t_ns,x_mm,y_mm,z_mm,qw,qx,qy,qz,valid
//! ```
//!
//! `t_ns` is an integer nanosecond timestamp, orientation is a Hamilton
//! quaternion with the scalar first, and `valid` is `0` or `1`.

use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::manifest::{Category, EventKind, TrialManifest};
use crate::model::{FrameId, Pose, PoseSeries, Quaternion, Timestamp, Vec3};

pub const LOG_COLUMNS: [&str; 9] = [
    "t_ns", "x_mm", "y_mm", "z_mm", "qw", "qx", "qy", "qz", "valid",
];

/// Fraction of dropped rows above which a log is treated as corrupt.
pub const MAX_DROP_FRACTION: f64 = 0.5;

#[derive(Clone, Debug)]
pub struct PoseLog {
    pub series: PoseSeries,
    pub total_rows: usize,
    pub dropped_rows: usize,
}

/// Reads a pose log. Rows with unparsable or non-finite values, an invalid
/// quaternion, or a timestamp not after the previous kept row are dropped
/// and counted.
pub fn parse_pose_log(path: impl AsRef<Path>, frame: FrameId) -> Result<PoseLog> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(BufReader::new(file));
    let headers = reader.headers()?.clone();
    let mut idx = [0usize; 9];
    for (slot, name) in idx.iter_mut().zip(LOG_COLUMNS) {
        *slot = headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::MissingColumn {
                path: path.to_path_buf(),
                column: name.to_string(),
            })?;
    }

    let mut samples: Vec<Pose> = Vec::new();
    let mut total = 0usize;
    let mut dropped = 0usize;
    let mut record = csv::StringRecord::new();
    loop {
        match reader.read_record(&mut record) {
            Ok(true) => {}
            Ok(false) => break,
            Err(e) if e.is_io_error() => return Err(e.into()),
            Err(_) => {
                total += 1;
                dropped += 1;
                continue;
            }
        }
        total += 1;
        match parse_row(&record, &idx, frame) {
            Some(pose) if samples.last().is_none_or(|l| l.t < pose.t) => samples.push(pose),
            _ => dropped += 1,
        }
    }

    if total == 0 {
        return Err(Error::EmptyLog {
            path: path.to_path_buf(),
        });
    }
    if dropped as f64 > MAX_DROP_FRACTION * total as f64 {
        return Err(Error::CorruptLog {
            path: path.to_path_buf(),
            dropped,
            total,
        });
    }
    if dropped > 0 {
        log::warn!("{}: dropped {dropped} of {total} rows", path.display());
    }
    let series = PoseSeries::with_estimated_rate(frame, samples, 1.0)?;
    Ok(PoseLog {
        series,
        total_rows: total,
        dropped_rows: dropped,
    })
}

fn parse_row(rec: &csv::StringRecord, idx: &[usize; 9], frame: FrameId) -> Option<Pose> {
    let t: u64 = rec.get(idx[0])?.parse().ok()?;
    let mut v = [0.0f64; 7];
    for (k, slot) in v.iter_mut().enumerate() {
        let x: f64 = rec.get(idx[k + 1])?.parse().ok()?;
        if !x.is_finite() {
            return None;
        }
        *slot = x;
    }
    let valid = match rec.get(idx[8])? {
        "1" => true,
        "0" => false,
        _ => return None,
    };
    let q = match Quaternion::new(v[3], v[4], v[5], v[6]) {
        Ok(q) => q,
        Err(_) if !valid => Quaternion::IDENTITY,
        Err(_) => return None,
    };
    Some(Pose {
        t: Timestamp::from_nanos(t),
        p: Vec3::new(v[0], v[1], v[2]),
        q,
        frame,
        valid,
    })
}

/// Writes a series in the pose-log schema. Floats use the shortest
/// representation that round-trips exactly, so output is byte-stable.
pub fn write_pose_log(path: impl AsRef<Path>, series: &PoseSeries) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    write_pose_log_to(&mut w, series).map_err(|e| Error::io(path, e))?;
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn write_pose_log_to(w: &mut impl Write, series: &PoseSeries) -> std::io::Result<()> {
    writeln!(w, "{}", LOG_COLUMNS.join(","))?;
    for s in series.samples() {
        let q = s.q.to_array();
        writeln!(
            w,
            "{},{},{},{},{},{},{},{},{}",
            s.t.nanos(),
            s.p.x,
            s.p.y,
            s.p.z,
            q[0],
            q[1],
            q[2],
            q[3],
            u8::from(s.valid)
        )?;
    }
    Ok(())
}

/// Thresholds for detecting settled dwell periods when a trial carries no
/// repetition annotations.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SegmentationConfig {
    /// Speed below which the tool counts as settled, mm/s.
    pub v_settle: f64,
    /// Length of the trailing window the speed is measured over, s.
    pub window_s: f64,
    /// Minimum settled duration for a dwell, s.
    pub t_settle_s: f64,
}

impl Default for SegmentationConfig {
    fn default() -> Self {
        SegmentationConfig {
            v_settle: 1.0,
            window_s: 0.2,
            t_settle_s: 0.5,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SegmentationMethod {
    Annotated,
    DwellDetection,
    WholeSeries,
}

#[derive(Clone, Debug)]
pub struct Segmentation {
    pub method: SegmentationMethod,
    /// `(start, end)` of each repetition, inclusive, non-overlapping.
    pub windows: Vec<(Timestamp, Timestamp)>,
    pub segments: Vec<PoseSeries>,
    pub warnings: Vec<String>,
}

/// Splits a trial recording into its repetitions.
///
/// Annotated `REP_START`/`REP_END` pairs take precedence. For static trials
/// each window is narrowed to its settled dwell; without annotations the
/// dwell detector alone delimits repetitions. Finding fewer repetitions than
/// the manifest declares yields a warning and the partial result.
pub fn segment_repetitions(
    series: &PoseSeries,
    manifest: &TrialManifest,
    cfg: &SegmentationConfig,
) -> Segmentation {
    let mut warnings = Vec::new();
    let is_static = manifest.category == Category::StaticPose;
    let annotated = annotated_windows(manifest, &mut warnings);

    let (method, windows) = if !annotated.is_empty() {
        let windows = if is_static {
            annotated
                .iter()
                .filter_map(|&(a, b)| {
                    let sub = series.slice_time(a, b);
                    let dwell = detect_dwells(&sub, cfg)
                        .into_iter()
                        .max_by_key(|(s, e)| e.diff_ns(*s));
                    if dwell.is_none() {
                        warnings.push(format!(
                            "no settled dwell inside repetition window {a}..{b}"
                        ));
                    }
                    dwell
                })
                .collect()
        } else {
            annotated
        };
        (SegmentationMethod::Annotated, windows)
    } else if is_static {
        (
            SegmentationMethod::DwellDetection,
            detect_dwells(series, cfg),
        )
    } else {
        let whole = match (series.first(), series.last()) {
            (Some(a), Some(b)) => vec![(a.t, b.t)],
            _ => Vec::new(),
        };
        (SegmentationMethod::WholeSeries, whole)
    };

    let segments: Vec<PoseSeries> = windows
        .iter()
        .map(|&(a, b)| series.slice_time(a, b))
        .collect();
    let expected = manifest.repetitions as usize;
    if segments.len() < expected {
        warnings.push(format!(
            "{}: found {} of {} repetitions",
            manifest.trial_id,
            segments.len(),
            expected
        ));
    }
    Segmentation {
        method,
        windows,
        segments,
        warnings,
    }
}

fn annotated_windows(
    manifest: &TrialManifest,
    warnings: &mut Vec<String>,
) -> Vec<(Timestamp, Timestamp)> {
    let starts = manifest.events_of(|k| k == EventKind::RepStart);
    let ends = manifest.events_of(|k| k == EventKind::RepEnd);
    let mut windows = Vec::new();
    let mut end_iter = ends.iter().peekable();
    for (i, s) in starts.iter().enumerate() {
        let next_start = starts.get(i + 1).map(|n| n.t_start);
        while end_iter.peek().is_some_and(|e| e.t_end < s.t_start) {
            end_iter.next();
        }
        match end_iter.peek() {
            Some(e) if next_start.is_none_or(|n| e.t_end <= n) => {
                windows.push((s.t_start, e.t_end));
                end_iter.next();
            }
            _ => warnings.push(format!(
                "REP_START at {} has no matching REP_END",
                s.t_start
            )),
        }
    }
    windows
}

/// Settled intervals: union of trailing windows whose end-to-end speed is
/// below `v_settle`, kept when at least `t_settle_s` long.
pub fn detect_dwells(series: &PoseSeries, cfg: &SegmentationConfig) -> Vec<(Timestamp, Timestamp)> {
    let samples: Vec<&Pose> = series.samples().iter().filter(|s| s.valid).collect();
    let window_ns = (cfg.window_s * 1e9).round() as u64;
    let min_span_ns = window_ns / 2;
    let settle_ns = (cfg.t_settle_s * 1e9).round() as i64;

    let mut runs: Vec<(Timestamp, Timestamp)> = Vec::new();
    let mut j = 0usize;
    for i in 0..samples.len() {
        let lower = samples[i].t.saturating_sub_ns(window_ns);
        while samples[j].t < lower {
            j += 1;
        }
        let span = samples[i].t.diff_ns(samples[j].t);
        if j == i || span < min_span_ns as i64 {
            continue;
        }
        let speed = (samples[i].p - samples[j].p).norm() / (span as f64 * 1e-9);
        if speed >= cfg.v_settle {
            continue;
        }
        let (a, b) = (samples[j].t, samples[i].t);
        match runs.last_mut() {
            Some(last) if a <= last.1 => last.1 = last.1.max(b),
            _ => runs.push((a, b)),
        }
    }
    runs.retain(|(a, b)| b.diff_ns(*a) >= settle_ns);
    runs
}
