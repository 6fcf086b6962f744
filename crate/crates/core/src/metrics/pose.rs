//! Static accuracy/repeatability, jitter, trajectory error statistics, path
//! deviation and drift.

use serde::{Deserialize, Serialize};

use super::Axes;
use crate::error::{Error, Result};
use crate::model::{Pose, PoseSeries, Quaternion, Timestamp, Vec3};
use crate::reference::ReferencePath;
use crate::stats;
use crate::temporal::PairedSeries;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StaticPoseResult {
    pub pose_id: String,
    pub n: usize,
    /// Mean over repetitions of `‖tracker − truth‖`, mm.
    pub mean_acc: f64,
    pub max_error: f64,
    /// 1σ spread of the per-repetition tracker positions about their
    /// centroid, mm. Absent for a single repetition.
    pub repeatability: Option<f64>,
    /// `l̄ + 3 S_l`, only when requested.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub repeatability_iso: Option<f64>,
    /// Mean geodesic angle to the truth orientation, degrees.
    pub orient_acc: f64,
    pub jitter_pos: Option<f64>,
    pub jitter_rot: Option<f64>,
}

/// Mean position of the valid samples.
pub fn mean_position(samples: &[Pose]) -> Option<Vec3> {
    let valid: Vec<Vec3> = samples.iter().filter(|s| s.valid).map(|s| s.p).collect();
    (!valid.is_empty()).then(|| valid.iter().sum::<Vec3>() / valid.len() as f64)
}

/// Chordal mean of unit quaternions after aligning signs with the first.
/// Accurate for the small spreads seen at a single pose.
pub fn mean_orientation(samples: &[Pose]) -> Option<Quaternion> {
    let mut it = samples.iter().filter(|s| s.valid).map(|s| s.q);
    let first = it.next()?;
    let mut acc = first.to_array();
    for q in it {
        let sign = if first.dot(&q) < 0.0 { -1.0 } else { 1.0 };
        for (a, c) in acc.iter_mut().zip(q.to_array()) {
            *a += sign * c;
        }
    }
    Quaternion::from_unnormalized(acc[0], acc[1], acc[2], acc[3]).ok()
}

/// Accuracy and repeatability at one static pose from segmented dwell
/// windows. Each repetition is reduced to its mean tracker and truth
/// position before comparison.
pub fn static_metrics(
    pose_id: &str,
    reps: &[PoseSeries],
    truth_reps: &[PoseSeries],
    iso_repeatability: bool,
) -> Result<StaticPoseResult> {
    if reps.len() != truth_reps.len() {
        return Err(Error::InvalidParameter(format!(
            "{} tracker repetitions but {} truth repetitions",
            reps.len(),
            truth_reps.len()
        )));
    }
    let mut tracker_pts = Vec::new();
    let mut errors = Vec::new();
    let mut angles = Vec::new();
    let mut jitter_p = Vec::new();
    let mut jitter_r = Vec::new();
    for (rep, truth) in reps.iter().zip(truth_reps) {
        let (Some(tp), Some(gp)) = (mean_position(rep.samples()), mean_position(truth.samples()))
        else {
            continue;
        };
        tracker_pts.push(tp);
        errors.push((tp - gp).norm());
        if let (Some(tq), Some(gq)) = (
            mean_orientation(rep.samples()),
            mean_orientation(truth.samples()),
        ) {
            angles.push(tq.angle_to(&gq).to_degrees());
        }
        if let Ok((p, r)) = jitter(rep) {
            jitter_p.push(p);
            jitter_r.push(r);
        }
    }
    let n = errors.len();
    if n == 0 {
        return Err(Error::InsufficientData(format!(
            "{pose_id}: no repetition with valid samples"
        )));
    }
    let centroid = tracker_pts.iter().sum::<Vec3>() / n as f64;
    let dist: Vec<f64> = tracker_pts.iter().map(|p| (p - centroid).norm()).collect();
    let repeatability =
        (n >= 2).then(|| (dist.iter().map(|d| d * d).sum::<f64>() / (n - 1) as f64).sqrt());
    let repeatability_iso =
        (iso_repeatability && n >= 2).then(|| stats::mean(&dist) + 3.0 * stats::std_sample(&dist));
    Ok(StaticPoseResult {
        pose_id: pose_id.to_string(),
        n,
        mean_acc: stats::mean(&errors),
        max_error: errors.iter().copied().fold(0.0, f64::max),
        repeatability,
        repeatability_iso,
        orient_acc: if angles.is_empty() {
            0.0
        } else {
            stats::mean(&angles)
        },
        jitter_pos: (!jitter_p.is_empty()).then(|| stats::rms(&jitter_p)),
        jitter_rot: (!jitter_r.is_empty()).then(|| stats::rms(&jitter_r)),
    })
}

/// Position (mm) and rotation (deg) RMS about the window mean.
pub fn jitter(series: &PoseSeries) -> Result<(f64, f64)> {
    let valid: Vec<&Pose> = series.samples().iter().filter(|s| s.valid).collect();
    if valid.len() < 10 {
        return Err(Error::InsufficientData(format!(
            "jitter needs 10 valid samples, got {}",
            valid.len()
        )));
    }
    let owned: Vec<Pose> = valid.iter().map(|p| **p).collect();
    let mp = mean_position(&owned).unwrap_or_default();
    let mq = mean_orientation(&owned).unwrap_or(Quaternion::IDENTITY);
    let n = owned.len() as f64;
    let pos = (owned.iter().map(|s| (s.p - mp).norm_squared()).sum::<f64>() / n).sqrt();
    let rot = (owned
        .iter()
        .map(|s| mq.angle_to(&s.q).to_degrees().powi(2))
        .sum::<f64>()
        / n)
        .sqrt();
    Ok((pos, rot))
}

/// Signed per-sample errors `tracker − truth`.
#[derive(Clone, Debug, PartialEq, Default)]
pub struct ErrorSeries {
    pub t: Vec<Timestamp>,
    pub e: Vec<Vec3>,
    pub e3d: Vec<f64>,
    /// Geodesic angle between tracker and truth orientation, degrees.
    pub rot_deg: Vec<f64>,
}

impl ErrorSeries {
    pub fn len(&self) -> usize {
        self.e.len()
    }

    pub fn is_empty(&self) -> bool {
        self.e.is_empty()
    }

    pub fn mean_vector(&self) -> Vec3 {
        self.e.iter().sum::<Vec3>() / self.e.len().max(1) as f64
    }

    /// Same series with the mean error vector subtracted.
    pub fn debiased(&self) -> ErrorSeries {
        let m = self.mean_vector();
        let e: Vec<Vec3> = self.e.iter().map(|v| v - m).collect();
        ErrorSeries {
            t: self.t.clone(),
            e3d: e.iter().map(|v| v.norm()).collect(),
            e,
            rot_deg: self.rot_deg.clone(),
        }
    }
}

pub fn paired_error_series(paired: &PairedSeries) -> Result<ErrorSeries> {
    if paired.is_empty() {
        return Err(Error::InsufficientData("no paired samples".into()));
    }
    let mut out = ErrorSeries::default();
    for p in &paired.pairs {
        let e = p.tracker.p - p.truth.p;
        out.t.push(p.tracker.t);
        out.e.push(e);
        out.e3d.push(e.norm());
        out.rot_deg
            .push(p.tracker.q.angle_to(&p.truth.q).to_degrees());
    }
    Ok(out)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ErrorStats {
    pub n: usize,
    /// Population std of the signed per-axis errors; 3D is the std of `e3d`.
    pub sigma: Axes,
    pub rms: Axes,
    /// Largest `|e_axis|` and largest `e3d`.
    pub max: Axes,
    /// Mean `e3d`, mm.
    pub mean_3d: f64,
    /// Mean orientation error, degrees.
    pub mean_rot_deg: f64,
}

pub fn error_stats(errors: &ErrorSeries) -> Result<ErrorStats> {
    let n = errors.len();
    if n < 2 {
        return Err(Error::InsufficientData(format!(
            "error statistics need 2 samples, got {n}"
        )));
    }
    let axis = |k: usize| -> Vec<f64> { errors.e.iter().map(|v| v[k]).collect() };
    let (ex, ey, ez) = (axis(0), axis(1), axis(2));
    let amax = |v: &[f64]| v.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    Ok(ErrorStats {
        n,
        sigma: Axes {
            x: stats::std_population(&ex),
            y: stats::std_population(&ey),
            z: stats::std_population(&ez),
            d3: stats::std_population(&errors.e3d),
        },
        rms: Axes {
            x: stats::rms(&ex),
            y: stats::rms(&ey),
            z: stats::rms(&ez),
            d3: stats::rms(&errors.e3d),
        },
        max: Axes {
            x: amax(&ex),
            y: amax(&ey),
            z: amax(&ez),
            d3: amax(&errors.e3d),
        },
        mean_3d: stats::mean(&errors.e3d),
        mean_rot_deg: if errors.rot_deg.is_empty() {
            0.0
        } else {
            stats::mean(&errors.rot_deg)
        },
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PathDeviation {
    pub n: usize,
    pub mean: f64,
    pub std: f64,
    pub max: f64,
}

/// Distance from `p` to the segment `a–b`.
pub fn point_segment_distance(p: &Vec3, a: &Vec3, b: &Vec3) -> f64 {
    let ab = b - a;
    let len2 = ab.norm_squared();
    let f = if len2 > 0.0 {
        ((p - a).dot(&ab) / len2).clamp(0.0, 1.0)
    } else {
        0.0
    };
    (p - (a + ab * f)).norm()
}

/// Distance from `p` to the nearest point of the polyline.
pub fn distance_to_path(p: &Vec3, path: &ReferencePath) -> f64 {
    path.points()
        .windows(2)
        .map(|w| point_segment_distance(p, &w[0], &w[1]))
        .fold(f64::INFINITY, f64::min)
}

/// Mean, std and max distance of the valid samples to the reference path.
pub fn path_deviation(series: &PoseSeries, path: &ReferencePath) -> Result<PathDeviation> {
    if series.frame() != path.frame() {
        return Err(Error::FrameMismatch {
            expected: path.frame().to_string(),
            found: series.frame().to_string(),
        });
    }
    let d: Vec<f64> = series
        .samples()
        .iter()
        .filter(|s| s.valid)
        .map(|s| distance_to_path(&s.p, path))
        .collect();
    if d.is_empty() {
        return Err(Error::InsufficientData(
            "no valid samples for path deviation".into(),
        ));
    }
    Ok(PathDeviation {
        n: d.len(),
        mean: stats::mean(&d),
        std: stats::std_population(&d),
        max: d.iter().copied().fold(0.0, f64::max),
    })
}

/// OLS slope of `e3d` against time, mm/s.
pub fn drift_rate(errors: &ErrorSeries) -> Result<f64> {
    let t0 = errors.t.first().copied().unwrap_or_default();
    let ts: Vec<f64> = errors.t.iter().map(|t| t.secs_since(t0)).collect();
    stats::ols_slope(&ts, &errors.e3d)
        .ok_or_else(|| Error::InsufficientData("drift needs 2 distinct timestamps".into()))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DynamicTrialResult {
    pub trial_id: String,
    pub trajectory: String,
    pub position: String,
    pub speed: f64,
    pub n_samples: usize,
    pub stats: ErrorStats,
    /// Mean error vector, mm.
    pub bias: [f64; 3],
    /// 3D RMS after removing `bias`, mm.
    pub debiased_rms_3d: f64,
    pub drift_3d: Option<f64>,
    pub path: Option<PathDeviation>,
}
