//! Outlier rejection: Z-score and IQR fences on the 3D error magnitude, and
//! a kinematic plausibility check on tracker positions.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::Pose;
use crate::stats;
use crate::temporal::PairedSeries;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Stage {
    Zscore,
    Iqr,
    Kinematic,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CleaningConfig {
    pub zscore_k: f64,
    /// Default 3.0 rather than the textbook 1.5: at 1.5 the fence cuts
    /// into the tails of Gaussian-like errors (~0.7 % of inliers), which is
    /// more than the cleaning budget allows.
    pub iqr_k: f64,
    /// Fixed kinematic ceiling in mm/s. When unset it is derived from the
    /// trial speed as `max(vmax_factor × speed, vmax_floor)`.
    pub vmax: Option<f64>,
    pub vmax_factor: f64,
    pub vmax_floor: f64,
    pub enabled_stages: Vec<Stage>,
    /// Total rejected fraction above which the trial is flagged.
    pub warn_fraction: f64,
}

impl Default for CleaningConfig {
    fn default() -> Self {
        CleaningConfig {
            zscore_k: 3.0,
            iqr_k: 3.0,
            vmax: None,
            vmax_factor: 10.0,
            vmax_floor: 100.0,
            enabled_stages: vec![Stage::Zscore, Stage::Iqr, Stage::Kinematic],
            warn_fraction: 0.3,
        }
    }
}

impl CleaningConfig {
    pub fn vmax_for(&self, trial_speed: f64) -> f64 {
        self.vmax
            .unwrap_or_else(|| (self.vmax_factor * trial_speed).max(self.vmax_floor))
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("zscore_k", self.zscore_k),
            ("iqr_k", self.iqr_k),
            ("vmax_factor", self.vmax_factor),
            ("vmax_floor", self.vmax_floor),
            ("vmax", self.vmax.unwrap_or(1.0)),
            ("warn_fraction", self.warn_fraction),
        ];
        for (name, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::InvalidParameter(format!(
                    "cleaning.{name} must be > 0, got {v}"
                )));
            }
        }
        Ok(())
    }
}

/// Result of one filter: a keep-mask aligned with the input plus the fence
/// that produced it. For the kinematic filter the fence is `[0, vmax]` in
/// mm/s.
#[derive(Clone, Debug, PartialEq)]
pub struct FilterOutcome {
    pub kept: Vec<bool>,
    pub rejected: usize,
    pub lower: f64,
    pub upper: f64,
}

impl FilterOutcome {
    fn from_mask(kept: Vec<bool>, lower: f64, upper: f64) -> Self {
        let rejected = kept.iter().filter(|k| !**k).count();
        FilterOutcome {
            kept,
            rejected,
            lower,
            upper,
        }
    }
}

/// Rejects values with `|v − mean| ≥ k·std` (population std of the whole
/// input). The boundary is inclusive so that a lone value sitting exactly
/// `k` standard deviations out is caught. Zero variance rejects nothing.
pub fn zscore_filter(values: &[f64], k: f64) -> Result<FilterOutcome> {
    if values.len() < 3 {
        return Err(Error::InsufficientData(format!(
            "z-score filter needs 3 values, got {}",
            values.len()
        )));
    }
    let mean = stats::mean(values);
    let std = stats::std_population(values);
    if std == 0.0 {
        return Ok(FilterOutcome::from_mask(
            vec![true; values.len()],
            mean,
            mean,
        ));
    }
    let kept = values.iter().map(|v| (v - mean).abs() < k * std).collect();
    Ok(FilterOutcome::from_mask(
        kept,
        mean - k * std,
        mean + k * std,
    ))
}

/// Rejects values outside `[Q1 − k·IQR, Q3 + k·IQR]`, quartiles by linear
/// interpolation between order statistics. With `IQR = 0` the fence
/// collapses onto the quartiles and anything strictly outside goes.
pub fn iqr_filter(values: &[f64], k: f64) -> Result<FilterOutcome> {
    if values.len() < 4 {
        return Err(Error::InsufficientData(format!(
            "IQR filter needs 4 values, got {}",
            values.len()
        )));
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let q1 = stats::quantile_sorted(&sorted, 0.25);
    let q3 = stats::quantile_sorted(&sorted, 0.75);
    let iqr = q3 - q1;
    let (lo, hi) = (q1 - k * iqr, q3 + k * iqr);
    let kept = values.iter().map(|&v| v >= lo && v <= hi).collect();
    Ok(FilterOutcome::from_mask(kept, lo, hi))
}

/// Rejects samples whose implied speed from the last kept sample exceeds
/// `vmax` (mm/s). A zero time step rejects the later sample.
///
/// The initial anchor is the first sample whose speed to its successor is
/// plausible; samples before it are checked backwards from the anchor with
/// the same rule, so a glitch on the very first sample does not poison the
/// rest of the series.
pub fn kinematic_filter(samples: &[Pose], vmax: f64) -> Result<FilterOutcome> {
    let n = samples.len();
    if n < 2 {
        return Err(Error::InsufficientData(format!(
            "kinematic filter needs 2 samples, got {n}"
        )));
    }
    let plausible = |a: &Pose, b: &Pose| {
        let dt = b.t.diff_ns(a.t).unsigned_abs();
        dt > 0 && (b.p - a.p).norm() / (dt as f64 * 1e-9) <= vmax
    };
    let start = (0..n - 1)
        .find(|&i| plausible(&samples[i], &samples[i + 1]))
        .unwrap_or(0);
    let mut kept = vec![false; n];
    kept[start] = true;
    let mut anchor = start;
    for i in start + 1..n {
        if plausible(&samples[anchor], &samples[i]) {
            kept[i] = true;
            anchor = i;
        }
    }
    anchor = start;
    for i in (0..start).rev() {
        if plausible(&samples[i], &samples[anchor]) {
            kept[i] = true;
            anchor = i;
        }
    }
    Ok(FilterOutcome::from_mask(kept, 0.0, vmax))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StageReport {
    pub stage: Stage,
    pub input: usize,
    pub rejected: usize,
    pub lower: Option<f64>,
    pub upper: Option<f64>,
    /// Set when the stage had too few samples to run.
    pub skipped: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CleaningReport {
    pub input: usize,
    pub output: usize,
    pub stages: Vec<StageReport>,
    pub rejected_fraction: f64,
    /// More than `warn_fraction` of the input was rejected.
    pub excessive_rejection: bool,
}

#[derive(Clone, Debug)]
pub struct Cleaned {
    pub paired: PairedSeries,
    /// Keep-mask relative to the pipeline input.
    pub kept: Vec<bool>,
    pub report: CleaningReport,
}

/// Runs the configured stages once each, in order, each on the survivors of
/// the previous one. Z-score and IQR look at `‖tracker − truth‖`; the
/// kinematic stage at tracker positions.
pub fn run_pipeline(
    paired: &PairedSeries,
    cfg: &CleaningConfig,
    trial_speed: f64,
) -> Result<Cleaned> {
    cfg.validate()?;
    let n = paired.len();
    let mut alive: Vec<usize> = (0..n).collect();
    let mut stages = Vec::with_capacity(cfg.enabled_stages.len());
    for &stage in &cfg.enabled_stages {
        let input = alive.len();
        let outcome = match stage {
            Stage::Zscore | Stage::Iqr => {
                let e3d: Vec<f64> = alive
                    .iter()
                    .map(|&i| (paired.pairs[i].tracker.p - paired.pairs[i].truth.p).norm())
                    .collect();
                if stage == Stage::Zscore {
                    zscore_filter(&e3d, cfg.zscore_k)
                } else {
                    iqr_filter(&e3d, cfg.iqr_k)
                }
            }
            Stage::Kinematic => {
                let poses: Vec<Pose> = alive.iter().map(|&i| paired.pairs[i].tracker).collect();
                kinematic_filter(&poses, cfg.vmax_for(trial_speed))
            }
        };
        match outcome {
            Ok(o) => {
                alive = alive
                    .iter()
                    .zip(&o.kept)
                    .filter(|(_, &k)| k)
                    .map(|(&i, _)| i)
                    .collect();
                stages.push(StageReport {
                    stage,
                    input,
                    rejected: o.rejected,
                    lower: Some(o.lower),
                    upper: Some(o.upper),
                    skipped: false,
                });
            }
            Err(Error::InsufficientData(_)) => stages.push(StageReport {
                stage,
                input,
                rejected: 0,
                lower: None,
                upper: None,
                skipped: true,
            }),
            Err(e) => return Err(e),
        }
    }
    let mut kept = vec![false; n];
    for &i in &alive {
        kept[i] = true;
    }
    let rejected_fraction = if n == 0 {
        0.0
    } else {
        (n - alive.len()) as f64 / n as f64
    };
    if rejected_fraction > cfg.warn_fraction {
        log::warn!(
            "cleaning rejected {:.1} % of samples; possible systematic failure",
            rejected_fraction * 100.0
        );
    }
    Ok(Cleaned {
        paired: paired.retain_mask(&kept),
        kept,
        report: CleaningReport {
            input: n,
            output: alive.len(),
            stages,
            rejected_fraction,
            excessive_rejection: rejected_fraction > cfg.warn_fraction,
        },
    })
}
