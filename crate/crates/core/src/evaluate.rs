//! Session evaluation: ingest, register, pair, clean, compute the metrics of
//! each trial's category, detect, gate.
//!
//! Trials run concurrently; the report lists them in manifest order. Read
//! and parse failures abort the session. Metrics that cannot be computed
//! for lack of data become trial warnings (and a `no_data` flag when nothing
//! at all could be scored).

use nalgebra::Matrix3;
use rayon::prelude::*;

use crate::cleaning::run_pipeline;
use crate::error::{Error, Result};
use crate::ingest::{parse_pose_log, segment_repetitions, PoseLog};
use crate::manifest::{
    Category, EvalConfig, EventKind, Placement, RegistrationSet, Session, TrialManifest,
};
use crate::metrics::pose::{
    drift_rate, error_stats, jitter, paired_error_series, path_deviation, static_metrics,
    DynamicTrialResult,
};
use crate::metrics::system::{
    detect_gaps, initialization_time, long_term_drift, occlusion_metrics, reacquisition_time,
};
use crate::model::{apply, FrameId, PoseSeries, RigidTransform, Vec3};
use crate::registration::{estimate_rigid, registration_quality};
use crate::report::{
    detect_systematic_failure, requirement_gate, Accuracy, Flag, FlagKind, IngestReport,
    MetricReport, PairingReport, RegistrationReport, SegmentationReport, SystemMetrics,
    TrialReport, REPORT_SCHEMA,
};
use crate::simulator::Scenario;
use crate::stats;
use crate::temporal::{pair_nearest_capped, pairing_error_bound, PairedSeries};

/// Parsed logs of one trial.
#[derive(Clone, Debug)]
pub struct TrialInputs {
    /// In the tracker's world frame.
    pub tracker: PoseSeries,
    pub truth: PoseSeries,
    pub ingest: IngestReport,
}

impl TrialInputs {
    pub fn from_logs(tracker: PoseLog, truth: PoseLog) -> Self {
        TrialInputs {
            ingest: IngestReport {
                tracker_rows: tracker.total_rows,
                tracker_dropped: tracker.dropped_rows,
                truth_rows: truth.total_rows,
                truth_dropped: truth.dropped_rows,
            },
            tracker: tracker.series,
            truth: truth.series,
        }
    }

    pub fn load(trial: &TrialManifest) -> Result<Self> {
        Ok(Self::from_logs(
            parse_pose_log(&trial.tracker_log, FrameId::TrackerWorld)?,
            parse_pose_log(&trial.truth_log, FrameId::GroundtruthWorld)?,
        ))
    }
}

/// Result of one trial before the session-level merge.
#[derive(Clone, Debug)]
pub struct TrialOutcome {
    pub report: TrialReport,
    pub flags: Vec<Flag>,
}

/// Evaluates every trial of a validated session.
pub fn evaluate_session(session: &Session, cfg: &EvalConfig) -> Result<MetricReport> {
    let outcomes: Vec<TrialOutcome> = session
        .trials
        .par_iter()
        .map(|trial| {
            let inputs = TrialInputs::load(trial)?;
            let reg = trial
                .registration
                .as_deref()
                .map(|name| (name, &session.registrations[name]));
            evaluate_trial(trial, inputs, reg, cfg)
        })
        .collect::<Result<_>>()?;
    Ok(assemble(&session.name, cfg, outcomes))
}

/// Builds the session report from per-trial outcomes in the given order.
pub fn assemble(session: &str, cfg: &EvalConfig, outcomes: Vec<TrialOutcome>) -> MetricReport {
    let mut report = MetricReport {
        schema: REPORT_SCHEMA.to_string(),
        session: session.to_string(),
        generator: format!("posebench {}", env!("CARGO_PKG_VERSION")),
        config: cfg.clone(),
        trials: Vec::with_capacity(outcomes.len()),
        flags: Vec::new(),
        gate: Vec::new(),
    };
    for o in outcomes {
        report.trials.push(o.report);
        report.flags.extend(o.flags);
    }
    report.gate = requirement_gate(&report, &cfg.requirement);
    report
}

/// Simulates a scenario and evaluates it in memory.
pub fn evaluate_scenario(scenario: &Scenario, cfg: &EvalConfig) -> Result<TrialOutcome> {
    let out = scenario.run()?;
    let trial = scenario.manifest(&out, "tracker.csv".into(), "truth.csv".into());
    let inputs = TrialInputs {
        ingest: IngestReport {
            tracker_rows: out.tracker.len(),
            tracker_dropped: 0,
            truth_rows: out.truth.len(),
            truth_dropped: 0,
        },
        tracker: out.tracker,
        truth: out.truth,
    };
    evaluate_trial(
        &trial,
        inputs,
        Some((&trial.trial_id, &out.registration)),
        cfg,
    )
}

fn identity_transform() -> Result<RigidTransform> {
    RigidTransform::new(
        Matrix3::identity(),
        Vec3::zeros(),
        1.0,
        FrameId::TrackerWorld,
        FrameId::GroundtruthWorld,
    )
}

fn register(
    set: Option<(&str, &RegistrationSet)>,
    cfg: &EvalConfig,
    warnings: &mut Vec<String>,
) -> Result<(RigidTransform, Option<RegistrationReport>)> {
    let Some((name, set)) = set else {
        warnings.push(
            "no registration set; tracker assumed to report in the ground-truth frame".into(),
        );
        return Ok((identity_transform()?, None));
    };
    let (src, dst) = set.fit_pairs();
    let reg = estimate_rigid(&src, &dst, cfg.alignment.with_scale)?;
    let holdout = set.holdout_pairs();
    let holdout_rms = if holdout.is_empty() {
        None
    } else {
        Some(registration_quality(&reg.transform, &holdout)?)
    };
    Ok((
        reg.transform.clone(),
        Some(RegistrationReport {
            set: name.to_string(),
            transform: reg.transform,
            residuals: reg.residuals,
            rms: reg.rms,
            holdout_rms,
        }),
    ))
}

fn accuracy_of(paired: &PairedSeries) -> Option<Accuracy> {
    let errors = paired_error_series(paired).ok()?;
    Some(Accuracy {
        mean_pos_mm: stats::mean(&errors.e3d),
        mean_rot_deg: stats::mean(&errors.rot_deg),
    })
}

/// Tracker samples that survived pairing and cleaning, as a series.
fn kept_tracker(paired: &PairedSeries, rate: f64) -> Result<PoseSeries> {
    PoseSeries::new(
        FrameId::GroundtruthWorld,
        paired.pairs.iter().map(|p| p.tracker).collect(),
        rate,
    )
}

/// Runs one trial end to end.
pub fn evaluate_trial(
    trial: &TrialManifest,
    inputs: TrialInputs,
    registration: Option<(&str, &RegistrationSet)>,
    cfg: &EvalConfig,
) -> Result<TrialOutcome> {
    let id = trial.trial_id.clone();
    let mut warnings = Vec::new();
    let mut flags = Vec::new();
    let mut flag = |kind: FlagKind, detail: String| {
        flags.push(Flag {
            trial_id: id.clone(),
            kind,
            detail,
        })
    };

    if trial.is_custom_protocol() {
        flag(
            FlagKind::CustomProtocol,
            format!(
                "protocol `{}` is not in the standard catalogue",
                trial.protocol_id
            ),
        );
    }

    let (transform, reg_report) = register(registration, cfg, &mut warnings)?;
    if let Some(r) = &reg_report {
        let limit = cfg.alignment.registration_rms_threshold;
        let worst = r.holdout_rms.map_or(r.rms, |h| h.max(r.rms));
        if worst > limit {
            flag(
                FlagKind::RegistrationResidual,
                format!("registration residual {worst:.3} mm exceeds {limit} mm"),
            );
        }
    }
    let tracker = apply(&transform, &inputs.tracker)?;
    let truth = inputs.truth;

    let mut report = TrialReport {
        trial_id: trial.trial_id.clone(),
        category: trial.category,
        protocol_id: trial.protocol_id.clone(),
        custom_protocol: trial.is_custom_protocol(),
        hmd_position: trial.hmd_position,
        speed: trial.speed,
        condition: trial.condition(),
        ingest: inputs.ingest,
        registration: reg_report,
        pairing: None,
        segmentation: None,
        cleaning: None,
        accuracy: None,
        static_result: None,
        dynamic_result: None,
        system: None,
        warnings: Vec::new(),
    };

    let max_gap = cfg.alignment.max_gap_for(&truth);
    let paired = match pair_nearest_capped(&tracker, &truth, max_gap, cfg.alignment.max_truth_reuse)
    {
        Ok(p) => p,
        Err(e @ (Error::NoTimeOverlap | Error::InsufficientData(_))) => {
            warnings.push(format!("pairing: {e}"));
            PairedSeries::default()
        }
        Err(e) => return Err(e),
    };
    report.pairing = Some(PairingReport {
        pairs: paired.len(),
        dropped_gap: paired.dropped_gap,
        skipped_invalid: paired.skipped_invalid,
        dropped_reuse: paired.dropped_reuse,
        max_abs_dt_ns: paired.max_abs_dt_ns,
        max_truth_reuse: paired.max_truth_reuse,
        error_bound_mm: pairing_error_bound(trial.speed, truth.nominal_rate()),
    });

    let cleaned = if paired.is_empty() {
        paired
    } else {
        let c = run_pipeline(&paired, &cfg.cleaning, trial.speed)?;
        if c.report.excessive_rejection {
            flag(
                FlagKind::ExcessiveRejection,
                format!(
                    "cleaning rejected {:.1} % of {} samples",
                    100.0 * c.report.rejected_fraction,
                    c.report.input
                ),
            );
        }
        report.cleaning = Some(c.report);
        c.paired
    };
    report.accuracy = accuracy_of(&cleaned);

    match trial.category {
        Category::StaticPose => {
            let kept = kept_tracker(&cleaned, tracker.nominal_rate())?;
            let seg = segment_repetitions(&kept, trial, &cfg.segmentation);
            warnings.extend(seg.warnings.iter().cloned());
            if seg.segments.len() < trial.repetitions as usize {
                flag(
                    FlagKind::MissingRepetitions,
                    format!(
                        "found {} of {} repetitions",
                        seg.segments.len(),
                        trial.repetitions
                    ),
                );
            }
            let truth_reps: Vec<PoseSeries> = seg
                .windows
                .iter()
                .map(|&(a, b)| truth.slice_time(a, b))
                .collect();
            match static_metrics(
                &trial.protocol_id,
                &seg.segments,
                &truth_reps,
                cfg.iso_repeatability,
            ) {
                Ok(r) => {
                    if let Some(detail) = detect_systematic_failure(&r, &cfg.detector) {
                        flag(FlagKind::SystematicFailure, detail);
                    }
                    report.accuracy = Some(Accuracy {
                        mean_pos_mm: r.mean_acc,
                        mean_rot_deg: r.orient_acc,
                    });
                    report.static_result = Some(r);
                }
                Err(Error::InsufficientData(m)) => warnings.push(format!("static metrics: {m}")),
                Err(e) => return Err(e),
            }
            report.segmentation = Some(SegmentationReport {
                method: seg.method,
                expected: trial.repetitions,
                found: seg.segments.len(),
                windows: seg.windows,
            });
        }
        Category::DynamicTrajectory => {
            match dynamic_result(trial, &cleaned, &tracker, &mut warnings) {
                Ok(r) => report.dynamic_result = Some(r),
                Err(Error::InsufficientData(m)) => warnings.push(format!("dynamic metrics: {m}")),
                Err(e) => return Err(e),
            }
        }
        Category::Occlusion | Category::Reliability | Category::Stability => {
            report.system = Some(system_metrics(
                trial,
                &tracker,
                &truth,
                &cleaned,
                cfg,
                &mut warnings,
            )?);
        }
    }

    let scored = report.static_result.is_some()
        || report.dynamic_result.is_some()
        || report.system.is_some()
        || report.accuracy.is_some();
    if !scored {
        flag(FlagKind::NoData, "no metric could be computed".into());
    }
    report.warnings = warnings;
    Ok(TrialOutcome { report, flags })
}

fn dynamic_result(
    trial: &TrialManifest,
    cleaned: &PairedSeries,
    tracker: &PoseSeries,
    warnings: &mut Vec<String>,
) -> Result<DynamicTrialResult> {
    let errors = paired_error_series(cleaned)?;
    let st = error_stats(&errors)?;
    let bias = errors.mean_vector();
    let debiased_rms_3d = stats::rms(&errors.debiased().e3d);
    let drift_3d = match drift_rate(&errors) {
        Ok(d) => Some(d),
        Err(e) => {
            warnings.push(format!("drift: {e}"));
            None
        }
    };
    let path = match &trial.reference {
        Some(spec) => {
            let spec = match spec.placement {
                Some(_) => spec.clone(),
                None => {
                    warnings.push("reference path has no placement; identity assumed".into());
                    let mut s = spec.clone();
                    s.placement = Some(Placement {
                        rotation: [1.0, 0.0, 0.0, 0.0],
                        translation: [0.0; 3],
                    });
                    s
                }
            };
            let path = spec.build(&trial.protocol_id)?;
            let kept = kept_tracker(cleaned, tracker.nominal_rate())?;
            Some(path_deviation(&kept, &path)?)
        }
        None => None,
    };
    Ok(DynamicTrialResult {
        trial_id: trial.trial_id.clone(),
        trajectory: trial.reference.as_ref().map_or_else(
            || trial.protocol_id.clone(),
            |r| r.trajectory_name().to_string(),
        ),
        position: trial.hmd_position.to_string(),
        speed: trial.speed,
        n_samples: errors.len(),
        stats: st,
        bias: [bias.x, bias.y, bias.z],
        debiased_rms_3d,
        drift_3d,
        path,
    })
}

fn system_metrics(
    trial: &TrialManifest,
    tracker: &PoseSeries,
    truth: &PoseSeries,
    cleaned: &PairedSeries,
    cfg: &EvalConfig,
    warnings: &mut Vec<String>,
) -> Result<SystemMetrics> {
    let rule = &cfg.stability;
    let mut out = SystemMetrics {
        gaps: detect_gaps(tracker, cfg.system.gap_factor),
        ..Default::default()
    };
    let span = match (truth.first(), truth.last()) {
        (Some(a), Some(b)) => Some((a.t, b.t)),
        _ => None,
    };
    if trial.events.iter().any(|e| e.kind.is_occlusion()) {
        let r = occlusion_metrics(tracker, &trial.events, rule, trial.speed, span)?;
        warnings.extend(r.warnings.iter().cloned());
        out.occlusion = Some(r);
    }
    if let Some(start) = trial.events_of(|k| k == EventKind::SystemStart).first() {
        match initialization_time(tracker, start.t_start, rule, trial.speed) {
            Ok(Some(s)) => out.initialization_s = Some(s),
            Ok(None) => warnings.push("initialisation: no stable track within the timeout".into()),
            Err(e) => warnings.push(format!("initialisation: {e}")),
        }
    }
    if trial
        .events
        .iter()
        .any(|e| e.kind == EventKind::EnterVolume)
    {
        let r = reacquisition_time(tracker, &trial.events, rule, trial.speed, span)?;
        warnings.extend(r.warnings.iter().cloned());
        let timeout_ns = (rule.timeout_s * 1e9).round() as u64;
        let windowed: Vec<_> = r
            .events
            .iter()
            .flat_map(|e| {
                cleaned
                    .slice_time(e.t_end, e.t_end.saturating_add_ns(timeout_ns))
                    .pairs
            })
            .collect();
        let window = PairedSeries {
            pairs: windowed,
            ..Default::default()
        };
        out.reacquisition_sigma_3d = paired_error_series(&window)
            .and_then(|e| error_stats(&e))
            .map(|s| s.sigma.d3)
            .ok();
        out.reacquisition = Some(r);
    }
    if trial.category == Category::Stability {
        let max_gap = cfg.alignment.max_gap_for(truth);
        match long_term_drift(tracker, truth, cfg.system.drift_min_span_s, max_gap) {
            Ok(d) => out.drift = Some(d),
            Err(e @ (Error::SpanTooShort { .. } | Error::InsufficientData(_))) => {
                warnings.push(format!("drift: {e}"));
                out.drift_unavailable = Some(e.to_string());
            }
            Err(e) => return Err(e),
        }
    }
    if trial.speed == 0.0 {
        let still = tracker.valid_only();
        if let Ok((p, r)) = jitter(&still) {
            out.jitter_pos = Some(p);
            out.jitter_rot = Some(r);
        }
    }
    Ok(out)
}
