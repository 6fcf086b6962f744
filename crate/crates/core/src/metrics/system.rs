//! Robustness and stability: tracking gaps, occlusion success and recovery
//! time, initialisation and re-acquisition time, long-term static drift.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::manifest::{Event, EventKind};
use crate::model::{Pose, PoseSeries, Timestamp, Vec3};
use crate::stats;
use crate::temporal::pair_nearest;

/// What counts as a re-established track: `k` consecutive valid samples
/// whose sample-to-sample speed stays below the trial speed plus
/// `v_stable_margin`, starting within `timeout_s` of the reference instant.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct StabilityRule {
    pub k: usize,
    pub v_stable_margin: f64,
    pub timeout_s: f64,
}

impl Default for StabilityRule {
    fn default() -> Self {
        StabilityRule {
            k: 10,
            v_stable_margin: 5.0,
            timeout_s: 10.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SystemConfig {
    /// Interval, in nominal periods, above which consecutive samples count as
    /// a gap.
    pub gap_factor: f64,
    /// Minimum span for long-term drift, s.
    pub drift_min_span_s: f64,
}

impl Default for SystemConfig {
    fn default() -> Self {
        SystemConfig {
            gap_factor: 3.0,
            drift_min_span_s: 1800.0,
        }
    }
}

/// Intervals without valid tracking: between consecutive valid samples more
/// than `gap_factor` periods apart, or across runs of invalid samples
/// (including leading and trailing runs). Sorted; touching gaps merge.
pub fn detect_gaps(series: &PoseSeries, gap_factor: f64) -> Vec<(Timestamp, Timestamp)> {
    let limit_ns = gap_factor * series.period_s() * 1e9;
    let samples = series.samples();
    let mut gaps: Vec<(Timestamp, Timestamp)> = Vec::new();
    let mut push = |a: Timestamp, b: Timestamp| match gaps.last_mut() {
        Some(last) if a <= last.1 => last.1 = last.1.max(b),
        _ => gaps.push((a, b)),
    };
    let mut prev_valid: Option<&Pose> = None;
    let mut invalid_since: Option<Timestamp> = None;
    for s in samples {
        if !s.valid {
            invalid_since.get_or_insert(s.t);
            continue;
        }
        match prev_valid {
            Some(p) => {
                if invalid_since.is_some() || s.t.diff_ns(p.t) as f64 > limit_ns {
                    push(p.t, s.t);
                }
            }
            None => {
                if let Some(a) = invalid_since {
                    push(a, s.t);
                }
            }
        }
        invalid_since = None;
        prev_valid = Some(s);
    }
    if let Some(a) = invalid_since {
        let start = prev_valid.map_or(a, |p| p.t);
        if let Some(last) = samples.last() {
            push(start, last.t);
        }
    }
    gaps
}

/// Index of the first sample at or after `from` that opens a stable run
/// starting no later than `deadline`.
fn first_stable(
    samples: &[Pose],
    from: Timestamp,
    deadline: Timestamp,
    rule: &StabilityRule,
    v_stable: f64,
) -> Option<usize> {
    let k = rule.k.max(1);
    let start = samples.partition_point(|s| s.t < from);
    let mut run = 0usize;
    for i in start..samples.len() {
        let s = &samples[i];
        let ok = s.valid
            && (run == 0 || {
                let p = &samples[i - 1];
                let dt = s.t.secs_since(p.t);
                dt > 0.0 && (s.p - p.p).norm() / dt < v_stable
            });
        run = if ok {
            run + 1
        } else if s.valid {
            1
        } else {
            0
        };
        if run == k {
            let first = i + 1 - k;
            return (samples[first].t <= deadline).then_some(first);
        }
        if run == 0 && s.t > deadline {
            return None;
        }
        if run > 0 && samples[i + 1 - run].t > deadline {
            return None;
        }
    }
    None
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RecoveryOutcome {
    pub kind: EventKind,
    pub t_start: Timestamp,
    pub t_end: Timestamp,
    pub success: bool,
    /// Time from the reference instant to the first sample of the stable
    /// run, s. Present exactly when `success`.
    pub recovery_s: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OcclusionResult {
    pub events: Vec<RecoveryOutcome>,
    /// Success rate in percent over evaluated events.
    pub osr: Option<f64>,
    pub skipped: usize,
    pub warnings: Vec<String>,
}

impl OcclusionResult {
    pub fn mean_recovery_s(&self) -> Option<f64> {
        let v: Vec<f64> = self.events.iter().filter_map(|e| e.recovery_s).collect();
        (!v.is_empty()).then(|| stats::mean(&v))
    }
}

fn recovery(
    series: &PoseSeries,
    kind: EventKind,
    window: (Timestamp, Timestamp),
    reference: Timestamp,
    rule: &StabilityRule,
    v_stable: f64,
) -> RecoveryOutcome {
    let deadline = reference.saturating_add_ns((rule.timeout_s * 1e9).round() as u64);
    let hit = first_stable(series.samples(), reference, deadline, rule, v_stable);
    RecoveryOutcome {
        kind,
        t_start: window.0,
        t_end: window.1,
        success: hit.is_some(),
        recovery_s: hit.map(|i| series.samples()[i].t.secs_since(reference)),
    }
}

fn outside(span: (Timestamp, Timestamp), a: Timestamp, b: Timestamp) -> bool {
    b < span.0 || a > span.1
}

/// Occlusion success rate and re-acquisition time per occlusion window.
///
/// `span` is the interval the trial covers (the ground-truth span when
/// available); an event outside it is skipped with a warning. Defaults to
/// the tracker's own span, in which case a track that never returns cannot
/// be told apart from a recording that simply ended.
pub fn occlusion_metrics(
    series: &PoseSeries,
    events: &[Event],
    rule: &StabilityRule,
    trial_speed: f64,
    span: Option<(Timestamp, Timestamp)>,
) -> Result<OcclusionResult> {
    let occl: Vec<&Event> = events.iter().filter(|e| e.kind.is_occlusion()).collect();
    if occl.is_empty() {
        return Err(Error::InsufficientData("no occlusion events".into()));
    }
    let span = span.or_else(|| Some((series.first()?.t, series.last()?.t)));
    let v_stable = trial_speed + rule.v_stable_margin;
    let mut out = OcclusionResult {
        events: Vec::new(),
        osr: None,
        skipped: 0,
        warnings: Vec::new(),
    };
    for e in occl {
        if span.is_none_or(|s| outside(s, e.t_start, e.t_end)) {
            out.skipped += 1;
            out.warnings.push(format!(
                "occlusion {}..{} outside the recording, skipped",
                e.t_start, e.t_end
            ));
            continue;
        }
        out.events.push(recovery(
            series,
            e.kind,
            (e.t_start, e.t_end),
            e.t_end,
            rule,
            v_stable,
        ));
    }
    if !out.events.is_empty() {
        let ok = out.events.iter().filter(|e| e.success).count();
        out.osr = Some(100.0 * ok as f64 / out.events.len() as f64);
    }
    Ok(out)
}

/// Time from `system_start` to the first sample of the first stable run, s.
/// `None` when no stable run starts within the timeout.
pub fn initialization_time(
    series: &PoseSeries,
    system_start: Timestamp,
    rule: &StabilityRule,
    trial_speed: f64,
) -> Result<Option<f64>> {
    if let Some(first) = series.first() {
        if system_start > first.t {
            return Err(Error::InvalidParameter(format!(
                "system start {system_start} is after the first sample {}",
                first.t
            )));
        }
    }
    let deadline = system_start.saturating_add_ns((rule.timeout_s * 1e9).round() as u64);
    let v_stable = trial_speed + rule.v_stable_margin;
    Ok(
        first_stable(series.samples(), system_start, deadline, rule, v_stable)
            .map(|i| series.samples()[i].t.secs_since(system_start)),
    )
}

/// Re-acquisition after leaving and re-entering the tracking volume, timed
/// from each `ENTER_VOLUME` annotation.
pub fn reacquisition_time(
    series: &PoseSeries,
    events: &[Event],
    rule: &StabilityRule,
    trial_speed: f64,
    span: Option<(Timestamp, Timestamp)>,
) -> Result<OcclusionResult> {
    let mut enters: Vec<&Event> = events
        .iter()
        .filter(|e| e.kind == EventKind::EnterVolume)
        .collect();
    enters.sort_by_key(|e| e.t_start);
    if enters.is_empty() {
        return Err(Error::InsufficientData("no ENTER_VOLUME events".into()));
    }
    let exits: Vec<&Event> = events
        .iter()
        .filter(|e| e.kind == EventKind::ExitVolume)
        .collect();
    let span = span.or_else(|| Some((series.first()?.t, series.last()?.t)));
    let v_stable = trial_speed + rule.v_stable_margin;
    let mut out = OcclusionResult {
        events: Vec::new(),
        osr: None,
        skipped: 0,
        warnings: Vec::new(),
    };
    for e in enters {
        let reference = e.t_end;
        let exit = exits
            .iter()
            .filter(|x| x.t_start <= e.t_start)
            .map(|x| x.t_start)
            .max()
            .unwrap_or(e.t_start);
        if span.is_none_or(|s| outside(s, exit, reference)) {
            out.skipped += 1;
            out.warnings.push(format!(
                "re-entry at {reference} outside the recording, skipped"
            ));
            continue;
        }
        out.events.push(recovery(
            series,
            EventKind::EnterVolume,
            (exit, reference),
            reference,
            rule,
            v_stable,
        ));
    }
    if !out.events.is_empty() {
        let ok = out.events.iter().filter(|e| e.success).count();
        out.osr = Some(100.0 * ok as f64 / out.events.len() as f64);
    }
    Ok(out)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DriftResult {
    pub mm_per_min: f64,
    pub deg_per_min: f64,
    pub span_s: f64,
}

/// Long-term static drift: OLS slope of the position error vector and of the
/// orientation error (rotation vector) against time, reported as the norm
/// of the slope vector per minute. Using the vector slope rather than the
/// slope of `‖e‖` keeps the noise floor from masquerading as drift.
pub fn long_term_drift(
    tracker: &PoseSeries,
    truth: &PoseSeries,
    min_span_s: f64,
    max_gap_ns: u64,
) -> Result<DriftResult> {
    let span = tracker.valid_only().span_s();
    if span < min_span_s {
        return Err(Error::SpanTooShort {
            required_s: min_span_s,
            actual_s: span,
        });
    }
    let paired = pair_nearest(tracker, truth, max_gap_ns)?;
    if paired.len() < 2 {
        return Err(Error::InsufficientData(
            "drift needs 2 paired samples".into(),
        ));
    }
    let t0 = paired.pairs[0].tracker.t;
    let ts: Vec<f64> = paired
        .pairs
        .iter()
        .map(|p| p.tracker.t.secs_since(t0))
        .collect();
    let slope_vec = |f: &dyn Fn(usize) -> Vec3| -> Result<Vec3> {
        let mut out = Vec3::zeros();
        for k in 0..3 {
            let ys: Vec<f64> = (0..paired.len()).map(|i| f(i)[k]).collect();
            out[k] = stats::ols_slope(&ts, &ys)
                .ok_or_else(|| Error::InsufficientData("drift needs distinct timestamps".into()))?;
        }
        Ok(out)
    };
    let pos = slope_vec(&|i| paired.pairs[i].tracker.p - paired.pairs[i].truth.p)?;
    let rot = slope_vec(&|i| {
        let p = &paired.pairs[i];
        p.truth.q.conjugate().mul(&p.tracker.q).rotation_vector()
    })?;
    let actual_span = ts.last().copied().unwrap_or(0.0);
    Ok(DriftResult {
        mm_per_min: pos.norm() * 60.0,
        deg_per_min: rot.norm().to_degrees() * 60.0,
        span_s: actual_span,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{FrameId, Quaternion};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, Normal};

    fn series_from(ts_s: &[f64], valid: impl Fn(usize) -> bool, rate: f64) -> PoseSeries {
        let samples = ts_s
            .iter()
            .enumerate()
            .map(|(i, &t)| Pose {
                valid: valid(i),
                ..Pose::new(
                    Timestamp::from_secs_f64(t).unwrap(),
                    Vec3::zeros(),
                    Quaternion::IDENTITY,
                    FrameId::GroundtruthWorld,
                )
            })
            .collect();
        PoseSeries::new(FrameId::GroundtruthWorld, samples, rate).unwrap()
    }

    fn grid(rate: f64, from: f64, to: f64) -> Vec<f64> {
        let n = ((to - from) * rate).round() as usize;
        (0..n).map(|k| from + k as f64 / rate).collect()
    }

    #[test]
    fn gaps() {
        let cont = series_from(&grid(50.0, 0.0, 10.0), |_| true, 50.0);
        assert!(detect_gaps(&cont, 3.0).is_empty());

        let mut ts = grid(30.0, 0.0, 10.0);
        ts.retain(|&t| !(3.0..8.0).contains(&t));
        let holed = series_from(&ts, |_| true, 30.0);
        let g = detect_gaps(&holed, 3.0);
        assert_eq!(g.len(), 1);
        let d = g[0].1.secs_since(g[0].0);
        assert!((d - 5.0).abs() <= 1.0 / 30.0 + 1e-9, "{d}");

        let inval = series_from(&grid(10.0, 0.0, 5.0), |i| !(10..20).contains(&i), 10.0);
        let g = detect_gaps(&inval, 3.0);
        assert_eq!(g.len(), 1);
        assert!((g[0].0.as_secs_f64() - 0.9).abs() < 1e-9);
        assert!((g[0].1.as_secs_f64() - 2.0).abs() < 1e-9);
    }

    #[test]
    fn gaps_shift_invariant() {
        let mut ts = grid(30.0, 0.0, 10.0);
        ts.retain(|&t| !(3.0..8.0).contains(&t));
        let a = detect_gaps(&series_from(&ts, |i| i != 5, 30.0), 3.0);
        let shifted: Vec<f64> = ts.iter().map(|t| t + 123.0).collect();
        let b = detect_gaps(&series_from(&shifted, |i| i != 5, 30.0), 3.0);
        assert_eq!(a.len(), b.len());
        for (x, y) in a.iter().zip(&b) {
            assert_eq!(y.0.diff_ns(x.0), 123_000_000_000);
            assert_eq!(y.1.diff_ns(x.1), 123_000_000_000);
        }
    }

    fn occl(a: f64, b: f64) -> Event {
        Event {
            kind: EventKind::OcclusionFull,
            t_start: Timestamp::from_secs_f64(a).unwrap(),
            t_end: Timestamp::from_secs_f64(b).unwrap(),
        }
    }

    #[test]
    fn occlusion_recovery() {
        let rule = StabilityRule::default();
        let mut ts = grid(30.0, 0.0, 30.0);
        ts.retain(|&t| !(5.0..10.0).contains(&t) && !(15.0..20.0).contains(&t));
        let s = series_from(&ts, |_| true, 30.0);
        let r =
            occlusion_metrics(&s, &[occl(5.0, 10.0), occl(15.0, 20.0)], &rule, 10.0, None).unwrap();
        assert_eq!(r.osr, Some(100.0));
        for e in &r.events {
            assert!(e.recovery_s.unwrap() < 1.5 / 30.0);
        }

        // Nothing after the first occlusion begins.
        let cut: Vec<f64> = grid(30.0, 0.0, 5.0);
        let s = series_from(&cut, |_| true, 30.0);
        let span = Some((Timestamp::ZERO, Timestamp::from_secs_f64(30.0).unwrap()));
        let r = occlusion_metrics(&s, &[occl(5.0, 10.0)], &rule, 50.0, span).unwrap();
        assert_eq!(r.osr, Some(0.0));
        assert!(r.events.iter().all(|e| e.recovery_s.is_none()));

        let late = occlusion_metrics(&s, &[occl(100.0, 105.0)], &rule, 50.0, span).unwrap();
        assert_eq!(late.skipped, 1);
        assert_eq!(late.osr, None);
    }

    #[test]
    fn delayed_recovery_and_init() {
        let rule = StabilityRule::default();
        let mut ts = grid(30.0, 0.0, 20.0);
        ts.retain(|&t| !(5.0..10.8).contains(&t));
        let s = series_from(&ts, |_| true, 30.0);
        let r = occlusion_metrics(&s, &[occl(5.0, 10.0)], &rule, 10.0, None).unwrap();
        let rot = r.events[0].recovery_s.unwrap();
        assert!((rot - 0.8).abs() <= 1.0 / 30.0 + 1e-9, "{rot}");

        let init = series_from(&grid(30.0, 0.0, 5.0), |i| i >= 18, 30.0);
        let t = initialization_time(&init, Timestamp::ZERO, &rule, 0.0)
            .unwrap()
            .unwrap();
        assert!((t - 0.6).abs() <= 1.0 / 30.0 + 1e-9, "{t}");
        let never = series_from(&grid(30.0, 0.0, 5.0), |_| false, 30.0);
        assert_eq!(
            initialization_time(&never, Timestamp::ZERO, &rule, 0.0).unwrap(),
            None
        );
    }

    #[test]
    fn reacquisition_from_enter_event() {
        let rule = StabilityRule::default();
        let mut ts = grid(30.0, 0.0, 20.0);
        ts.retain(|&t| !(4.0..8.5).contains(&t));
        let s = series_from(&ts, |_| true, 30.0);
        let events = [
            Event::instant(
                EventKind::ExitVolume,
                Timestamp::from_secs_f64(4.0).unwrap(),
            ),
            Event::instant(
                EventKind::EnterVolume,
                Timestamp::from_secs_f64(8.0).unwrap(),
            ),
        ];
        let r = reacquisition_time(&s, &events, &rule, 10.0, None).unwrap();
        let t = r.events[0].recovery_s.unwrap();
        assert!((t - 0.5).abs() <= 1.0 / 30.0 + 1e-9, "{t}");
    }

    fn static_pair(
        rate: f64,
        minutes: f64,
        ramp_mm_per_min: f64,
        sigma: f64,
        seed: u64,
    ) -> (PoseSeries, PoseSeries) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let nd = Normal::new(0.0, sigma).unwrap();
        let n = (minutes * 60.0 * rate) as u64 + 1;
        let mut tr = Vec::new();
        let mut gt = Vec::new();
        for k in 0..n {
            let t = Timestamp::from_nanos((k as f64 * 1e9 / rate) as u64);
            let base = Vec3::new(100.0, 50.0, 20.0);
            gt.push(Pose::new(
                t,
                base,
                Quaternion::IDENTITY,
                FrameId::GroundtruthWorld,
            ));
            let ramp = ramp_mm_per_min * t.as_secs_f64() / 60.0;
            let noise = if sigma > 0.0 {
                Vec3::new(
                    nd.sample(&mut rng),
                    nd.sample(&mut rng),
                    nd.sample(&mut rng),
                )
            } else {
                Vec3::zeros()
            };
            tr.push(Pose::new(
                t,
                base + Vec3::new(1.0 + ramp, 0.5, 0.0) + noise,
                Quaternion::IDENTITY,
                FrameId::GroundtruthWorld,
            ));
        }
        (
            PoseSeries::new(FrameId::GroundtruthWorld, tr, rate).unwrap(),
            PoseSeries::new(FrameId::GroundtruthWorld, gt, rate).unwrap(),
        )
    }

    #[test]
    fn drift_constant_and_ramp() {
        let (a, b) = static_pair(1.0, 30.0, 0.0, 0.0, 1);
        let d = long_term_drift(&a, &b, 1800.0, 1_000_000).unwrap();
        assert!(d.mm_per_min.abs() < 1e-12 && d.deg_per_min.abs() < 1e-12);
        let (a, b) = static_pair(1.0, 30.0, 0.02, 0.1, 2);
        let d = long_term_drift(&a, &b, 1800.0, 1_000_000).unwrap();
        assert!((d.mm_per_min / 0.02 - 1.0).abs() < 0.05, "{}", d.mm_per_min);
    }

    #[test]
    fn short_series_names_required_span() {
        let (a, b) = static_pair(30.0, 5.0 / 60.0, 0.0, 0.0, 3);
        match long_term_drift(&a, &b, 1800.0, 50_000_000) {
            Err(e @ Error::SpanTooShort { .. }) => assert!(e.to_string().contains("1800")),
            other => panic!("{other:?}"),
        }
    }
}
