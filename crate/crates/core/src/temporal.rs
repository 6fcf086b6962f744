//! Nearest-timestamp association of tracker samples with ground truth.
//!
//! Pairing is directed tracker → truth: every valid tracker sample is scored
//! against the truth sample closest in time. No interpolation is performed;
//! [`pairing_error_bound`] quantifies what that costs.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{Pose, PoseSeries, Timestamp};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AlignmentConfig {
    /// Absolute pairing gap in ns. When unset, `max_gap_periods` truth
    /// periods are used.
    pub max_gap_ns: Option<u64>,
    pub max_gap_periods: f64,
    /// Maximum number of tracker samples one truth sample may serve.
    pub max_truth_reuse: Option<usize>,
    /// Estimate a similarity transform instead of a rigid one.
    pub with_scale: bool,
    /// Registration RMS residual above which the trial is flagged, mm.
    pub registration_rms_threshold: f64,
}

impl Default for AlignmentConfig {
    fn default() -> Self {
        AlignmentConfig {
            max_gap_ns: None,
            max_gap_periods: 1.5,
            max_truth_reuse: None,
            with_scale: false,
            registration_rms_threshold: 1.0,
        }
    }
}

impl AlignmentConfig {
    pub fn max_gap_for(&self, truth: &PoseSeries) -> u64 {
        self.max_gap_ns
            .unwrap_or_else(|| (self.max_gap_periods * truth.period_s() * 1e9).round() as u64)
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PosePair {
    pub tracker: Pose,
    pub truth: Pose,
    /// `tracker.t - truth.t` in ns.
    pub dt_ns: i64,
}

#[derive(Clone, Debug, PartialEq, Default)]
pub struct PairedSeries {
    pub pairs: Vec<PosePair>,
    pub max_abs_dt_ns: u64,
    /// Tracker samples dropped because the nearest truth sample was too far.
    pub dropped_gap: usize,
    /// Invalid tracker samples skipped.
    pub skipped_invalid: usize,
    /// Tracker samples dropped because their truth sample hit the reuse cap.
    pub dropped_reuse: usize,
    /// Largest number of pairs sharing one truth sample.
    pub max_truth_reuse: usize,
}

impl PairedSeries {
    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    /// Keeps pairs whose mask entry is `true`, preserving order.
    pub fn retain_mask(&self, mask: &[bool]) -> PairedSeries {
        let pairs: Vec<PosePair> = self
            .pairs
            .iter()
            .zip(mask)
            .filter(|(_, &k)| k)
            .map(|(p, _)| *p)
            .collect();
        self.with_pairs(pairs)
    }

    /// Pairs whose tracker timestamp lies in `[start, end]`.
    pub fn slice_time(&self, start: Timestamp, end: Timestamp) -> PairedSeries {
        let pairs = self
            .pairs
            .iter()
            .filter(|p| p.tracker.t >= start && p.tracker.t <= end)
            .copied()
            .collect();
        self.with_pairs(pairs)
    }

    fn with_pairs(&self, pairs: Vec<PosePair>) -> PairedSeries {
        PairedSeries {
            max_abs_dt_ns: pairs
                .iter()
                .map(|p| p.dt_ns.unsigned_abs())
                .max()
                .unwrap_or(0),
            pairs,
            ..self.clone()
        }
    }
}

/// Pairs each valid tracker sample with the valid truth sample nearest in
/// time (ties go to the earlier truth sample). Samples further than
/// `max_gap_ns` from any truth sample are dropped and counted.
pub fn pair_nearest(
    tracker: &PoseSeries,
    truth: &PoseSeries,
    max_gap_ns: u64,
) -> Result<PairedSeries> {
    pair_nearest_capped(tracker, truth, max_gap_ns, None)
}

/// [`pair_nearest`] with an optional cap on how often one truth sample may
/// be reused. A tracker sample whose nearest truth sample is exhausted is
/// dropped rather than re-routed, so every emitted pair is still a true
/// nearest-neighbour pair.
pub fn pair_nearest_capped(
    tracker: &PoseSeries,
    truth: &PoseSeries,
    max_gap_ns: u64,
    max_reuse: Option<usize>,
) -> Result<PairedSeries> {
    if tracker.frame() != truth.frame() {
        return Err(Error::FrameMismatch {
            expected: truth.frame().to_string(),
            found: tracker.frame().to_string(),
        });
    }
    let (Some(tf), Some(tl), Some(gf), Some(gl)) =
        (tracker.first(), tracker.last(), truth.first(), truth.last())
    else {
        return Err(Error::InsufficientData(
            "pairing needs two non-empty series".into(),
        ));
    };
    if tl.t < gf.t || gl.t < tf.t {
        return Err(Error::NoTimeOverlap);
    }

    let truth_valid: Vec<&Pose> = truth.samples().iter().filter(|s| s.valid).collect();
    let mut uses = vec![0usize; truth_valid.len()];
    let mut out = PairedSeries::default();
    let mut j = 0usize;
    for s in tracker.samples() {
        if !s.valid {
            out.skipped_invalid += 1;
            continue;
        }
        if truth_valid.is_empty() {
            out.dropped_gap += 1;
            continue;
        }
        // Tracker timestamps increase, so the nearest truth index never
        // moves backwards.
        while j + 1 < truth_valid.len() && truth_valid[j + 1].t <= s.t {
            j += 1;
        }
        let mut best = j;
        if j + 1 < truth_valid.len() {
            let d0 = s.t.diff_ns(truth_valid[j].t).unsigned_abs();
            let d1 = s.t.diff_ns(truth_valid[j + 1].t).unsigned_abs();
            if d1 < d0 {
                best = j + 1;
            }
        }
        let g = truth_valid[best];
        let dt = s.t.diff_ns(g.t);
        if dt.unsigned_abs() > max_gap_ns {
            out.dropped_gap += 1;
            continue;
        }
        if max_reuse.is_some_and(|cap| uses[best] >= cap) {
            out.dropped_reuse += 1;
            continue;
        }
        uses[best] += 1;
        out.max_abs_dt_ns = out.max_abs_dt_ns.max(dt.unsigned_abs());
        out.pairs.push(PosePair {
            tracker: *s,
            truth: *g,
            dt_ns: dt,
        });
    }
    out.max_truth_reuse = uses.into_iter().max().unwrap_or(0);
    Ok(out)
}

/// Position uncertainty, mm, attributable to pairing without interpolation:
/// the mean displacement `v·T/4` when the tracker phase is uniform over the
/// truth period `T`. 0.25 mm at 50 mm/s against 50 Hz truth.
pub fn pairing_error_bound(speed_mm_s: f64, truth_rate_hz: f64) -> f64 {
    speed_mm_s / (4.0 * truth_rate_hz)
}

/// Worst case of the same error: a sample can sit half a truth period away
/// from its partner.
pub fn pairing_error_max(speed_mm_s: f64, truth_rate_hz: f64) -> f64 {
    speed_mm_s / (2.0 * truth_rate_hz)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{FrameId, Quaternion, Vec3};
    use proptest::prelude::*;

    fn series(ts: &[u64], rate: f64) -> PoseSeries {
        let samples = ts
            .iter()
            .map(|&t| {
                Pose::new(
                    Timestamp::from_nanos(t),
                    Vec3::new(t as f64 * 1e-6, 0.0, 0.0),
                    Quaternion::IDENTITY,
                    FrameId::GroundtruthWorld,
                )
            })
            .collect();
        PoseSeries::new(FrameId::GroundtruthWorld, samples, rate).unwrap()
    }

    fn grid(rate: f64, n: usize, offset: u64) -> Vec<u64> {
        (0..n)
            .map(|k| offset + (k as f64 * 1e9 / rate).round() as u64)
            .collect()
    }

    #[test]
    fn identical_timestamps_pair_exactly() {
        let ts = grid(50.0, 100, 0);
        let p = pair_nearest(&series(&ts, 50.0), &series(&ts, 50.0), 30_000_000).unwrap();
        assert_eq!(p.len(), 100);
        assert!(p.pairs.iter().all(|x| x.dt_ns == 0));
    }

    #[test]
    fn thirty_vs_fifty_hz_within_half_period() {
        let tracker = series(&grid(30.0, 300, 3_000_000), 30.0);
        let truth = series(&grid(50.0, 500, 0), 50.0);
        let p = pair_nearest(&tracker, &truth, 30_000_000).unwrap();
        assert_eq!(p.len(), 300);
        assert!(p.max_abs_dt_ns <= 10_000_000, "{}", p.max_abs_dt_ns);
    }

    #[test]
    fn bound_matches_mean_displacement_and_max_caps_it() {
        // 29.97 Hz against 50 Hz sweeps the phase quasi-uniformly.
        let speed = 50.0;
        let tracker = series(&grid(29.97, 9000, 1_234_567), 29.97);
        let truth = series(&grid(50.0, 15100, 0), 50.0);
        let p = pair_nearest(&tracker, &truth, 30_000_000).unwrap();
        let disp: Vec<f64> = p
            .pairs
            .iter()
            .map(|x| speed * (x.dt_ns.unsigned_abs() as f64) * 1e-9)
            .collect();
        let mean = disp.iter().sum::<f64>() / disp.len() as f64;
        let worst = disp.iter().copied().fold(0.0, f64::max);
        assert!(
            (mean / pairing_error_bound(speed, 50.0) - 1.0).abs() < 0.02,
            "{mean}"
        );
        assert!(worst <= pairing_error_max(speed, 50.0) + 1e-9, "{worst}");
    }

    #[test]
    fn disjoint_ranges_rejected() {
        let a = series(&[0, 10, 20], 1e8);
        let b = series(&[100, 110], 1e8);
        assert!(matches!(
            pair_nearest(&a, &b, 1000),
            Err(Error::NoTimeOverlap)
        ));
    }

    #[test]
    fn gaps_dropped_and_counted() {
        let tracker = series(&[0, 100, 500, 900], 1e7);
        let truth = series(&[0, 100, 900], 1e7);
        let p = pair_nearest(&tracker, &truth, 50).unwrap();
        assert_eq!(p.len(), 3);
        assert_eq!(p.dropped_gap, 1);
    }

    #[test]
    fn reuse_cap_respected() {
        let tracker = series(&[0, 1, 2, 3], 1e9);
        let truth = series(&[0, 1000], 1e6);
        let p = pair_nearest_capped(&tracker, &truth, 10, Some(2)).unwrap();
        assert_eq!(p.len(), 2);
        assert_eq!(p.dropped_reuse, 2);
        assert_eq!(p.max_truth_reuse, 2);
    }

    #[test]
    fn bound_values() {
        assert_eq!(pairing_error_bound(50.0, 50.0), 0.25);
        assert_eq!(pairing_error_bound(0.0, 30.0), 0.0);
        assert_eq!(pairing_error_bound(10.0, 10.0), 0.25);
        assert_eq!(pairing_error_max(50.0, 50.0), 0.5);
        assert_eq!(
            pairing_error_bound(100.0, 50.0),
            2.0 * pairing_error_bound(50.0, 50.0)
        );
    }

    fn sorted_unique(v: Vec<u64>) -> Vec<u64> {
        let mut v = v;
        v.sort_unstable();
        v.dedup();
        v
    }

    proptest! {
        #[test]
        fn matches_exhaustive_argmin(
            a in proptest::collection::vec(0u64..10_000, 1..40),
            b in proptest::collection::vec(0u64..10_000, 1..40),
            gap in 1u64..3_000,
        ) {
            let (ta, tb) = (sorted_unique(a), sorted_unique(b));
            let tracker = series(&ta, 1e6);
            let truth = series(&tb, 1e6);
            match pair_nearest(&tracker, &truth, gap) {
                Err(Error::NoTimeOverlap) => {
                    prop_assert!(ta.last() < tb.first() || tb.last() < ta.first());
                }
                Err(e) => prop_assert!(false, "{e}"),
                Ok(p) => {
                    let mut expected = Vec::new();
                    for &t in &ta {
                        // earliest index minimising |dt|
                        let (best, d) = tb.iter().map(|&g| (g, t.abs_diff(g)))
                            .min_by_key(|&(g, d)| (d, g)).unwrap();
                        if d <= gap {
                            expected.push((t, best));
                        }
                    }
                    let got: Vec<(u64, u64)> = p.pairs.iter()
                        .map(|x| (x.tracker.t.nanos(), x.truth.t.nanos())).collect();
                    prop_assert_eq!(got, expected);
                    prop_assert!(p.len() <= ta.len());
                }
            }
        }
    }
}
