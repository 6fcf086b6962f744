use proptest::prelude::*;

use posebench_core::cleaning::{run_pipeline, CleaningConfig};
use posebench_core::manifest::{Event, EventKind};
use posebench_core::metrics::pose::{error_stats, paired_error_series};
use posebench_core::metrics::system::{occlusion_metrics, StabilityRule};
use posebench_core::temporal::pair_nearest;
use posebench_core::{
    apply, FrameId, Pose, PoseSeries, Quaternion, RigidTransform, Timestamp, Vec3,
};

const PERIOD_NS: u64 = 20_000_000;

fn series(points: &[(f64, f64, f64)], valid: &[bool]) -> PoseSeries {
    let samples = points
        .iter()
        .zip(valid.iter().cycle())
        .enumerate()
        .map(|(k, (&(x, y, z), &ok))| {
            let mut p = Pose::new(
                Timestamp::from_nanos(k as u64 * PERIOD_NS),
                Vec3::new(x, y, z),
                Quaternion::IDENTITY,
                FrameId::Reference,
            );
            p.valid = ok;
            p
        })
        .collect();
    PoseSeries::new(FrameId::Reference, samples, 50.0).unwrap()
}

fn offsets(truth: &PoseSeries, noise: &[(f64, f64, f64)]) -> PoseSeries {
    let pts: Vec<(f64, f64, f64)> = truth
        .samples()
        .iter()
        .zip(noise)
        .map(|(s, &(a, b, c))| (s.p.x + a, s.p.y + b, s.p.z + c))
        .collect();
    series(&pts, &[true])
}

fn motion() -> impl Strategy<Value = RigidTransform> {
    (
        (-1.0..1.0f64, -1.0..1.0f64, -1.0..1.0f64, 0.1..1.0f64),
        (-500.0..500.0f64, -500.0..500.0f64, -500.0..500.0f64),
    )
        .prop_map(|((x, y, z, w), (a, b, c))| {
            let q = Quaternion::from_unnormalized(w, x, y, z).unwrap();
            RigidTransform::from_quaternion(
                &q,
                Vec3::new(a, b, c),
                FrameId::Reference,
                FrameId::Reference,
            )
            .unwrap()
        })
}

fn coords(n: std::ops::Range<usize>, r: f64) -> impl Strategy<Value = Vec<(f64, f64, f64)>> {
    prop::collection::vec((-r..r, -r..r, -r..r), n)
}

proptest! {
    #[test]
    fn error_magnitudes_survive_a_common_rigid_motion(
        truth_pts in coords(3..60, 300.0),
        noise in coords(60..61, 2.0),
        m in motion(),
    ) {
        let truth = series(&truth_pts, &[true]);
        let tracker = offsets(&truth, &noise);
        let stats = |tr: &PoseSeries, gt: &PoseSeries| {
            let paired = pair_nearest(tr, gt, PERIOD_NS / 2).unwrap();
            error_stats(&paired_error_series(&paired).unwrap()).unwrap()
        };
        let before = stats(&tracker, &truth);
        let after = stats(&apply(&m, &tracker).unwrap(), &apply(&m, &truth).unwrap());
        prop_assert_eq!(before.n, after.n);
        prop_assert!((before.rms.d3 - after.rms.d3).abs() < 1e-9);
        prop_assert!((before.sigma.d3 - after.sigma.d3).abs() < 1e-9);
        prop_assert!((before.max.d3 - after.max.d3).abs() < 1e-9);
        prop_assert!((before.mean_rot_deg - after.mean_rot_deg).abs() < 1e-6);
    }

    #[test]
    fn spread_never_exceeds_rms(
        truth_pts in coords(2..80, 100.0),
        noise in coords(80..81, 50.0),
    ) {
        let truth = series(&truth_pts, &[true]);
        let tracker = offsets(&truth, &noise);
        let paired = pair_nearest(&tracker, &truth, 0).unwrap();
        let s = error_stats(&paired_error_series(&paired).unwrap()).unwrap();
        let tol = 1e-9;
        prop_assert!(s.sigma.x <= s.rms.x + tol);
        prop_assert!(s.sigma.y <= s.rms.y + tol);
        prop_assert!(s.sigma.z <= s.rms.z + tol);
        prop_assert!(s.sigma.d3 <= s.rms.d3 + tol);
        prop_assert!(s.rms.d3 <= s.max.d3 + tol);
    }

    #[test]
    fn occlusion_success_rate_is_a_percentage(
        pts in coords(20..400, 20.0),
        valid in prop::collection::vec(prop::bool::weighted(0.8), 1..30),
        windows in prop::collection::vec((0u64..10_000, 1u64..3_000), 1..6),
        speed in 0.0..100.0f64,
    ) {
        let tracker = series(&pts, &valid);
        let events: Vec<Event> = windows
            .iter()
            .map(|&(start_ms, len_ms)| Event {
                kind: EventKind::OcclusionFull,
                t_start: Timestamp::from_nanos(start_ms * 1_000_000),
                t_end: Timestamp::from_nanos((start_ms + len_ms) * 1_000_000),
            })
            .collect();
        let r = occlusion_metrics(&tracker, &events, &StabilityRule::default(), speed, None).unwrap();
        prop_assert_eq!(r.events.len() + r.skipped, events.len());
        if let Some(osr) = r.osr {
            prop_assert!((0.0..=100.0).contains(&osr));
        }
        for e in &r.events {
            if let Some(t) = e.recovery_s {
                prop_assert!(t >= 0.0);
            }
        }
    }

    #[test]
    fn cleaning_only_removes(
        truth_pts in coords(4..200, 100.0),
        noise in coords(200..201, 5.0),
        spikes in prop::collection::vec((0usize..200, 50.0..500.0f64), 0..10),
    ) {
        let truth = series(&truth_pts, &[true]);
        let mut noisy = noise.clone();
        for &(i, size) in &spikes {
            noisy[i].0 += size;
        }
        let tracker = offsets(&truth, &noisy);
        let paired = pair_nearest(&tracker, &truth, 0).unwrap();
        let c = run_pipeline(&paired, &CleaningConfig::default(), 10.0).unwrap();
        prop_assert_eq!(c.kept.len(), paired.len());
        prop_assert_eq!(c.kept.iter().filter(|k| **k).count(), c.paired.len());
        prop_assert_eq!(c.report.output, c.paired.len());
        prop_assert!((0.0..=1.0).contains(&c.report.rejected_fraction));
        let mut kept = c.paired.pairs.iter();
        for (p, k) in paired.pairs.iter().zip(&c.kept) {
            if *k {
                prop_assert_eq!(kept.next(), Some(p));
            }
        }
    }
}
