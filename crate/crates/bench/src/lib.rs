//! Fixtures shared by the benchmarks.

use nalgebra::{Rotation3, Vector3};
use posebench_core::cleaning::{run_pipeline, CleaningConfig};
use posebench_core::simulator::{preset, SimOutput};
use posebench_core::temporal::{pair_nearest, AlignmentConfig, PairedSeries};
use posebench_core::{apply, Vec3};

/// `n` correspondences on a spiral, mapped through a fixed rigid motion.
pub fn correspondences(n: usize) -> (Vec<Vec3>, Vec<Vec3>) {
    let rot = Rotation3::from_euler_angles(0.3, -0.2, 1.1);
    let shift = Vector3::new(250.0, -40.0, 900.0);
    let src: Vec<Vec3> = (0..n)
        .map(|i| {
            let a = i as f64 * 0.37;
            Vec3::new(300.0 * a.cos(), 300.0 * a.sin(), 2.0 * i as f64)
        })
        .collect();
    let dst = src.iter().map(|p| rot * p + shift).collect();
    (src, dst)
}

/// One simulated run of a named preset.
pub fn simulated(name: &str, seed: u64) -> SimOutput {
    preset(name)
        .expect("known preset")
        .with_seed(seed)
        .run()
        .expect("preset simulates")
}

/// Tracker samples mapped into the truth frame with the true placement.
pub fn aligned(out: &SimOutput) -> posebench_core::PoseSeries {
    apply(&out.tracker_to_truth, &out.tracker).expect("frames match")
}

pub fn paired(out: &SimOutput) -> PairedSeries {
    let gap = AlignmentConfig::default().max_gap_for(&out.truth);
    pair_nearest(&aligned(out), &out.truth, gap).expect("series overlap")
}

/// Paired samples with every 50th tracker position pushed 80 mm off.
pub fn spiked(out: &SimOutput) -> PairedSeries {
    let mut p = paired(out);
    for pair in p.pairs.iter_mut().step_by(50) {
        pair.tracker.p.x += 80.0;
    }
    p
}

/// Sanity check used by the benches before timing.
pub fn cleaned_len(p: &PairedSeries) -> usize {
    run_pipeline(p, &CleaningConfig::default(), 10.0)
        .expect("cleaning runs")
        .paired
        .len()
}
