//! Named scenarios covering static cells (per pose and condition), dynamic
//! trials, system-behaviour cases, and multi-trial bundles.
//!
//! Static cells map a (mean accuracy, repeatability) pair onto a bias of
//! magnitude `sqrt(mean² − rep²)` plus isotropic per-repetition scatter of
//! `rep/√3` per axis, so that `E‖error‖ ≈ mean` and the repeatability comes
//! out at `rep`. Dynamic rows use the per-axis sigma as white noise and
//! `sqrt(rms² − sigma²)` per axis as bias.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use rayon::prelude::*;

use super::{
    hold_schedule, shuttle_schedule, simulate, static_schedule, ConfidentWrong, DropoutWindow,
    FaultConfig, SimOutput, SpikeConfig, TrackerPlacement, TruthSchedule,
};
use crate::error::{Error, Result};
use crate::ingest::write_pose_log;
use crate::manifest::{
    write_manifest, Category, EvalConfig, EventKind, HmdPosition, PathShape, Placement,
    ReferenceSpec, SessionFile, TrialManifest, SESSION_SCHEMA,
};
use crate::model::{Quaternion, Timestamp, Vec3};
use crate::reference::{gen_iso_cube_poses, schedule_with};

/// Manifest fields of the trial a scenario produces.
#[derive(Clone, Debug, PartialEq)]
pub struct TrialTemplate {
    pub trial_id: String,
    pub category: Category,
    pub protocol_id: String,
    pub hmd_position: HmdPosition,
    pub speed: f64,
    pub repetitions: u32,
    pub reference: Option<ReferenceSpec>,
}

#[derive(Clone, Debug)]
pub struct Scenario {
    pub name: String,
    /// What the preset reproduces, with its target values.
    pub description: String,
    pub template: TrialTemplate,
    pub schedule: TruthSchedule,
    pub faults: FaultConfig,
}

impl Scenario {
    pub fn with_seed(mut self, seed: u64) -> Self {
        self.faults.rng_seed = seed;
        self
    }

    pub fn run(&self) -> Result<SimOutput> {
        simulate(&self.schedule, &self.faults)
    }

    /// Manifest entry for this trial with the given log paths and the
    /// simulator's events and labels.
    pub fn manifest(
        &self,
        out: &SimOutput,
        tracker_log: PathBuf,
        truth_log: PathBuf,
    ) -> TrialManifest {
        let t = &self.template;
        TrialManifest {
            trial_id: t.trial_id.clone(),
            category: t.category,
            protocol_id: t.protocol_id.clone(),
            hmd_position: t.hmd_position,
            speed: t.speed,
            repetitions: t.repetitions,
            tracker_log,
            truth_log,
            events: out.events.clone(),
            registration: Some(t.trial_id.clone()),
            reference: t.reference.clone(),
            labels: Some(out.labels.clone()),
        }
    }
}

/// Multi-trial presets and their members.
pub const BUNDLES: &[(&str, &str)] = &[(
    "bundle-32",
    "16 static (SP01-SP08 under F2 50 mm/s and S3 25 mm/s), 12 dynamic and 4 system trials",
)];

const CONDITIONS: [(HmdPosition, f64); 6] = [
    (HmdPosition::F1, 25.0),
    (HmdPosition::F1, 50.0),
    (HmdPosition::F2, 25.0),
    (HmdPosition::F2, 50.0),
    (HmdPosition::S3, 25.0),
    (HmdPosition::S4, 25.0),
];

/// Static results per pose: (mean accuracy, max error, repeatability) for
/// each entry of `CONDITIONS`, mm.
const STATIC_TABLE: [(&str, [[f64; 3]; 6]); 8] = [
    (
        "SP01",
        [
            [2.6, 3.2, 0.4],
            [2.3, 7.6, 1.2],
            [4.7, 5.3, 0.5],
            [4.5, 16.7, 2.3],
            [6.6, 7.4, 0.3],
            [1.8, 2.1, 0.3],
        ],
    ),
    (
        "SP02",
        [
            [3.6, 4.0, 0.4],
            [1.0, 6.7, 1.1],
            [2.1, 2.5, 0.6],
            [0.5, 1.0, 0.4],
            [4.5, 4.6, 0.2],
            [2.4, 3.1, 0.3],
        ],
    ),
    (
        "SP03",
        [
            [3.3, 4.2, 0.4],
            [3.7, 16.6, 2.9],
            [1.9, 3.2, 0.6],
            [2.4, 3.1, 0.6],
            [3.2, 3.6, 0.3],
            [0.8, 1.5, 0.4],
        ],
    ),
    (
        "SP04",
        [
            [1.9, 2.6, 0.9],
            [1.6, 8.3, 1.1],
            [2.8, 10.7, 1.0],
            [1.3, 1.7, 0.5],
            [5.5, 6.0, 0.6],
            [2.3, 2.6, 0.5],
        ],
    ),
    (
        "SP05",
        [
            [3.4, 4.0, 0.4],
            [2.9, 8.5, 1.4],
            [3.1, 3.5, 0.5],
            [1.5, 2.4, 1.1],
            [346.9, 347.4, 0.3],
            [347.5, 348.1, 0.3],
        ],
    ),
    (
        "SP06",
        [
            [4.3, 12.2, 3.0],
            [2.3, 8.1, 1.1],
            [2.6, 4.5, 1.5],
            [1.3, 1.8, 0.5],
            [346.8, 347.6, 0.4],
            [346.5, 347.5, 0.4],
        ],
    ),
    (
        "SP07",
        [
            [3.4, 4.4, 0.8],
            [1.5, 7.5, 1.1],
            [1.6, 2.3, 0.7],
            [3.0, 4.2, 0.7],
            [6.8, 6.9, 0.3],
            [2.5, 3.1, 0.5],
        ],
    ),
    (
        "SP08",
        [
            [4.5, 5.0, 0.9],
            [2.6, 7.5, 1.3],
            [3.2, 4.0, 0.6],
            [2.6, 3.7, 0.5],
            [4.0, 4.3, 0.2],
            [2.0, 2.4, 0.2],
        ],
    ),
];

/// Cells reported as gross, self-consistent failures.
const FAILURE_CELLS: [(&str, HmdPosition); 4] = [
    ("SP05", HmdPosition::S3),
    ("SP06", HmdPosition::S3),
    ("SP05", HmdPosition::S4),
    ("SP06", HmdPosition::S4),
];

struct DynamicRow {
    id: &'static str,
    trajectory: &'static str,
    position: HmdPosition,
    speed: f64,
    sigma: [f64; 3],
    rms: [f64; 3],
    drift: f64,
    fast_sampling: bool,
}

macro_rules! row {
    ($id:literal, $traj:literal, $pos:ident, $speed:literal, [$($s:literal),*], [$($r:literal),*], $drift:literal) => {
        row!($id, $traj, $pos, $speed, [$($s),*], [$($r),*], $drift, false)
    };
    ($id:literal, $traj:literal, $pos:ident, $speed:literal, [$($s:literal),*], [$($r:literal),*], $drift:literal, $fast:literal) => {
        DynamicRow {
            id: $id,
            trajectory: $traj,
            position: HmdPosition::$pos,
            speed: $speed,
            sigma: [$($s),*],
            rms: [$($r),*],
            drift: $drift,
            fast_sampling: $fast,
        }
    };
}

/// Per-trial dynamic results: per-axis sigma and RMS (mm) and 3D drift
/// (mm/s). Rows run at 10 Hz at 10 mm/s unless flagged as 50 Hz.
const DYNAMIC_TABLE: [DynamicRow; 32] = [
    row!(
        "T01",
        "circle",
        F1,
        10.0,
        [1.61, 2.62, 1.46],
        [2.08, 2.62, 3.00],
        0.0023
    ),
    row!(
        "T02",
        "circle",
        F2,
        10.0,
        [0.92, 0.51, 1.44],
        [1.65, 1.46, 4.16],
        0.0002
    ),
    row!(
        "T03",
        "circle",
        S3,
        10.0,
        [1.17, 0.43, 0.48],
        [1.86, 0.88, 0.50],
        -0.0003
    ),
    row!(
        "T04",
        "circle",
        S4,
        10.0,
        [1.64, 0.86, 0.57],
        [3.20, 2.60, 0.76],
        0.0
    ),
    row!(
        "T05",
        "circle",
        F1,
        50.0,
        [0.50, 0.58, 1.99],
        [1.50, 2.71, 3.04],
        -0.0009
    ),
    row!(
        "T06",
        "circle",
        F2,
        50.0,
        [0.97, 0.83, 1.12],
        [1.19, 0.84, 2.72],
        -0.0022
    ),
    row!(
        "T07",
        "circle",
        S4,
        50.0,
        [0.87, 0.45, 0.41],
        [0.91, 0.87, 1.06],
        0.0011
    ),
    row!(
        "T08",
        "line",
        F1,
        10.0,
        [0.33, 0.45, 0.50],
        [5.12, 1.04, 1.10],
        -0.0003
    ),
    row!(
        "T09",
        "line",
        F2,
        10.0,
        [0.56, 0.97, 0.69],
        [3.63, 1.36, 1.40],
        0.0003
    ),
    row!(
        "T10",
        "line",
        S3,
        10.0,
        [0.67, 0.40, 0.14],
        [0.73, 0.48, 0.14],
        -0.0003
    ),
    row!(
        "T11",
        "line",
        S4,
        10.0,
        [0.94, 0.58, 0.29],
        [1.73, 2.84, 0.83],
        0.0016
    ),
    row!(
        "T12",
        "line",
        F1,
        50.0,
        [0.44, 0.59, 0.65],
        [0.66, 0.61, 0.91],
        -0.0035
    ),
    row!(
        "T13",
        "line",
        F2,
        50.0,
        [0.64, 0.63, 0.68],
        [0.64, 0.64, 3.12],
        -0.0054
    ),
    row!(
        "T14",
        "line",
        S3,
        50.0,
        [0.76, 0.50, 0.15],
        [0.92, 0.50, 1.16],
        -0.0001
    ),
    row!(
        "T15",
        "line",
        S4,
        50.0,
        [0.85, 0.74, 0.17],
        [1.30, 1.00, 0.57],
        0.0162
    ),
    row!(
        "T16",
        "raster",
        F1,
        10.0,
        [0.68, 0.36, 0.56],
        [11.07, 8.27, 7.28],
        0.0012
    ),
    row!(
        "T17",
        "raster",
        F2,
        10.0,
        [1.50, 0.93, 0.61],
        [13.02, 8.46, 6.05],
        0.0001
    ),
    row!(
        "T18",
        "raster",
        S3,
        10.0,
        [0.74, 0.28, 0.25],
        [11.83, 8.54, 7.99],
        -0.0006
    ),
    row!(
        "T19",
        "raster",
        S4,
        10.0,
        [1.05, 0.54, 0.41],
        [12.14, 7.62, 6.00],
        -0.0003
    ),
    row!(
        "T20",
        "raster",
        F1,
        50.0,
        [0.72, 0.53, 0.69],
        [10.82, 7.13, 4.75],
        -0.0018
    ),
    row!(
        "T21",
        "raster",
        F2,
        10.0,
        [0.50, 0.32, 0.30],
        [14.32, 7.61, 6.58],
        0.0,
        true
    ),
    row!(
        "T22",
        "raster",
        F2,
        50.0,
        [1.65, 0.96, 0.77],
        [14.39, 7.32, 6.54],
        0.0032
    ),
    row!(
        "T23",
        "raster",
        S3,
        50.0,
        [0.67, 0.23, 0.21],
        [12.76, 8.01, 8.15],
        0.0024
    ),
    row!(
        "T24",
        "raster",
        S4,
        50.0,
        [0.69, 0.30, 0.28],
        [12.57, 6.30, 7.86],
        -0.0001
    ),
    row!(
        "T25",
        "square",
        F1,
        10.0,
        [0.79, 0.92, 1.79],
        [1.30, 2.40, 5.05],
        0.0002
    ),
    row!(
        "T26",
        "square",
        F2,
        10.0,
        [1.20, 1.18, 1.79],
        [2.28, 1.91, 2.62],
        0.0002
    ),
    row!(
        "T27",
        "square",
        S3,
        10.0,
        [1.13, 0.57, 0.45],
        [1.51, 0.79, 0.52],
        0.0002
    ),
    row!(
        "T28",
        "square",
        S4,
        10.0,
        [0.66, 1.27, 1.01],
        [0.90, 1.69, 1.10],
        0.0
    ),
    row!(
        "T29",
        "square",
        F1,
        50.0,
        [1.08, 1.26, 1.42],
        [1.09, 1.30, 3.24],
        0.0003
    ),
    row!(
        "T30",
        "square",
        F2,
        50.0,
        [1.16, 1.09, 1.10],
        [1.16, 1.12, 3.83],
        0.0020
    ),
    row!(
        "T31",
        "square",
        S3,
        50.0,
        [0.64, 0.59, 0.58],
        [0.69, 1.23, 0.63],
        0.0002
    ),
    row!(
        "T32",
        "square",
        S4,
        50.0,
        [0.70, 1.09, 0.95],
        [0.80, 1.10, 1.40],
        -0.0013
    ),
];

/// Trajectory-class averages: (name, sigma, rms, drift).
const AVERAGE_ROWS: [(&str, [f64; 3], [f64; 3], f64); 4] = [
    ("circle", [1.100, 0.900, 1.067], [1.770, 1.711, 2.177], 0.0),
    ("line", [0.649, 0.608, 0.409], [1.841, 1.059, 1.154], 0.0011),
    (
        "raster",
        [0.911, 0.494, 0.453],
        [12.547, 7.696, 6.800],
        0.0004,
    ),
    (
        "square",
        [0.920, 0.996, 1.136],
        [1.216, 1.443, 2.299],
        0.0002,
    ),
];

const BUNDLE_32_DYNAMIC: [&str; 11] = [
    "T03", "T06", "T07", "T10", "T12", "T14", "T15", "T27", "T28", "T31", "T32",
];
const BUNDLE_32_SYSTEM: [&str; 4] = ["RT03-10", "SYT01", "SYT02", "ST01"];

const OTHER_PRESETS: [&str; 14] = [
    "zero-fault",
    "calibration",
    "spikes",
    "drift-0.01",
    "drift-0.0023",
    "rate-10hz",
    "rate-50hz",
    "DT04-1",
    "RT03-10",
    "RT03-50",
    "SYT01",
    "SYT02",
    "ST01",
    "T10",
];

const TRUTH_RATE_FAST: f64 = 50.0;
const STATIC_REPS: u32 = 30;
const STATIC_HOLD_S: f64 = 3.0;
const STATIC_JITTER: f64 = 0.02;
const SYSTEM_JITTER: f64 = 0.02;

fn rot_z(deg: f64) -> [f64; 4] {
    let h = deg.to_radians() / 2.0;
    [h.cos(), 0.0, 0.0, h.sin()]
}

/// Tracker world frame per headset placement.
fn placement(pos: HmdPosition) -> TrackerPlacement {
    let (deg, t) = match pos {
        HmdPosition::F1 => (20.0, [400.0, 50.0, 300.0]),
        HmdPosition::F2 => (10.0, [500.0, -30.0, 320.0]),
        HmdPosition::S3 => (45.0, [300.0, 300.0, 250.0]),
        HmdPosition::S4 => (-45.0, [350.0, -350.0, 260.0]),
    };
    TrackerPlacement {
        rotation: rot_z(deg),
        translation: t,
    }
}

fn fmt_speed(speed: f64) -> String {
    crate::manifest::fmt_speed(speed)
}

/// Every single-trial preset name.
pub fn scenario_names() -> Vec<String> {
    let mut names: Vec<String> = Vec::new();
    for (pose, _) in STATIC_TABLE {
        for (pos, speed) in CONDITIONS {
            names.push(format!("{pose}-{pos}-{}", fmt_speed(speed)));
        }
    }
    names.extend(["SP05-S3", "SP06-S3"].map(String::from));
    names.extend(DYNAMIC_TABLE.iter().map(|r| r.id.to_string()));
    names.extend(AVERAGE_ROWS.iter().map(|r| format!("{}-avg", r.0)));
    names.extend(OTHER_PRESETS.iter().map(|s| s.to_string()));
    names.sort();
    names.dedup();
    names
}

fn unknown(name: &str) -> Error {
    let mut all = scenario_names();
    all.extend(BUNDLES.iter().map(|b| b.0.to_string()));
    Error::UnknownPreset {
        name: name.to_string(),
        available: all.join(", "),
    }
}

/// Expands a preset or bundle name into its scenarios.
pub fn resolve_scenarios(name: &str) -> Result<Vec<Scenario>> {
    match name {
        "bundle-32" => bundle_32(),
        _ => Ok(vec![preset(name)?]),
    }
}

/// Single-trial preset by name. The seed is 0; use [`Scenario::with_seed`].
pub fn preset(name: &str) -> Result<Scenario> {
    if let Some(s) = static_preset(name)? {
        return Ok(s);
    }
    if let Some(row) = DYNAMIC_TABLE.iter().find(|r| r.id == name) {
        return dynamic_row(row);
    }
    if let Some(avg) = name.strip_suffix("-avg") {
        if let Some((traj, sigma, rms, drift)) = AVERAGE_ROWS.iter().find(|r| r.0 == avg) {
            let mut s = dynamic_generic(
                name,
                traj,
                HmdPosition::F2,
                10.0,
                *sigma,
                *rms,
                *drift,
                false,
            )?;
            s.description = format!("{traj} class average: rms3D target {:.3} mm", norm3(rms));
            return Ok(s);
        }
    }
    system_or_misc(name)
}

fn norm3(v: &[f64; 3]) -> f64 {
    Vec3::from(*v).norm()
}

fn static_target(pose: &str) -> Result<(Vec3, Quaternion)> {
    let cube = gen_iso_cube_poses(200.0, 45.0)?;
    if let Some(p) = cube.get(pose) {
        return Ok((p.position, p.orientation));
    }
    let q = cube.poses[0].orientation;
    let p = match pose {
        "SP06" => Vec3::new(-150.0, 120.0, -60.0),
        "SP07" => Vec3::new(150.0, 120.0, -60.0),
        "SP08" => Vec3::new(0.0, -150.0, -40.0),
        _ => return Err(unknown(pose)),
    };
    Ok((p, q))
}

/// Bias direction per pose; fixed so presets stay reproducible.
fn bias_direction(pose_index: usize) -> Vec3 {
    let a = pose_index as f64 * 0.9;
    Vec3::new(a.cos(), a.sin(), 0.3).normalize()
}

fn static_preset(name: &str) -> Result<Option<Scenario>> {
    let alias = match name {
        "SP05-S3" => "SP05-S3-25",
        "SP06-S3" => "SP06-S3-25",
        other => other,
    };
    for (pi, (pose, cells)) in STATIC_TABLE.iter().enumerate() {
        for (ci, (pos, speed)) in CONDITIONS.iter().enumerate() {
            if alias != format!("{pose}-{pos}-{}", fmt_speed(*speed)) {
                continue;
            }
            let [mean, max, rep] = cells[ci];
            let (target, q) = static_target(pose)?;
            let schedule = static_schedule(
                target,
                q,
                Vec3::new(0.0, 0.0, 50.0),
                *speed,
                STATIC_REPS,
                STATIC_HOLD_S,
                TRUTH_RATE_FAST,
            )?;
            let mut faults = FaultConfig::clean(0, 30.0);
            faults.placement = placement(*pos);
            faults.jitter_sigma = [STATIC_JITTER; 3];
            faults.orient_bias_deg = 1.5;
            faults.orient_jitter_deg = 0.05;
            let dir = bias_direction(pi);
            let iso = rep / 3f64.sqrt();
            if FAILURE_CELLS.contains(&(*pose, *pos)) {
                let off = dir * mean;
                faults.confident_wrong = Some(ConfidentWrong {
                    offset: [off.x, off.y, off.z],
                    scatter: [iso; 3],
                });
            } else if alias == "SP02-F2-50" {
                // Anisotropic scatter matches the max-error cell as well.
                faults.bias = [0.4, 0.0, 0.0];
                faults.rep_scatter = [0.28, 0.22, 0.12];
            } else {
                let b = dir * (mean * mean - rep * rep).max(0.0).sqrt();
                faults.bias = [b.x, b.y, b.z];
                faults.rep_scatter = [iso; 3];
            }
            let trial_id = format!("{pose}-{pos}-{}", fmt_speed(*speed));
            return Ok(Some(Scenario {
                name: name.to_string(),
                description: format!(
                    "{pose} under {pos} ({} mm/s): mean {mean}, max {max}, repeatability {rep} mm",
                    fmt_speed(*speed)
                ),
                template: TrialTemplate {
                    trial_id,
                    category: Category::StaticPose,
                    protocol_id: pose.to_string(),
                    hmd_position: *pos,
                    speed: *speed,
                    repetitions: STATIC_REPS,
                    reference: None,
                },
                schedule,
                faults,
            }));
        }
    }
    Ok(None)
}

fn reference_for(trajectory: &str) -> Result<(String, ReferenceSpec)> {
    let (protocol, shape, offset) = match trajectory {
        "line" => (
            "DT01",
            PathShape::Line { length: 500.0 },
            [-250.0, 0.0, 0.0],
        ),
        "circle" => ("DT02", PathShape::Circle { radius: 200.0 }, [0.0, 0.0, 0.0]),
        "square" => ("DT03", PathShape::Square { side: 300.0 }, [0.0, 0.0, 0.0]),
        "torus" => (
            "DT04-1",
            PathShape::Torus {
                major: 100.0,
                minor: 30.0,
                turns: 5,
            },
            [0.0, 0.0, 0.0],
        ),
        "raster" => (
            "DT04-2",
            PathShape::Raster {
                width: 100.0,
                height: 100.0,
                lines: 5,
            },
            [-50.0, -50.0, 0.0],
        ),
        other => {
            return Err(Error::InvalidParameter(format!(
                "unknown trajectory `{other}`"
            )));
        }
    };
    Ok((
        protocol.to_string(),
        ReferenceSpec {
            shape,
            placement: Some(Placement {
                rotation: [1.0, 0.0, 0.0, 0.0],
                translation: offset,
            }),
        },
    ))
}

/// Standard reference shape of a dynamic protocol (`DT01`..`DT04-2`),
/// placed as in the presets.
pub fn protocol_reference(protocol_id: &str) -> Result<ReferenceSpec> {
    let trajectory = match protocol_id {
        "DT01" => "line",
        "DT02" => "circle",
        "DT03" => "square",
        "DT04" | "DT04-1" => "torus",
        "DT04-2" => "raster",
        other => {
            return Err(Error::InvalidParameter(format!(
                "`{other}` has no standard path; expected DT01, DT02, DT03, DT04-1 or DT04-2"
            )))
        }
    };
    Ok(reference_for(trajectory)?.1)
}

fn path_schedule(
    spec: &ReferenceSpec,
    protocol: &str,
    speed: f64,
    rate: f64,
) -> Result<TruthSchedule> {
    let path = spec.build(protocol)?;
    Ok(TruthSchedule::plain(schedule_with(
        &path,
        speed,
        rate,
        Timestamp::ZERO,
        Quaternion::IDENTITY,
    )?))
}

fn dynamic_row(row: &DynamicRow) -> Result<Scenario> {
    let mut s = dynamic_generic(
        row.id,
        row.trajectory,
        row.position,
        row.speed,
        row.sigma,
        row.rms,
        row.drift,
        row.fast_sampling,
    )?;
    let sigma3d_hint = match row.id {
        "T10" => " (sigma3D 0.380, rms3D 0.880, max3D 2.100)",
        _ => "",
    };
    s.description = format!(
        "{} {} {} {} mm/s: per-axis sigma {:?}, rms {:?}{sigma3d_hint}",
        row.id,
        row.trajectory,
        row.position,
        fmt_speed(row.speed),
        row.sigma,
        row.rms
    );
    Ok(s)
}

#[allow(clippy::too_many_arguments)]
fn dynamic_generic(
    id: &str,
    trajectory: &str,
    position: HmdPosition,
    speed: f64,
    sigma: [f64; 3],
    rms: [f64; 3],
    drift: f64,
    fast_sampling: bool,
) -> Result<Scenario> {
    let (protocol, spec) = reference_for(trajectory)?;
    let slow = speed <= 10.0 && !fast_sampling;
    let (truth_rate, tracker_rate) = if slow {
        (10.0, 10.0)
    } else {
        (TRUTH_RATE_FAST, 30.0)
    };
    let schedule = path_schedule(&spec, &protocol, speed, truth_rate)?;
    let mut faults = FaultConfig::clean(0, tracker_rate);
    faults.placement = placement(position);
    faults.jitter_sigma = sigma;
    for k in 0..3 {
        faults.bias[k] = (rms[k] * rms[k] - sigma[k] * sigma[k]).max(0.0).sqrt();
    }
    faults.drift_ramp = drift;
    if norm3(&faults.bias) > 0.0 {
        faults.drift_direction = faults.bias;
    }
    faults.orient_bias_deg = 1.5;
    faults.orient_jitter_deg = 0.1;
    Ok(Scenario {
        name: id.to_string(),
        description: String::new(),
        template: TrialTemplate {
            trial_id: id.to_string(),
            category: Category::DynamicTrajectory,
            protocol_id: protocol,
            hmd_position: position,
            speed,
            repetitions: 1,
            reference: Some(spec),
        },
        schedule,
        faults,
    })
}

fn template(
    id: &str,
    category: Category,
    protocol: &str,
    pos: HmdPosition,
    speed: f64,
) -> TrialTemplate {
    TrialTemplate {
        trial_id: id.to_string(),
        category,
        protocol_id: protocol.to_string(),
        hmd_position: pos,
        speed,
        repetitions: 1,
        reference: None,
    }
}

fn system_faults(pos: HmdPosition, rate: f64) -> FaultConfig {
    let mut f = FaultConfig::clean(0, rate);
    f.placement = placement(pos);
    f.jitter_sigma = [SYSTEM_JITTER; 3];
    f.bias = [0.8, -0.5, 0.3];
    f.orient_bias_deg = 1.0;
    f
}

fn occlusion(start_s: f64, end_s: f64, recovery_delay_s: Option<f64>) -> DropoutWindow {
    DropoutWindow {
        start_s,
        end_s,
        recovery_delay_s,
        kind: EventKind::OcclusionFull,
    }
}

fn system_or_misc(name: &str) -> Result<Scenario> {
    let a = Vec3::new(-100.0, 0.0, 0.0);
    let b = Vec3::new(100.0, 0.0, 0.0);
    let home = Vec3::new(0.0, 50.0, 0.0);
    let scenario = |description: &str, template: TrialTemplate, schedule, faults| Scenario {
        name: name.to_string(),
        description: description.to_string(),
        template,
        schedule,
        faults,
    };
    Ok(match name {
        "zero-fault" => {
            let (protocol, spec) = reference_for("line")?;
            let schedule = path_schedule(&spec, &protocol, 10.0, 10.0)?;
            let mut t = template(
                name,
                Category::DynamicTrajectory,
                &protocol,
                HmdPosition::F2,
                10.0,
            );
            t.reference = Some(spec);
            let mut f = FaultConfig::clean(0, 10.0);
            f.placement = placement(HmdPosition::F2);
            scenario("fault-free line; every metric is zero", t, schedule, f)
        }
        "calibration" => {
            let mut s = preset("T10")?;
            s.name = name.to_string();
            s.template.trial_id = name.to_string();
            s.faults.calibration_offset = [1.5, -1.0, 0.5];
            s.description = "T10 with a (1.5, -1.0, 0.5) mm hold-out calibration offset".into();
            s
        }
        "spikes" => {
            let (protocol, spec) = reference_for("line")?;
            let schedule = path_schedule(&spec, &protocol, 10.0, TRUTH_RATE_FAST)?;
            let mut t = template(
                name,
                Category::DynamicTrajectory,
                &protocol,
                HmdPosition::F2,
                10.0,
            );
            t.reference = Some(spec);
            let mut f = FaultConfig::clean(0, 30.0);
            f.placement = placement(HmdPosition::F2);
            f.jitter_sigma = [0.3; 3];
            f.bias = [0.5, 0.3, 0.2];
            f.spikes = Some(SpikeConfig {
                fraction: 0.01,
                min_mm: 30.0,
                max_mm: 60.0,
                fixed: vec![34.72],
            });
            scenario(
                "line with 1 % spikes of 30-60 mm, one of them 34.72 mm",
                t,
                schedule,
                f,
            )
        }
        "drift-0.01" | "drift-0.0023" => {
            let ramp = if name == "drift-0.01" { 0.01 } else { 0.0023 };
            let (protocol, spec) = reference_for("line")?;
            let schedule = path_schedule(&spec, &protocol, 10.0, TRUTH_RATE_FAST)?;
            let mut t = template(
                name,
                Category::DynamicTrajectory,
                &protocol,
                HmdPosition::F1,
                10.0,
            );
            t.reference = Some(spec);
            let mut f = FaultConfig::clean(0, TRUTH_RATE_FAST);
            f.placement = placement(HmdPosition::F1);
            f.jitter_sigma = [0.5; 3];
            f.bias = [5.0, 0.0, 0.0];
            f.drift_ramp = ramp;
            f.drift_direction = [1.0, 0.0, 0.0];
            scenario(
                &format!("50 s line, sigma 0.5 mm, drift {ramp} mm/s"),
                t,
                schedule,
                f,
            )
        }
        "rate-10hz" | "rate-50hz" => {
            let truth_rate = if name == "rate-10hz" { 10.0 } else { 50.0 };
            let (protocol, spec) = reference_for("line")?;
            let schedule = path_schedule(&spec, &protocol, 10.0, truth_rate)?;
            let mut t = template(
                name,
                Category::DynamicTrajectory,
                &protocol,
                HmdPosition::F2,
                10.0,
            );
            t.reference = Some(spec);
            let mut f = FaultConfig::clean(0, 29.97);
            f.placement = placement(HmdPosition::F2);
            f.jitter_sigma = [0.25; 3];
            f.latency_ms = 20.0;
            f.timestamp_jitter_ms = 2.0;
            scenario(
                &format!("slow line scored against {truth_rate} Hz truth; sigma3D grows at 10 Hz"),
                t,
                schedule,
                f,
            )
        }
        "DT04-1" => {
            let mut s = dynamic_generic(
                name,
                "torus",
                HmdPosition::F2,
                10.0,
                [0.5, 0.5, 0.5],
                [1.1, 0.7, 0.6],
                0.0,
                false,
            )?;
            s.description = "torus around a pipe, R 100 mm, r 30 mm, 5 turns".into();
            s
        }
        "RT03-10" | "RT03-50" => {
            let speed = if name == "RT03-10" { 10.0 } else { 50.0 };
            let schedule = shuttle_schedule(a, b, speed, 40.0, TRUTH_RATE_FAST)?;
            let mut f = system_faults(HmdPosition::F2, 30.0);
            if speed == 10.0 {
                f.dropouts = vec![
                    occlusion(10.0, 15.0, Some(0.0)),
                    occlusion(25.0, 30.0, Some(0.0)),
                ];
            } else {
                f.dropouts = vec![occlusion(10.0, 15.0, None)];
            }
            let t = template(name, Category::Occlusion, "RT03", HmdPosition::F2, speed);
            let what = if speed == 10.0 {
                "two 5 s occlusions at 10 mm/s, instant recovery: OSR 100 %"
            } else {
                "5 s occlusion at 50 mm/s, no recovery: OSR 0 %"
            };
            scenario(what, t, schedule, f)
        }
        "SYT01" => {
            let schedule = hold_schedule(home, Quaternion::IDENTITY, 20.0, TRUTH_RATE_FAST)?;
            let mut f = system_faults(HmdPosition::F2, 30.0);
            f.init_delay_s = Some(0.6);
            let t = template(name, Category::Reliability, "SYT01", HmdPosition::F2, 0.0);
            scenario("tracking starts 0.6 s after system start", t, schedule, f)
        }
        "SYT02" => {
            let schedule = shuttle_schedule(a, b, 10.0, 40.0, TRUTH_RATE_FAST)?;
            let mut f = system_faults(HmdPosition::F2, 30.0);
            f.dropouts = vec![DropoutWindow {
                start_s: 12.0,
                end_s: 18.0,
                recovery_delay_s: Some(0.5),
                kind: EventKind::ExitVolume,
            }];
            let t = template(name, Category::Reliability, "SYT02", HmdPosition::F2, 10.0);
            scenario(
                "re-acquisition 0.5 s after re-entering the volume",
                t,
                schedule,
                f,
            )
        }
        "ST01" => {
            let schedule = hold_schedule(home, Quaternion::IDENTITY, 120.0, TRUTH_RATE_FAST)?;
            let mut f = system_faults(HmdPosition::F2, 30.0);
            f.energy_save_after_s = Some(5.0);
            let t = template(name, Category::Stability, "ST01", HmdPosition::F2, 0.0);
            scenario(
                "static hold; output stops after 5 s of stillness, so drift cannot be assessed",
                t,
                schedule,
                f,
            )
        }
        _ => return Err(unknown(name)),
    })
}

fn bundle_32() -> Result<Vec<Scenario>> {
    let mut out = Vec::new();
    for (pose, _) in STATIC_TABLE {
        out.push(preset(&format!("{pose}-F2-50"))?);
    }
    for (pose, _) in STATIC_TABLE {
        out.push(preset(&format!("{pose}-S3-25"))?);
    }
    for id in BUNDLE_32_DYNAMIC {
        out.push(preset(id)?);
    }
    out.push(preset("DT04-1")?);
    for id in BUNDLE_32_SYSTEM {
        out.push(preset(id)?);
    }
    Ok(out)
}

/// SplitMix64 step; spreads a session seed over its trials.
fn trial_seed(seed: u64, index: usize) -> u64 {
    let mut z = seed.wrapping_add((index as u64 + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Simulates every scenario (in parallel, each with its own derived seed)
/// and writes `<trial>.tracker.csv`, `<trial>.truth.csv` and `session.json`
/// into `dir`. Returns the written paths, manifest first.
pub fn write_session(
    dir: &Path,
    name: &str,
    scenarios: &[Scenario],
    seed: u64,
) -> Result<Vec<PathBuf>> {
    if scenarios.is_empty() {
        return Err(Error::InvalidParameter("no scenarios to simulate".into()));
    }
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let outputs: Vec<SimOutput> = scenarios
        .par_iter()
        .enumerate()
        .map(|(i, s)| s.clone().with_seed(trial_seed(seed, i)).run())
        .collect::<Result<_>>()?;
    let mut written = Vec::new();
    let mut trials = Vec::new();
    let mut registrations = BTreeMap::new();
    for (s, out) in scenarios.iter().zip(&outputs) {
        let id = &s.template.trial_id;
        let tracker_name = PathBuf::from(format!("{id}.tracker.csv"));
        let truth_name = PathBuf::from(format!("{id}.truth.csv"));
        write_pose_log(dir.join(&tracker_name), &out.tracker)?;
        write_pose_log(dir.join(&truth_name), &out.truth)?;
        written.push(dir.join(&tracker_name));
        written.push(dir.join(&truth_name));
        let mut manifest = s.manifest(out, tracker_name, truth_name);
        if let Some(labels) = manifest.labels.as_mut() {
            labels.seed = trial_seed(seed, trials.len());
        }
        registrations.insert(id.clone(), out.registration.clone());
        trials.push(manifest);
    }
    let file = SessionFile {
        schema: SESSION_SCHEMA.to_string(),
        name: name.to_string(),
        config: EvalConfig::default(),
        registrations,
        trials,
    };
    let manifest_path = dir.join("session.json");
    write_manifest(&manifest_path, &file)?;
    written.insert(0, manifest_path);
    Ok(written)
}
