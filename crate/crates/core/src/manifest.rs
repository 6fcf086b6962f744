//! Trial manifests and the evaluation session they form.
//!
//! A session manifest is a JSON document (schema `posebench-session/1`)
//! listing trials, registration correspondences and evaluation config. File
//! paths inside it are relative to the manifest's own directory.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::cleaning::CleaningConfig;
use crate::error::{Error, Result};
use crate::ingest::SegmentationConfig;
use crate::metrics::system::{StabilityRule, SystemConfig};
use crate::model::{FrameId, Quaternion, RigidTransform, Timestamp, Vec3};
use crate::reference::{self, ReferencePath};
use crate::registration;
use crate::report::{DetectorConfig, RequirementConfig};
use crate::temporal::AlignmentConfig;

pub const SESSION_SCHEMA: &str = "posebench-session/1";

/// Protocol identifiers of the standard test plan. Anything else is accepted
/// and reported as a custom protocol.
pub const KNOWN_PROTOCOLS: &[&str] = &[
    "SP01", "SP02", "SP03", "SP04", "SP05", "SP06", "SP07", "SP08", "DT01", "DT02", "DT03", "DT04",
    "DT04-1", "DT04-2", "RT03", "SYT01", "SYT02", "ST01",
];

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Category {
    StaticPose,
    DynamicTrajectory,
    Occlusion,
    Reliability,
    Stability,
}

/// Head-mounted display placement relative to the workspace.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum HmdPosition {
    F1,
    F2,
    S3,
    S4,
}

impl fmt::Display for HmdPosition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            HmdPosition::F1 => "F1",
            HmdPosition::F2 => "F2",
            HmdPosition::S3 => "S3",
            HmdPosition::S4 => "S4",
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum EventKind {
    OcclusionPartial,
    OcclusionFull,
    ExitVolume,
    EnterVolume,
    SystemStart,
    RepStart,
    RepEnd,
}

impl EventKind {
    pub fn is_occlusion(self) -> bool {
        matches!(self, EventKind::OcclusionPartial | EventKind::OcclusionFull)
    }
}

/// Annotated time window. Instantaneous events have `t_start == t_end`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Event {
    pub kind: EventKind,
    #[serde(rename = "t_start_ns")]
    pub t_start: Timestamp,
    #[serde(rename = "t_end_ns")]
    pub t_end: Timestamp,
}

impl Event {
    pub fn instant(kind: EventKind, t: Timestamp) -> Self {
        Event {
            kind,
            t_start: t,
            t_end: t,
        }
    }

    pub fn duration_s(&self) -> f64 {
        self.t_end.secs_since(self.t_start)
    }
}

/// Placement of a generated reference path in the ground-truth frame.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Placement {
    /// Unit quaternion `[w, x, y, z]`.
    pub rotation: [f64; 4],
    pub translation: [f64; 3],
}

impl Placement {
    pub fn to_transform(&self) -> Result<RigidTransform> {
        let [w, x, y, z] = self.rotation;
        RigidTransform::from_quaternion(
            &Quaternion::new(w, x, y, z)?,
            Vec3::from(self.translation),
            FrameId::Reference,
            FrameId::GroundtruthWorld,
        )
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "shape", rename_all = "snake_case")]
pub enum PathShape {
    Line { length: f64 },
    Circle { radius: f64 },
    Square { side: f64 },
    Torus { major: f64, minor: f64, turns: u32 },
    Raster { width: f64, height: f64, lines: u32 },
}

/// Parameters of the reference path a dynamic trial was commanded along.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReferenceSpec {
    #[serde(flatten)]
    pub shape: PathShape,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub placement: Option<Placement>,
}

impl ReferenceSpec {
    /// Generates the path and moves it into the ground-truth frame.
    pub fn build(&self, protocol_id: &str) -> Result<ReferencePath> {
        let path = match self.shape {
            PathShape::Line { length } => reference::gen_line(length)?,
            PathShape::Circle { radius } => reference::gen_circle(radius)?,
            PathShape::Square { side } => reference::gen_square(side)?,
            PathShape::Torus {
                major,
                minor,
                turns,
            } => reference::gen_torus(major, minor, turns)?,
            PathShape::Raster {
                width,
                height,
                lines,
            } => reference::gen_raster(width, height, lines)?,
        }
        .with_protocol(protocol_id);
        match &self.placement {
            Some(p) => Ok(path.placed(&p.to_transform()?)),
            None => Ok(path),
        }
    }

    pub fn trajectory_name(&self) -> &'static str {
        match self.shape {
            PathShape::Line { .. } => "line",
            PathShape::Circle { .. } => "circle",
            PathShape::Square { .. } => "square",
            PathShape::Torus { .. } => "torus",
            PathShape::Raster { .. } => "raster",
        }
    }
}

/// One labelled correspondence between the tracker and ground-truth frames.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PointPair {
    pub label: String,
    pub tracker: [f64; 3],
    pub truth: [f64; 3],
    /// Held out of the fit and used only to score it.
    #[serde(default)]
    pub holdout: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RegistrationSet {
    pub pairs: Vec<PointPair>,
}

impl RegistrationSet {
    pub fn fit_pairs(&self) -> (Vec<Vec3>, Vec<Vec3>) {
        self.pairs
            .iter()
            .filter(|p| !p.holdout)
            .map(|p| (Vec3::from(p.tracker), Vec3::from(p.truth)))
            .unzip()
    }

    pub fn holdout_pairs(&self) -> Vec<(Vec3, Vec3)> {
        self.pairs
            .iter()
            .filter(|p| p.holdout)
            .map(|p| (Vec3::from(p.tracker), Vec3::from(p.truth)))
            .collect()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LabeledWindow {
    #[serde(rename = "t_start_ns")]
    pub start: Timestamp,
    #[serde(rename = "t_end_ns")]
    pub end: Timestamp,
}

/// Ground-truth fault annotations written by the simulator. Ignored by the
/// evaluation itself; used to score cleaning and detection.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct FaultLabels {
    pub seed: u64,
    #[serde(default)]
    pub spike_times: Vec<Timestamp>,
    #[serde(default)]
    pub dropouts: Vec<LabeledWindow>,
    #[serde(default)]
    pub energy_save: Vec<LabeledWindow>,
    #[serde(default)]
    pub dwell_windows: Vec<LabeledWindow>,
    #[serde(default)]
    pub confident_wrong: bool,
    #[serde(default)]
    pub calibration_offset: [f64; 3],
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrialManifest {
    pub trial_id: String,
    pub category: Category,
    pub protocol_id: String,
    pub hmd_position: HmdPosition,
    /// Commanded speed in mm/s (approach speed for static trials).
    pub speed: f64,
    pub repetitions: u32,
    pub tracker_log: PathBuf,
    pub truth_log: PathBuf,
    #[serde(default)]
    pub events: Vec<Event>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub registration: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reference: Option<ReferenceSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub labels: Option<FaultLabels>,
}

impl TrialManifest {
    pub fn is_custom_protocol(&self) -> bool {
        !KNOWN_PROTOCOLS.contains(&self.protocol_id.as_str())
    }

    /// Condition label in the form used by the static result tables,
    /// e.g. `F2 (50 mm/s)`.
    pub fn condition(&self) -> String {
        format!("{} ({} mm/s)", self.hmd_position, fmt_speed(self.speed))
    }

    pub fn events_of(&self, pred: impl Fn(EventKind) -> bool) -> Vec<Event> {
        let mut v: Vec<Event> = self
            .events
            .iter()
            .filter(|e| pred(e.kind))
            .copied()
            .collect();
        v.sort_by_key(|e| (e.t_start, e.t_end));
        v
    }

    fn validate(&self) -> Result<()> {
        let id = &self.trial_id;
        if self.repetitions < 1 {
            return Err(Error::Manifest(format!("{id}: repetitions must be >= 1")));
        }
        if !self.speed.is_finite() || self.speed < 0.0 {
            return Err(Error::Manifest(format!("{id}: speed must be >= 0")));
        }
        if self.category == Category::DynamicTrajectory && self.speed <= 0.0 {
            return Err(Error::Manifest(format!(
                "{id}: dynamic trials need a positive speed"
            )));
        }
        for e in &self.events {
            if e.t_end < e.t_start {
                return Err(Error::Manifest(format!(
                    "{id}: event {:?} ends before it starts",
                    e.kind
                )));
            }
        }
        let kinds: BTreeSet<EventKind> = self.events.iter().map(|e| e.kind).collect();
        for kind in kinds {
            let evs = self.events_of(|k| k == kind);
            for w in evs.windows(2) {
                if w[1].t_start < w[0].t_end {
                    return Err(Error::Manifest(format!(
                        "{id}: overlapping {kind:?} windows at {} and {}",
                        w[0].t_start, w[1].t_start
                    )));
                }
            }
        }
        Ok(())
    }
}

pub(crate) fn fmt_speed(speed: f64) -> String {
    if speed.fract() == 0.0 {
        format!("{}", speed as i64)
    } else {
        format!("{speed}")
    }
}

/// Every tunable of the evaluation pipeline; each section falls back to its
/// documented defaults when omitted.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EvalConfig {
    pub cleaning: CleaningConfig,
    pub alignment: AlignmentConfig,
    pub segmentation: SegmentationConfig,
    pub stability: StabilityRule,
    pub system: SystemConfig,
    pub detector: DetectorConfig,
    pub requirement: RequirementConfig,
    /// Also report the ISO 9283 repeatability (`l̄ + 3 S_l`).
    pub iso_repeatability: bool,
}

/// On-disk layout of a session manifest.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SessionFile {
    #[serde(default = "default_schema")]
    pub schema: String,
    #[serde(default)]
    pub name: String,
    #[serde(default)]
    pub config: EvalConfig,
    #[serde(default)]
    pub registrations: BTreeMap<String, RegistrationSet>,
    pub trials: Vec<TrialManifest>,
}

fn default_schema() -> String {
    SESSION_SCHEMA.to_string()
}

/// Validated evaluation session. Trial log paths are resolved to absolute
/// (or manifest-relative joined) paths.
#[derive(Clone, Debug)]
pub struct Session {
    pub name: String,
    pub base_dir: PathBuf,
    pub trials: Vec<TrialManifest>,
    pub registrations: BTreeMap<String, RegistrationSet>,
    pub config: EvalConfig,
}

impl Session {
    /// Validates a parsed manifest. `base_dir` resolves relative log paths.
    pub fn from_file(file: SessionFile, base_dir: &Path) -> Result<Self> {
        if file.schema != SESSION_SCHEMA {
            return Err(Error::Manifest(format!(
                "unsupported schema `{}`, expected `{SESSION_SCHEMA}`",
                file.schema
            )));
        }
        if file.trials.is_empty() {
            return Err(Error::Manifest("session declares no trials".into()));
        }
        let mut ids = BTreeSet::new();
        let mut reg_owner: BTreeMap<&str, HmdPosition> = BTreeMap::new();
        for t in &file.trials {
            if !ids.insert(t.trial_id.as_str()) {
                return Err(Error::Manifest(format!(
                    "duplicate trial id `{}`",
                    t.trial_id
                )));
            }
            t.validate()?;
            if let Some(reg) = &t.registration {
                if !file.registrations.contains_key(reg) {
                    return Err(Error::Manifest(format!(
                        "{}: unknown registration set `{reg}`",
                        t.trial_id
                    )));
                }
                match reg_owner.get(reg.as_str()) {
                    Some(&pos) if pos != t.hmd_position => {
                        return Err(Error::Manifest(format!(
                            "registration set `{reg}` shared across HMD positions {pos} and {}",
                            t.hmd_position
                        )))
                    }
                    _ => {
                        reg_owner.insert(reg, t.hmd_position);
                    }
                }
            }
        }
        for (name, set) in &file.registrations {
            let (src, dst) = set.fit_pairs();
            if src.len() < 3 {
                return Err(Error::Manifest(format!(
                    "registration set `{name}` needs at least 3 fitting pairs, has {}",
                    src.len()
                )));
            }
            registration::check_conditioning(&src)
                .and_then(|_| registration::check_conditioning(&dst))
                .map_err(|e| Error::Manifest(format!("registration set `{name}`: {e}")))?;
        }
        let mut trials = file.trials;
        for t in &mut trials {
            t.tracker_log = base_dir.join(&t.tracker_log);
            t.truth_log = base_dir.join(&t.truth_log);
            for p in [&t.tracker_log, &t.truth_log] {
                if !p.is_file() {
                    return Err(Error::Manifest(format!(
                        "{}: referenced file {} does not exist",
                        t.trial_id,
                        p.display()
                    )));
                }
            }
        }
        Ok(Session {
            name: file.name,
            base_dir: base_dir.to_path_buf(),
            trials,
            registrations: file.registrations,
            config: file.config,
        })
    }
}

/// Reads and validates a session manifest.
pub fn parse_manifest(path: impl AsRef<Path>) -> Result<Session> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let file: SessionFile = serde_json::from_str(&text)
        .map_err(|e| Error::Manifest(format!("{}: {e}", path.display())))?;
    let base = path.parent().unwrap_or_else(|| Path::new("."));
    Session::from_file(file, base)
}

/// Writes a manifest; paths are stored as given.
pub fn write_manifest(path: impl AsRef<Path>, file: &SessionFile) -> Result<()> {
    let path = path.as_ref();
    let mut text = serde_json::to_string_pretty(file)?;
    text.push('\n');
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn write_logs(dir: &Path) {
        let header = "t_ns,x_mm,y_mm,z_mm,qw,qx,qy,qz,valid\n0,0,0,0,1,0,0,0,1\n";
        std::fs::write(dir.join("tracker.csv"), header).unwrap();
        std::fs::write(dir.join("truth.csv"), header).unwrap();
    }

    fn manifest(trials: &str) -> String {
        format!(r#"{{"schema": "posebench-session/1", "name": "t", "trials": [{trials}]}}"#)
    }

    const SP01: &str = r#"{"trial_id": "a", "category": "STATIC_POSE", "protocol_id": "SP01",
        "hmd_position": "F1", "speed": 25, "repetitions": 30,
        "tracker_log": "tracker.csv", "truth_log": "truth.csv"}"#;

    #[test]
    fn parses_static_trial() {
        let dir = tempfile::tempdir().unwrap();
        write_logs(dir.path());
        let p = dir.path().join("s.json");
        std::fs::write(&p, manifest(SP01)).unwrap();
        let s = parse_manifest(&p).unwrap();
        assert_eq!(s.trials.len(), 1);
        let t = &s.trials[0];
        assert_eq!(t.category, Category::StaticPose);
        assert_eq!(t.repetitions, 30);
        assert_eq!(t.condition(), "F1 (25 mm/s)");
        assert!(!t.is_custom_protocol());
    }

    #[test]
    fn rejects_empty_session() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("s.json");
        std::fs::write(&p, manifest("")).unwrap();
        assert!(matches!(parse_manifest(&p), Err(Error::Manifest(_))));
    }

    #[test]
    fn occlusion_windows_have_duration() {
        let dir = tempfile::tempdir().unwrap();
        write_logs(dir.path());
        let trial = r#"{"trial_id": "occ", "category": "OCCLUSION", "protocol_id": "RT03",
            "hmd_position": "F2", "speed": 10, "repetitions": 10,
            "tracker_log": "tracker.csv", "truth_log": "truth.csv",
            "events": [
              {"kind": "OCCLUSION_PARTIAL", "t_start_ns": 10000000000, "t_end_ns": 15000000000},
              {"kind": "OCCLUSION_FULL", "t_start_ns": 30000000000, "t_end_ns": 35000000000}
            ]}"#;
        let p = dir.path().join("s.json");
        std::fs::write(&p, manifest(trial)).unwrap();
        let s = parse_manifest(&p).unwrap();
        for e in &s.trials[0].events {
            assert_eq!(e.duration_s(), 5.0);
        }
    }

    #[test]
    fn rejects_overlapping_windows_of_same_kind() {
        let dir = tempfile::tempdir().unwrap();
        write_logs(dir.path());
        let trial = r#"{"trial_id": "occ", "category": "OCCLUSION", "protocol_id": "RT03",
            "hmd_position": "F2", "speed": 10, "repetitions": 1,
            "tracker_log": "tracker.csv", "truth_log": "truth.csv",
            "events": [
              {"kind": "OCCLUSION_FULL", "t_start_ns": 0, "t_end_ns": 5000},
              {"kind": "OCCLUSION_FULL", "t_start_ns": 4000, "t_end_ns": 9000}
            ]}"#;
        let p = dir.path().join("s.json");
        std::fs::write(&p, manifest(trial)).unwrap();
        let err = parse_manifest(&p).unwrap_err().to_string();
        assert!(err.contains("overlapping"), "{err}");
    }

    #[test]
    fn rejects_unknown_hmd_position() {
        let dir = tempfile::tempdir().unwrap();
        write_logs(dir.path());
        let p = dir.path().join("s.json");
        std::fs::write(&p, manifest(&SP01.replace("\"F1\"", "\"X9\""))).unwrap();
        let err = parse_manifest(&p).unwrap_err().to_string();
        assert!(err.contains("X9"), "{err}");
    }

    #[test]
    fn custom_protocol_flagged_and_missing_file_rejected() {
        let dir = tempfile::tempdir().unwrap();
        write_logs(dir.path());
        let p = dir.path().join("s.json");
        std::fs::write(&p, manifest(&SP01.replace("SP01", "LAB7"))).unwrap();
        assert!(parse_manifest(&p).unwrap().trials[0].is_custom_protocol());

        std::fs::write(&p, manifest(&SP01.replace("truth.csv", "nope.csv"))).unwrap();
        assert!(parse_manifest(&p)
            .unwrap_err()
            .to_string()
            .contains("does not exist"));
    }

    #[test]
    fn registration_checks() {
        let dir = tempfile::tempdir().unwrap();
        write_logs(dir.path());
        let p = dir.path().join("s.json");
        let collinear = r#"{"schema": "posebench-session/1", "registrations": {"r": {"pairs": [
            {"label": "0", "tracker": [0,0,0], "truth": [0,0,0]},
            {"label": "1", "tracker": [1,0,0], "truth": [1,0,0]},
            {"label": "2", "tracker": [2,0,0], "truth": [2,0,0]}]}},
            "trials": [TRIAL]}"#;
        let trial = SP01.replace(
            "\"repetitions\"",
            "\"registration\": \"r\", \"repetitions\"",
        );
        std::fs::write(&p, collinear.replace("TRIAL", &trial)).unwrap();
        let err = parse_manifest(&p).unwrap_err().to_string();
        assert!(err.contains("degenerate"), "{err}");

        let shared = format!(
            r#"{{"schema": "posebench-session/1", "registrations": {{"r": {{"pairs": [
            {{"label": "0", "tracker": [0,0,0], "truth": [0,0,0]}},
            {{"label": "1", "tracker": [100,0,0], "truth": [100,0,0]}},
            {{"label": "2", "tracker": [0,100,0], "truth": [0,100,0]}}]}}}},
            "trials": [{}, {}]}}"#,
            trial,
            trial.replace("\"a\"", "\"b\"").replace("\"F1\"", "\"F2\"")
        );
        std::fs::write(&p, shared).unwrap();
        let err = parse_manifest(&p).unwrap_err().to_string();
        assert!(err.contains("shared across"), "{err}");
    }
}
