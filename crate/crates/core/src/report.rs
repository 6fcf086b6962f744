//! Report model, systematic-failure detection, requirement gating and
//! JSON/CSV emission.
//!
//! CSV files use UTF-8, `,` separators, `.` decimals and LF line endings.
//! Static values are rounded to 0.1 mm, dynamic values to 0.001 mm and
//! drift to 0.0001 mm/s. Cells of trials flagged as systematic failures
//! carry a trailing `*` and are left out of every average row.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::cleaning::CleaningReport;
use crate::error::{Error, Result};
use crate::ingest::SegmentationMethod;
use crate::manifest::{Category, EvalConfig, HmdPosition};
use crate::metrics::pose::{DynamicTrialResult, StaticPoseResult};
use crate::metrics::system::{DriftResult, OcclusionResult};
use crate::model::{RigidTransform, Timestamp};

pub const REPORT_SCHEMA: &str = "posebench-report/1";

/// Thresholds of the confident-but-wrong detector.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DetectorConfig {
    /// Mean accuracy above which a pose is grossly wrong, mm.
    pub acc_threshold: f64,
    /// Repeatability below which the tracker is still self-consistent, mm.
    pub rep_threshold: f64,
}

impl Default for DetectorConfig {
    fn default() -> Self {
        DetectorConfig {
            acc_threshold: 50.0,
            rep_threshold: 1.0,
        }
    }
}

/// End-to-end accuracy requirement; both limits are strict.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RequirementConfig {
    pub pos_limit: f64,
    pub rot_limit: f64,
}

impl Default for RequirementConfig {
    fn default() -> Self {
        RequirementConfig {
            pos_limit: 5.0,
            rot_limit: 10.0,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FlagKind {
    SystematicFailure,
    ExcessiveRejection,
    RegistrationResidual,
    MissingRepetitions,
    CustomProtocol,
    NoData,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Flag {
    pub trial_id: String,
    pub kind: FlagKind,
    pub detail: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IngestReport {
    pub tracker_rows: usize,
    pub tracker_dropped: usize,
    pub truth_rows: usize,
    pub truth_dropped: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RegistrationReport {
    pub set: String,
    pub transform: RigidTransform,
    pub residuals: Vec<f64>,
    pub rms: f64,
    pub holdout_rms: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PairingReport {
    pub pairs: usize,
    pub dropped_gap: usize,
    pub skipped_invalid: usize,
    pub dropped_reuse: usize,
    pub max_abs_dt_ns: u64,
    pub max_truth_reuse: usize,
    /// Worst-case position error from unsynchronised pairing, mm.
    pub error_bound_mm: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SegmentationReport {
    pub method: SegmentationMethod,
    pub expected: u32,
    pub found: usize,
    pub windows: Vec<(Timestamp, Timestamp)>,
}

/// Mean position and orientation error used by the requirement gate.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Accuracy {
    pub mean_pos_mm: f64,
    pub mean_rot_deg: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SystemMetrics {
    pub gaps: Vec<(Timestamp, Timestamp)>,
    pub occlusion: Option<OcclusionResult>,
    pub initialization_s: Option<f64>,
    pub reacquisition: Option<OcclusionResult>,
    /// 3D 1σ error over the re-acquisition windows, mm.
    pub reacquisition_sigma_3d: Option<f64>,
    pub drift: Option<DriftResult>,
    /// Why drift could not be assessed.
    pub drift_unavailable: Option<String>,
    pub jitter_pos: Option<f64>,
    pub jitter_rot: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrialReport {
    pub trial_id: String,
    pub category: Category,
    pub protocol_id: String,
    pub custom_protocol: bool,
    pub hmd_position: HmdPosition,
    pub speed: f64,
    pub condition: String,
    pub ingest: IngestReport,
    pub registration: Option<RegistrationReport>,
    pub pairing: Option<PairingReport>,
    pub segmentation: Option<SegmentationReport>,
    pub cleaning: Option<CleaningReport>,
    pub accuracy: Option<Accuracy>,
    pub static_result: Option<StaticPoseResult>,
    pub dynamic_result: Option<DynamicTrialResult>,
    pub system: Option<SystemMetrics>,
    pub warnings: Vec<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GateDecision {
    pub trial_id: String,
    pub pass: bool,
    pub reasons: Vec<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub schema: String,
    pub session: String,
    pub generator: String,
    pub config: EvalConfig,
    pub trials: Vec<TrialReport>,
    pub flags: Vec<Flag>,
    pub gate: Vec<GateDecision>,
}

impl MetricReport {
    pub fn trial(&self, id: &str) -> Option<&TrialReport> {
        self.trials.iter().find(|t| t.trial_id == id)
    }

    pub fn flags_of(&self, id: &str) -> impl Iterator<Item = &Flag> {
        let id = id.to_string();
        self.flags.iter().filter(move |f| f.trial_id == id)
    }

    pub fn has_flag(&self, id: &str, kind: FlagKind) -> bool {
        self.flags_of(id).any(|f| f.kind == kind)
    }

    pub fn gate_passed(&self) -> bool {
        self.gate.iter().all(|g| g.pass)
    }

    /// Schema, non-empty, unique trial ids, flags and gate entries that
    /// point at existing trials.
    pub fn validate(&self) -> Result<()> {
        if self.schema != REPORT_SCHEMA {
            return Err(Error::InvalidParameter(format!(
                "unsupported report schema `{}`",
                self.schema
            )));
        }
        if self.trials.is_empty() {
            return Err(Error::InsufficientData("report has no trials".into()));
        }
        let mut seen = std::collections::BTreeSet::new();
        for t in &self.trials {
            if !seen.insert(t.trial_id.as_str()) {
                return Err(Error::InvalidParameter(format!(
                    "trial `{}` appears twice",
                    t.trial_id
                )));
            }
        }
        for id in self
            .flags
            .iter()
            .map(|f| &f.trial_id)
            .chain(self.gate.iter().map(|g| &g.trial_id))
        {
            if !seen.contains(id.as_str()) {
                return Err(Error::InvalidParameter(format!(
                    "report references unknown trial `{id}`"
                )));
            }
        }
        Ok(())
    }
}

/// Precise-but-wrong signature: mean accuracy above `acc_threshold` while
/// repeatability stays below `rep_threshold`. Returns the flag detail.
pub fn detect_systematic_failure(
    result: &StaticPoseResult,
    cfg: &DetectorConfig,
) -> Option<String> {
    let rep = result.repeatability?;
    (result.mean_acc > cfg.acc_threshold && rep < cfg.rep_threshold).then(|| {
        format!(
            "mean accuracy {:.1} mm with repeatability {:.2} mm",
            result.mean_acc, rep
        )
    })
}

/// Per-trial pass/fail: mean position error `< pos_limit`, mean orientation
/// error `< rot_limit` and no systematic-failure flag. A trial without
/// accuracy data fails.
pub fn requirement_gate(report: &MetricReport, cfg: &RequirementConfig) -> Vec<GateDecision> {
    report
        .trials
        .iter()
        .map(|t| {
            let mut reasons = Vec::new();
            match t.accuracy {
                None => reasons.push("no accuracy data".to_string()),
                Some(a) => {
                    if !(a.mean_pos_mm < cfg.pos_limit) {
                        reasons.push(format!(
                            "mean position error {:.3} mm is not below {} mm",
                            a.mean_pos_mm, cfg.pos_limit
                        ));
                    }
                    if !(a.mean_rot_deg < cfg.rot_limit) {
                        reasons.push(format!(
                            "mean orientation error {:.3} deg is not below {} deg",
                            a.mean_rot_deg, cfg.rot_limit
                        ));
                    }
                }
            }
            if report.has_flag(&t.trial_id, FlagKind::SystematicFailure) {
                reasons.push("systematic failure flagged".to_string());
            }
            GateDecision {
                trial_id: t.trial_id.clone(),
                pass: reasons.is_empty(),
                reasons,
            }
        })
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Format {
    Json,
    Csv,
}

pub const JSON_FILE: &str = "report.json";
pub const STATIC_CSV: &str = "static.csv";
pub const DYNAMIC_CSV: &str = "dynamic.csv";
pub const SYSTEM_CSV: &str = "system.csv";

/// Writes the requested formats into `out_dir` and returns the paths.
pub fn emit_report(
    report: &MetricReport,
    out_dir: &Path,
    formats: &[Format],
) -> Result<Vec<PathBuf>> {
    report.validate()?;
    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let mut written = Vec::new();
    let mut write = |name: &str, body: String| -> Result<()> {
        let path = out_dir.join(name);
        std::fs::write(&path, body).map_err(|e| Error::io(&path, e))?;
        written.push(path);
        Ok(())
    };
    if formats.contains(&Format::Json) {
        let mut s = serde_json::to_string_pretty(report)?;
        s.push('\n');
        write(JSON_FILE, s)?;
    }
    if formats.contains(&Format::Csv) {
        write(STATIC_CSV, static_csv(report))?;
        write(DYNAMIC_CSV, dynamic_csv(report))?;
        write(SYSTEM_CSV, system_csv(report))?;
    }
    Ok(written)
}

/// Reads a JSON report back and validates it.
pub fn load_report(path: impl AsRef<Path>) -> Result<MetricReport> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let report: MetricReport = serde_json::from_str(&text)?;
    report.validate()?;
    Ok(report)
}

fn mean(v: &[f64]) -> Option<f64> {
    (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
}

fn cell(v: Option<f64>, decimals: usize, star: bool) -> String {
    match v {
        Some(x) => format!("{x:.decimals$}{}", if star { "*" } else { "" }),
        None => String::new(),
    }
}

/// Static results in long format: one row per static trial, then per-condition,
/// per-pose and overall averages over unflagged rows.
pub fn static_csv(report: &MetricReport) -> String {
    let mut out = String::from("pose_id,condition,mean_acc,max_error,repeatability\n");
    type Acc = (Vec<f64>, Vec<f64>, Vec<f64>);
    let mut by_condition: Vec<(String, Acc)> = Vec::new();
    let mut by_pose: BTreeMap<String, Acc> = BTreeMap::new();
    let mut all: Acc = Default::default();
    for t in &report.trials {
        let Some(r) = &t.static_result else { continue };
        let flagged = report.has_flag(&t.trial_id, FlagKind::SystematicFailure);
        let _ = writeln!(
            out,
            "{},{},{},{},{}",
            field(&r.pose_id),
            field(&t.condition),
            cell(Some(r.mean_acc), 1, flagged),
            cell(Some(r.max_error), 1, flagged),
            cell(r.repeatability, 1, false)
        );
        let idx = match by_condition.iter().position(|(c, _)| *c == t.condition) {
            Some(i) => i,
            None => {
                by_condition.push((t.condition.clone(), Default::default()));
                by_condition.len() - 1
            }
        };
        let pose = by_pose.entry(r.pose_id.clone()).or_default();
        for acc in [&mut by_condition[idx].1, pose, &mut all] {
            if !flagged {
                acc.0.push(r.mean_acc);
                acc.1.push(r.max_error);
            }
            if let Some(rep) = r.repeatability {
                acc.2.push(rep);
            }
        }
    }
    let row = |out: &mut String, a: &str, b: &str, acc: &Acc| {
        let _ = writeln!(
            out,
            "{},{},{},{},{}",
            field(a),
            field(b),
            cell(mean(&acc.0), 1, false),
            cell(mean(&acc.1), 1, false),
            cell(mean(&acc.2), 1, false)
        );
    };
    for (cond, acc) in &by_condition {
        row(&mut out, "Average", cond, acc);
    }
    if by_condition.len() > 1 {
        for (pose, acc) in &by_pose {
            row(&mut out, pose, "Average (all conditions)", acc);
        }
    }
    if !all.0.is_empty() || !all.2.is_empty() {
        row(&mut out, "Average", "Average (all conditions)", &all);
    }
    out
}

/// Dynamic results, one row per trial plus per-trajectory averages.
pub fn dynamic_csv(report: &MetricReport) -> String {
    let mut out = String::from(
        "trial_id,trajectory,position,speed,sigma_x,sigma_y,sigma_z,sigma_3d,\
rms_x,rms_y,rms_z,rms_3d,max_x,max_y,max_z,max_3d,drift_3d\n",
    );
    let mut groups: Vec<(String, Vec<[f64; 12]>, Vec<f64>)> = Vec::new();
    for t in &report.trials {
        let Some(d) = &t.dynamic_result else { continue };
        let s = &d.stats;
        let mut vals = [0.0; 12];
        vals[..4].copy_from_slice(&s.sigma.as_array());
        vals[4..8].copy_from_slice(&s.rms.as_array());
        vals[8..].copy_from_slice(&s.max.as_array());
        let _ = write!(
            out,
            "{},{},{},{}",
            field(&d.trial_id),
            field(&d.trajectory),
            field(&d.position),
            crate::manifest::fmt_speed(d.speed)
        );
        for v in vals {
            let _ = write!(out, ",{v:.3}");
        }
        let _ = writeln!(out, ",{}", cell(d.drift_3d, 4, false));
        let idx = match groups.iter().position(|g| g.0 == d.trajectory) {
            Some(i) => i,
            None => {
                groups.push((d.trajectory.clone(), Vec::new(), Vec::new()));
                groups.len() - 1
            }
        };
        groups[idx].1.push(vals);
        if let Some(dr) = d.drift_3d {
            groups[idx].2.push(dr);
        }
    }
    for (traj, rows, drifts) in &groups {
        let mut name = traj.clone();
        if let Some(c) = name.get_mut(0..1) {
            c.make_ascii_uppercase();
        }
        let _ = write!(
            out,
            "{},{},,",
            field(&format!("Average {name}")),
            field(traj)
        );
        for k in 0..12 {
            let col: Vec<f64> = rows.iter().map(|r| r[k]).collect();
            let _ = write!(out, ",{}", cell(mean(&col), 3, false));
        }
        let _ = writeln!(out, ",{}", cell(mean(drifts), 4, false));
    }
    out
}

/// Quotes a field containing a separator, quote or line break.
fn field(s: &str) -> std::borrow::Cow<'_, str> {
    if s.contains([',', '"', '\n', '\r']) {
        format!("\"{}\"", s.replace('"', "\"\"")).into()
    } else {
        s.into()
    }
}

/// Long format: one row per system metric.
pub fn system_csv(report: &MetricReport) -> String {
    let mut out = String::from("trial_id,protocol_id,condition,metric,value,note\n");
    for t in &report.trials {
        let Some(s) = &t.system else { continue };
        let mut row = |metric: &str, v: Option<f64>, decimals: usize, note: &str| {
            let _ = writeln!(
                out,
                "{},{},{},{metric},{},{}",
                field(&t.trial_id),
                field(&t.protocol_id),
                field(&t.condition),
                cell(v, decimals, false),
                field(note)
            );
        };
        row("gap_count", Some(s.gaps.len() as f64), 0, "");
        if let Some(o) = &s.occlusion {
            row("osr_pct", o.osr, 1, "");
            row("rot_mean_s", o.mean_recovery_s(), 3, "");
        }
        let init_note = t.warnings.iter().find(|w| w.starts_with("initialisation"));
        if s.initialization_s.is_some() || init_note.is_some() {
            row(
                "int_s",
                s.initialization_s,
                3,
                init_note.map_or("", |w| w.as_str()),
            );
        }
        if let Some(r) = &s.reacquisition {
            row("rlt_mean_s", r.mean_recovery_s(), 3, "");
            row("reacq_sigma_3d_mm", s.reacquisition_sigma_3d, 3, "");
        }
        match (&s.drift, &s.drift_unavailable) {
            (Some(d), _) => {
                row("drt_mm_per_min", Some(d.mm_per_min), 4, "");
                row("drt_deg_per_min", Some(d.deg_per_min), 4, "");
            }
            (None, Some(why)) => row("drt_mm_per_min", None, 4, &why.replace(',', ";")),
            _ => {}
        }
        if s.jitter_pos.is_some() {
            row("jitter_pos_mm", s.jitter_pos, 3, "");
            row("jitter_rot_deg", s.jitter_rot, 3, "");
        }
    }
    out
}
