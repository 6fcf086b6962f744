//! Seeded synthetic tracker. Plays a ground-truth schedule through an error
//! model (bias, per-repetition scatter, jitter, drift, latency, spikes,
//! dropouts, energy saving) and emits truth and tracker streams, annotated
//! events, registration correspondences and fault labels.
//!
//! Output is a pure function of the schedule and [`FaultConfig`]: the same
//! seed gives bit-identical streams.

mod presets;

pub use presets::{
    preset, protocol_reference, resolve_scenarios, scenario_names, write_session, Scenario,
    TrialTemplate, BUNDLES,
};

use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::manifest::{Event, EventKind, FaultLabels, LabeledWindow, PointPair, RegistrationSet};
use crate::model::{FrameId, Pose, PoseSeries, Quaternion, RigidTransform, Timestamp, Vec3};

/// Gross, self-consistent offset replacing the nominal bias: the tracker
/// reports `truth + offset` with only `scatter` (per-axis 1σ, drawn once per
/// repetition) around it.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConfidentWrong {
    pub offset: [f64; 3],
    pub scatter: [f64; 3],
}

/// Interval without tracker output, in seconds from the schedule start.
/// Output resumes `recovery_delay_s` after `end_s`; `None` means never.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DropoutWindow {
    pub start_s: f64,
    pub end_s: f64,
    #[serde(default)]
    pub recovery_delay_s: Option<f64>,
    /// Annotation emitted for the window. `EXIT_VOLUME` produces an
    /// exit/enter pair instead of an occlusion window.
    #[serde(default = "default_dropout_kind")]
    pub kind: EventKind,
}

fn default_dropout_kind() -> EventKind {
    EventKind::OcclusionFull
}

/// Isolated position spikes on `fraction` of the tracker samples. The
/// first spikes take the magnitudes in `fixed`, the rest are uniform in
/// `[min_mm, max_mm]`; directions are uniform on the sphere.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpikeConfig {
    pub fraction: f64,
    pub min_mm: f64,
    pub max_mm: f64,
    #[serde(default)]
    pub fixed: Vec<f64>,
}

/// Pose of the tracker's world frame in the ground-truth frame.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrackerPlacement {
    /// `[w, x, y, z]`.
    pub rotation: [f64; 4],
    pub translation: [f64; 3],
}

impl TrackerPlacement {
    pub fn transform(&self) -> Result<RigidTransform> {
        let [w, x, y, z] = self.rotation;
        RigidTransform::from_quaternion(
            &Quaternion::new(w, x, y, z)?,
            Vec3::from(self.translation),
            FrameId::TrackerWorld,
            FrameId::GroundtruthWorld,
        )
    }
}

impl Default for TrackerPlacement {
    fn default() -> Self {
        let half = 15f64.to_radians();
        TrackerPlacement {
            rotation: [half.cos(), 0.0, 0.0, half.sin()],
            translation: [250.0, -120.0, 40.0],
        }
    }
}

/// Error model of the simulated tracker. Magnitudes are in mm, degrees and
/// seconds unless the field name says otherwise. `rng_seed` is required in
/// JSON; everything else defaults to a fault-free tracker at 30 Hz.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FaultConfig {
    pub rng_seed: u64,
    #[serde(default = "default_rate")]
    pub tracker_rate: f64,
    /// Offset of the first tracker sample after the schedule start, s.
    #[serde(default)]
    pub phase_s: f64,
    #[serde(default)]
    pub latency_ms: f64,
    #[serde(default)]
    pub timestamp_jitter_ms: f64,
    /// Per-axis 1σ of white position noise.
    #[serde(default)]
    pub jitter_sigma: [f64; 3],
    /// 1σ of each rotation-vector component of the orientation noise, deg.
    #[serde(default)]
    pub orient_jitter_deg: f64,
    #[serde(default)]
    pub bias: [f64; 3],
    /// Constant orientation error about the tilted axis (1, 1, 0)/√2, deg.
    #[serde(default)]
    pub orient_bias_deg: f64,
    /// Per-axis 1σ of the offset drawn once per repetition.
    #[serde(default)]
    pub rep_scatter: [f64; 3],
    #[serde(default)]
    pub confident_wrong: Option<ConfidentWrong>,
    /// Linear error growth, mm/s, along `drift_direction`.
    #[serde(default)]
    pub drift_ramp: f64,
    #[serde(default = "default_direction")]
    pub drift_direction: [f64; 3],
    #[serde(default)]
    pub dropouts: Vec<DropoutWindow>,
    /// Tracker samples before this time are emitted as invalid, and a
    /// `SYSTEM_START` event marks the schedule start.
    #[serde(default)]
    pub init_delay_s: Option<f64>,
    /// Output pauses once the truth has been still (< 1 mm/s) this long and
    /// resumes on motion.
    #[serde(default)]
    pub energy_save_after_s: Option<f64>,
    #[serde(default)]
    pub spikes: Option<SpikeConfig>,
    /// Error seen on the registration hold-out points only.
    #[serde(default)]
    pub calibration_offset: [f64; 3],
    /// Per-axis 1σ on every registration correspondence.
    #[serde(default)]
    pub registration_noise: f64,
    #[serde(default)]
    pub placement: TrackerPlacement,
}

fn default_rate() -> f64 {
    30.0
}

fn default_direction() -> [f64; 3] {
    [1.0, 0.0, 0.0]
}

impl FaultConfig {
    /// Fault-free tracker at `tracker_rate`.
    pub fn clean(rng_seed: u64, tracker_rate: f64) -> Self {
        FaultConfig {
            rng_seed,
            tracker_rate,
            phase_s: 0.0,
            latency_ms: 0.0,
            timestamp_jitter_ms: 0.0,
            jitter_sigma: [0.0; 3],
            orient_jitter_deg: 0.0,
            bias: [0.0; 3],
            orient_bias_deg: 0.0,
            rep_scatter: [0.0; 3],
            confident_wrong: None,
            drift_ramp: 0.0,
            drift_direction: default_direction(),
            dropouts: Vec::new(),
            init_delay_s: None,
            energy_save_after_s: None,
            spikes: None,
            calibration_offset: [0.0; 3],
            registration_noise: 0.0,
            placement: TrackerPlacement::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |what: &str| Err(Error::InvalidParameter(format!("fault config: {what}")));
        if !(self.tracker_rate.is_finite() && self.tracker_rate > 0.0) {
            return bad("tracker_rate must be positive");
        }
        let non_neg = |v: f64| v.is_finite() && v >= 0.0;
        let scalars = [
            self.phase_s,
            self.latency_ms,
            self.timestamp_jitter_ms,
            self.orient_jitter_deg,
            self.registration_noise,
        ];
        if !scalars.iter().all(|&v| non_neg(v)) {
            return bad("phase, latency, jitters and registration noise must be >= 0");
        }
        let sigmas = self
            .jitter_sigma
            .iter()
            .chain(&self.rep_scatter)
            .chain(self.confident_wrong.iter().flat_map(|c| c.scatter.iter()));
        if !sigmas.copied().all(non_neg) {
            return bad("sigmas must be >= 0");
        }
        let finite = self
            .bias
            .iter()
            .chain(&self.calibration_offset)
            .chain(&self.drift_direction)
            .chain(self.confident_wrong.iter().flat_map(|c| c.offset.iter()));
        if !finite.copied().all(f64::is_finite)
            || !self.orient_bias_deg.is_finite()
            || !self.drift_ramp.is_finite()
        {
            return bad("offsets must be finite");
        }
        if self.drift_ramp != 0.0 && Vec3::from(self.drift_direction).norm() == 0.0 {
            return bad("drift_direction must be non-zero");
        }
        for d in &self.dropouts {
            if !(non_neg(d.start_s) && d.end_s.is_finite() && d.end_s >= d.start_s) {
                return bad("dropout windows need 0 <= start <= end");
            }
            if d.recovery_delay_s.is_some_and(|r| !non_neg(r)) {
                return bad("recovery delay must be >= 0");
            }
        }
        if self.init_delay_s.is_some_and(|v| !non_neg(v))
            || self.energy_save_after_s.is_some_and(|v| !non_neg(v))
        {
            return bad("init delay and energy-save timeout must be >= 0");
        }
        if let Some(s) = &self.spikes {
            if !((0.0..=0.5).contains(&s.fraction)
                && non_neg(s.min_mm)
                && s.max_mm >= s.min_mm
                && s.max_mm.is_finite()
                && s.fixed.iter().copied().all(non_neg))
            {
                return bad("spikes need fraction in [0, 0.5] and 0 <= min <= max");
            }
        }
        self.placement.transform().map(|_| ())
    }
}

/// Ground-truth stream plus the annotations that go with it.
#[derive(Clone, Debug, PartialEq)]
pub struct TruthSchedule {
    pub series: PoseSeries,
    pub events: Vec<Event>,
    pub dwell_windows: Vec<LabeledWindow>,
}

impl TruthSchedule {
    pub fn plain(series: PoseSeries) -> Self {
        TruthSchedule {
            series,
            events: Vec::new(),
            dwell_windows: Vec::new(),
        }
    }
}

#[derive(Clone, Debug)]
pub struct SimOutput {
    pub truth: PoseSeries,
    /// In the tracker's own world frame.
    pub tracker: PoseSeries,
    pub events: Vec<Event>,
    pub labels: FaultLabels,
    pub registration: RegistrationSet,
    /// The placement the registration should recover.
    pub tracker_to_truth: RigidTransform,
}

const STILL_SPEED: f64 = 1.0;
const MARKER_HALF: f64 = 75.0;

fn secs_to_ns(s: f64) -> u64 {
    (s * 1e9).round() as u64
}

fn gauss3(rng: &mut ChaCha8Rng, sigma: &[f64; 3]) -> Vec3 {
    let mut v = Vec3::zeros();
    for k in 0..3 {
        let z: f64 = rng.sample(StandardNormal);
        v[k] = z * sigma[k];
    }
    v
}

fn unit_vector(rng: &mut ChaCha8Rng) -> Vec3 {
    loop {
        let v = gauss3(rng, &[1.0; 3]);
        let n = v.norm();
        if n > 1e-9 {
            return v / n;
        }
    }
}

/// Position and orientation of `series` at `t` by linear interpolation,
/// clamped to the ends. Also returns the speed of the bracketing segment.
fn truth_at(series: &PoseSeries, t: Timestamp) -> (Vec3, Quaternion, f64) {
    let s = series.samples();
    let i = s.partition_point(|p| p.t <= t);
    if i == 0 {
        return (s[0].p, s[0].q, segment_speed(s, 0));
    }
    if i == s.len() {
        let last = s.len() - 1;
        return (
            s[last].p,
            s[last].q,
            segment_speed(s, last.saturating_sub(1)),
        );
    }
    let (a, b) = (&s[i - 1], &s[i]);
    let f = t.secs_since(a.t) / b.t.secs_since(a.t);
    let p = a.p + (b.p - a.p) * f;
    let sign = if a.q.dot(&b.q) < 0.0 { -1.0 } else { 1.0 };
    let (qa, qb) = (a.q.to_array(), b.q.to_array());
    let mix: Vec<f64> = (0..4)
        .map(|k| qa[k] * (1.0 - f) + sign * qb[k] * f)
        .collect();
    let q = Quaternion::from_unnormalized(mix[0], mix[1], mix[2], mix[3]).unwrap_or(a.q);
    (p, q, segment_speed(s, i - 1))
}

fn segment_speed(s: &[Pose], i: usize) -> f64 {
    match (s.get(i), s.get(i + 1)) {
        (Some(a), Some(b)) => (b.p - a.p).norm() / b.t.secs_since(a.t),
        _ => 0.0,
    }
}

/// Marker corners (fit) and two hold-out points, in the truth frame.
fn registration_points() -> Vec<(&'static str, Vec3, bool)> {
    let h = MARKER_HALF;
    vec![
        ("corner0", Vec3::new(-h, -h, -100.0), false),
        ("corner1", Vec3::new(h, -h, -100.0), false),
        ("corner2", Vec3::new(h, h, -100.0), false),
        ("corner3", Vec3::new(-h, h, -100.0), false),
        ("holdout0", Vec3::new(200.0, 150.0, 50.0), true),
        ("holdout1", Vec3::new(-180.0, 120.0, -60.0), true),
    ]
}

/// Plays `schedule` through `cfg`. Deterministic in `cfg.rng_seed`.
pub fn simulate(schedule: &TruthSchedule, cfg: &FaultConfig) -> Result<SimOutput> {
    cfg.validate()?;
    let truth = &schedule.series;
    let (Some(first), Some(last)) = (truth.first(), truth.last()) else {
        return Err(Error::InvalidParameter("empty truth schedule".into()));
    };
    let t0 = first.t;
    let span = last.t.secs_since(t0);
    let n_f = ((span - cfg.phase_s) * cfg.tracker_rate + 1e-9).floor() + 1.0;
    if !(n_f >= 2.0) {
        return Err(Error::InvalidParameter(format!(
            "a {span:.3} s schedule at {} Hz yields fewer than 2 tracker samples",
            cfg.tracker_rate
        )));
    }
    let n = n_f as usize;
    let to_truth = cfg.placement.transform()?;
    let to_tracker = to_truth.inverse();
    let q_to_tracker = to_tracker.rotation_quaternion();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.rng_seed);

    // Fixed draw order: registration noise, repetition offsets, spikes, then
    // per-sample noise. Noise is drawn even at zero magnitude, so tuning a
    // sigma never shifts the other streams.
    let reg_sigma = [cfg.registration_noise; 3];
    let pairs = registration_points()
        .into_iter()
        .map(|(label, p, holdout)| {
            let noise = gauss3(&mut rng, &reg_sigma);
            let offset = if holdout {
                Vec3::from(cfg.calibration_offset)
            } else {
                Vec3::zeros()
            };
            let tr = to_tracker.transform_point(&(p + offset + noise));
            PointPair {
                label: label.to_string(),
                tracker: [tr.x, tr.y, tr.z],
                truth: [p.x, p.y, p.z],
                holdout,
            }
        })
        .collect();

    let mut rep_starts: Vec<Timestamp> = schedule
        .events
        .iter()
        .filter(|e| e.kind == EventKind::RepStart)
        .map(|e| e.t_start)
        .collect();
    rep_starts.sort();
    let (base, spread) = match &cfg.confident_wrong {
        Some(cw) => (Vec3::from(cw.offset), cw.scatter),
        None => (Vec3::from(cfg.bias), cfg.rep_scatter),
    };
    let rep_offsets: Vec<Vec3> = (0..rep_starts.len().max(1))
        .map(|_| base + gauss3(&mut rng, &spread))
        .collect();

    let mut spike_at: Vec<Option<Vec3>> = vec![None; n];
    if let Some(sc) = &cfg.spikes {
        let count = ((sc.fraction * n as f64).round() as usize)
            .max(sc.fixed.len())
            .min(n.saturating_sub(2));
        if count > 0 {
            let mut picks = index::sample(&mut rng, n - 2, count).into_vec();
            picks.sort_unstable();
            for (j, i) in picks.into_iter().enumerate() {
                let mag = match sc.fixed.get(j) {
                    Some(&m) => m,
                    None => rng.random_range(sc.min_mm..=sc.max_mm),
                };
                spike_at[i + 1] = Some(unit_vector(&mut rng) * mag);
            }
        }
    }

    let drift_dir = {
        let d = Vec3::from(cfg.drift_direction);
        if d.norm() > 0.0 {
            d / d.norm()
        } else {
            d
        }
    };
    let q_bias =
        Quaternion::from_axis_angle(&Vec3::new(1.0, 1.0, 0.0), cfg.orient_bias_deg.to_radians())?;
    let orient_sigma = [cfg.orient_jitter_deg.to_radians(); 3];
    let latency_ns = secs_to_ns(cfg.latency_ms * 1e-3);
    let init_end = cfg
        .init_delay_s
        .map(|d| t0.saturating_add_ns(secs_to_ns(d)));
    let cutoffs: Vec<(Timestamp, Option<Timestamp>)> = cfg
        .dropouts
        .iter()
        .map(|d| {
            let a = t0.saturating_add_ns(secs_to_ns(d.start_s));
            let b = d
                .recovery_delay_s
                .map(|r| t0.saturating_add_ns(secs_to_ns(d.end_s + r)));
            (a, b)
        })
        .collect();

    let mut samples: Vec<Pose> = Vec::with_capacity(n);
    let mut labels = FaultLabels {
        seed: cfg.rng_seed,
        dwell_windows: schedule.dwell_windows.clone(),
        confident_wrong: cfg.confident_wrong.is_some(),
        calibration_offset: cfg.calibration_offset,
        ..Default::default()
    };
    let mut still_since: Option<Timestamp> = None;
    let mut sleeping: Option<Timestamp> = None;
    let mut prev_t: Option<Timestamp> = None;
    let period_ns = 1e9 / cfg.tracker_rate;
    let phase_ns = cfg.phase_s * 1e9;

    for (k, spike) in spike_at.iter().enumerate() {
        let t_nom = t0.saturating_add_ns((phase_ns + k as f64 * period_ns).round() as u64);
        let jitter = gauss3(&mut rng, &cfg.jitter_sigma);
        let rot_noise = gauss3(&mut rng, &orient_sigma);
        let ts_noise: f64 = rng.sample(StandardNormal);

        let (p_true, q_true, _) = truth_at(truth, t_nom.saturating_sub_ns(latency_ns));
        let (_, _, speed_now) = truth_at(truth, t_nom);

        if speed_now < STILL_SPEED {
            still_since.get_or_insert(t_nom);
        } else {
            still_since = None;
        }
        let asleep = match (cfg.energy_save_after_s, still_since) {
            (Some(after), Some(s)) => t_nom.secs_since(s) >= after,
            _ => false,
        };
        match (asleep, sleeping) {
            (true, None) => sleeping = Some(t_nom),
            (false, Some(s)) => {
                labels.energy_save.push(LabeledWindow {
                    start: s,
                    end: t_nom,
                });
                sleeping = None;
            }
            _ => {}
        }
        let dropped = cutoffs
            .iter()
            .any(|&(a, b)| t_nom >= a && b.is_none_or(|b| t_nom < b));
        if asleep || dropped {
            continue;
        }

        let rep = rep_starts
            .partition_point(|&s| s <= t_nom)
            .saturating_sub(1);
        let elapsed = t_nom.secs_since(t0);
        let mut err = rep_offsets[rep] + drift_dir * (cfg.drift_ramp * elapsed) + jitter;
        if let Some(s) = spike {
            err += s;
        }
        let q_err = q_true
            .mul(&q_bias)
            .mul(&Quaternion::from_rotation_vector(&rot_noise));

        let mut t_rep = (t_nom.nanos() as f64 + ts_noise * cfg.timestamp_jitter_ms * 1e6)
            .round()
            .max(0.0) as u64;
        if let Some(p) = prev_t {
            t_rep = t_rep.max(p.nanos() + 1);
        }
        let t_rep = Timestamp::from_nanos(t_rep);
        prev_t = Some(t_rep);

        let valid = init_end.is_none_or(|e| t_nom >= e);
        let pose = if valid {
            if spike.is_some() {
                labels.spike_times.push(t_rep);
            }
            Pose {
                t: t_rep,
                p: to_tracker.transform_point(&(p_true + err)),
                q: q_to_tracker.mul(&q_err),
                frame: FrameId::TrackerWorld,
                valid: true,
            }
        } else {
            Pose {
                t: t_rep,
                p: Vec3::zeros(),
                q: Quaternion::IDENTITY,
                frame: FrameId::TrackerWorld,
                valid: false,
            }
        };
        samples.push(pose);
    }
    if let Some(s) = sleeping {
        labels.energy_save.push(LabeledWindow {
            start: s,
            end: last.t,
        });
    }

    let mut events = schedule.events.clone();
    if cfg.init_delay_s.is_some() {
        events.push(Event::instant(EventKind::SystemStart, t0));
    }
    for (d, &(a, b)) in cfg.dropouts.iter().zip(&cutoffs) {
        let end = t0.saturating_add_ns(secs_to_ns(d.end_s));
        labels.dropouts.push(LabeledWindow {
            start: a,
            end: b.unwrap_or(last.t).min(last.t),
        });
        if d.kind == EventKind::ExitVolume || d.kind == EventKind::EnterVolume {
            events.push(Event::instant(EventKind::ExitVolume, a));
            events.push(Event::instant(EventKind::EnterVolume, end));
        } else {
            events.push(Event {
                kind: d.kind,
                t_start: a,
                t_end: end,
            });
        }
    }
    events.sort_by_key(|e| (e.t_start, e.t_end));

    let tracker = PoseSeries::new(FrameId::TrackerWorld, samples, cfg.tracker_rate)?;
    Ok(SimOutput {
        truth: truth.clone(),
        tracker,
        events,
        labels,
        registration: RegistrationSet { pairs },
        tracker_to_truth: to_truth,
    })
}

/// Samples a piecewise-linear motion through `keys` (time in s from `t0`,
/// position) at `rate`, holding `orientation`.
pub fn keyframe_series(
    keys: &[(f64, Vec3)],
    orientation: Quaternion,
    rate: f64,
    t0: Timestamp,
) -> Result<PoseSeries> {
    if keys.len() < 2 || keys.windows(2).any(|w| !(w[1].0 > w[0].0)) {
        return Err(Error::InvalidParameter(
            "keyframes need at least 2 entries with increasing times".into(),
        ));
    }
    if !(rate.is_finite() && rate > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "rate must be positive, got {rate}"
        )));
    }
    let end = keys[keys.len() - 1].0;
    let steps = (end * rate + 1e-9).floor() as u64;
    let mut seg = 0;
    let samples = (0..=steps)
        .map(|k| {
            let t = k as f64 / rate;
            while seg + 2 < keys.len() && t > keys[seg + 1].0 {
                seg += 1;
            }
            let (ta, pa) = keys[seg];
            let (tb, pb) = keys[seg + 1];
            let f = ((t - ta) / (tb - ta)).clamp(0.0, 1.0);
            Pose::new(
                t0.saturating_add_ns((t * 1e9).round() as u64),
                pa + (pb - pa) * f,
                orientation,
                FrameId::GroundtruthWorld,
            )
        })
        .collect();
    PoseSeries::new(FrameId::GroundtruthWorld, samples, rate)
}

/// Repeated approach to a static pose: travel from `target + approach` to
/// the target at `speed`, hold `hold_s`, return. Each cycle is annotated
/// with `REP_START`/`REP_END`; the holds are labelled as dwell windows.
pub fn static_schedule(
    target: Vec3,
    orientation: Quaternion,
    approach: Vec3,
    speed: f64,
    reps: u32,
    hold_s: f64,
    rate: f64,
) -> Result<TruthSchedule> {
    if !(speed > 0.0 && hold_s > 0.0 && reps >= 1 && approach.norm() > 0.0) {
        return Err(Error::InvalidParameter(
            "static schedule needs speed, hold and approach > 0 and reps >= 1".into(),
        ));
    }
    let travel = approach.norm() / speed;
    let home = target + approach;
    let cycle = 2.0 * travel + hold_s;
    let mut keys = Vec::new();
    let mut events = Vec::new();
    let mut dwell = Vec::new();
    let ts = |s: f64| Timestamp::from_nanos((s * 1e9).round() as u64);
    for r in 0..reps {
        let c0 = r as f64 * cycle;
        if r == 0 {
            keys.push((c0, home));
        }
        keys.push((c0 + travel, target));
        keys.push((c0 + travel + hold_s, target));
        keys.push((c0 + cycle, home));
        events.push(Event::instant(EventKind::RepStart, ts(c0)));
        events.push(Event::instant(EventKind::RepEnd, ts(c0 + cycle)));
        dwell.push(LabeledWindow {
            start: ts(c0 + travel),
            end: ts(c0 + travel + hold_s),
        });
    }
    Ok(TruthSchedule {
        series: keyframe_series(&keys, orientation, rate, Timestamp::ZERO)?,
        events,
        dwell_windows: dwell,
    })
}

/// Back-and-forth motion between `a` and `b` at `speed` for `duration_s`.
pub fn shuttle_schedule(
    a: Vec3,
    b: Vec3,
    speed: f64,
    duration_s: f64,
    rate: f64,
) -> Result<TruthSchedule> {
    let leg = (b - a).norm() / speed;
    if !(leg.is_finite() && leg > 0.0 && duration_s > 0.0) {
        return Err(Error::InvalidParameter(
            "shuttle needs distinct endpoints, positive speed and duration".into(),
        ));
    }
    let mut keys = vec![(0.0, a)];
    let mut t = 0.0;
    let mut at_a = true;
    while t < duration_s {
        t += leg;
        at_a = !at_a;
        keys.push((t, if at_a { a } else { b }));
    }
    let mut series = keyframe_series(&keys, Quaternion::IDENTITY, rate, Timestamp::ZERO)?;
    series = series.slice_time(Timestamp::ZERO, Timestamp::from_secs_f64(duration_s)?);
    Ok(TruthSchedule::plain(series))
}

/// Motionless pose held for `duration_s`.
pub fn hold_schedule(
    p: Vec3,
    orientation: Quaternion,
    duration_s: f64,
    rate: f64,
) -> Result<TruthSchedule> {
    let series = keyframe_series(
        &[(0.0, p), (duration_s, p)],
        orientation,
        rate,
        Timestamp::ZERO,
    )?;
    Ok(TruthSchedule::plain(series))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::apply;

    fn line_schedule(rate: f64) -> TruthSchedule {
        let keys = [
            (0.0, Vec3::new(0.0, 0.0, 0.0)),
            (20.0, Vec3::new(200.0, 0.0, 0.0)),
        ];
        TruthSchedule::plain(
            keyframe_series(&keys, Quaternion::IDENTITY, rate, Timestamp::ZERO).unwrap(),
        )
    }

    #[test]
    fn zero_faults_reproduce_truth() {
        let sched = line_schedule(50.0);
        let out = simulate(&sched, &FaultConfig::clean(1, 50.0)).unwrap();
        let back = apply(&out.tracker_to_truth, &out.tracker).unwrap();
        assert_eq!(back.len(), sched.series.len());
        for (a, b) in back.samples().iter().zip(sched.series.samples()) {
            assert_eq!(a.t, b.t);
            assert!((a.p - b.p).norm() < 1e-9);
            assert!(a.q.angle_to(&b.q) < 1e-9);
        }
        assert!(out.labels.spike_times.is_empty());
    }

    #[test]
    fn same_seed_same_bits_other_seed_differs() {
        let sched = line_schedule(50.0);
        let mut cfg = FaultConfig::clean(9, 30.0);
        cfg.jitter_sigma = [0.5; 3];
        cfg.timestamp_jitter_ms = 2.0;
        let a = simulate(&sched, &cfg).unwrap();
        let b = simulate(&sched, &cfg).unwrap();
        assert_eq!(a.tracker, b.tracker);
        cfg.rng_seed = 10;
        let c = simulate(&sched, &cfg).unwrap();
        assert_ne!(a.tracker, c.tracker);
    }

    #[test]
    fn jitter_sigma_recovered() {
        let sched =
            hold_schedule(Vec3::new(1.0, 2.0, 3.0), Quaternion::IDENTITY, 400.0, 25.0).unwrap();
        let mut cfg = FaultConfig::clean(3, 25.0);
        cfg.jitter_sigma = [1.0; 3];
        let out = simulate(&sched, &cfg).unwrap();
        let back = apply(&out.tracker_to_truth, &out.tracker).unwrap();
        assert!(back.len() >= 10000);
        for k in 0..3 {
            let v: Vec<f64> = back
                .samples()
                .iter()
                .map(|s| s.p[k] - [1.0, 2.0, 3.0][k])
                .collect();
            let sd = crate::stats::std_population(&v);
            assert!((sd - 1.0).abs() < 0.05, "axis {k}: {sd}");
        }
    }

    #[test]
    fn dropouts_and_energy_save() {
        let sched = line_schedule(50.0);
        let mut cfg = FaultConfig::clean(2, 30.0);
        cfg.dropouts.push(DropoutWindow {
            start_s: 5.0,
            end_s: 10.0,
            recovery_delay_s: Some(0.5),
            kind: EventKind::OcclusionFull,
        });
        let out = simulate(&sched, &cfg).unwrap();
        let hole = out
            .tracker
            .samples()
            .iter()
            .filter(|s| (5.0..10.5).contains(&s.t.as_secs_f64()))
            .count();
        assert_eq!(hole, 0);
        assert_eq!(out.events.len(), 1);
        assert_eq!(out.labels.dropouts.len(), 1);

        let still = hold_schedule(Vec3::zeros(), Quaternion::IDENTITY, 60.0, 50.0).unwrap();
        let mut cfg = FaultConfig::clean(2, 30.0);
        cfg.energy_save_after_s = Some(5.0);
        let out = simulate(&still, &cfg).unwrap();
        let span = out.tracker.span_s();
        assert!((span - 5.0).abs() <= 1.0 / 30.0 + 1e-9, "{span}");
        assert_eq!(out.labels.energy_save.len(), 1);
    }

    #[test]
    fn init_delay_marks_invalid_rows() {
        let sched = line_schedule(50.0);
        let mut cfg = FaultConfig::clean(2, 30.0);
        cfg.init_delay_s = Some(0.6);
        let out = simulate(&sched, &cfg).unwrap();
        let invalid = out.tracker.samples().iter().filter(|s| !s.valid).count();
        assert_eq!(invalid, 18);
        assert!(out.events.iter().any(|e| e.kind == EventKind::SystemStart));
    }

    #[test]
    fn spikes_labelled_with_requested_magnitudes() {
        let sched = line_schedule(50.0);
        let mut cfg = FaultConfig::clean(4, 30.0);
        cfg.spikes = Some(SpikeConfig {
            fraction: 0.01,
            min_mm: 30.0,
            max_mm: 60.0,
            fixed: vec![34.72],
        });
        let out = simulate(&sched, &cfg).unwrap();
        let clean = simulate(&sched, &FaultConfig::clean(4, 30.0)).unwrap();
        assert_eq!(out.labels.spike_times.len(), 6);
        let mut mags: Vec<f64> = out
            .tracker
            .samples()
            .iter()
            .zip(clean.tracker.samples())
            .map(|(a, b)| (a.p - b.p).norm())
            .filter(|d| *d > 1e-6)
            .collect();
        mags.sort_by(f64::total_cmp);
        assert_eq!(mags.len(), 6);
        assert!(mags.iter().any(|m| (m - 34.72).abs() < 1e-9));
        assert!(mags.iter().all(|m| (30.0..=60.0).contains(m)));
    }

    #[test]
    fn static_schedule_layout() {
        let s = static_schedule(
            Vec3::zeros(),
            Quaternion::IDENTITY,
            Vec3::new(0.0, 0.0, 50.0),
            50.0,
            3,
            3.0,
            50.0,
        )
        .unwrap();
        assert_eq!(s.dwell_windows.len(), 3);
        assert_eq!(s.events.len(), 6);
        let d = s
            .series
            .slice_time(s.dwell_windows[1].start, s.dwell_windows[1].end);
        assert!(d.samples().iter().all(|p| p.p.norm() < 1e-12));
        assert!((s.series.span_s() - 15.0).abs() < 1e-9);
    }

    #[test]
    fn too_short_rejected() {
        let sched = line_schedule(50.0);
        let cfg = FaultConfig::clean(1, 0.01);
        assert!(simulate(&sched, &cfg).is_err());
    }
}
