//! Geometric value types shared by every stage of the evaluation.
//!
//! Lengths are millimetres, internal angles radians, time integer
//! nanoseconds. All types are immutable once built; constructors validate
//! their invariants and return an [`Error`] instead of producing a value that
//! would violate them.

use std::fmt;

use nalgebra::{Matrix3, Rotation3, UnitQuaternion, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type Vec3 = Vector3<f64>;

/// Tolerance accepted on the norm of an incoming quaternion before it is
/// renormalised.
pub const QUATERNION_NORM_TOLERANCE: f64 = 1e-3;

/// Tolerance on orthonormality and determinant of a rotation matrix.
pub const ROTATION_TOLERANCE: f64 = 1e-9;

const NANOS_PER_SEC: f64 = 1e9;

/// Nanoseconds since an arbitrary epoch shared by all streams of a session.
#[derive(
    Clone, Copy, Debug, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize,
)]
#[serde(transparent)]
pub struct Timestamp(u64);

impl Timestamp {
    pub const ZERO: Timestamp = Timestamp(0);

    pub const fn from_nanos(ns: u64) -> Self {
        Timestamp(ns)
    }

    /// Rounds to the nearest nanosecond. Negative or non-finite input is
    /// rejected.
    pub fn from_secs_f64(secs: f64) -> Result<Self> {
        if !secs.is_finite() || secs < 0.0 {
            return Err(Error::InvalidParameter(format!(
                "timestamp must be a non-negative finite number of seconds, got {secs}"
            )));
        }
        Ok(Timestamp((secs * NANOS_PER_SEC).round() as u64))
    }

    pub const fn nanos(self) -> u64 {
        self.0
    }

    pub fn as_secs_f64(self) -> f64 {
        self.0 as f64 / NANOS_PER_SEC
    }

    /// `self - other` in nanoseconds.
    pub fn diff_ns(self, other: Timestamp) -> i64 {
        self.0 as i64 - other.0 as i64
    }

    /// `self - other` in seconds.
    pub fn secs_since(self, other: Timestamp) -> f64 {
        self.diff_ns(other) as f64 / NANOS_PER_SEC
    }

    pub fn saturating_add_ns(self, ns: u64) -> Self {
        Timestamp(self.0.saturating_add(ns))
    }

    pub fn saturating_sub_ns(self, ns: u64) -> Self {
        Timestamp(self.0.saturating_sub(ns))
    }
}

impl fmt::Display for Timestamp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}ns", self.0)
    }
}

/// Unit quaternion in Hamilton convention, scalar first, canonicalised so
/// that `w >= 0`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Quaternion {
    w: f64,
    x: f64,
    y: f64,
    z: f64,
}

impl Quaternion {
    pub const IDENTITY: Quaternion = Quaternion {
        w: 1.0,
        x: 0.0,
        y: 0.0,
        z: 0.0,
    };

    /// Accepts a quaternion whose norm is within [`QUATERNION_NORM_TOLERANCE`]
    /// of one, renormalises and canonicalises it.
    pub fn new(w: f64, x: f64, y: f64, z: f64) -> Result<Self> {
        let norm = (w * w + x * x + y * y + z * z).sqrt();
        if !norm.is_finite() || (norm - 1.0).abs() > QUATERNION_NORM_TOLERANCE {
            return Err(Error::InvalidQuaternion { norm });
        }
        Ok(Self::raw_normalized(w, x, y, z, norm))
    }

    /// Normalises any finite, non-zero quaternion.
    pub fn from_unnormalized(w: f64, x: f64, y: f64, z: f64) -> Result<Self> {
        let norm = (w * w + x * x + y * y + z * z).sqrt();
        if !norm.is_finite() || norm < 1e-12 {
            return Err(Error::InvalidQuaternion { norm });
        }
        Ok(Self::raw_normalized(w, x, y, z, norm))
    }

    fn raw_normalized(w: f64, x: f64, y: f64, z: f64, norm: f64) -> Self {
        // Already unit to rounding: keep the bits so serialisation round-trips.
        if (norm - 1.0).abs() <= 4.0 * f64::EPSILON {
            return Quaternion { w, x, y, z }.canonical();
        }
        Quaternion {
            w: w / norm,
            x: x / norm,
            y: y / norm,
            z: z / norm,
        }
        .canonical()
    }

    /// Rotation of `angle` radians about `axis` (need not be unit length).
    pub fn from_axis_angle(axis: &Vec3, angle: f64) -> Result<Self> {
        let n = axis.norm();
        if !(n > 1e-12) || !angle.is_finite() {
            return Err(Error::InvalidParameter(
                "axis must be non-zero and angle finite".into(),
            ));
        }
        let half = 0.5 * angle;
        let s = half.sin() / n;
        Self::from_unnormalized(half.cos(), axis.x * s, axis.y * s, axis.z * s)
    }

    /// Exponential map of a rotation vector (axis scaled by angle in radians).
    pub fn from_rotation_vector(v: &Vec3) -> Self {
        let angle = v.norm();
        if angle < 1e-300 {
            return Self::IDENTITY;
        }
        let half = 0.5 * angle;
        let s = half.sin() / angle;
        Quaternion {
            w: half.cos(),
            x: v.x * s,
            y: v.y * s,
            z: v.z * s,
        }
        .canonical()
    }

    /// Converts a proper rotation matrix. The caller guarantees orthonormality.
    pub fn from_rotation_matrix(m: &Matrix3<f64>) -> Self {
        let uq = UnitQuaternion::from_rotation_matrix(&Rotation3::from_matrix_unchecked(*m));
        let q = uq.quaternion();
        // Shepperd's method output is unit to machine precision; renormalise anyway.
        Self::from_unnormalized(q.w, q.i, q.j, q.k).unwrap_or(Self::IDENTITY)
    }

    pub fn w(&self) -> f64 {
        self.w
    }
    pub fn x(&self) -> f64 {
        self.x
    }
    pub fn y(&self) -> f64 {
        self.y
    }
    pub fn z(&self) -> f64 {
        self.z
    }

    pub fn to_array(&self) -> [f64; 4] {
        [self.w, self.x, self.y, self.z]
    }

    pub fn vector_part(&self) -> Vec3 {
        Vec3::new(self.x, self.y, self.z)
    }

    /// `q` and `-q` are the same rotation; keep the one with `w >= 0`
    /// (ties broken on the first non-zero vector component).
    pub fn canonical(self) -> Self {
        let flip = if self.w != 0.0 {
            self.w < 0.0
        } else if self.x != 0.0 {
            self.x < 0.0
        } else if self.y != 0.0 {
            self.y < 0.0
        } else {
            self.z < 0.0
        };
        if flip {
            Quaternion {
                w: -self.w,
                x: -self.x,
                y: -self.y,
                z: -self.z,
            }
        } else {
            self
        }
    }

    pub fn conjugate(&self) -> Self {
        Quaternion {
            w: self.w,
            x: -self.x,
            y: -self.y,
            z: -self.z,
        }
    }

    pub fn dot(&self, other: &Quaternion) -> f64 {
        self.w * other.w + self.x * other.x + self.y * other.y + self.z * other.z
    }

    /// Hamilton product `self * other`, canonicalised.
    pub fn mul(&self, o: &Quaternion) -> Quaternion {
        Quaternion {
            w: self.w * o.w - self.x * o.x - self.y * o.y - self.z * o.z,
            x: self.w * o.x + self.x * o.w + self.y * o.z - self.z * o.y,
            y: self.w * o.y - self.x * o.z + self.y * o.w + self.z * o.x,
            z: self.w * o.z + self.x * o.y - self.y * o.x + self.z * o.w,
        }
        .canonical()
    }

    pub fn to_rotation_matrix(&self) -> Matrix3<f64> {
        let (w, x, y, z) = (self.w, self.x, self.y, self.z);
        Matrix3::new(
            1.0 - 2.0 * (y * y + z * z),
            2.0 * (x * y - w * z),
            2.0 * (x * z + w * y),
            2.0 * (x * y + w * z),
            1.0 - 2.0 * (x * x + z * z),
            2.0 * (y * z - w * x),
            2.0 * (x * z - w * y),
            2.0 * (y * z + w * x),
            1.0 - 2.0 * (x * x + y * y),
        )
    }

    pub fn rotate(&self, v: &Vec3) -> Vec3 {
        self.to_rotation_matrix() * v
    }

    /// Logarithm map: axis times angle, angle in `[0, pi]`.
    pub fn rotation_vector(&self) -> Vec3 {
        let q = self.canonical();
        let v = q.vector_part();
        let s = v.norm();
        if s < 1e-300 {
            return Vec3::zeros();
        }
        let angle = 2.0 * s.atan2(q.w);
        v * (angle / s)
    }

    /// Geodesic angle to `other` in radians, in `[0, pi]`.
    ///
    /// Equals `2 acos(|<a, b>|)` but is evaluated through `atan2` on the
    /// relative rotation so it stays accurate near zero.
    pub fn angle_to(&self, other: &Quaternion) -> f64 {
        let rel = self.conjugate().mul(other);
        2.0 * rel.vector_part().norm().atan2(rel.w.abs())
    }
}

/// Serialised as `[w, x, y, z]`.
impl Serialize for Quaternion {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        self.to_array().serialize(s)
    }
}

impl<'de> Deserialize<'de> for Quaternion {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let [w, x, y, z] = <[f64; 4]>::deserialize(d)?;
        Quaternion::new(w, x, y, z).map_err(serde::de::Error::custom)
    }
}

/// Geodesic angle between two orientations in degrees, `[0, 180]`.
pub fn rotation_angle_deg(a: &Quaternion, b: &Quaternion) -> f64 {
    a.angle_to(b).to_degrees()
}

/// Reference frame a pose is expressed in.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum FrameId {
    TrackerWorld,
    GroundtruthWorld,
    Reference,
}

impl fmt::Display for FrameId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            FrameId::TrackerWorld => "TRACKER_WORLD",
            FrameId::GroundtruthWorld => "GROUNDTRUTH_WORLD",
            FrameId::Reference => "REFERENCE",
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Pose {
    pub t: Timestamp,
    pub p: Vec3,
    pub q: Quaternion,
    pub frame: FrameId,
    pub valid: bool,
}

impl Pose {
    pub fn new(t: Timestamp, p: Vec3, q: Quaternion, frame: FrameId) -> Self {
        Pose {
            t,
            p,
            q,
            frame,
            valid: true,
        }
    }
}

/// Time-ordered poses in a single frame.
#[derive(Clone, Debug, PartialEq)]
pub struct PoseSeries {
    frame: FrameId,
    samples: Vec<Pose>,
    nominal_rate: f64,
}

impl PoseSeries {
    /// Validates strictly increasing timestamps, a shared frame and finite
    /// coordinates.
    pub fn new(frame: FrameId, samples: Vec<Pose>, nominal_rate: f64) -> Result<Self> {
        if !(nominal_rate.is_finite() && nominal_rate > 0.0) {
            return Err(Error::InvalidSeries(format!(
                "nominal rate must be positive, got {nominal_rate}"
            )));
        }
        for (i, s) in samples.iter().enumerate() {
            if s.frame != frame {
                return Err(Error::FrameMismatch {
                    expected: frame.to_string(),
                    found: s.frame.to_string(),
                });
            }
            if !(s.p.x.is_finite() && s.p.y.is_finite() && s.p.z.is_finite()) {
                return Err(Error::InvalidSeries(format!(
                    "sample {i} has non-finite position"
                )));
            }
            if i > 0 && samples[i - 1].t >= s.t {
                return Err(Error::InvalidSeries(format!(
                    "timestamps not strictly increasing at sample {i}"
                )));
            }
        }
        Ok(PoseSeries {
            frame,
            samples,
            nominal_rate,
        })
    }

    /// Like [`PoseSeries::new`] but estimates the nominal rate from the median
    /// sample interval. Falls back to `fallback_rate` for fewer than two samples.
    pub fn with_estimated_rate(
        frame: FrameId,
        samples: Vec<Pose>,
        fallback_rate: f64,
    ) -> Result<Self> {
        let rate = estimate_rate(&samples).unwrap_or(fallback_rate);
        Self::new(frame, samples, rate)
    }

    pub fn frame(&self) -> FrameId {
        self.frame
    }

    pub fn samples(&self) -> &[Pose] {
        &self.samples
    }

    pub fn into_samples(self) -> Vec<Pose> {
        self.samples
    }

    pub fn nominal_rate(&self) -> f64 {
        self.nominal_rate
    }

    pub fn period_s(&self) -> f64 {
        1.0 / self.nominal_rate
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn first(&self) -> Option<&Pose> {
        self.samples.first()
    }

    pub fn last(&self) -> Option<&Pose> {
        self.samples.last()
    }

    /// Time between first and last sample in seconds.
    pub fn span_s(&self) -> f64 {
        match (self.first(), self.last()) {
            (Some(a), Some(b)) => b.t.secs_since(a.t),
            _ => 0.0,
        }
    }

    /// Samples with `start <= t <= end`.
    pub fn slice_time(&self, start: Timestamp, end: Timestamp) -> PoseSeries {
        let lo = self.samples.partition_point(|s| s.t < start);
        let hi = self.samples.partition_point(|s| s.t <= end);
        PoseSeries {
            frame: self.frame,
            samples: self.samples[lo..hi.max(lo)].to_vec(),
            nominal_rate: self.nominal_rate,
        }
    }

    /// Keeps samples whose mask entry is `true`.
    pub fn retain_mask(&self, mask: &[bool]) -> PoseSeries {
        PoseSeries {
            frame: self.frame,
            samples: self
                .samples
                .iter()
                .zip(mask)
                .filter(|(_, &k)| k)
                .map(|(s, _)| *s)
                .collect(),
            nominal_rate: self.nominal_rate,
        }
    }

    pub fn valid_only(&self) -> PoseSeries {
        PoseSeries {
            frame: self.frame,
            samples: self.samples.iter().filter(|s| s.valid).copied().collect(),
            nominal_rate: self.nominal_rate,
        }
    }

    /// Re-declares the frame without moving any pose. Only meaningful when
    /// the caller knows both frames coincide.
    pub fn relabel(&self, frame: FrameId) -> PoseSeries {
        PoseSeries {
            frame,
            samples: self.samples.iter().map(|s| Pose { frame, ..*s }).collect(),
            nominal_rate: self.nominal_rate,
        }
    }

    pub fn positions(&self) -> impl Iterator<Item = Vec3> + '_ {
        self.samples.iter().map(|s| s.p)
    }
}

/// Rate in Hz implied by the median sample interval.
pub fn estimate_rate(samples: &[Pose]) -> Option<f64> {
    if samples.len() < 2 {
        return None;
    }
    let mut dts: Vec<i64> = samples.windows(2).map(|w| w[1].t.diff_ns(w[0].t)).collect();
    dts.sort_unstable();
    let median = dts[dts.len() / 2];
    (median > 0).then(|| NANOS_PER_SEC / median as f64)
}

/// Similarity transform `x -> s R x + t` from one declared frame into another.
#[derive(Clone, Debug, PartialEq)]
pub struct RigidTransform {
    rotation: Matrix3<f64>,
    translation: Vec3,
    scale: f64,
    from: FrameId,
    to: FrameId,
}

impl RigidTransform {
    pub fn new(
        rotation: Matrix3<f64>,
        translation: Vec3,
        scale: f64,
        from: FrameId,
        to: FrameId,
    ) -> Result<Self> {
        check_rotation(&rotation)?;
        if !(scale.is_finite() && scale > 0.0) {
            return Err(Error::InvalidTransform(format!(
                "scale must be positive, got {scale}"
            )));
        }
        if !translation.iter().all(|v| v.is_finite()) {
            return Err(Error::InvalidTransform("non-finite translation".into()));
        }
        Ok(RigidTransform {
            rotation,
            translation,
            scale,
            from,
            to,
        })
    }

    pub fn identity(from: FrameId, to: FrameId) -> Self {
        RigidTransform {
            rotation: Matrix3::identity(),
            translation: Vec3::zeros(),
            scale: 1.0,
            from,
            to,
        }
    }

    pub fn from_quaternion(
        q: &Quaternion,
        translation: Vec3,
        from: FrameId,
        to: FrameId,
    ) -> Result<Self> {
        Self::new(q.to_rotation_matrix(), translation, 1.0, from, to)
    }

    pub fn pure_translation(translation: Vec3, from: FrameId, to: FrameId) -> Result<Self> {
        Self::new(Matrix3::identity(), translation, 1.0, from, to)
    }

    pub fn rotation(&self) -> &Matrix3<f64> {
        &self.rotation
    }

    pub fn translation(&self) -> &Vec3 {
        &self.translation
    }

    pub fn scale(&self) -> f64 {
        self.scale
    }

    pub fn from_frame(&self) -> FrameId {
        self.from
    }

    pub fn to_frame(&self) -> FrameId {
        self.to
    }

    pub fn rotation_quaternion(&self) -> Quaternion {
        Quaternion::from_rotation_matrix(&self.rotation)
    }

    pub fn transform_point(&self, p: &Vec3) -> Vec3 {
        self.rotation * p * self.scale + self.translation
    }

    pub fn inverse(&self) -> RigidTransform {
        let rt = self.rotation.transpose();
        let inv_s = 1.0 / self.scale;
        RigidTransform {
            translation: -(rt * self.translation) * inv_s,
            rotation: rt,
            scale: inv_s,
            from: self.to,
            to: self.from,
        }
    }
}

fn check_rotation(r: &Matrix3<f64>) -> Result<()> {
    if !r.iter().all(|v| v.is_finite()) {
        return Err(Error::InvalidTransform("non-finite rotation".into()));
    }
    let ortho = (r.transpose() * r - Matrix3::identity()).abs().max();
    let det = r.determinant();
    if ortho > ROTATION_TOLERANCE || (det - 1.0).abs() > ROTATION_TOLERANCE {
        return Err(Error::InvalidTransform(format!(
            "rotation not proper orthonormal (orthogonality error {ortho:.2e}, det {det})"
        )));
    }
    Ok(())
}

/// `outer ∘ inner`: applies `inner` first. `inner` must end in the frame
/// `outer` starts from.
pub fn compose(outer: &RigidTransform, inner: &RigidTransform) -> Result<RigidTransform> {
    if inner.to != outer.from {
        return Err(Error::FrameMismatch {
            expected: outer.from.to_string(),
            found: inner.to.to_string(),
        });
    }
    RigidTransform::new(
        outer.rotation * inner.rotation,
        outer.rotation * inner.translation * outer.scale + outer.translation,
        outer.scale * inner.scale,
        inner.from,
        outer.to,
    )
}

/// Maps every pose of `series` through `transform`; timestamps and validity
/// are untouched.
pub fn apply(transform: &RigidTransform, series: &PoseSeries) -> Result<PoseSeries> {
    if series.frame() != transform.from {
        return Err(Error::FrameMismatch {
            expected: transform.from.to_string(),
            found: series.frame().to_string(),
        });
    }
    let qr = transform.rotation_quaternion();
    let is_identity = transform.rotation == Matrix3::identity()
        && transform.translation == Vec3::zeros()
        && transform.scale == 1.0;
    let samples = series
        .samples()
        .iter()
        .map(|s| Pose {
            t: s.t,
            p: if is_identity {
                s.p
            } else {
                transform.transform_point(&s.p)
            },
            q: if is_identity { s.q } else { qr.mul(&s.q) },
            frame: transform.to,
            valid: s.valid,
        })
        .collect();
    Ok(PoseSeries {
        frame: transform.to,
        samples,
        nominal_rate: series.nominal_rate(),
    })
}

/// Serialised form of a [`RigidTransform`]; rotation rows are row-major.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct TransformRecord {
    pub from: FrameId,
    pub to: FrameId,
    pub rotation: [[f64; 3]; 3],
    pub translation: [f64; 3],
    pub scale: f64,
}

impl From<&RigidTransform> for TransformRecord {
    fn from(t: &RigidTransform) -> Self {
        let r = &t.rotation;
        TransformRecord {
            from: t.from,
            to: t.to,
            rotation: [
                [r[(0, 0)], r[(0, 1)], r[(0, 2)]],
                [r[(1, 0)], r[(1, 1)], r[(1, 2)]],
                [r[(2, 0)], r[(2, 1)], r[(2, 2)]],
            ],
            translation: [t.translation.x, t.translation.y, t.translation.z],
            scale: t.scale,
        }
    }
}

impl TryFrom<TransformRecord> for RigidTransform {
    type Error = Error;

    fn try_from(r: TransformRecord) -> Result<Self> {
        let m = r.rotation;
        RigidTransform::new(
            Matrix3::new(
                m[0][0], m[0][1], m[0][2], m[1][0], m[1][1], m[1][2], m[2][0], m[2][1], m[2][2],
            ),
            Vec3::from(r.translation),
            r.scale,
            r.from,
            r.to,
        )
    }
}

impl Serialize for RigidTransform {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        TransformRecord::from(self).serialize(s)
    }
}

impl<'de> Deserialize<'de> for RigidTransform {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let rec = TransformRecord::deserialize(d)?;
        RigidTransform::try_from(rec).map_err(serde::de::Error::custom)
    }
}
