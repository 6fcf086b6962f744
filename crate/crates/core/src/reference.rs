//! Reference poses and paths: the scaled ISO test-cube poses and the
//! dynamic trajectories (line, circle, square, torus helix, raster), plus
//! constant-speed scheduling of a path into a timed pose series.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{FrameId, Pose, PoseSeries, Quaternion, RigidTransform, Timestamp, Vec3};

/// Largest spacing between consecutive generated points, mm.
pub const CHORD_MM: f64 = 1.0;

/// Polyline in mm. Closed paths repeat their first point at the end.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReferencePath {
    protocol_id: String,
    frame: FrameId,
    points: Vec<Vec3>,
    closed: bool,
    nominal_speed: f64,
    arc_length: f64,
}

impl ReferencePath {
    pub fn new(
        protocol_id: impl Into<String>,
        frame: FrameId,
        points: Vec<Vec3>,
        closed: bool,
        nominal_speed: f64,
    ) -> Result<Self> {
        if points.len() < 2 {
            return Err(Error::InvalidParameter(
                "a reference path needs at least 2 points".into(),
            ));
        }
        if let Some(i) = points.windows(2).position(|w| w[0] == w[1]) {
            return Err(Error::InvalidParameter(format!(
                "reference path repeats point {i}"
            )));
        }
        if !points.iter().all(|p| p.iter().all(|v| v.is_finite())) {
            return Err(Error::InvalidParameter("non-finite path point".into()));
        }
        let arc_length = points.windows(2).map(|w| (w[1] - w[0]).norm()).sum();
        Ok(ReferencePath {
            protocol_id: protocol_id.into(),
            frame,
            points,
            closed,
            nominal_speed,
            arc_length,
        })
    }

    pub fn protocol_id(&self) -> &str {
        &self.protocol_id
    }
    pub fn frame(&self) -> FrameId {
        self.frame
    }
    pub fn points(&self) -> &[Vec3] {
        &self.points
    }
    pub fn closed(&self) -> bool {
        self.closed
    }
    pub fn nominal_speed(&self) -> f64 {
        self.nominal_speed
    }
    pub fn arc_length(&self) -> f64 {
        self.arc_length
    }

    pub fn with_protocol(mut self, id: &str) -> Self {
        self.protocol_id = id.to_string();
        self
    }

    pub fn with_speed(mut self, speed: f64) -> Self {
        self.nominal_speed = speed;
        self
    }

    /// Moves the path through `t` into `t`'s target frame. Rigid motions
    /// keep the arc length; it is recomputed anyway.
    pub fn placed(&self, t: &RigidTransform) -> ReferencePath {
        let points: Vec<Vec3> = self.points.iter().map(|p| t.transform_point(p)).collect();
        let arc_length = points.windows(2).map(|w| (w[1] - w[0]).norm()).sum();
        ReferencePath {
            protocol_id: self.protocol_id.clone(),
            frame: t.to_frame(),
            points,
            closed: self.closed,
            nominal_speed: self.nominal_speed,
            arc_length,
        }
    }

    /// Point at arc length `s`, clamped to the ends.
    pub fn point_at(&self, s: f64) -> Vec3 {
        self.locate(&self.cumulative(), s)
    }

    fn cumulative(&self) -> Vec<f64> {
        let mut acc = Vec::with_capacity(self.points.len());
        let mut total = 0.0;
        acc.push(0.0);
        for w in self.points.windows(2) {
            total += (w[1] - w[0]).norm();
            acc.push(total);
        }
        acc
    }

    fn locate(&self, cum: &[f64], s: f64) -> Vec3 {
        let last = cum.len() - 1;
        if s <= 0.0 {
            return self.points[0];
        }
        if s >= cum[last] {
            return self.points[last];
        }
        let i = cum
            .partition_point(|&c| c <= s)
            .saturating_sub(1)
            .min(last - 1);
        let seg = cum[i + 1] - cum[i];
        let f = (s - cum[i]) / seg;
        self.points[i] + (self.points[i + 1] - self.points[i]) * f
    }
}

fn positive(name: &str, v: f64) -> Result<()> {
    if v.is_finite() && v > 0.0 {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!(
            "{name} must be > 0, got {v}"
        )))
    }
}

/// Straight segment `a → b` subdivided at [`CHORD_MM`], excluding `b`.
fn push_segment(out: &mut Vec<Vec3>, a: Vec3, b: Vec3) {
    let n = ((b - a).norm() / CHORD_MM).ceil().max(1.0) as usize;
    for k in 0..n {
        out.push(a + (b - a) * (k as f64 / n as f64));
    }
}

fn path(id: &str, points: Vec<Vec3>, closed: bool) -> Result<ReferencePath> {
    ReferencePath::new(id, FrameId::Reference, points, closed, 0.0)
}

/// Straight line of `length` mm along +x from the origin.
pub fn gen_line(length: f64) -> Result<ReferencePath> {
    positive("length", length)?;
    let mut pts = Vec::new();
    let end = Vec3::new(length, 0.0, 0.0);
    push_segment(&mut pts, Vec3::zeros(), end);
    pts.push(end);
    path("DT01", pts, false)
}

/// Circle of `radius` mm in the xy plane around the origin, counter-clockwise
/// from `(R, 0, 0)`, with chords no longer than [`CHORD_MM`].
pub fn gen_circle(radius: f64) -> Result<ReferencePath> {
    positive("radius", radius)?;
    let half = CHORD_MM / (2.0 * radius);
    let n = if half >= 1.0 {
        8
    } else {
        ((PI / half.asin()).ceil() as usize).max(8)
    };
    let mut pts: Vec<Vec3> = (0..n)
        .map(|k| {
            let a = 2.0 * PI * k as f64 / n as f64;
            Vec3::new(radius * a.cos(), radius * a.sin(), 0.0)
        })
        .collect();
    pts.push(pts[0]);
    path("DT02", pts, true)
}

/// Square of `side` mm centred on the origin in the xy plane, counter-clockwise
/// from `(−s/2, −s/2)`. Corners are exact vertices.
pub fn gen_square(side: f64) -> Result<ReferencePath> {
    positive("side", side)?;
    let h = side / 2.0;
    let corners = [
        Vec3::new(-h, -h, 0.0),
        Vec3::new(h, -h, 0.0),
        Vec3::new(h, h, 0.0),
        Vec3::new(-h, h, 0.0),
    ];
    let mut pts = Vec::new();
    for i in 0..4 {
        push_segment(&mut pts, corners[i], corners[(i + 1) % 4]);
    }
    pts.push(corners[0]);
    path("DT03", pts, true)
}

/// Helix on a torus with major radius `major` and tube radius `minor`,
/// winding `turns` times around the tube per revolution about z. Closed.
pub fn gen_torus(major: f64, minor: f64, turns: u32) -> Result<ReferencePath> {
    positive("minor radius", minor)?;
    positive("major radius", major)?;
    if major <= minor {
        return Err(Error::InvalidParameter(format!(
            "torus needs major > minor, got {major} <= {minor}"
        )));
    }
    let m = turns as f64;
    let max_speed = ((major + minor).powi(2) + (minor * m).powi(2)).sqrt();
    let n = ((2.0 * PI * max_speed / CHORD_MM).ceil() as usize).max(8);
    let mut pts: Vec<Vec3> = (0..n)
        .map(|k| torus_point(major, minor, m, 2.0 * PI * k as f64 / n as f64))
        .collect();
    pts.push(pts[0]);
    path("DT04-1", pts, true)
}

pub(crate) fn torus_point(major: f64, minor: f64, turns: f64, u: f64) -> Vec3 {
    let v = turns * u;
    let rr = major + minor * v.cos();
    Vec3::new(rr * u.cos(), rr * u.sin(), minor * v.sin())
}

/// Serpentine raster over `[0, width] × [0, height]` at z = 0: `lines`
/// passes along x, spaced `height / (lines − 1)`, joined at alternate ends.
pub fn gen_raster(width: f64, height: f64, lines: u32) -> Result<ReferencePath> {
    positive("width", width)?;
    positive("height", height)?;
    if lines < 2 {
        return Err(Error::InvalidParameter(format!(
            "raster needs at least 2 lines, got {lines}"
        )));
    }
    let spacing = height / (lines - 1) as f64;
    let mut pts = Vec::new();
    let mut cursor = Vec3::zeros();
    for i in 0..lines {
        let y = i as f64 * spacing;
        let (x0, x1) = if i % 2 == 0 {
            (0.0, width)
        } else {
            (width, 0.0)
        };
        let a = Vec3::new(x0, y, 0.0);
        if i > 0 {
            push_segment(&mut pts, cursor, a);
        }
        let b = Vec3::new(x1, y, 0.0);
        push_segment(&mut pts, a, b);
        cursor = b;
    }
    pts.push(cursor);
    path("DT04-2", pts, false)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LabeledPose {
    pub label: String,
    pub position: Vec3,
    pub orientation: Quaternion,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ReferencePoseSet {
    pub protocol_id: String,
    pub poses: Vec<LabeledPose>,
}

impl ReferencePoseSet {
    pub fn get(&self, label: &str) -> Option<&LabeledPose> {
        self.poses.iter().find(|p| p.label == label)
    }
}

/// Static targets of a cube with edge `edge` mm centred on the origin. The
/// measurement plane passes through the centre, tilted `incline_deg` about
/// x. SP01 is the centre; SP02–SP05 lie on the plane's diagonals, 10 % of
/// the diagonal length in from the corners. Orientations point along the
/// plane normal.
pub fn gen_iso_cube_poses(edge: f64, incline_deg: f64) -> Result<ReferencePoseSet> {
    positive("edge", edge)?;
    if !(0.0..=90.0).contains(&incline_deg) {
        return Err(Error::InvalidParameter(format!(
            "incline must be within [0, 90] degrees, got {incline_deg}"
        )));
    }
    let th = incline_deg.to_radians();
    let h = edge / 2.0;
    let (c, s) = (th.cos(), th.sin());
    let mut bv = f64::INFINITY;
    if c > 1e-12 {
        bv = bv.min(h / c);
    }
    if s > 1e-12 {
        bv = bv.min(h / s);
    }
    let u = Vec3::x();
    let v = Vec3::new(0.0, c, s);
    let q = Quaternion::from_axis_angle(&Vec3::x(), th).unwrap_or(Quaternion::IDENTITY);
    let f = 0.8;
    let signs = [(1.0, 1.0), (-1.0, 1.0), (-1.0, -1.0), (1.0, -1.0)];
    let mut poses = vec![LabeledPose {
        label: "SP01".into(),
        position: Vec3::zeros(),
        orientation: q,
    }];
    for (i, (a, b)) in signs.iter().enumerate() {
        poses.push(LabeledPose {
            label: format!("SP{:02}", i + 2),
            position: u * (a * f * h) + v * (b * f * bv),
            orientation: q,
        });
    }
    Ok(ReferencePoseSet {
        protocol_id: "ISO-CUBE".into(),
        poses,
    })
}

/// Samples `path` at constant `speed` (mm/s) and `rate` (Hz) from t = 0 with
/// identity orientation. See [`schedule_with`].
pub fn schedule(path: &ReferencePath, speed: f64, rate: f64) -> Result<PoseSeries> {
    schedule_with(path, speed, rate, Timestamp::ZERO, Quaternion::IDENTITY)
}

/// Constant-speed arc-length parameterisation: sample `k` sits at arc length
/// `k·speed/rate` and time `t0 + k/rate`, for every `k` up to the path end.
/// Orientation is held at `orientation`.
pub fn schedule_with(
    path: &ReferencePath,
    speed: f64,
    rate: f64,
    t0: Timestamp,
    orientation: Quaternion,
) -> Result<PoseSeries> {
    positive("speed", speed)?;
    positive("rate", rate)?;
    let cum = path.cumulative();
    let total = path.arc_length;
    let steps = (total / speed * rate + 1e-9).floor() as u64;
    let samples = (0..=steps)
        .map(|k| {
            let t_ns = (k as f64 * 1e9 / rate).round() as u64;
            Pose::new(
                t0.saturating_add_ns(t_ns),
                path.locate(&cum, k as f64 * speed / rate),
                orientation,
                path.frame,
            )
        })
        .collect();
    PoseSeries::new(path.frame, samples, rate)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn arc_lengths() {
        assert!((gen_line(500.0).unwrap().arc_length() - 500.0).abs() < 1e-9);
        let c = gen_circle(200.0).unwrap();
        let exact = 2.0 * PI * 200.0;
        assert!((c.arc_length() - exact).abs() / exact < 1e-4);
        assert!((gen_square(300.0).unwrap().arc_length() - 1200.0).abs() < 1e-9);
        assert!((gen_raster(100.0, 100.0, 5).unwrap().arc_length() - 600.0).abs() < 1e-9);
        assert!(gen_line(0.0).is_err());
        assert!(gen_torus(100.0, 0.0, 1).is_err());
    }

    #[test]
    fn chords_bounded_and_paths_closed() {
        for p in [
            gen_line(500.0).unwrap(),
            gen_circle(200.0).unwrap(),
            gen_square(300.0).unwrap(),
            gen_torus(100.0, 30.0, 5).unwrap(),
            gen_raster(100.0, 100.0, 5).unwrap(),
        ] {
            for w in p.points().windows(2) {
                assert!((w[1] - w[0]).norm() <= CHORD_MM + 1e-12);
            }
            if p.closed() {
                assert_eq!(p.points()[0], *p.points().last().unwrap());
            }
        }
    }

    #[test]
    fn square_corners_exact_and_ccw() {
        let sq = gen_square(300.0).unwrap();
        for c in [
            Vec3::new(-150.0, -150.0, 0.0),
            Vec3::new(150.0, -150.0, 0.0),
            Vec3::new(150.0, 150.0, 0.0),
            Vec3::new(-150.0, 150.0, 0.0),
        ] {
            assert!(sq.points().contains(&c));
        }
        // Shoelace area positive for counter-clockwise traversal.
        let area: f64 = sq
            .points()
            .windows(2)
            .map(|w| w[0].x * w[1].y - w[1].x * w[0].y)
            .sum();
        assert!(area > 0.0);
    }

    #[test]
    fn torus_points_on_surface_and_length_matches_quadrature() {
        let (r_big, r_small, m) = (100.0, 30.0, 1u32);
        let t = gen_torus(r_big, r_small, m).unwrap();
        for p in t.points() {
            let rho = (p.x * p.x + p.y * p.y).sqrt();
            let residual = (rho - r_big).powi(2) + p.z * p.z - r_small * r_small;
            assert!(residual.abs() < 1e-9, "{residual}");
        }
        // Composite Simpson on |dγ/du| = sqrt((R + r cos mu)² + (r m)²).
        let n = 20_000;
        let h = 2.0 * PI / n as f64;
        let speed = |u: f64| {
            ((r_big + r_small * (m as f64 * u).cos()).powi(2) + (r_small * m as f64).powi(2)).sqrt()
        };
        let mut acc = speed(0.0) + speed(2.0 * PI);
        for k in 1..n {
            acc += speed(k as f64 * h) * if k % 2 == 1 { 4.0 } else { 2.0 };
        }
        let quad = acc * h / 3.0;
        assert!((t.arc_length() - quad).abs() / quad < 1e-3);
    }

    #[test]
    fn raster_shape() {
        let r = gen_raster(100.0, 100.0, 5).unwrap();
        for p in r.points() {
            assert!((0.0..=100.0).contains(&p.x) && (0.0..=100.0).contains(&p.y));
        }
        let u = gen_raster(100.0, 40.0, 2).unwrap();
        assert!((u.arc_length() - 240.0).abs() < 1e-9);
        assert_eq!(*u.points().last().unwrap(), Vec3::new(0.0, 40.0, 0.0));
        assert!(gen_raster(100.0, 100.0, 1).is_err());
    }

    #[test]
    fn cube_poses() {
        let set = gen_iso_cube_poses(200.0, 45.0).unwrap();
        assert_eq!(set.poses.len(), 5);
        let p = |l: &str| set.get(l).unwrap().position;
        // Plane rectangle 200 × 200√2, half-diagonal 100√3; points at 80 %.
        let diag = 2.0 * 0.8 * 100.0 * 3f64.sqrt();
        assert!(((p("SP02") - p("SP04")).norm() - diag).abs() < 1e-9);
        assert!(((p("SP03") - p("SP05")).norm() - diag).abs() < 1e-9);
        for lp in &set.poses {
            let pos = lp.position;
            assert!(pos.iter().all(|c| c.abs() <= 100.0 + 1e-9));
        }
        let flat = gen_iso_cube_poses(200.0, 0.0).unwrap();
        assert!(flat.poses.iter().all(|p| p.position.z == 0.0));
        assert!(gen_iso_cube_poses(0.0, 45.0).is_err());
    }

    #[test]
    fn schedule_line() {
        let s = schedule(&gen_line(500.0).unwrap(), 10.0, 50.0).unwrap();
        assert_eq!(s.len(), 2501);
        assert!((s.span_s() - 50.0).abs() < 1e-9);
        for w in s.samples().windows(2) {
            assert!(((w[1].p - w[0].p).norm() - 0.2).abs() < 1e-9);
        }
        let fast = schedule(&gen_line(500.0).unwrap(), 500.0, 50.0).unwrap();
        assert!((fast.span_s() - 1.0).abs() < 1e-9);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]
        #[test]
        fn placement_equivariance(
            w in -1.0..1.0f64, x in -1.0..1.0f64, y in -1.0..1.0f64, z in -1.0..1.0f64,
            tx in -300.0..300.0f64, ty in -300.0..300.0f64, tz in -300.0..300.0f64,
        ) {
            prop_assume!(w * w + x * x + y * y + z * z > 0.05);
            let q = Quaternion::from_unnormalized(w, x, y, z).unwrap();
            let t = RigidTransform::from_quaternion(&q, Vec3::new(tx, ty, tz), FrameId::Reference, FrameId::GroundtruthWorld).unwrap();
            let sq = gen_square(300.0).unwrap();
            let a = schedule(&sq.placed(&t), 50.0, 10.0).unwrap();
            let b = crate::model::apply(&t, &schedule(&sq, 50.0, 10.0).unwrap()).unwrap();
            prop_assert_eq!(a.len(), b.len());
            for (p, r) in a.samples().iter().zip(b.samples()) {
                prop_assert!((p.p - r.p).norm() < 1e-9);
            }
        }
    }
}
