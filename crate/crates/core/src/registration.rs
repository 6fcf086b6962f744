//! Closed-form least-squares registration between point sets.
//!
//! Umeyama's SVD solution: with centred clouds `X` (source) and `Y`
//! (destination), `H = Y Xᵀ / n = U Σ Vᵀ` and `R = U S Vᵀ`, where `S`
//! flips the last axis when `det(U) det(V) < 0` so a reflection can never be
//! returned.

use nalgebra::{Matrix3, SVD};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{FrameId, RigidTransform, Vec3};

/// Ratio of the middle to the largest singular value of the centred point
/// matrix below which a point set counts as collinear.
pub const COLLINEARITY_TOLERANCE: f64 = 1e-6;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Registration {
    pub transform: RigidTransform,
    /// `‖dst_i − T(src_i)‖` per correspondence, mm.
    pub residuals: Vec<f64>,
    pub rms: f64,
}

fn centroid(points: &[Vec3]) -> Vec3 {
    points.iter().sum::<Vec3>() / points.len() as f64
}

fn singular_values_desc(points: &[Vec3]) -> [f64; 3] {
    let c = centroid(points);
    let mut cov = Matrix3::zeros();
    for p in points {
        let d = p - c;
        cov += d * d.transpose();
    }
    // Singular values of the centred matrix are square roots of the
    // eigenvalues of its scatter matrix.
    let mut sv: Vec<f64> = cov
        .symmetric_eigenvalues()
        .iter()
        .map(|l| l.max(0.0).sqrt())
        .collect();
    sv.sort_by(|a, b| b.total_cmp(a));
    [sv[0], sv[1], sv[2]]
}

/// Rejects sets of fewer than three points and sets that are collinear
/// (or coincident) within [`COLLINEARITY_TOLERANCE`].
///
/// The middle singular value is tested rather than the smallest: marker
/// corners are coplanar by construction, which constrains a rotation fully.
pub fn check_conditioning(points: &[Vec3]) -> Result<()> {
    if points.len() < 3 {
        return Err(Error::TooFewPoints {
            needed: 3,
            got: points.len(),
        });
    }
    let [s1, s2, _] = singular_values_desc(points);
    let ratio = if s1 > 0.0 { s2 / s1 } else { 0.0 };
    if !(ratio >= COLLINEARITY_TOLERANCE) {
        return Err(Error::DegeneratePoints {
            ratio,
            tolerance: COLLINEARITY_TOLERANCE,
        });
    }
    Ok(())
}

/// Least-squares transform from the tracker world into the ground-truth
/// world minimising `Σ‖dst_i − T(src_i)‖²`.
pub fn estimate_rigid(src: &[Vec3], dst: &[Vec3], with_scale: bool) -> Result<Registration> {
    estimate_rigid_between(
        src,
        dst,
        with_scale,
        FrameId::TrackerWorld,
        FrameId::GroundtruthWorld,
    )
}

pub fn estimate_rigid_between(
    src: &[Vec3],
    dst: &[Vec3],
    with_scale: bool,
    from: FrameId,
    to: FrameId,
) -> Result<Registration> {
    if src.len() != dst.len() {
        return Err(Error::InvalidParameter(format!(
            "{} source points but {} destination points",
            src.len(),
            dst.len()
        )));
    }
    check_conditioning(src)?;
    check_conditioning(dst)?;

    let n = src.len() as f64;
    let (cs, cd) = (centroid(src), centroid(dst));
    let mut h = Matrix3::zeros();
    let mut var_src = 0.0;
    for (s, d) in src.iter().zip(dst) {
        let (xs, xd) = (s - cs, d - cd);
        h += xd * xs.transpose();
        var_src += xs.norm_squared();
    }
    h /= n;
    var_src /= n;

    let svd = SVD::new(h, true, true);
    let (u, v_t) = match (svd.u, svd.v_t) {
        (Some(u), Some(v_t)) => (u, v_t),
        _ => return Err(Error::InvalidTransform("SVD did not converge".into())),
    };
    let sigma = svd.singular_values;
    // Flip the axis of the smallest singular value when needed.
    let smallest = (0..3)
        .min_by(|&a, &b| sigma[a].total_cmp(&sigma[b]))
        .unwrap_or(2);
    let mut s = Matrix3::identity();
    if u.determinant() * v_t.determinant() < 0.0 {
        s[(smallest, smallest)] = -1.0;
    }
    let r = orthonormalize(&(u * s * v_t));
    let scale = if with_scale {
        (0..3).map(|i| sigma[i] * s[(i, i)]).sum::<f64>() / var_src
    } else {
        1.0
    };
    let t = cd - r * cs * scale;
    let transform = RigidTransform::new(r, t, scale, from, to)?;

    let residuals: Vec<f64> = src
        .iter()
        .zip(dst)
        .map(|(s, d)| (d - transform.transform_point(s)).norm())
        .collect();
    let rms = (residuals.iter().map(|r| r * r).sum::<f64>() / n).sqrt();
    Ok(Registration {
        transform,
        residuals,
        rms,
    })
}

/// One Newton step towards the nearest orthonormal matrix; removes the last
/// ulps of drift so the result passes [`RigidTransform`] validation.
fn orthonormalize(r: &Matrix3<f64>) -> Matrix3<f64> {
    let inv_t = r.try_inverse().map(|m| m.transpose()).unwrap_or(*r);
    (r + inv_t) * 0.5
}

/// RMS of `‖dst − T(src)‖` over hold-out correspondences, mm.
pub fn registration_quality(transform: &RigidTransform, holdout: &[(Vec3, Vec3)]) -> Result<f64> {
    if holdout.is_empty() {
        return Err(Error::InsufficientData(
            "registration quality needs at least one hold-out pair".into(),
        ));
    }
    let ss: f64 = holdout
        .iter()
        .map(|(s, d)| (d - transform.transform_point(s)).norm_squared())
        .sum();
    Ok((ss / holdout.len() as f64).sqrt())
}
