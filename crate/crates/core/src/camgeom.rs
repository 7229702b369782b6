//! Camera geometry over world-to-camera poses.
//!
//! Poses follow the reconstruction convention: `x_cam = R(q)·x_world + t`,
//! the camera looks down its `+z` axis and image `+y` points down.

use alloc::vec::Vec;

use nalgebra::{Matrix3, Rotation3, SymmetricEigen, UnitQuaternion};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{CameraIntrinsics, FramePose, SparseModel};
use crate::Vec3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
pub enum GeomError {
    #[error("camera down-axes cancel out; no up direction")]
    DegenerateUp,
    #[error("viewing direction is within 1 degree of the up axis")]
    GimbalDegenerate,
    #[error("point lies behind the camera")]
    BehindCamera,
    #[error("point sets are degenerate (fewer than 3 points, mismatched, or collinear)")]
    DegenerateGeometry,
}

/// Minimum depth in camera coordinates for a projectable point.
pub const MIN_DEPTH: f64 = 1e-9;

/// Camera position in world coordinates, `C = -Rᵀ·t`.
pub fn camera_center(pose: &FramePose) -> Vec3 {
    -(pose.rotation.inverse() * pose.translation)
}

/// Optical axis in world coordinates, `Rᵀ·e_z`.
pub fn viewing_direction(pose: &FramePose) -> Vec3 {
    pose.rotation.inverse() * Vec3::z()
}

/// Image-down axis in world coordinates, `Rᵀ·e_y`.
pub fn down_direction(pose: &FramePose) -> Vec3 {
    pose.rotation.inverse() * Vec3::y()
}

/// Angle in degrees between two unit directions.
pub fn angle_between_deg(a: &Vec3, b: &Vec3) -> f64 {
    libm::acos(a.dot(b).clamp(-1.0, 1.0)).to_degrees()
}

/// Angle between the optical axes of two poses, in degrees within `[0, 180]`.
pub fn angular_view_difference(a: &FramePose, b: &FramePose) -> f64 {
    angle_between_deg(&viewing_direction(a), &viewing_direction(b))
}

/// World-to-camera rotation for a camera looking along `forward` with image
/// `-y` aligned as closely as possible to `up`. `None` if the two are
/// parallel.
pub fn look_rotation(forward: &Vec3, up: &Vec3) -> Option<UnitQuaternion<f64>> {
    let z = forward.try_normalize(1e-12)?;
    let down = -up;
    let y = (down - z * down.dot(&z)).try_normalize(1e-9)?;
    let x = y.cross(&z);
    let m = Matrix3::from_rows(&[x.transpose(), y.transpose(), z.transpose()]);
    Some(UnitQuaternion::from_rotation_matrix(&Rotation3::from_matrix_unchecked(m)))
}

/// Gravity direction recovered from camera orientations.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UpAxisEstimate {
    pub up: Vec3,
    /// Mean `|down_i · (-up)|` over frames, in `[0, 1]`.
    pub confidence: f64,
}

/// Up axis as the negated mean of per-frame image-down axes.
pub fn estimate_up_axis(model: &SparseModel) -> Result<UpAxisEstimate, GeomError> {
    if model.frames.is_empty() {
        return Err(GeomError::DegenerateUp);
    }
    let downs: Vec<Vec3> = model.frames.values().map(down_direction).collect();
    let mean = downs.iter().sum::<Vec3>() / downs.len() as f64;
    if mean.norm() < 1e-6 {
        return Err(GeomError::DegenerateUp);
    }
    let up = -mean.normalize();
    let confidence = downs.iter().map(|d| d.dot(&-up).abs()).sum::<f64>() / downs.len() as f64;
    Ok(UpAxisEstimate {
        up,
        confidence: confidence.clamp(0.0, 1.0),
    })
}

/// Heading of the viewing direction about `up`, counter-clockwise, in
/// `(-π, π]`. The zero heading is the world x-axis projected onto the plane
/// orthogonal to `up` (world y-axis when x is parallel to `up`).
pub fn yaw_angle(pose: &FramePose, up: &Vec3) -> Result<f64, GeomError> {
    let up = up.try_normalize(1e-12).ok_or(GeomError::GimbalDegenerate)?;
    let dir = viewing_direction(pose);
    if angle_between_deg(&dir, &up) < 1.0 || angle_between_deg(&dir, &-up) < 1.0 {
        return Err(GeomError::GimbalDegenerate);
    }
    let reference = [Vec3::x(), Vec3::y()]
        .iter()
        .find_map(|axis| (axis - up * axis.dot(&up)).try_normalize(1e-6))
        .ok_or(GeomError::GimbalDegenerate)?;
    let side = up.cross(&reference);
    let yaw = libm::atan2(dir.dot(&side), dir.dot(&reference));
    Ok(if yaw <= -core::f64::consts::PI { core::f64::consts::PI } else { yaw })
}

/// Project a world point into pixel coordinates.
pub fn project_point(cam: &CameraIntrinsics, pose: &FramePose, xyz: &Vec3) -> Result<(f64, f64), GeomError> {
    let p = pose.rotation * xyz + pose.translation;
    if p.z <= MIN_DEPTH {
        return Err(GeomError::BehindCamera);
    }
    let (x, y) = (p.x / p.z, p.y / p.z);
    let (fx, fy, cx, cy, k) = cam.focal_center_k();
    let radial = 1.0 + k * (x * x + y * y);
    Ok((fx * x * radial + cx, fy * y * radial + cy))
}

/// Behind-camera penalty, as a multiple of the image diagonal.
pub const DEFAULT_BEHIND_PENALTY: f64 = 2.0;

/// Mean pixel distance between linked observations and their projected
/// points. Points behind the camera contribute twice the image diagonal.
pub fn mean_reprojection_error(model: &SparseModel) -> f64 {
    mean_reprojection_error_with(model, DEFAULT_BEHIND_PENALTY)
}

pub fn mean_reprojection_error_with(model: &SparseModel, behind_penalty: f64) -> f64 {
    let mut sum = 0.0;
    let mut count = 0usize;
    for frame in model.frames.values() {
        let Some(cam) = model.cameras.get(&frame.camera_id) else { continue };
        for obs in &frame.observations {
            let Some(point) = obs.point.and_then(|id| model.points.get(&id)) else { continue };
            sum += match project_point(cam, frame, &point.xyz) {
                Ok((u, v)) => libm::hypot(u - obs.x, v - obs.y),
                Err(_) => behind_penalty * cam.diagonal(),
            };
            count += 1;
        }
    }
    if count == 0 {
        0.0
    } else {
        sum / count as f64
    }
}

/// `x' = s·R·x + t`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimilarityTransform {
    pub scale: f64,
    pub rotation: UnitQuaternion<f64>,
    pub translation: Vec3,
}

impl Default for SimilarityTransform {
    fn default() -> Self {
        Self::identity()
    }
}

impl SimilarityTransform {
    pub fn identity() -> Self {
        SimilarityTransform {
            scale: 1.0,
            rotation: UnitQuaternion::identity(),
            translation: Vec3::zeros(),
        }
    }

    pub fn apply(&self, x: &Vec3) -> Vec3 {
        self.rotation * x * self.scale + self.translation
    }

    pub fn inverse(&self) -> Self {
        let rotation = self.rotation.inverse();
        SimilarityTransform {
            scale: 1.0 / self.scale,
            rotation,
            translation: -(rotation * self.translation) / self.scale,
        }
    }

    /// `self ∘ other`: apply `other` first.
    pub fn compose(&self, other: &SimilarityTransform) -> Self {
        SimilarityTransform {
            scale: self.scale * other.scale,
            rotation: self.rotation * other.rotation,
            translation: self.apply(&other.translation),
        }
    }
}

/// Closed-form least-squares similarity mapping `src` onto `dst`
/// (Umeyama's method with the reflection fix).
pub fn estimate_similarity(src: &[Vec3], dst: &[Vec3]) -> Result<SimilarityTransform, GeomError> {
    let n = src.len();
    if n < 3 || dst.len() != n {
        return Err(GeomError::DegenerateGeometry);
    }
    let nf = n as f64;
    let mu_s = src.iter().sum::<Vec3>() / nf;
    let mu_d = dst.iter().sum::<Vec3>() / nf;

    let mut cov_s = Matrix3::zeros();
    let mut cross = Matrix3::zeros();
    for (s, d) in src.iter().zip(dst) {
        let ds = s - mu_s;
        cov_s += ds * ds.transpose();
        cross += (d - mu_d) * ds.transpose();
    }
    cov_s /= nf;
    cross /= nf;

    // Collinear sources leave two vanishing covariance eigenvalues.
    let mut eig: Vec<f64> = SymmetricEigen::new(cov_s).eigenvalues.iter().copied().collect();
    eig.sort_by(f64::total_cmp);
    if !(eig[2] > 0.0) || eig[1] / eig[2] <= 1e-9 {
        return Err(GeomError::DegenerateGeometry);
    }
    let var_s = cov_s.trace();

    let svd = cross.svd(true, true);
    let (u, v_t) = (svd.u.ok_or(GeomError::DegenerateGeometry)?, svd.v_t.ok_or(GeomError::DegenerateGeometry)?);
    let mut sign = Matrix3::identity();
    if u.determinant() * v_t.determinant() < 0.0 {
        sign[(2, 2)] = -1.0;
    }
    let r = u * sign * v_t;
    let scale = (svd.singular_values[0] * sign[(0, 0)]
        + svd.singular_values[1] * sign[(1, 1)]
        + svd.singular_values[2] * sign[(2, 2)])
        / var_s;
    if !(scale > 0.0) {
        return Err(GeomError::DegenerateGeometry);
    }
    let rotation = UnitQuaternion::from_rotation_matrix(&Rotation3::from_matrix_unchecked(r));
    let translation = mu_d - rotation * mu_s * scale;
    Ok(SimilarityTransform {
        scale,
        rotation,
        translation,
    })
}

/// Re-express a model in the frame reached by `transform`. Projections are
/// unchanged: camera coordinates scale uniformly, which cancels in the
/// perspective division.
pub fn apply_transform(model: &SparseModel, transform: &SimilarityTransform) -> SparseModel {
    let mut out = model.clone();
    let inv_rot = transform.rotation.inverse();
    for frame in out.frames.values_mut() {
        let rotation = frame.rotation * inv_rot;
        frame.translation = frame.translation * transform.scale - rotation * transform.translation;
        frame.rotation = rotation;
    }
    for point in out.points.values_mut() {
        point.xyz = transform.apply(&point.xyz);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{CameraId, CameraModel, ImageId};
    use core::f64::consts::{FRAC_PI_2, PI};

    fn pose(q: UnitQuaternion<f64>, t: Vec3) -> FramePose {
        FramePose::new(ImageId(1), q, t, CameraId(1), "frame_000000.jpg")
    }

    fn yaw_rot(deg: f64) -> UnitQuaternion<f64> {
        UnitQuaternion::from_axis_angle(&Vec3::y_axis(), deg.to_radians())
    }

    #[test]
    fn centers() {
        assert_eq!(camera_center(&pose(UnitQuaternion::identity(), Vec3::zeros())), Vec3::zeros());
        let c = camera_center(&pose(UnitQuaternion::identity(), Vec3::new(1.0, 2.0, 3.0)));
        assert_eq!(c, Vec3::new(-1.0, -2.0, -3.0));
    }

    #[test]
    fn center_under_quarter_turn_matches_matrix_form() {
        // Oracle: explicit rotation matrix of +90° about y, C = -Rᵀ t.
        let r = Matrix3::new(0.0, 0.0, 1.0, 0.0, 1.0, 0.0, -1.0, 0.0, 0.0);
        let t = Vec3::new(1.0, 0.0, 0.0);
        let expected = -(r.transpose() * t);
        let c = camera_center(&pose(yaw_rot(90.0), t));
        assert!((c - expected).norm() < 1e-12, "{c} vs {expected}");
        assert!((c - Vec3::new(0.0, 0.0, -1.0)).norm() < 1e-12);
    }

    #[test]
    fn directions_and_angles() {
        let id = pose(UnitQuaternion::identity(), Vec3::zeros());
        assert_eq!(viewing_direction(&id), Vec3::z());
        let back = viewing_direction(&pose(yaw_rot(180.0), Vec3::zeros()));
        assert!((back - Vec3::new(0.0, 0.0, -1.0)).norm() < 1e-12);
        assert_eq!(angular_view_difference(&id, &id), 0.0);
        let quarter = pose(yaw_rot(90.0), Vec3::zeros());
        assert!((angular_view_difference(&id, &quarter) - 90.0).abs() < 1e-9);
        let eighth = pose(yaw_rot(45.0), Vec3::zeros());
        assert!((angular_view_difference(&id, &eighth) - 45.0).abs() < 1e-9);
    }

    #[test]
    fn up_axis_from_level_frames() {
        let mut m = SparseModel::new("c");
        for (i, heading) in [0.0f64, 70.0, 200.0].iter().enumerate() {
            let fwd = Vec3::new(libm::cos(heading.to_radians()), libm::sin(heading.to_radians()), 0.0);
            let q = look_rotation(&fwd, &Vec3::z()).unwrap();
            let mut p = pose(q, Vec3::zeros());
            p.id = ImageId(i as u32);
            m.frames.insert(p.id, p);
        }
        let est = estimate_up_axis(&m).unwrap();
        assert!((est.up - Vec3::z()).norm() < 1e-12);
        assert!((est.confidence - 1.0).abs() < 1e-12);
    }

    #[test]
    fn opposite_down_axes_cancel() {
        let mut m = SparseModel::new("c");
        let a = look_rotation(&Vec3::x(), &Vec3::z()).unwrap();
        let b = look_rotation(&Vec3::x(), &-Vec3::z()).unwrap();
        for (i, q) in [a, b].into_iter().enumerate() {
            let mut p = pose(q, Vec3::zeros());
            p.id = ImageId(i as u32);
            m.frames.insert(p.id, p);
        }
        assert_eq!(estimate_up_axis(&m), Err(GeomError::DegenerateUp));
    }

    #[test]
    fn yaw_against_planar_atan2() {
        // up = +y, reference = world x; side = up × x = -z.
        let up = Vec3::y();
        let id = pose(UnitQuaternion::identity(), Vec3::zeros());
        let d = viewing_direction(&id);
        let expected = libm::atan2(d.dot(&Vec3::new(0.0, 0.0, -1.0)), d.dot(&Vec3::x()));
        let yaw = yaw_angle(&id, &up).unwrap();
        assert!((yaw - expected).abs() < 1e-12);
        assert!((yaw + FRAC_PI_2).abs() < 1e-12);
    }

    #[test]
    fn yaw_difference_tracks_rotation_about_up() {
        let up = Vec3::z();
        let base = look_rotation(&Vec3::new(1.0, 0.3, 0.0), &up).unwrap();
        for delta in [10.0f64, 95.0, -150.0, 179.0] {
            let turned = base * UnitQuaternion::from_axis_angle(&Vec3::z_axis(), -delta.to_radians());
            let a = yaw_angle(&pose(base, Vec3::zeros()), &up).unwrap();
            let b = yaw_angle(&pose(turned, Vec3::zeros()), &up).unwrap();
            let diff = crate::numfmt::wrap_pi(b - a);
            assert!((diff - crate::numfmt::wrap_pi(delta.to_radians())).abs() < 1e-9, "{delta}: {diff}");
        }
    }

    #[test]
    fn yaw_straight_down_is_degenerate() {
        let q = look_rotation(&-Vec3::z(), &Vec3::x()).unwrap();
        assert_eq!(yaw_angle(&pose(q, Vec3::zeros()), &Vec3::z()), Err(GeomError::GimbalDegenerate));
        let _ = PI;
    }

    fn cam(model: CameraModel, params: &[f64]) -> CameraIntrinsics {
        CameraIntrinsics {
            id: CameraId(1),
            model,
            width: 100,
            height: 100,
            params: params.to_vec(),
        }
    }

    #[test]
    fn projection_examples() {
        let id = pose(UnitQuaternion::identity(), Vec3::zeros());
        let sp = cam(CameraModel::SimplePinhole, &[1.0, 0.0, 0.0]);
        assert_eq!(project_point(&sp, &id, &Vec3::new(0.0, 0.0, 1.0)), Ok((0.0, 0.0)));
        let ph = cam(CameraModel::Pinhole, &[100.0, 100.0, 50.0, 50.0]);
        let (u, v) = project_point(&ph, &id, &Vec3::new(0.1, 0.0, 1.0)).unwrap();
        assert!((u - 60.0).abs() < 1e-12 && (v - 50.0).abs() < 1e-12);
        let sr = cam(CameraModel::SimpleRadial, &[100.0, 0.0, 0.0, 0.1]);
        let (u, v) = project_point(&sr, &id, &Vec3::new(0.2, 0.0, 1.0)).unwrap();
        assert!((u - 20.08).abs() < 1e-12, "{u}");
        assert_eq!(v, 0.0);
        assert_eq!(project_point(&sp, &id, &Vec3::new(0.0, 0.0, -1.0)), Err(GeomError::BehindCamera));
    }

    #[test]
    fn similarity_identity_and_collinear() {
        let pts = [Vec3::new(0.0, 0.0, 0.0), Vec3::new(1.0, 0.0, 0.0), Vec3::new(0.0, 1.0, 0.0), Vec3::new(0.3, 0.2, 1.0)];
        let t = estimate_similarity(&pts, &pts).unwrap();
        assert!((t.scale - 1.0).abs() < 1e-12);
        assert!(t.rotation.angle() < 1e-12);
        assert!(t.translation.norm() < 1e-12);

        let line = [Vec3::zeros(), Vec3::new(1.0, 1.0, 1.0), Vec3::new(2.0, 2.0, 2.0)];
        assert_eq!(estimate_similarity(&line, &line), Err(GeomError::DegenerateGeometry));
        assert_eq!(estimate_similarity(&pts[..2], &pts[..2]), Err(GeomError::DegenerateGeometry));
    }

    #[test]
    fn three_non_collinear_points_suffice() {
        let src = [Vec3::zeros(), Vec3::x(), Vec3::y()];
        let truth = SimilarityTransform {
            scale: 3.0,
            rotation: UnitQuaternion::from_euler_angles(0.1, 0.2, 0.3),
            translation: Vec3::new(1.0, -2.0, 0.5),
        };
        let dst: Vec<Vec3> = src.iter().map(|p| truth.apply(p)).collect();
        let est = estimate_similarity(&src, &dst).unwrap();
        assert!((est.scale - 3.0).abs() < 1e-12);
        assert!(est.rotation.angle_to(&truth.rotation) < 1e-12);
    }

    #[test]
    fn inverse_and_compose() {
        let t = SimilarityTransform {
            scale: 2.0,
            rotation: UnitQuaternion::from_euler_angles(0.4, -0.1, 1.2),
            translation: Vec3::new(1.0, 2.0, 3.0),
        };
        let p = Vec3::new(0.3, -0.7, 2.0);
        assert!((t.inverse().apply(&t.apply(&p)) - p).norm() < 1e-12);
        assert!((t.compose(&t).apply(&p) - t.apply(&t.apply(&p))).norm() < 1e-12);
    }
}
