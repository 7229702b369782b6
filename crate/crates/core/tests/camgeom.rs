mod common;
mod oracles;

use std::path::PathBuf;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use walkforge_core::camgeom::{
    apply_transform, camera_center, estimate_similarity, project_point, viewing_direction, SimilarityTransform,
};
use walkforge_core::model::{
    parse_sparse_model, quat_wxyz, CameraId, CameraIntrinsics, CameraModel, FramePose, ImageId, SparseModel,
};
use walkforge_core::Vec3;

fn cube8() -> SparseModel {
    let dir = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../fixtures/cube8");
    let read = |n: &str| std::fs::read_to_string(dir.join(n)).unwrap();
    parse_sparse_model("cube8", &read("cameras.txt"), &read("images.txt"), &read("points3D.txt")).unwrap()
}

fn random_pose(rng: &mut ChaCha8Rng) -> FramePose {
    let mut g = || rng.random_range(-1.0..1.0);
    let q = quat_wxyz(g(), g(), g(), g()).unwrap();
    let t = Vec3::new(g() * 10.0, g() * 10.0, g() * 10.0);
    FramePose::new(ImageId(1), q, t, CameraId(1), "frame_000000.jpg")
}

fn random_camera(rng: &mut ChaCha8Rng) -> CameraIntrinsics {
    let f = rng.random_range(100.0..1000.0);
    let (model, params) = match rng.random_range(0..3) {
        0 => (CameraModel::SimplePinhole, vec![f, 320.0, 240.0]),
        1 => (CameraModel::Pinhole, vec![f, f * 1.05, 320.0, 240.0]),
        _ => (CameraModel::SimpleRadial, vec![f, 320.0, 240.0, rng.random_range(-0.2..0.2)]),
    };
    CameraIntrinsics { id: CameraId(1), model, width: 640, height: 480, params }
}

#[test]
fn pose_quantities_match_oracles() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for _ in 0..1000 {
        let pose = random_pose(&mut rng);
        assert!((camera_center(&pose) - oracles::center_explicit(&pose)).norm() < 1e-9);
        assert!((viewing_direction(&pose) - oracles::view_explicit(&pose)).norm() < 1e-9);

        let cam = random_camera(&mut rng);
        let (fx, fy, cx, cy, k) = cam.focal_center_k();
        let x = Vec3::new(rng.random_range(-5.0..5.0), rng.random_range(-5.0..5.0), rng.random_range(-5.0..5.0));
        match (project_point(&cam, &pose, &x), oracles::project_explicit(fx, fy, cx, cy, k, &pose, &x)) {
            (Ok((u, v)), Some((ou, ov))) => {
                let scale = 1.0 + ou.abs().max(ov.abs());
                assert!((u - ou).abs() < 1e-9 * scale && (v - ov).abs() < 1e-9 * scale);
            }
            (Err(_), None) => {}
            (a, b) => panic!("{a:?} vs {b:?}"),
        }
    }
}

#[test]
fn center_of_cube8_cameras() {
    let m = cube8();
    for f in m.frames.values() {
        let c = camera_center(f);
        assert!((c.xy().norm() - 4.0).abs() < 1e-9, "{c}");
        assert!((c.z.abs() - 1.0).abs() < 1e-9, "{c}");
        // Every camera looks at the origin.
        assert!(oracles::angle_deg(&viewing_direction(f), &-c) < 1e-7);
    }
}

fn random_transform(rng: &mut ChaCha8Rng) -> SimilarityTransform {
    let mut g = || rng.random_range(-1.0..1.0);
    let rotation = quat_wxyz(g(), g(), g(), g()).unwrap();
    SimilarityTransform {
        scale: 10f64.powf(rng.random_range(-1.0..1.0)),
        rotation,
        translation: Vec3::new(rng.random_range(-10.0..10.0), rng.random_range(-10.0..10.0), rng.random_range(-10.0..10.0)),
    }
}

#[test]
fn similarity_recovery() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for _ in 0..100 {
        let truth = random_transform(&mut rng);
        let src: Vec<Vec3> = (0..10)
            .map(|_| Vec3::new(rng.random_range(-5.0..5.0), rng.random_range(-5.0..5.0), rng.random_range(-5.0..5.0)))
            .collect();
        // Target points through the hand-expanded rotation.
        let q = truth.rotation.quaternion();
        let r = oracles::quat_matrix(q.w, q.i, q.j, q.k);
        let dst: Vec<Vec3> = src
            .iter()
            .map(|p| Vec3::from_fn(|i, _| truth.scale * (r[i][0] * p.x + r[i][1] * p.y + r[i][2] * p.z) + truth.translation[i]))
            .collect();
        let est = estimate_similarity(&src, &dst).unwrap();
        assert!((est.scale - truth.scale).abs() < 1e-9);
        assert!(est.rotation.angle_to(&truth.rotation) < 1e-9);
        assert!((est.translation - truth.translation).norm() < 1e-9);
    }
}

#[test]
fn transform_preserves_reprojection() {
    let m = cube8();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..20 {
        let moved = apply_transform(&m, &random_transform(&mut rng));
        for (a, b) in m.frames.values().zip(moved.frames.values()) {
            let cam = &m.cameras[&a.camera_id];
            for obs in &a.observations {
                let id = obs.point.unwrap();
                let (u0, v0) = project_point(cam, a, &m.points[&id].xyz).unwrap();
                let (u1, v1) = project_point(cam, b, &moved.points[&id].xyz).unwrap();
                assert!((u0 - u1).abs() < 1e-6 && (v0 - v1).abs() < 1e-6);
                // The fixture is noise-free.
                assert!((u0 - obs.x).abs() < 1e-6 && (v0 - obs.y).abs() < 1e-6);
            }
        }
    }
}
