//! Synthetic walkthroughs for fixtures and tests.
//!
//! Observations are rendered with an explicit pinhole formula rather than
//! through [`crate::camgeom`], so reprojection checks against them are
//! independent of the code under test.

use alloc::vec::Vec;

use nalgebra::Matrix3;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::camgeom::{look_rotation, SimilarityTransform};
use crate::model::{
    CameraId, CameraIntrinsics, CameraModel, FramePattern, FramePose, ImageId, Observation, PointId, ScenePoint,
    SparseModel, TrackEntry,
};
use crate::Vec3;

/// A person walking a polyline at constant speed, filmed at `fps`.
#[derive(Debug, Clone, PartialEq)]
pub struct WalkSpec {
    /// Floor-plane waypoints in meters.
    pub waypoints: Vec<(f64, f64)>,
    pub speed_mps: f64,
    pub fps: f64,
    pub eye_height: f64,
    /// Vertical head bob amplitude in meters (keeps short segments from
    /// being exactly collinear).
    pub bob_amplitude: f64,
    /// Heading is the direction between positions this many seconds apart
    /// on either side, which rounds corners over a few frames.
    pub heading_half_window_s: f64,
}

impl WalkSpec {
    pub fn new(waypoints: Vec<(f64, f64)>, speed_mps: f64, fps: f64) -> Self {
        WalkSpec {
            waypoints,
            speed_mps,
            fps,
            eye_height: 1.5,
            bob_amplitude: 0.03,
            heading_half_window_s: 1.0 / fps,
        }
    }

    pub fn length(&self) -> f64 {
        self.waypoints
            .windows(2)
            .map(|w| libm::hypot(w[1].0 - w[0].0, w[1].1 - w[0].1))
            .sum()
    }

    pub fn duration(&self) -> f64 {
        self.length() / self.speed_mps
    }

    pub fn frame_count(&self) -> usize {
        libm::floor(self.duration() * self.fps) as usize + 1
    }

    fn planar(&self, s: f64) -> (f64, f64) {
        let s = s.clamp(0.0, self.length());
        let mut left = s;
        for w in self.waypoints.windows(2) {
            let seg = libm::hypot(w[1].0 - w[0].0, w[1].1 - w[0].1);
            if left <= seg || seg == 0.0 && left == 0.0 {
                let f = if seg > 0.0 { left / seg } else { 0.0 };
                return (w[0].0 + (w[1].0 - w[0].0) * f, w[0].1 + (w[1].1 - w[0].1) * f);
            }
            left -= seg;
        }
        *self.waypoints.last().expect("non-empty walk")
    }

    /// Center and forward direction at time `t` seconds. World up is `+z`.
    pub fn sample(&self, t: f64) -> (Vec3, Vec3) {
        let s = t * self.speed_mps;
        let (x, y) = self.planar(s);
        let z = self.eye_height + self.bob_amplitude * libm::sin(2.0 * core::f64::consts::PI * 1.8 * t);
        let h = self.heading_half_window_s * self.speed_mps;
        let (x0, y0) = self.planar(s - h);
        let (x1, y1) = self.planar(s + h);
        let mut fwd = Vec3::new(x1 - x0, y1 - y0, 0.0);
        if fwd.norm() < 1e-12 {
            fwd = Vec3::x();
        }
        (Vec3::new(x, y, z), fwd.normalize())
    }
}

/// One rendered frame: global index plus world-frame center and heading.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ShotFrame {
    pub index: u64,
    pub center: Vec3,
    pub forward: Vec3,
}

pub fn walk_frames(walk: &WalkSpec) -> Vec<ShotFrame> {
    (0..walk.frame_count())
        .map(|i| {
            let (center, forward) = walk.sample(i as f64 / walk.fps);
            ShotFrame {
                index: i as u64,
                center,
                forward,
            }
        })
        .collect()
}

/// Landmarks scattered on the walls and floor of a box around the walk.
pub fn box_landmarks(min: (f64, f64), max: (f64, f64), height: f64, count: usize, seed: u64) -> Vec<Vec3> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|_| {
            let wall = rng.random_range(0..5);
            let u: f64 = rng.random();
            let v: f64 = rng.random();
            let x = min.0 + (max.0 - min.0) * u;
            let y = min.1 + (max.1 - min.1) * u;
            let z = height * v;
            match wall {
                0 => Vec3::new(x, min.1, z),
                1 => Vec3::new(x, max.1, z),
                2 => Vec3::new(min.0, y, z),
                3 => Vec3::new(max.0, y, z),
                _ => Vec3::new(min.0 + (max.0 - min.0) * u, min.1 + (max.1 - min.1) * v, 0.0),
            }
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct RenderSpec {
    pub width: u32,
    pub height: u32,
    pub focal: f64,
    /// Uniform pixel noise half-width added to every observation.
    pub noise_px: f64,
    pub max_observations: usize,
    pub min_depth: f64,
    pub pattern: FramePattern,
    pub seed: u64,
}

impl Default for RenderSpec {
    fn default() -> Self {
        RenderSpec {
            width: 640,
            height: 360,
            focal: 320.0,
            noise_px: 0.5,
            max_observations: 24,
            min_depth: 0.3,
            pattern: FramePattern::default(),
            seed: 1,
        }
    }
}

/// Render frames observing `landmarks` into a model expressed in the gauge
/// reached by `gauge` (world → model coordinates).
pub fn render_model(
    clip_id: &str,
    frames: &[ShotFrame],
    landmarks: &[Vec3],
    spec: &RenderSpec,
    gauge: &SimilarityTransform,
) -> SparseModel {
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut model = SparseModel::new(clip_id);
    let cx = spec.width as f64 / 2.0;
    let cy = spec.height as f64 / 2.0;
    model.cameras.insert(
        CameraId(1),
        CameraIntrinsics {
            id: CameraId(1),
            model: CameraModel::Pinhole,
            width: spec.width,
            height: spec.height,
            params: alloc::vec![spec.focal, spec.focal, cx, cy],
        },
    );
    let gauge_rot: Matrix3<f64> = gauge.rotation.to_rotation_matrix().into_inner();
    let mut used: Vec<Option<PointId>> = alloc::vec![None; landmarks.len()];
    let mut tracks: Vec<Vec<TrackEntry>> = alloc::vec![Vec::new(); landmarks.len()];

    for (k, frame) in frames.iter().enumerate() {
        let image_id = ImageId(k as u32 + 1);
        let q_world = look_rotation(&frame.forward, &Vec3::z()).expect("level walk heading");
        let r_world: Matrix3<f64> = q_world.to_rotation_matrix().into_inner();

        let mut visible: Vec<(f64, usize, f64, f64)> = landmarks
            .iter()
            .enumerate()
            .filter_map(|(i, x)| {
                let p = r_world * (x - frame.center);
                if p.z < spec.min_depth {
                    return None;
                }
                let u = spec.focal * p.x / p.z + cx;
                let v = spec.focal * p.y / p.z + cy;
                let inside = u >= 0.0 && v >= 0.0 && u < spec.width as f64 && v < spec.height as f64;
                inside.then_some((p.z, i, u, v))
            })
            .collect();
        visible.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        visible.truncate(spec.max_observations);
        visible.sort_by_key(|v| v.1);

        let mut observations = Vec::with_capacity(visible.len());
        for (slot, &(_, i, u, v)) in visible.iter().enumerate() {
            let pid = *used[i].get_or_insert(PointId(i as u64 + 1));
            let du = (rng.random::<f64>() * 2.0 - 1.0) * spec.noise_px;
            let dv = (rng.random::<f64>() * 2.0 - 1.0) * spec.noise_px;
            observations.push(Observation {
                x: u + du,
                y: v + dv,
                point: Some(pid),
            });
            tracks[i].push(TrackEntry {
                image_id,
                point2d_idx: slot as u32,
            });
        }

        // Pose in the model gauge: C' = g(C), R' = R·R_gᵀ, t' = -R'·C'.
        let center = gauge.apply(&frame.center);
        let r_model = r_world * gauge_rot.transpose();
        let rotation = nalgebra::UnitQuaternion::from_rotation_matrix(&nalgebra::Rotation3::from_matrix_unchecked(r_model));
        let translation = -(r_model * center);
        model.frames.insert(
            image_id,
            FramePose {
                id: image_id,
                rotation,
                translation,
                camera_id: CameraId(1),
                name: spec.pattern.name(frame.index),
                observations,
            },
        );
    }

    for (i, pid) in used.iter().enumerate() {
        let Some(pid) = *pid else { continue };
        model.points.insert(
            pid,
            ScenePoint {
                id: pid,
                xyz: gauge.apply(&landmarks[i]),
                rgb: [(37 * i % 256) as u8, (91 * i % 256) as u8, (53 * i % 256) as u8],
                error: spec.noise_px / 2.0,
                track: core::mem::take(&mut tracks[i]),
            },
        );
    }
    model
}

/// Shuffle frame names among a model's frames, keeping geometry intact: the
/// model stays self-consistent but its names no longer identify the
/// physical frames, which breaks any alignment by shared names.
pub fn scramble_names(model: &mut SparseModel, seed: u64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut names: Vec<_> = model.frames.values().map(|f| f.name.clone()).collect();
    let original = names.clone();
    while names == original && names.len() > 1 {
        names.shuffle(&mut rng);
    }
    for (frame, name) in model.frames.values_mut().zip(names) {
        frame.name = name;
    }
}

/// A random similarity with scale in `[0.2, 5]` and translation within 10.
pub fn random_similarity<R: Rng>(rng: &mut R) -> SimilarityTransform {
    let axis = Vec3::new(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5);
    let axis = nalgebra::Unit::new_normalize(axis + Vec3::new(1e-3, 0.0, 0.0));
    SimilarityTransform {
        scale: 0.2 + rng.random::<f64>() * 4.8,
        rotation: nalgebra::UnitQuaternion::from_axis_angle(&axis, rng.random::<f64>() * core::f64::consts::TAU),
        translation: Vec3::new(
            rng.random_range(-10.0..10.0),
            rng.random_range(-10.0..10.0),
            rng.random_range(-10.0..10.0),
        ),
    }
}

/// Frames of the clip `[start_s, end_s)` out of a full walk.
pub fn clip_frames(frames: &[ShotFrame], fps: f64, start_s: f64, end_s: f64) -> Vec<ShotFrame> {
    let lo = libm::round(start_s * fps) as u64;
    let hi = libm::round(end_s * fps) as u64;
    frames.iter().copied().filter(|f| f.index >= lo && f.index < hi).collect()
}
