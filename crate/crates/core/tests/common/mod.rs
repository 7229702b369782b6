#![allow(dead_code)]

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use walkforge_core::camgeom::SimilarityTransform;
use walkforge_core::model::SparseModel;
use walkforge_core::synth::{self, RenderSpec, ShotFrame, WalkSpec};
use walkforge_core::Vec3;

pub const FPS: f64 = 3.0;

/// A loop around a 12 m x 8 m floor, walked seven times.
pub fn loop_walk() -> WalkSpec {
    let lap = [(1.0, 1.0), (11.0, 1.0), (11.0, 7.0), (1.0, 7.0)];
    let mut waypoints: Vec<(f64, f64)> = Vec::new();
    for _ in 0..7 {
        waypoints.extend_from_slice(&lap);
    }
    waypoints.push(lap[0]);
    WalkSpec::new(waypoints, 1.0, FPS)
}

pub fn landmarks() -> Vec<Vec3> {
    synth::box_landmarks((-1.0, -1.0), (13.0, 9.0), 3.0, 600, 11)
}

pub struct Chain {
    pub clips: Vec<SparseModel>,
    pub frames: Vec<ShotFrame>,
    pub gauges: Vec<SimilarityTransform>,
}

/// `n` clips of `clip_s` seconds, each starting `clip_s - overlap_s` after
/// the previous. Clip 0 is rendered in world coordinates, the rest under
/// random gauges.
pub fn chain(n: usize, clip_s: f64, overlap_s: f64, seed: u64) -> Chain {
    let frames = synth::walk_frames(&loop_walk());
    let marks = landmarks();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut clips = Vec::new();
    let mut gauges = Vec::new();
    for i in 0..n {
        let start = i as f64 * (clip_s - overlap_s);
        let end = start + clip_s;
        let gauge = if i == 0 { SimilarityTransform::identity() } else { synth::random_similarity(&mut rng) };
        let spec = RenderSpec { seed: seed + i as u64, ..RenderSpec::default() };
        let shot = synth::clip_frames(&frames, FPS, start, end);
        clips.push(synth::render_model(&format!("{}_{}", start as u64, end as u64), &shot, &marks, &spec, &gauge));
        gauges.push(gauge);
    }
    Chain { clips, frames, gauges }
}

/// A small randomized model: random walk, random gauge, a randomly chosen
/// camera model and some unlinked observations.
pub fn random_model(seed: u64) -> SparseModel {
    use rand::Rng;
    use walkforge_core::model::{CameraModel, Observation};

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = rng.random_range(3..7);
    let waypoints: Vec<(f64, f64)> = (0..n).map(|_| (rng.random_range(0.0..10.0), rng.random_range(0.0..10.0))).collect();
    let walk = WalkSpec::new(waypoints, rng.random_range(0.8..1.8), FPS);
    let frames: Vec<ShotFrame> = synth::walk_frames(&walk).into_iter().take(60).collect();
    let marks = synth::box_landmarks((-1.0, -1.0), (11.0, 11.0), 3.0, 200, seed);
    let gauge = synth::random_similarity(&mut rng);
    let spec = RenderSpec { seed, max_observations: 12, ..RenderSpec::default() };
    let mut model = synth::render_model(&format!("m{seed}"), &frames, &marks, &spec, &gauge);

    let cam = model.cameras.values_mut().next().expect("one camera");
    let f = rng.random_range(200.0..900.0);
    let (cx, cy) = (rng.random_range(300.0..340.0), rng.random_range(160.0..200.0));
    match rng.random_range(0..3) {
        0 => {
            cam.model = CameraModel::SimplePinhole;
            cam.params = vec![f, cx, cy];
        }
        1 => {
            cam.model = CameraModel::Pinhole;
            cam.params = vec![f, f * rng.random_range(0.9..1.1), cx, cy];
        }
        _ => {
            cam.model = CameraModel::SimpleRadial;
            cam.params = vec![f, cx, cy, rng.random_range(-0.1..0.1)];
        }
    }
    for frame in model.frames.values_mut() {
        for _ in 0..rng.random_range(0..3) {
            frame.observations.push(Observation {
                x: rng.random_range(0.0..640.0),
                y: rng.random_range(0.0..360.0),
                point: None,
            });
        }
    }
    for p in model.points.values_mut() {
        p.error = rng.random_range(0.0..2.0);
    }
    model
}
