//! The synthetic-house dataset: a walk through a six-room floor, cut into
//! overlapping 100 s clips, with rendered perception sidecars.

use std::collections::BTreeMap;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use walkforge_core::camgeom::{look_rotation, SimilarityTransform};
use walkforge_core::captioning::{parse_sentence, BBox, DepthMap, HBucket, ObjectDetection, DEFAULT_ROOM_VOCAB};
use walkforge_core::model::{FramePattern, SparseModel};
use walkforge_core::promptgen::PromptBundle;
use walkforge_core::sampling::{Shot, VideoMeta};
use walkforge_core::synth::{self, RenderSpec, ShotFrame, WalkSpec};
use walkforge_core::{UnitQuaternion, Vec3};

use thiserror::Error;
use walkforge_core::promptgen::prompt_digest;

use crate::config::{load_config, ConfigError};
use crate::io::{self, IoError};
use crate::llm::StubClient;
use crate::pipeline::{collect_prompts, PipelineError};
use crate::pgm;
use crate::sidecar::{self, RoomRecord, TagRecord, VideoLayout};

pub const HOUSE_VIDEO: &str = "house01";
pub const SHORT_VIDEO: &str = "short01";

/// Floor extent in meters; walls run along its border.
const FLOOR_MIN: (f64, f64) = (-0.5, -0.5);
const FLOOR_MAX: (f64, f64) = (14.5, 10.5);
const CEILING: f64 = 3.0;
const FAR_M: f64 = 16.0;

#[derive(Debug, Clone, PartialEq)]
pub struct HouseSpec {
    pub seed: u64,
    pub duration_s: f64,
    pub clip_s: f64,
    pub overlap_s: f64,
    pub speed_mps: f64,
    pub fps: f64,
    pub depth_width: usize,
    pub depth_height: usize,
    /// Depth rasters, detections and tags are written for frames whose
    /// index is a multiple of this.
    pub perception_every: u64,
    pub room_noise: f64,
}

impl Default for HouseSpec {
    fn default() -> Self {
        HouseSpec {
            seed: 2024,
            duration_s: 460.0,
            clip_s: 100.0,
            overlap_s: 10.0,
            speed_mps: 1.42,
            fps: 3.0,
            depth_width: 32,
            depth_height: 18,
            perception_every: 6,
            room_noise: 0.15,
        }
    }
}

/// Axis-aligned furniture box.
#[derive(Debug, Clone, PartialEq)]
pub struct Furniture {
    pub tag: &'static str,
    pub min: Vec3,
    pub max: Vec3,
}

fn item(tag: &'static str, center: (f64, f64), size: (f64, f64, f64)) -> Furniture {
    Furniture {
        tag,
        min: Vec3::new(center.0 - size.0 / 2.0, center.1 - size.1 / 2.0, 0.0),
        max: Vec3::new(center.0 + size.0 / 2.0, center.1 + size.1 / 2.0, size.2),
    }
}

pub fn furniture() -> Vec<Furniture> {
    vec![
        item("sofa", (3.0, 0.0), (2.0, 0.8, 0.9)),
        item("television", (-0.3, 2.5), (0.1, 1.2, 1.4)),
        item("lamp", (6.0, 0.1), (0.4, 0.4, 1.6)),
        item("refrigerator", (13.9, 0.4), (0.8, 0.8, 1.9)),
        item("oven", (10.5, -0.1), (0.8, 0.6, 0.9)),
        item("sink", (12.0, -0.1), (0.8, 0.6, 0.9)),
        item("shoe rack", (5.5, 3.6), (1.0, 0.3, 0.5)),
        item("plant", (10.5, 3.6), (0.5, 0.5, 1.2)),
        item("bed", (4.6, 7.2), (1.6, 2.0, 0.6)),
        item("wardrobe", (0.2, 9.8), (0.6, 1.2, 2.0)),
        item("toilet", (6.5, 10.0), (0.4, 0.6, 0.8)),
        item("bathtub", (9.4, 9.9), (1.6, 0.7, 0.5)),
        item("dining table", (10.6, 6.7), (1.6, 1.0, 0.75)),
        item("chair", (10.6, 5.8), (0.45, 0.45, 0.9)),
    ]
}

/// Ground-truth room at a floor position.
pub fn room_at(x: f64, y: f64) -> &'static str {
    if y < 3.5 {
        if x < 7.0 {
            "living room"
        } else {
            "kitchen"
        }
    } else if y < 5.5 {
        "hallway"
    } else if x < 5.0 {
        "bedroom"
    } else if x < 10.0 {
        "bathroom"
    } else {
        "dining room"
    }
}

/// One lap crosses itself in the hallway, so the same spot is reached with
/// perpendicular headings.
fn lap() -> Vec<(f64, f64)> {
    vec![
        (1.5, 1.5),
        (8.0, 1.5),
        (8.0, 8.5),
        (12.5, 8.5),
        (12.5, 4.5),
        (3.0, 4.5),
        (3.0, 8.5),
        (1.5, 8.5),
    ]
}

pub fn house_walk(spec: &HouseSpec) -> WalkSpec {
    let lap = lap();
    let needed = spec.duration_s * spec.speed_mps + 50.0;
    let mut waypoints = vec![lap[0]];
    let mut length = 0.0;
    while length < needed {
        for &p in lap.iter().skip(1).chain(std::iter::once(&lap[0])) {
            let last = *waypoints.last().expect("non-empty");
            length += ((p.0 - last.0).powi(2) + (p.1 - last.1).powi(2)).sqrt();
            waypoints.push(p);
        }
    }
    WalkSpec::new(waypoints, spec.speed_mps, spec.fps)
}

pub fn landmarks(seed: u64) -> Vec<Vec3> {
    synth::box_landmarks(FLOOR_MIN, FLOOR_MAX, CEILING, 1200, seed)
}

/// Clip ids `"<start>_<end>"` covering the video with the configured overlap.
pub fn clip_bounds(spec: &HouseSpec) -> Vec<(f64, f64)> {
    let mut out = Vec::new();
    let mut start = 0.0;
    while start + spec.overlap_s < spec.duration_s {
        let end = (start + spec.clip_s).min(spec.duration_s);
        out.push((start, end));
        start += spec.clip_s - spec.overlap_s;
    }
    out
}

pub struct House {
    pub spec: HouseSpec,
    pub frames: Vec<ShotFrame>,
    pub clips: Vec<SparseModel>,
    /// World to clip coordinates; the first clip is in world coordinates.
    pub gauges: Vec<SimilarityTransform>,
}

pub fn build_house(spec: &HouseSpec) -> House {
    let last_index = (spec.duration_s * spec.fps).round() as u64;
    let frames: Vec<ShotFrame> = synth::walk_frames(&house_walk(spec))
        .into_iter()
        .filter(|f| f.index < last_index)
        .collect();
    let marks = landmarks(spec.seed);
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut clips = Vec::new();
    let mut gauges = Vec::new();
    for (i, (start, end)) in clip_bounds(spec).into_iter().enumerate() {
        let gauge = if i == 0 { SimilarityTransform::identity() } else { synth::random_similarity(&mut rng) };
        let render = RenderSpec {
            seed: spec.seed + i as u64,
            ..RenderSpec::default()
        };
        let shot = synth::clip_frames(&frames, spec.fps, start, end);
        clips.push(synth::render_model(&format!("{}_{}", start as u64, end as u64), &shot, &marks, &render, &gauge));
        gauges.push(gauge);
    }
    House {
        spec: spec.clone(),
        frames,
        clips,
        gauges,
    }
}

/// Shuffle the frame names of one clip so its alignment by name is wrong.
pub fn corrupt_clip(house: &mut House, clip: usize) {
    synth::scramble_names(&mut house.clips[clip], house.spec.seed ^ 0x5eed);
}

fn world_rotation(frame: &ShotFrame) -> UnitQuaternion<f64> {
    look_rotation(&frame.forward, &Vec3::z()).expect("level heading")
}

/// Distance along a unit ray to an axis-aligned box, if hit in front.
fn ray_box(origin: &Vec3, dir: &Vec3, min: &Vec3, max: &Vec3) -> Option<f64> {
    let mut t0 = f64::NEG_INFINITY;
    let mut t1 = f64::INFINITY;
    for a in 0..3 {
        if dir[a].abs() < 1e-12 {
            if origin[a] < min[a] || origin[a] > max[a] {
                return None;
            }
            continue;
        }
        let (mut near, mut far) = ((min[a] - origin[a]) / dir[a], (max[a] - origin[a]) / dir[a]);
        if near > far {
            std::mem::swap(&mut near, &mut far);
        }
        t0 = t0.max(near);
        t1 = t1.min(far);
    }
    (t0 <= t1 && t1 > 0.0).then_some(t0.max(0.0))
}

/// Distance to the room shell from inside it.
fn shell_distance(origin: &Vec3, dir: &Vec3) -> f64 {
    let min = Vec3::new(FLOOR_MIN.0, FLOOR_MIN.1, 0.0);
    let max = Vec3::new(FLOOR_MAX.0, FLOOR_MAX.1, CEILING);
    (0..3)
        .filter(|&a| dir[a].abs() > 1e-12)
        .map(|a| {
            let bound = if dir[a] > 0.0 { max[a] } else { min[a] };
            (bound - origin[a]) / dir[a]
        })
        .fold(FAR_M, f64::min)
}

/// First hit along a ray: distance and furniture index (None for walls).
fn cast(origin: &Vec3, dir: &Vec3, items: &[Furniture]) -> (f64, Option<usize>) {
    let mut best = (shell_distance(origin, dir), None);
    for (i, f) in items.iter().enumerate() {
        if let Some(t) = ray_box(origin, dir, &f.min, &f.max) {
            if t < best.0 {
                best = (t, Some(i));
            }
        }
    }
    best
}

pub fn render_depth(frame: &ShotFrame, name: &str, spec: &HouseSpec, items: &[Furniture]) -> DepthMap {
    let cam = RenderSpec::default();
    let r = world_rotation(frame);
    let (w, h) = (spec.depth_width, spec.depth_height);
    let mut values = Vec::with_capacity(w * h);
    for py in 0..h {
        for px in 0..w {
            let u = (px as f64 + 0.5) * cam.width as f64 / w as f64;
            let v = (py as f64 + 0.5) * cam.height as f64 / h as f64;
            let ray_cam = Vec3::new((u - cam.width as f64 / 2.0) / cam.focal, (v - cam.height as f64 / 2.0) / cam.focal, 1.0);
            let dir = (r.inverse() * ray_cam).normalize();
            let (t, _) = cast(&frame.center, &dir, items);
            values.push((t / FAR_M).clamp(0.0, 1.0));
        }
    }
    DepthMap {
        frame: name.into(),
        width: w,
        height: h,
        values,
    }
}

/// Visible furniture as normalized boxes, plus a floor region.
pub fn render_detections(frame: &ShotFrame, name: &str, items: &[Furniture]) -> Vec<ObjectDetection> {
    let cam = RenderSpec::default();
    let r = world_rotation(frame);
    let (cw, ch) = (cam.width as f64, cam.height as f64);
    let mut out = Vec::new();
    for (i, f) in items.iter().enumerate() {
        let mut us = Vec::new();
        let mut vs = Vec::new();
        let mut behind = false;
        for k in 0..8 {
            let corner = Vec3::new(
                if k & 1 == 0 { f.min.x } else { f.max.x },
                if k & 2 == 0 { f.min.y } else { f.max.y },
                if k & 4 == 0 { f.min.z } else { f.max.z },
            );
            let p = r * (corner - frame.center);
            if p.z < 0.1 {
                behind = true;
                break;
            }
            us.push((cam.focal * p.x / p.z + cw / 2.0) / cw);
            vs.push((cam.focal * p.y / p.z + ch / 2.0) / ch);
        }
        if behind {
            continue;
        }
        let fold = |v: &[f64], init: f64, op: fn(f64, f64) -> f64| v.iter().copied().fold(init, op);
        let bbox = BBox {
            x0: fold(&us, f64::INFINITY, f64::min).clamp(0.0, 1.0),
            y0: fold(&vs, f64::INFINITY, f64::min).clamp(0.0, 1.0),
            x1: fold(&us, f64::NEG_INFINITY, f64::max).clamp(0.0, 1.0),
            y1: fold(&vs, f64::NEG_INFINITY, f64::max).clamp(0.0, 1.0),
        };
        if bbox.x1 - bbox.x0 < 0.03 || bbox.y1 - bbox.y0 < 0.03 {
            continue;
        }
        // Occlusion: the ray through the box center must hit this item first.
        let centroid = (f.min + f.max) / 2.0;
        let dir = (centroid - frame.center).normalize();
        let (_, hit) = cast(&frame.center, &dir, items);
        if hit != Some(i) {
            continue;
        }
        let dist = (centroid - frame.center).norm();
        let score = ((0.95 - 0.03 * dist).clamp(0.3, 0.95) * 1000.0).round() / 1000.0;
        out.push(ObjectDetection {
            frame: name.into(),
            tag: f.tag.into(),
            bbox: round_box(bbox),
            score,
        });
    }
    out.push(ObjectDetection {
        frame: name.into(),
        tag: "floor".into(),
        bbox: BBox { x0: 0.0, y0: 0.62, x1: 1.0, y1: 1.0 },
        score: 0.35,
    });
    out
}

fn round_box(b: BBox) -> BBox {
    let r = |v: f64| (v * 1e4).round() / 1e4;
    BBox { x0: r(b.x0), y0: r(b.y0), x1: r(b.x1), y1: r(b.y1) }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub frame: String,
    pub center: Vec3,
}

/// Shot boundaries: eleven back-to-back shots spanning the whole video.
pub fn house_shots(duration_s: f64) -> Vec<Shot> {
    let cuts = [0.0, 38.0, 80.0, 121.0, 160.0, 205.0, 247.0, 290.0, 333.0, 371.0, 418.0];
    let mut out: Vec<Shot> = cuts
        .windows(2)
        .map(|w| Shot { start_s: w[0], end_s: w[1] })
        .collect();
    out.push(Shot { start_s: cuts[cuts.len() - 1], end_s: duration_s });
    out
}

fn write_jsonl<T: Serialize>(path: &Path, items: &[T]) -> Result<(), IoError> {
    io::write_jsonl(path, items)
}

/// Write the dataset directory: video list, shots, clips and sidecars for
/// the house, and a short video that the filter rejects.
pub fn write_dataset(house: &House, data_dir: &Path) -> Result<(), IoError> {
    let spec = &house.spec;
    let pattern = FramePattern::default();
    let videos = vec![
        VideoMeta {
            video_id: HOUSE_VIDEO.into(),
            duration_s: spec.duration_s,
            fps: spec.fps,
            title: Some("Synthetic six-room house tour".into()),
        },
        VideoMeta {
            video_id: SHORT_VIDEO.into(),
            duration_s: 120.0,
            fps: spec.fps,
            title: Some("Two-minute teaser".into()),
        },
    ];
    write_jsonl(&sidecar::videos_path(data_dir), &videos)?;

    let layout = VideoLayout::new(data_dir, HOUSE_VIDEO);
    write_jsonl(&layout.shots(), &house_shots(spec.duration_s))?;
    for clip in &house.clips {
        io::write_model_dir(clip, &layout.clip(&clip.clip_id))?;
    }

    let items = furniture();
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed ^ 0x0a11);
    let mut rooms = Vec::new();
    let mut tags = Vec::new();
    let mut detections = Vec::new();
    let mut truth = Vec::new();
    for f in &house.frames {
        let name = pattern.name(f.index);
        truth.push(GroundTruth { frame: name.clone(), center: f.center });
        let true_room = room_at(f.center.x, f.center.y);
        let room = if rng.random::<f64>() < spec.room_noise {
            DEFAULT_ROOM_VOCAB[rng.random_range(0..DEFAULT_ROOM_VOCAB.len())]
        } else {
            true_room
        };
        rooms.push(RoomRecord { frame: name.clone(), room: room.into() });
        if f.index % spec.perception_every != 0 {
            continue;
        }
        let dets = render_detections(f, &name, &items);
        let mut frame_tags: Vec<String> = vec![true_room.to_string()];
        frame_tags.extend(dets.iter().map(|d| d.tag.clone()));
        tags.push(TagRecord { frame: name.clone(), tags: frame_tags });
        detections.extend(dets);
        let depth = render_depth(f, &name, spec, &items);
        io::write_atomic(&layout.depth(&name), &pgm::encode(&depth))?;
    }
    write_jsonl(&layout.rooms(), &rooms)?;
    write_jsonl(&layout.tags(), &tags)?;
    write_jsonl(&layout.detections(), &detections)?;
    write_jsonl(&layout.root.join("ground_truth.jsonl"), &truth)?;

    let short = VideoLayout::new(data_dir, SHORT_VIDEO);
    write_jsonl(&short.shots(), &[Shot { start_s: 0.0, end_s: 60.0 }, Shot { start_s: 60.0, end_s: 120.0 }])?;
    Ok(())
}

pub fn read_ground_truth(data_dir: &Path, video: &str) -> Result<BTreeMap<String, Vec3>, IoError> {
    let rows: Vec<GroundTruth> = io::read_jsonl(&VideoLayout::new(data_dir, video).root.join("ground_truth.jsonl"))?;
    Ok(rows.into_iter().map(|g| (g.frame, g.center)).collect())
}

pub const INSTRUCTION: &str = "\
# Reconstructed task instruction. The original prompt is only partly shown in
# the source material; wording below fills the gaps. Lines starting with '#'
# are not sent.
You will read captions of frames sampled in order along a person's walk through a home.
Each frame names the room the camera is in and lists nearby objects with their direction and distance from the current spot.
Write one short navigation instruction that follows the walk: mention the objects in the order they are passed, use their direction and distance to tell them apart, and name the rooms that are entered.
Reply with the instruction only.
";

pub const EXAMPLE1_INPUT: &str = "\
# Reconstructed in-context example.
Frame 0:
Room: living room
There is a sofa to the left of current spot in the near distance.
There is a lamp to the middle of current spot in a further distance.
Frame 1:
Room: living room
There is a lamp to the right of current spot in closer distance.
Frame 2:
Room: kitchen
There is a refrigerator to the middle of current spot in a further distance.
";

pub const EXAMPLE1_OUTPUT: &str = "\
# Reconstructed in-context example.
Walk past the sofa on your left toward the lamp, keep the lamp on your right and enter the kitchen, heading for the refrigerator ahead.
";

pub const EXAMPLE2_INPUT: &str = "\
# Reconstructed in-context example.
Frame 0:
Room: hallway
There is a shoe rack to the right of current spot in closer distance.
Frame 1:
Room: bedroom
There is a bed to the middle of current spot in the near distance.
There is a wardrobe to the left of current spot in a further distance.
";

pub const EXAMPLE2_OUTPUT: &str = "\
# Reconstructed in-context example.
Go down the hallway past the shoe rack on your right, step into the bedroom and stop at the foot of the bed with the wardrobe off to the left.
";

pub fn write_prompt_templates(dir: &Path) -> Result<(), IoError> {
    for (name, text) in [
        ("instruction.txt", INSTRUCTION),
        ("example1_input.txt", EXAMPLE1_INPUT),
        ("example1_output.txt", EXAMPLE1_OUTPUT),
        ("example2_input.txt", EXAMPLE2_INPUT),
        ("example2_output.txt", EXAMPLE2_OUTPUT),
    ] {
        io::write_atomic(&dir.join(name), text.as_bytes())?;
    }
    Ok(())
}

pub fn write_room_vocab(path: &Path) -> Result<(), IoError> {
    let mut text = String::from("# Stand-in list of 16 room types.\n");
    for r in DEFAULT_ROOM_VOCAB {
        text.push_str(r);
        text.push('\n');
    }
    io::write_atomic(path, text.as_bytes())
}

pub const CONFIG: &str = "\
# Synthetic house fixture; paths are relative to this file.
data_dir = data
run_dir = run
prompt_dir = prompts
stub_dir = stubs
room_vocab = rooms.txt
llm_mode = stub
provenance_timestamp = 2024-01-01T00:00:00Z
";

/// Canned description for a prompt: rooms in visiting order and the first
/// few objects that come into view.
pub fn stub_response(bundle: &PromptBundle) -> String {
    let mut rooms: Vec<&str> = Vec::new();
    let mut objects: Vec<(String, HBucket)> = Vec::new();
    for b in &bundle.frame_blocks {
        if b.room != walkforge_core::captioning::UNKNOWN_ROOM && rooms.last() != Some(&b.room.as_str()) {
            rooms.push(&b.room);
        }
        if let Some((tag, bucket, _)) = b
            .sentences
            .iter()
            .filter_map(|s| parse_sentence(s))
            .find(|(t, _, _)| t != "floor" && !objects.iter().any(|(o, _)| o == t))
        {
            if objects.len() < 4 {
                objects.push((tag, bucket));
            }
        }
    }
    let mut parts = Vec::new();
    match rooms.first() {
        Some(r) => parts.push(format!("Start in the {r}")),
        None => parts.push("Start walking".to_string()),
    }
    for (tag, bucket) in &objects {
        parts.push(match bucket {
            HBucket::Left => format!("pass the {tag} on your left"),
            HBucket::Right => format!("pass the {tag} on your right"),
            HBucket::Middle => format!("head toward the {tag} ahead"),
        });
    }
    let mut text = parts.join(", ");
    for r in rooms.iter().skip(1) {
        text.push_str(&format!(", then continue into the {r}"));
    }
    text.push_str(", and stop there.");
    text
}

#[derive(Debug, Error)]
pub enum FixtureError {
    #[error(transparent)]
    Io(#[from] IoError),
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Pipeline(#[from] PipelineError),
}

pub mod layout {
    pub const DATA: &str = "data";
    pub const PROMPTS: &str = "prompts";
    pub const STUBS: &str = "stubs";
    pub const ROOMS: &str = "rooms.txt";
    pub const CONFIG: &str = "walkforge.conf";
    pub const GOLDEN_BUNDLE: &str = "golden/bundle.json";
    pub const GOLDEN_PROMPT: &str = "golden/prompt.txt";
}

/// Write the complete fixture under `root`: dataset, templates, vocabulary,
/// config, one stub completion per prompt and a golden prompt. Returns the
/// number of stubs written.
pub fn write_fixture(root: &Path, spec: &HouseSpec) -> Result<usize, FixtureError> {
    let house = build_house(spec);
    write_dataset(&house, &root.join(layout::DATA))?;
    write_prompt_templates(&root.join(layout::PROMPTS))?;
    write_room_vocab(&root.join(layout::ROOMS))?;
    io::write_atomic(&root.join(layout::CONFIG), CONFIG.as_bytes())?;

    let scratch = tempfile::tempdir().map_err(|source| IoError::IoFailure { path: root.into(), source })?;
    let mut cfg = load_config(&root.join(layout::CONFIG), std::iter::empty::<(String, String)>())?;
    cfg.run_dir = scratch.path().to_path_buf();
    let prompts = collect_prompts(&cfg)?;
    let stubs = root.join(layout::STUBS);
    for (_, _, bundle, text) in &prompts {
        let body = stub_response(bundle);
        io::write_atomic(&StubClient::path_for(&stubs, &prompt_digest(text)), body.as_bytes())?;
    }
    if let Some((_, _, bundle, text)) = prompts.first() {
        io::write_json(&root.join(layout::GOLDEN_BUNDLE), bundle)?;
        io::write_atomic(&root.join(layout::GOLDEN_PROMPT), text.as_bytes())?;
    }
    Ok(prompts.len())
}
