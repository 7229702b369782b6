//! Merging per-clip reconstructions into whole-scene models.
//!
//! Clips that share at least `min_shared` frame names are aligned with a
//! similarity fitted on the shared camera centers. A merge is kept only when
//! the merged model's mean reprojection error does not exceed the sum of the
//! two inputs' errors.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::camgeom::{apply_transform, camera_center, estimate_similarity, mean_reprojection_error};
use crate::model::{CameraId, FrameClock, ImageId, PointId, SparseModel, TrackEntry};
use crate::Vec3;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum MergeError {
    #[error("model id {0:?} appears more than once")]
    DuplicateModelId(String),
    #[error("only {found} shared frames, need {needed}")]
    InsufficientOverlap { found: usize, needed: usize },
    #[error("shared camera centers are collinear or degenerate")]
    DegenerateGeometry,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MergeParams {
    /// Minimum number of shared frame names for an edge ("more than three").
    pub min_shared: usize,
    pub clock: FrameClock,
}

impl Default for MergeParams {
    fn default() -> Self {
        MergeParams {
            min_shared: 4,
            clock: FrameClock::default(),
        }
    }
}

/// Frame names present in both models, ordered by timestamp (names the clock
/// cannot parse sort last, by name).
pub fn shared_frames(a: &SparseModel, b: &SparseModel, clock: &FrameClock) -> Vec<String> {
    let names_b: BTreeSet<&str> = b.frames.values().map(|f| f.name.as_str()).collect();
    let mut shared: Vec<String> = a
        .frames
        .values()
        .filter(|f| names_b.contains(f.name.as_str()))
        .map(|f| f.name.clone())
        .collect();
    sort_by_time(&mut shared, clock);
    shared
}

fn sort_by_time(names: &mut [String], clock: &FrameClock) {
    names.sort_by(|x, y| {
        let tx = clock.frame_timestamp(x).unwrap_or(f64::INFINITY);
        let ty = clock.frame_timestamp(y).unwrap_or(f64::INFINITY);
        tx.total_cmp(&ty).then_with(|| x.cmp(y))
    });
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OverlapEdge {
    pub a: usize,
    pub b: usize,
    pub shared: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OverlapGraph {
    /// Model ids ordered by clip start time.
    pub nodes: Vec<String>,
    /// Edges with `a < b` indexing into `nodes`.
    pub edges: Vec<OverlapEdge>,
}

/// Indices of `models` sorted by clip start time, then id.
fn start_order(models: &[SparseModel]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..models.len()).collect();
    order.sort_by(|&i, &j| {
        let si = models[i].clip_start().unwrap_or(f64::INFINITY);
        let sj = models[j].clip_start().unwrap_or(f64::INFINITY);
        si.total_cmp(&sj).then_with(|| models[i].clip_id.cmp(&models[j].clip_id))
    });
    order
}

fn check_unique(models: &[SparseModel]) -> Result<(), MergeError> {
    let mut seen = BTreeSet::new();
    for m in models {
        if !seen.insert(m.clip_id.as_str()) {
            return Err(MergeError::DuplicateModelId(m.clip_id.clone()));
        }
    }
    Ok(())
}

pub fn build_overlap_graph(models: &[SparseModel], params: &MergeParams) -> Result<OverlapGraph, MergeError> {
    check_unique(models)?;
    let order = start_order(models);
    let mut edges = Vec::new();
    for (ai, &i) in order.iter().enumerate() {
        for (bi, &j) in order.iter().enumerate().skip(ai + 1) {
            let shared = shared_frames(&models[i], &models[j], &params.clock);
            if shared.len() >= params.min_shared {
                edges.push(OverlapEdge { a: ai, b: bi, shared });
            }
        }
    }
    Ok(OverlapGraph {
        nodes: order.iter().map(|&i| models[i].clip_id.clone()).collect(),
        edges,
    })
}

/// Result of a single attempted merge.
#[derive(Debug, Clone, PartialEq)]
pub enum MergeOutcome {
    Merged { model: SparseModel, errors: PairErrors },
    RolledBack { errors: PairErrors },
}

/// Mean reprojection errors (pixels) around one merge attempt.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PairErrors {
    pub pre_a_px: f64,
    pub pre_b_px: f64,
    pub post_px: f64,
}

/// Align `b` onto `a` using their shared frames and merge. `a`'s poses win
/// for shared frames; `b`'s observations of shared frames are appended to
/// `a`'s so the error check sees cross-model consistency. Points are not
/// fused; `b`'s point ids are offset past `a`'s maximum.
pub fn merge_pair(a: &SparseModel, b: &SparseModel, params: &MergeParams) -> Result<MergeOutcome, MergeError> {
    let shared = shared_frames(a, b, &params.clock);
    if shared.len() < params.min_shared {
        return Err(MergeError::InsufficientOverlap {
            found: shared.len(),
            needed: params.min_shared,
        });
    }
    let centers = |m: &SparseModel| -> Vec<Vec3> {
        shared
            .iter()
            .map(|n| camera_center(m.frame_by_name(n).expect("shared name present")))
            .collect()
    };
    let transform = estimate_similarity(&centers(b), &centers(a)).map_err(|_| MergeError::DegenerateGeometry)?;
    let aligned = apply_transform(b, &transform);
    let merged = union_models(a, &aligned);

    let errors = PairErrors {
        pre_a_px: mean_reprojection_error(a),
        pre_b_px: mean_reprojection_error(b),
        post_px: mean_reprojection_error(&merged),
    };
    Ok(if errors.post_px <= errors.pre_a_px + errors.pre_b_px {
        MergeOutcome::Merged { model: merged, errors }
    } else {
        MergeOutcome::RolledBack { errors }
    })
}

/// Union of two models already expressed in the same world frame.
fn union_models(a: &SparseModel, b: &SparseModel) -> SparseModel {
    let mut out = a.clone();
    out.clip_id = format!("{}+{}", a.clip_id, b.clip_id);

    let cam_offset = a.max_camera_id();
    for cam in b.cameras.values() {
        let mut cam = cam.clone();
        cam.id = CameraId(cam.id.0 + cam_offset);
        out.cameras.insert(cam.id, cam);
    }

    let point_offset = a.max_point_id();
    let remap_point = |p: PointId| PointId(p.0 + point_offset);

    // b image id -> (merged image id, observation index offset)
    let a_names = a.name_index();
    let mut image_map: BTreeMap<ImageId, (ImageId, u32)> = BTreeMap::new();
    let mut next_image = a.max_image_id();
    for frame in b.frames.values() {
        let mut obs: Vec<_> = frame
            .observations
            .iter()
            .map(|o| {
                let mut o = *o;
                o.point = o.point.map(remap_point);
                o
            })
            .collect();
        match a_names.get(frame.name.as_str()) {
            Some(&target) => {
                let existing = out.frames.get_mut(&target).expect("name index is consistent");
                image_map.insert(frame.id, (target, existing.observations.len() as u32));
                existing.observations.append(&mut obs);
            }
            None => {
                next_image += 1;
                let id = ImageId(next_image);
                image_map.insert(frame.id, (id, 0));
                let mut f = frame.clone();
                f.id = id;
                f.camera_id = CameraId(f.camera_id.0 + cam_offset);
                f.observations = obs;
                out.frames.insert(id, f);
            }
        }
    }

    for point in b.points.values() {
        let mut p = point.clone();
        p.id = remap_point(p.id);
        p.track = p
            .track
            .iter()
            .filter_map(|e| {
                image_map.get(&e.image_id).map(|&(image_id, offset)| TrackEntry {
                    image_id,
                    point2d_idx: e.point2d_idx + offset,
                })
            })
            .collect();
        out.points.insert(p.id, p);
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MergeDecision {
    Accepted,
    RolledBack,
    /// Alignment could not be attempted (degenerate shared geometry).
    Failed,
}

/// One attempted merge, as written to the audit log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MergeStep {
    pub pair: [String; 2],
    pub pre_a_px: Option<f64>,
    pub pre_b_px: Option<f64>,
    pub post_px: Option<f64>,
    pub decision: MergeDecision,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct MergeReport {
    /// Ids of the surviving models, in output order.
    pub models: Vec<String>,
    pub steps: Vec<MergeStep>,
    pub accepted: usize,
    pub rolled_back: usize,
    pub failed: usize,
}

/// Depth-first merging starting from the earliest clip. Each accepted merge
/// replaces both nodes with the merged one; rejected pairs are never retried.
pub fn merge_all(models: Vec<SparseModel>, params: &MergeParams) -> Result<(Vec<SparseModel>, MergeReport), MergeError> {
    check_unique(&models)?;
    let order = start_order(&models);
    let mut slots: Vec<Option<SparseModel>> = models.into_iter().map(Some).collect();
    let mut nodes: Vec<Option<SparseModel>> = order.iter().map(|&i| slots[i].take()).collect();
    let names: Vec<BTreeSet<String>> = nodes
        .iter()
        .map(|m| m.as_ref().unwrap().frames.values().map(|f| f.name.clone()).collect())
        .collect();

    let mut rejected: BTreeSet<(usize, usize)> = BTreeSet::new();
    let mut report = MergeReport::default();
    let mut finished = Vec::new();

    for root in 0..nodes.len() {
        if nodes[root].is_none() {
            continue;
        }
        let mut stack = alloc::vec![root];
        loop {
            let current = nodes[root].as_ref().unwrap();
            let open = |j: usize| j != root && nodes[j].is_some() && !rejected.contains(&(root, j));
            let next = match stack.last() {
                Some(&top) => (0..nodes.len()).find(|&j| {
                    open(j) && names[top].intersection(&names[j]).take(params.min_shared).count() >= params.min_shared
                }),
                // Frontier exhausted: look for edges created by the unions.
                None => (0..nodes.len())
                    .find(|&j| open(j) && shared_frames(current, nodes[j].as_ref().unwrap(), &params.clock).len() >= params.min_shared),
            };
            let Some(j) = next else {
                if stack.pop().is_none() {
                    break;
                }
                continue;
            };

            let candidate = nodes[j].as_ref().unwrap();
            let pair = [current.clip_id.clone(), candidate.clip_id.clone()];
            match merge_pair(current, candidate, params) {
                Ok(MergeOutcome::Merged { model, errors }) => {
                    report.steps.push(step(pair, Some(errors), MergeDecision::Accepted));
                    report.accepted += 1;
                    nodes[root] = Some(model);
                    nodes[j] = None;
                    stack.push(j);
                }
                Ok(MergeOutcome::RolledBack { errors }) => {
                    report.steps.push(step(pair, Some(errors), MergeDecision::RolledBack));
                    report.rolled_back += 1;
                    rejected.insert((root, j));
                    rejected.insert((j, root));
                }
                Err(_) => {
                    let errors = PairErrors {
                        pre_a_px: mean_reprojection_error(current),
                        pre_b_px: mean_reprojection_error(candidate),
                        post_px: f64::NAN,
                    };
                    report.steps.push(step(pair, Some(errors), MergeDecision::Failed));
                    report.failed += 1;
                    rejected.insert((root, j));
                    rejected.insert((j, root));
                }
            }
        }
        finished.push(nodes[root].take().unwrap());
    }
    report.models = finished.iter().map(|m| m.clip_id.clone()).collect();
    Ok((finished, report))
}

fn step(pair: [String; 2], errors: Option<PairErrors>, decision: MergeDecision) -> MergeStep {
    let finite = |x: f64| x.is_finite().then_some(x);
    MergeStep {
        pair,
        pre_a_px: errors.and_then(|e| finite(e.pre_a_px)),
        pre_b_px: errors.and_then(|e| finite(e.pre_b_px)),
        post_px: errors.and_then(|e| finite(e.post_px)),
        decision,
    }
}
