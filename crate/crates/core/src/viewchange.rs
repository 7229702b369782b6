//! Significant view-change points, their spatial clusters and the candidate
//! frames drawn from them.

use alloc::collections::{BTreeMap, VecDeque};
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::camgeom::angular_view_difference;
use crate::model::{FrameClock, ImageId, SparseModel};
use crate::sampling::{timeline, SamplingError, ScaleCalibration};
use crate::Vec3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ViewChangePoint {
    pub image_id: ImageId,
    pub frame_index: u64,
    /// Calibrated meters.
    pub center: Vec3,
    pub max_diff: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ViewCluster {
    pub cluster_id: usize,
    /// Sorted by frame index.
    pub members: Vec<ViewChangePoint>,
    pub walking_paths: Vec<Vec<ImageId>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidatePair {
    pub cluster_id: usize,
    pub path_index: usize,
    pub positive: ImageId,
    pub negative: ImageId,
    pub angular_gap: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ViewChangeParams {
    pub radius_m: f64,
    pub threshold_deg: f64,
    pub nms_window_frames: u64,
    pub eps_m: f64,
    pub min_pts: usize,
    pub gap_frames: u64,
}

impl Default for ViewChangeParams {
    fn default() -> Self {
        ViewChangeParams {
            radius_m: 1.0,
            threshold_deg: 45.0,
            nms_window_frames: 9,
            eps_m: 0.75,
            min_pts: 2,
            gap_frames: 15,
        }
    }
}

/// 1-D non-maximum suppression over frame indices. Entry `f` survives iff no
/// other entry within `window` frames scores higher, or scores the same at an
/// earlier index.
pub fn temporal_nms(indices: &[u64], scores: &[f64], window: u64) -> Vec<bool> {
    assert_eq!(indices.len(), scores.len());
    let mut order: Vec<usize> = (0..indices.len()).collect();
    order.sort_by_key(|&i| (indices[i], i));
    let mut keep = alloc::vec![true; indices.len()];
    let mut lo = 0;
    for (pos, &f) in order.iter().enumerate() {
        while indices[order[lo]] + window < indices[f] {
            lo += 1;
        }
        let mut hi = pos + 1;
        let beaten = |g: usize| scores[g] > scores[f] || scores[g] == scores[f] && (indices[g], g) < (indices[f], f);
        let mut suppressed = order[lo..pos].iter().any(|&g| beaten(g));
        while !suppressed && hi < order.len() && indices[order[hi]] <= indices[f] + window {
            suppressed = beaten(order[hi]);
            hi += 1;
        }
        keep[f] = !suppressed;
    }
    keep
}

/// Frames whose view differs from a nearby frame by more than the threshold,
/// thinned by temporal NMS.
pub fn significant_points(
    model: &SparseModel,
    clock: &FrameClock,
    cal: &ScaleCalibration,
    params: &ViewChangeParams,
) -> Result<Vec<ViewChangePoint>, SamplingError> {
    let frames = timeline(model, clock)?;
    let centers: Vec<Vec3> = frames.iter().map(|f| f.center * cal.meters_per_unit).collect();
    let poses: Vec<_> = frames.iter().map(|f| &model.frames[&f.image_id]).collect();
    let grid = Grid::new(&centers, params.radius_m);

    let mut candidates = Vec::new();
    for (i, f) in frames.iter().enumerate() {
        let mut score = 0.0f64;
        grid.for_neighbors(&centers, i, params.radius_m, |j| {
            score = score.max(angular_view_difference(poses[i], poses[j]));
        });
        if score > params.threshold_deg {
            candidates.push(ViewChangePoint {
                image_id: f.image_id,
                frame_index: f.index,
                center: centers[i],
                max_diff: score,
            });
        }
    }
    let indices: Vec<u64> = candidates.iter().map(|p| p.frame_index).collect();
    let scores: Vec<f64> = candidates.iter().map(|p| p.max_diff).collect();
    let keep = temporal_nms(&indices, &scores, params.nms_window_frames);
    Ok(candidates.into_iter().zip(keep).filter_map(|(p, k)| k.then_some(p)).collect())
}

/// Uniform hash grid with cell size equal to the query radius.
struct Grid {
    cell: f64,
    cells: BTreeMap<[i64; 3], Vec<usize>>,
}

impl Grid {
    fn key(p: &Vec3, cell: f64) -> [i64; 3] {
        [
            libm::floor(p.x / cell) as i64,
            libm::floor(p.y / cell) as i64,
            libm::floor(p.z / cell) as i64,
        ]
    }

    fn new(points: &[Vec3], cell: f64) -> Self {
        let mut cells: BTreeMap<[i64; 3], Vec<usize>> = BTreeMap::new();
        for (i, p) in points.iter().enumerate() {
            cells.entry(Self::key(p, cell)).or_default().push(i);
        }
        Grid { cell, cells }
    }

    /// Calls `visit` for every point within `radius` of point `i`, itself
    /// included, in ascending index order.
    fn for_neighbors(&self, points: &[Vec3], i: usize, radius: f64, mut visit: impl FnMut(usize)) {
        let k = Self::key(&points[i], self.cell);
        let mut found = Vec::new();
        for dx in -1..=1 {
            for dy in -1..=1 {
                for dz in -1..=1 {
                    if let Some(members) = self.cells.get(&[k[0] + dx, k[1] + dy, k[2] + dz]) {
                        found.extend(members.iter().copied().filter(|&j| (points[j] - points[i]).norm() <= radius));
                    }
                }
            }
        }
        found.sort_unstable();
        found.into_iter().for_each(&mut visit);
    }
}

/// DBSCAN labels: `Some(cluster)` numbered in order of each cluster's first
/// core point, `None` for noise. Neighborhoods include the point itself.
pub fn dbscan(points: &[Vec3], eps_m: f64, min_pts: usize) -> Vec<Option<usize>> {
    assert!(eps_m > 0.0, "eps must be positive");
    let grid = Grid::new(points, eps_m);
    let neighbors: Vec<Vec<usize>> = (0..points.len())
        .map(|i| {
            let mut n = Vec::new();
            grid.for_neighbors(points, i, eps_m, |j| n.push(j));
            n
        })
        .collect();
    let core: Vec<bool> = neighbors.iter().map(|n| n.len() >= min_pts.max(1)).collect();

    let mut labels = alloc::vec![None; points.len()];
    let mut next = 0;
    for seed in 0..points.len() {
        if !core[seed] || labels[seed].is_some() {
            continue;
        }
        let id = next;
        next += 1;
        labels[seed] = Some(id);
        let mut queue = VecDeque::from([seed]);
        while let Some(p) = queue.pop_front() {
            for &q in &neighbors[p] {
                if labels[q].is_none() {
                    labels[q] = Some(id);
                    if core[q] {
                        queue.push_back(q);
                    }
                }
            }
        }
    }
    labels
}

/// Cluster points spatially (noise becomes singleton clusters) and split each
/// cluster into walking paths at frame gaps larger than `gap_frames`.
/// Clusters are numbered in order of first appearance in `points`.
pub fn clusterize(points: &[ViewChangePoint], eps_m: f64, min_pts: usize, gap_frames: u64) -> Vec<ViewCluster> {
    let centers: Vec<Vec3> = points.iter().map(|p| p.center).collect();
    let labels = dbscan(&centers, eps_m, min_pts);
    let mut by_label: BTreeMap<usize, usize> = BTreeMap::new();
    let mut groups: Vec<Vec<ViewChangePoint>> = Vec::new();
    for (p, label) in points.iter().zip(labels) {
        let slot = match label {
            Some(l) => *by_label.entry(l).or_insert_with(|| {
                groups.push(Vec::new());
                groups.len() - 1
            }),
            None => {
                groups.push(Vec::new());
                groups.len() - 1
            }
        };
        groups[slot].push(p.clone());
    }
    groups
        .into_iter()
        .enumerate()
        .map(|(cluster_id, mut members)| {
            members.sort_by_key(|m| (m.frame_index, m.image_id));
            let mut walking_paths: Vec<Vec<ImageId>> = Vec::new();
            for (k, m) in members.iter().enumerate() {
                if k == 0 || m.frame_index - members[k - 1].frame_index > gap_frames {
                    walking_paths.push(Vec::new());
                }
                walking_paths.last_mut().expect("path started").push(m.image_id);
            }
            ViewCluster {
                cluster_id,
                members,
                walking_paths,
            }
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct CandidateSelection {
    pub pairs: Vec<CandidatePair>,
    pub decision_frames: Vec<ImageId>,
}

/// One positive/negative pair per walking path. A path whose positive has no
/// other cluster member with a different view yields no pair; its positive
/// still counts as a decision frame.
pub fn select_candidates(cluster: &ViewCluster, model: &SparseModel) -> CandidateSelection {
    let mut out = CandidateSelection::default();
    for (path_index, path) in cluster.walking_paths.iter().enumerate() {
        let Some(&positive) = path.last() else { continue };
        out.decision_frames.push(positive);
        let Some(pos_pose) = model.frames.get(&positive) else { continue };
        let mut best: Option<(ImageId, f64)> = None;
        for m in &cluster.members {
            if m.image_id == positive {
                continue;
            }
            let Some(pose) = model.frames.get(&m.image_id) else { continue };
            let gap = angular_view_difference(pos_pose, pose);
            if best.is_none_or(|(_, g)| gap > g) {
                best = Some((m.image_id, gap));
            }
        }
        if let Some((negative, angular_gap)) = best.filter(|&(_, g)| g > 0.0) {
            out.pairs.push(CandidatePair {
                cluster_id: cluster.cluster_id,
                path_index,
                positive,
                negative,
                angular_gap,
            });
        }
    }
    out
}
