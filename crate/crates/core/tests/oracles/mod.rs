//! Slow reference implementations used as test oracles. They share no code
//! with the library beyond the data types.
#![allow(dead_code)]

use std::collections::BTreeMap;

use walkforge_core::captioning::{BBox, DepthMap, DistanceBand};
use walkforge_core::model::{FramePose, SparseModel};
use walkforge_core::Vec3;

/// Rotation matrix rows written out from the quaternion components.
pub fn quat_matrix(w: f64, x: f64, y: f64, z: f64) -> [[f64; 3]; 3] {
    [
        [1.0 - 2.0 * (y * y + z * z), 2.0 * (x * y - w * z), 2.0 * (x * z + w * y)],
        [2.0 * (x * y + w * z), 1.0 - 2.0 * (x * x + z * z), 2.0 * (y * z - w * x)],
        [2.0 * (x * z - w * y), 2.0 * (y * z + w * x), 1.0 - 2.0 * (x * x + y * y)],
    ]
}

fn pose_matrix(pose: &FramePose) -> [[f64; 3]; 3] {
    let q = pose.rotation.quaternion();
    quat_matrix(q.w, q.i, q.j, q.k)
}

/// C = -Rᵀt with R expanded by hand.
pub fn center_explicit(pose: &FramePose) -> Vec3 {
    let r = pose_matrix(pose);
    let t = pose.translation;
    Vec3::from_fn(|i, _| -(r[0][i] * t.x + r[1][i] * t.y + r[2][i] * t.z))
}

/// Third row of the hand-expanded R.
pub fn view_explicit(pose: &FramePose) -> Vec3 {
    let r = pose_matrix(pose);
    Vec3::new(r[2][0], r[2][1], r[2][2])
}

/// Pinhole projection with one radial term, from the hand-expanded R.
/// `None` when the point is not in front of the camera.
pub fn project_explicit(fx: f64, fy: f64, cx: f64, cy: f64, k: f64, pose: &FramePose, x: &Vec3) -> Option<(f64, f64)> {
    let r = pose_matrix(pose);
    let t = pose.translation;
    let p: Vec<f64> = (0..3).map(|i| r[i][0] * x.x + r[i][1] * x.y + r[i][2] * x.z + t[i]).collect();
    if p[2] <= 1e-9 {
        return None;
    }
    let (u, v) = (p[0] / p[2], p[1] / p[2]);
    let d = 1.0 + k * (u * u + v * v);
    Some((fx * u * d + cx, fy * v * d + cy))
}

/// Camera center straight from the rotation matrix: C = -Rᵀt.
pub fn center(pose: &FramePose) -> Vec3 {
    let r = pose.rotation.to_rotation_matrix().into_inner();
    -(r.transpose() * pose.translation)
}

/// Viewing direction as the third row of R.
pub fn view(pose: &FramePose) -> Vec3 {
    let r = pose.rotation.to_rotation_matrix().into_inner();
    Vec3::new(r[(2, 0)], r[(2, 1)], r[(2, 2)])
}

pub fn angle_deg(a: &Vec3, b: &Vec3) -> f64 {
    let c = a.dot(b) / (a.norm() * b.norm());
    c.clamp(-1.0, 1.0).acos().to_degrees()
}

/// Frame index from a `frame_NNNNNN.jpg` name.
pub fn frame_index(name: &str) -> u64 {
    name.trim_start_matches("frame_").trim_end_matches(".jpg").parse().unwrap()
}

/// Frames in index order.
pub fn ordered(model: &SparseModel) -> Vec<&FramePose> {
    let mut v: Vec<_> = model.frames.values().collect();
    v.sort_by_key(|f| frame_index(&f.name));
    v
}

/// Every consecutive run of shots, by brute force.
pub fn filter_keeps(duration: f64, fps: f64, shots: &[(f64, f64)], min_run: usize, coverage: f64) -> bool {
    if duration < 180.0 {
        return false;
    }
    for i in 0..shots.len() {
        for j in i..shots.len() {
            let contiguous = (i + 1..=j).all(|k| shots[k].0 - shots[k - 1].1 <= 1.0 / fps + 1e-9);
            if !contiguous {
                break;
            }
            let covered: f64 = shots[i..=j].iter().map(|s| s.1 - s.0).sum();
            if j - i + 1 >= min_run && covered > coverage * duration {
                return true;
            }
        }
    }
    false
}

/// NMS straight from the definition: survivors are points no other point in
/// the window beats.
pub fn nms(indices: &[u64], scores: &[f64], window: u64) -> Vec<bool> {
    (0..indices.len())
        .map(|f| {
            !(0..indices.len()).any(|g| {
                g != f
                    && indices[g].abs_diff(indices[f]) <= window
                    && (scores[g] > scores[f] || scores[g] == scores[f] && (indices[g], g) < (indices[f], f))
            })
        })
        .collect()
}

/// Brute-force view-change scores over all frame pairs; returns
/// `(frame index, score)` for frames above the threshold, after NMS.
pub fn significant(model: &SparseModel, meters_per_unit: f64, radius: f64, threshold: f64, window: u64) -> Vec<(u64, f64)> {
    let frames = ordered(model);
    let mut idx = Vec::new();
    let mut sc = Vec::new();
    for f in &frames {
        let mut best = 0.0f64;
        for g in &frames {
            if (center(f) - center(g)).norm() * meters_per_unit <= radius {
                best = best.max(angle_deg(&view(f), &view(g)));
            }
        }
        if best > threshold {
            idx.push(frame_index(&f.name));
            sc.push(best);
        }
    }
    let keep = nms(&idx, &sc, window);
    idx.into_iter().zip(sc).zip(keep).filter(|(_, k)| *k).map(|(p, _)| p).collect()
}

/// O(n²) density-reachability: core points connected through eps-chains
/// form clusters; a border point joins the earliest cluster among its core
/// neighbours.
pub fn dbscan(points: &[Vec3], eps: f64, min_pts: usize) -> Vec<Option<usize>> {
    let n = points.len();
    let near = |i: usize, j: usize| (points[i] - points[j]).norm() <= eps;
    let core: Vec<bool> = (0..n).map(|i| (0..n).filter(|&j| near(i, j)).count() >= min_pts).collect();
    let mut comp: Vec<usize> = (0..n).collect();
    fn find(c: &mut Vec<usize>, i: usize) -> usize {
        if c[i] != i {
            let r = find(c, c[i]);
            c[i] = r;
        }
        c[i]
    }
    for i in 0..n {
        for j in 0..n {
            if core[i] && core[j] && near(i, j) {
                let (a, b) = (find(&mut comp, i), find(&mut comp, j));
                comp[a.max(b)] = a.min(b);
            }
        }
    }
    let mut label_of_root = BTreeMap::new();
    for i in 0..n {
        if core[i] {
            let r = find(&mut comp, i);
            let next = label_of_root.len();
            label_of_root.entry(r).or_insert(next);
        }
    }
    (0..n)
        .map(|i| {
            if core[i] {
                return Some(label_of_root[&find(&mut comp, i)]);
            }
            (0..n)
                .filter(|&j| core[j] && near(i, j))
                .map(|j| label_of_root[&find(&mut comp, j)])
                .min()
        })
        .collect()
}

/// Labels as a partition: sorted list of sorted member lists, plus noise.
pub fn canonical(labels: &[Option<usize>]) -> (Vec<Vec<usize>>, Vec<usize>) {
    let mut groups: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    let mut noise = Vec::new();
    for (i, l) in labels.iter().enumerate() {
        match l {
            Some(l) => groups.entry(*l).or_default().push(i),
            None => noise.push(i),
        }
    }
    let mut parts: Vec<Vec<usize>> = groups.into_values().collect();
    parts.sort();
    (parts, noise)
}

/// Nearest-rank percentile from a sorted copy.
pub fn percentile(values: &[f64], p: f64) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let rank = (p * v.len() as f64).ceil().max(1.0) as usize;
    v[rank - 1]
}

/// Band fractions by visiting every pixel and testing its center.
pub fn pixel_count_ratios(bbox: &BBox, depth: &DepthMap, t_near: f64, t_far: f64) -> [f64; 3] {
    let mut counts = [0usize; 3];
    let mut total = 0;
    for py in 0..depth.height {
        for px in 0..depth.width {
            let cx = (px as f64 + 0.5) / depth.width as f64;
            let cy = (py as f64 + 0.5) / depth.height as f64;
            if cx >= bbox.x0 && cx < bbox.x1 && cy >= bbox.y0 && cy < bbox.y1 {
                let d = depth.values[py * depth.width + px];
                let band = if d < t_near { 0 } else if d < t_far { 1 } else { 2 };
                counts[band] += 1;
                total += 1;
            }
        }
    }
    if total == 0 {
        let px = ((bbox.x0 + bbox.x1) / 2.0 * depth.width as f64).floor().min(depth.width as f64 - 1.0) as usize;
        let py = ((bbox.y0 + bbox.y1) / 2.0 * depth.height as f64).floor().min(depth.height as f64 - 1.0) as usize;
        let d = depth.values[py * depth.width + px];
        let band = if d < t_near { 0 } else if d < t_far { 1 } else { 2 };
        counts[band] = 1;
        total = 1;
    }
    counts.map(|c| c as f64 / total as f64)
}

pub fn expected_bands(ratios: [f64; 3]) -> Vec<DistanceBand> {
    let over: Vec<DistanceBand> = (0..3).filter(|&i| ratios[i] > 0.30).map(|i| DistanceBand::ALL[i]).collect();
    if !over.is_empty() {
        return over;
    }
    let max = ratios.iter().cloned().fold(f64::MIN, f64::max);
    vec![DistanceBand::ALL[ratios.iter().position(|&r| r == max).unwrap()]]
}
