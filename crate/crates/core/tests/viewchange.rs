mod oracles;

use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use walkforge_core::camgeom::{apply_transform, SimilarityTransform};
use walkforge_core::model::{FrameClock, ImageId, SparseModel};
use walkforge_core::sampling::calibrate_scale;
use walkforge_core::synth::{self, RenderSpec, ShotFrame, WalkSpec};
use walkforge_core::viewchange::{
    clusterize, dbscan, select_candidates, significant_points, temporal_nms, ViewChangeParams, ViewChangePoint,
};
use walkforge_core::{UnitQuaternion, Vec3};

fn clock() -> FrameClock {
    FrameClock::default()
}

fn frames_model(frames: &[ShotFrame]) -> SparseModel {
    synth::render_model("0_100", frames, &[], &RenderSpec::default(), &SimilarityTransform::identity())
}

fn walk_model(waypoints: Vec<(f64, f64)>) -> SparseModel {
    frames_model(&synth::walk_frames(&WalkSpec::new(waypoints, 1.42, 3.0)))
}

fn detected(model: &SparseModel) -> Vec<(u64, f64)> {
    let cal = calibrate_scale(model, &clock(), 1.42).unwrap();
    significant_points(model, &clock(), &cal, &ViewChangeParams::default())
        .unwrap()
        .iter()
        .map(|p| (p.frame_index, p.max_diff))
        .collect()
}

fn expected(model: &SparseModel) -> Vec<(u64, f64)> {
    let cal = calibrate_scale(model, &clock(), 1.42).unwrap();
    oracles::significant(model, cal.meters_per_unit, 1.0, 45.0, 9)
}

fn assert_same_points(got: &[(u64, f64)], want: &[(u64, f64)]) {
    assert_eq!(got.len(), want.len(), "{got:?} vs {want:?}");
    for (g, w) in got.iter().zip(want) {
        assert_eq!(g.0, w.0);
        assert!((g.1 - w.1).abs() < 1e-9);
    }
}

#[test]
fn straight_walk_has_no_points() {
    assert!(detected(&walk_model(vec![(0.0, 0.0), (30.0, 0.0)])).is_empty());
}

#[test]
fn l_walk_has_one_point_at_the_corner() {
    let model = walk_model(vec![(0.0, 0.0), (15.0, 0.0), (15.0, 15.0)]);
    let got = detected(&model);
    assert_same_points(&got, &expected(&model));
    assert_eq!(got.len(), 1);
    let frame = model.frame_by_name(&clock().pattern.name(got[0].0)).unwrap();
    assert!((oracles::center(frame) - Vec3::new(15.0, 0.0, 1.5)).norm() < 1.0);
}

#[test]
fn two_corners_give_two_points() {
    let model = walk_model(vec![(0.0, 0.0), (15.0, 0.0), (15.0, 20.0), (30.0, 20.0)]);
    let got = detected(&model);
    assert_same_points(&got, &expected(&model));
    assert_eq!(got.len(), 2);
}

#[test]
fn detection_is_similarity_invariant() {
    let model = walk_model(vec![(0.0, 0.0), (10.0, 0.0), (10.0, 8.0), (2.0, 8.0), (2.0, 3.0)]);
    let t = SimilarityTransform {
        scale: 0.37,
        rotation: UnitQuaternion::from_euler_angles(0.4, 1.0, -2.0),
        translation: Vec3::new(3.0, 7.0, -4.0),
    };
    let a = detected(&model);
    let b = detected(&apply_transform(&model, &t));
    assert_eq!(a.len(), 3);
    assert_same_points(&b, &a);
}

proptest! {
    #[test]
    fn nms_matches_definition(raw in prop::collection::vec((0u64..200, 0u8..6), 0..40), window in 0u64..12) {
        let mut seen = std::collections::BTreeSet::new();
        let pts: Vec<(u64, f64)> = raw.into_iter().filter(|p| seen.insert(p.0)).map(|(i, s)| (i, s as f64)).collect();
        let idx: Vec<u64> = pts.iter().map(|p| p.0).collect();
        let sc: Vec<f64> = pts.iter().map(|p| p.1).collect();
        let keep = temporal_nms(&idx, &sc, window);
        prop_assert_eq!(&keep, &oracles::nms(&idx, &sc, window));
        for a in 0..idx.len() {
            for b in 0..idx.len() {
                if a != b && keep[a] && keep[b] {
                    prop_assert!(idx[a].abs_diff(idx[b]) > window);
                }
            }
        }
    }
}

fn random_points(rng: &mut ChaCha8Rng) -> Vec<Vec3> {
    let n = rng.random_range(0..=64);
    let spread = rng.random_range(0.5..6.0);
    let mut pts: Vec<Vec3> = (0..n)
        .map(|_| Vec3::new(rng.random_range(0.0..spread), rng.random_range(0.0..spread), rng.random_range(0.0..0.5)))
        .collect();
    // Exact duplicates and on-boundary distances.
    for k in 0..n / 8 {
        let p = pts[k];
        pts.push(p);
        pts.push(p + Vec3::new(0.5, 0.0, 0.0));
    }
    pts.truncate(64);
    pts
}

#[test]
fn dbscan_matches_brute_force() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for case in 0..200 {
        let pts = random_points(&mut rng);
        let min_pts = rng.random_range(1..=5);
        let eps = 0.5;
        let got = dbscan(&pts, eps, min_pts);
        let want = oracles::dbscan(&pts, eps, min_pts);
        assert_eq!(oracles::canonical(&got), oracles::canonical(&want), "case {case}");
        assert_eq!(got, want, "case {case}");
    }
}

#[test]
fn dbscan_permutation_invariance() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    for _ in 0..100 {
        let pts = random_points(&mut rng);
        let mut perm: Vec<usize> = (0..pts.len()).collect();
        for i in (1..perm.len()).rev() {
            perm.swap(i, rng.random_range(0..=i));
        }
        let shuffled: Vec<Vec3> = perm.iter().map(|&i| pts[i]).collect();
        let a = dbscan(&pts, 0.5, 3);
        let b = dbscan(&shuffled, 0.5, 3);
        // Border points may legitimately switch clusters; core points and
        // noise may not.
        let core: Vec<bool> = (0..pts.len())
            .map(|i| pts.iter().filter(|q| (*q - pts[i]).norm() <= 0.5).count() >= 3)
            .collect();
        let back: Vec<Option<usize>> = (0..pts.len()).map(|i| b[perm.iter().position(|&p| p == i).unwrap()]).collect();
        let restrict = |l: &[Option<usize>]| -> Vec<Option<usize>> {
            l.iter().zip(&core).map(|(x, c)| if *c { *x } else { x.map(|_| usize::MAX) }).collect()
        };
        let ra = oracles::canonical(&restrict(&a));
        let rb = oracles::canonical(&restrict(&back));
        assert_eq!(ra.1, rb.1);
        let core_parts = |parts: Vec<Vec<usize>>| -> Vec<Vec<usize>> {
            let mut v: Vec<Vec<usize>> = parts.into_iter().map(|p| p.into_iter().filter(|&i| core[i]).collect::<Vec<_>>()).filter(|p| !p.is_empty()).collect();
            v.sort();
            v
        };
        assert_eq!(core_parts(oracles::canonical(&a).0), core_parts(oracles::canonical(&back).0));
    }
}

#[test]
fn dbscan_examples() {
    let eps = 0.3;
    let mut pts: Vec<Vec3> = (0..5).map(|i| Vec3::new(i as f64 * 0.05, 0.0, 0.0)).collect();
    pts.extend((0..5).map(|i| Vec3::new(3.0 + i as f64 * 0.05, 0.0, 0.0)));
    let labels = dbscan(&pts, eps, 2);
    assert_eq!(labels, oracles::dbscan(&pts, eps, 2));
    assert_eq!(oracles::canonical(&labels).0.len(), 2);
}

fn point(model: &SparseModel, id: u32) -> ViewChangePoint {
    let f = &model.frames[&ImageId(id)];
    ViewChangePoint {
        image_id: f.id,
        frame_index: oracles::frame_index(&f.name),
        center: oracles::center(f),
        max_diff: 90.0,
    }
}

/// Two passes through the same doorway a minute apart, first heading east,
/// then north.
fn crossing() -> (SparseModel, Vec<ViewChangePoint>, Vec3, Vec3) {
    let east = Vec3::x();
    let north = Vec3::y();
    let mut frames = Vec::new();
    for k in 0..3u64 {
        frames.push(ShotFrame { index: 100 + k, center: Vec3::new(5.0 + 0.15 * k as f64, 5.0, 1.5), forward: east });
    }
    for k in 0..3u64 {
        frames.push(ShotFrame { index: 280 + k, center: Vec3::new(5.1, 4.9 + 0.15 * k as f64, 1.5), forward: north });
    }
    let model = frames_model(&frames);
    let points = (1..=6).map(|id| point(&model, id)).collect();
    (model, points, east, north)
}

#[test]
fn crossing_is_one_cluster_with_two_paths() {
    let (model, points, east, north) = crossing();
    let clusters = clusterize(&points, 0.75, 2, 15);
    assert_eq!(clusters.len(), 1);
    let c = &clusters[0];
    assert_eq!(c.walking_paths.len(), 2);
    assert_eq!(c.walking_paths[0], [ImageId(1), ImageId(2), ImageId(3)]);
    assert_eq!(c.walking_paths[1], [ImageId(4), ImageId(5), ImageId(6)]);

    let sel = select_candidates(c, &model);
    assert_eq!(sel.pairs.len(), 2);
    let gap = oracles::angle_deg(&east, &north);
    for (k, pair) in sel.pairs.iter().enumerate() {
        assert_eq!(pair.path_index, k);
        assert_eq!(pair.positive, *c.walking_paths[k].last().unwrap());
        assert!((pair.angular_gap - gap).abs() < 1e-6, "{}", pair.angular_gap);
        assert!(c.members.iter().any(|m| m.image_id == pair.negative));
        assert_ne!(pair.positive, pair.negative);
    }
    assert_eq!(sel.decision_frames, [ImageId(3), ImageId(6)]);
}

#[test]
fn two_member_path_pairs_with_the_other_member() {
    let frames = [
        ShotFrame { index: 10, center: Vec3::new(0.0, 0.0, 1.5), forward: Vec3::x() },
        ShotFrame { index: 12, center: Vec3::new(0.3, 0.0, 1.5), forward: Vec3::new(1.0, 1.0, 0.0).normalize() },
    ];
    let model = frames_model(&frames);
    let points = vec![point(&model, 1), point(&model, 2)];
    let clusters = clusterize(&points, 0.75, 2, 15);
    assert_eq!(clusters.len(), 1);
    assert_eq!(clusters[0].walking_paths.len(), 1);
    let sel = select_candidates(&clusters[0], &model);
    assert_eq!(sel.pairs.len(), 1);
    assert_eq!(sel.pairs[0].positive, ImageId(2));
    assert_eq!(sel.pairs[0].negative, ImageId(1));
    assert!((sel.pairs[0].angular_gap - 45.0).abs() < 1e-6);
}

#[test]
fn far_apart_turns_stay_separate() {
    let frames = [
        ShotFrame { index: 10, center: Vec3::new(0.0, 0.0, 1.5), forward: Vec3::x() },
        ShotFrame { index: 90, center: Vec3::new(4.0, 0.0, 1.5), forward: Vec3::y() },
    ];
    let model = frames_model(&frames);
    let points = vec![point(&model, 1), point(&model, 2)];
    let clusters = clusterize(&points, 0.75, 2, 15);
    assert_eq!(clusters.len(), 2);
    for c in &clusters {
        let sel = select_candidates(c, &model);
        assert!(sel.pairs.is_empty());
        assert_eq!(sel.decision_frames.len(), 1);
    }
}
