mod oracles;

use std::collections::BTreeMap;

use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use walkforge_core::captioning::{
    assign_distance, distance_bands, frame_caption, horizontal_bucket, parse_sentence, sentence, smooth_room_labels,
    BBox, DepthMap, DistanceBand, HBucket, ObjectDetection, DEFAULT_ROOM_VOCAB,
};

fn vocab() -> Vec<String> {
    DEFAULT_ROOM_VOCAB.iter().map(|s| s.to_string()).collect()
}

/// 20 x 10 raster: the left half holds the box under test, the right half
/// steers the frame percentiles to 0.2 and 0.8.
fn split_raster(left: &[(f64, usize)], right: &[(f64, usize)]) -> DepthMap {
    let expand = |spec: &[(f64, usize)]| -> Vec<f64> { spec.iter().flat_map(|&(v, n)| std::iter::repeat_n(v, n)).collect() };
    let (l, r) = (expand(left), expand(right));
    assert_eq!((l.len(), r.len()), (100, 100));
    let mut values = vec![0.0; 200];
    for y in 0..10 {
        for x in 0..10 {
            values[y * 20 + x] = l[y * 10 + x];
            values[y * 20 + 10 + x] = r[y * 10 + x];
        }
    }
    DepthMap { frame: "f".into(), width: 20, height: 10, values }
}

const LEFT_HALF: BBox = BBox { x0: 0.0, y0: 0.0, x1: 0.5, y1: 1.0 };

#[test]
fn floor_spanning_box_hits_all_bands() {
    let depth = split_raster(&[(0.05, 34), (0.5, 33), (0.95, 33)], &[(0.2, 26), (0.6, 38), (0.8, 36)]);
    let bands = distance_bands(&depth);
    assert_eq!((bands.t_near, bands.t_far), (oracles::percentile(&depth.values, 0.3), oracles::percentile(&depth.values, 0.7)));
    assert_eq!((bands.t_near, bands.t_far), (0.2, 0.8));
    let ratios = oracles::pixel_count_ratios(&LEFT_HALF, &depth, 0.2, 0.8);
    assert_eq!(ratios, [0.34, 0.33, 0.33]);
    assert_eq!(assign_distance(&LEFT_HALF, &depth, &bands), oracles::expected_bands(ratios));
    assert_eq!(assign_distance(&LEFT_HALF, &depth, &bands), DistanceBand::ALL);

    let carpet = ObjectDetection { frame: "f".into(), tag: "carpet".into(), bbox: LEFT_HALF, score: 0.9 };
    let cap = frame_caption("f", &[carpet], &depth, "living room", &vocab());
    assert_eq!(cap.sentences.len(), 3);
    assert_eq!(cap.sentences[0], "There is a carpet to the left of current spot in the near distance.");
    assert_eq!(cap.sentences[2], "There is a carpet to the left of current spot in a further distance.");
}

#[test]
fn only_majority_band_when_others_below_cutoff() {
    let depth = split_raster(&[(0.05, 28), (0.5, 29), (0.95, 43)], &[(0.2, 32), (0.6, 40), (0.8, 28)]);
    let bands = distance_bands(&depth);
    assert_eq!((bands.t_near, bands.t_far), (0.2, 0.8));
    let ratios = oracles::pixel_count_ratios(&LEFT_HALF, &depth, 0.2, 0.8);
    assert_eq!(ratios, [0.28, 0.29, 0.43]);
    assert_eq!(assign_distance(&LEFT_HALF, &depth, &bands), [DistanceBand::Further]);
}

#[test]
fn band_thresholds_on_reference_distributions() {
    let n = 1000;
    let gradient = DepthMap { frame: "g".into(), width: n, height: 1, values: (0..n).map(|i| i as f64 / (n - 1) as f64).collect() };
    let b = distance_bands(&gradient);
    assert!((b.t_near - 0.3).abs() < 2e-3 && (b.t_far - 0.7).abs() < 2e-3, "{b:?}");
    assert_eq!(b.t_near, oracles::percentile(&gradient.values, 0.3));

    let mut values = vec![0.1; 30];
    values.extend(vec![0.9; 70]);
    let bimodal = DepthMap { frame: "b".into(), width: 10, height: 10, values };
    let b = distance_bands(&bimodal);
    assert_eq!(b.t_near, 0.1);
    assert_eq!((b.t_near, b.t_far), (oracles::percentile(&bimodal.values, 0.3), oracles::percentile(&bimodal.values, 0.7)));
}

#[test]
fn small_box_in_near_band() {
    let mut values = vec![0.9; 100];
    values[0] = 0.0;
    values[1] = 0.0;
    values[10] = 0.0;
    values[11] = 0.0;
    let depth = DepthMap { frame: "f".into(), width: 10, height: 10, values };
    let bands = distance_bands(&depth);
    let b = BBox { x0: 0.0, y0: 0.0, x1: 0.2, y1: 0.2 };
    // The box covers exactly the four zero-depth pixels.
    let expected = oracles::expected_bands(oracles::pixel_count_ratios(&b, &depth, bands.t_near, bands.t_far));
    assert_eq!(expected, [DistanceBand::Near]);
    assert_eq!(assign_distance(&b, &depth, &bands), expected);
}

#[test]
fn distance_matches_pixel_oracle_on_random_rasters() {
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    for case in 0..100 {
        let w = rng.random_range(1..40);
        let h = rng.random_range(1..30);
        let levels = rng.random_range(2..8);
        let values: Vec<f64> = (0..w * h).map(|_| rng.random_range(0..levels) as f64 / (levels - 1) as f64).collect();
        let depth = DepthMap { frame: "r".into(), width: w, height: h, values };
        let bands = distance_bands(&depth);
        assert_eq!(bands.t_near, oracles::percentile(&depth.values, 0.3));
        assert_eq!(bands.t_far, oracles::percentile(&depth.values, 0.7));
        for _ in 0..10 {
            let (a, b): (f64, f64) = (rng.random(), rng.random());
            let (c, d): (f64, f64) = (rng.random(), rng.random());
            let bbox = BBox { x0: a.min(b), x1: a.max(b) + 1e-6, y0: c.min(d), y1: c.max(d) + 1e-6 };
            let bbox = BBox { x1: bbox.x1.min(1.0), y1: bbox.y1.min(1.0), ..bbox };
            let ratios = oracles::pixel_count_ratios(&bbox, &depth, bands.t_near, bands.t_far);
            assert_eq!(assign_distance(&bbox, &depth, &bands), oracles::expected_bands(ratios), "case {case} {bbox:?}");
        }
    }
}

proptest! {
    #[test]
    fn buckets_partition_the_frame(x0 in 0.0f64..1.0, w in 1e-6f64..1.0) {
        let bbox = BBox { x0, y0: 0.1, x1: (x0 + w).min(1.0), y1: 0.2 };
        let cx = (bbox.x0 + bbox.x1) / 2.0;
        let want = if cx < 0.3 { HBucket::Left } else if cx < 0.7 { HBucket::Middle } else { HBucket::Right };
        prop_assert_eq!(horizontal_bucket(&bbox), want);
    }

    #[test]
    fn sentences_round_trip(tag in "[a-z][a-z ]{0,20}[a-z]", b in 0usize..3, d in 0usize..3) {
        let s = sentence(&tag, HBucket::ALL[b], DistanceBand::ALL[d]);
        prop_assert_eq!(parse_sentence(&s), Some((tag, HBucket::ALL[b], DistanceBand::ALL[d])));
    }
}

#[test]
fn caption_examples() {
    let depth = DepthMap { frame: "f".into(), width: 10, height: 10, values: (0..100).map(|i| i as f64 / 99.0).collect() };
    let sofa = ObjectDetection { frame: "f".into(), tag: "sofa".into(), bbox: BBox { x0: 0.4, y0: 0.0, x1: 0.6, y1: 0.2 }, score: 0.8 };
    let cap = frame_caption("f", &[sofa.clone()], &depth, "living room", &vocab());
    assert_eq!(cap.sentences, ["There is a sofa to the middle of current spot in the near distance."]);

    let empty = frame_caption("f", &[], &depth, "kitchen", &vocab());
    assert!(empty.sentences.is_empty());
    assert_eq!(empty.room, "kitchen");

    let kitchen = ObjectDetection { tag: "Kitchen".into(), score: 0.99, ..sofa.clone() };
    let lamp = ObjectDetection { tag: "lamp".into(), score: 0.8, ..sofa.clone() };
    let tv = ObjectDetection { tag: "tv".into(), score: 0.95, ..sofa.clone() };
    let cap = frame_caption("f", &[sofa, kitchen, lamp, tv], &depth, "kitchen", &vocab());
    let tags: Vec<String> = cap.sentences.iter().map(|s| parse_sentence(s).unwrap().0).collect();
    assert_eq!(tags, ["tv", "lamp", "sofa"]);
}

/// Majority by explicit enumeration of each truncated window.
fn smooth_oracle(raw: &[&str], window: usize) -> Vec<String> {
    let half = window / 2;
    (0..raw.len())
        .map(|i| {
            let lo = i.saturating_sub(half);
            let hi = (i + half).min(raw.len() - 1);
            let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
            for l in &raw[lo..=hi] {
                *counts.entry(l).or_insert(0) += 1;
            }
            let best = *counts.values().max().unwrap();
            if counts[raw[i]] == best {
                raw[i].to_string()
            } else {
                counts.iter().find(|(_, c)| **c == best).unwrap().0.to_string()
            }
        })
        .collect()
}

fn strings(v: &[&str]) -> Vec<String> {
    v.iter().map(|s| s.to_string()).collect()
}

#[test]
fn smoothing_alternating_sequence() {
    let raw = ["K", "B", "K", "B", "K"];
    let got = smooth_room_labels(&strings(&raw), 3);
    assert_eq!(got.smoothed, smooth_oracle(&raw, 3));
    assert_eq!(got.smoothed, strings(&["K", "K", "B", "K", "K"]));
    assert_eq!(got.raw, strings(&raw));
}

proptest! {
    #[test]
    fn smoothing_matches_enumeration(raw in prop::collection::vec(prop::sample::select(vec!["K", "B", "L", "H"]), 1..40), half in 0usize..4) {
        let window = 2 * half + 1;
        let got = smooth_room_labels(&strings(&raw), window);
        prop_assert_eq!(got.smoothed.len(), raw.len());
        prop_assert_eq!(&got.smoothed, &smooth_oracle(&raw, window));
        prop_assert!(got.smoothed.iter().all(|s| raw.contains(&s.as_str())));
    }

    #[test]
    fn smoothing_is_idempotent_on_blocky_sequences(runs in prop::collection::vec((prop::sample::select(vec!["K", "B", "L"]), 5usize..9), 1..8)) {
        let mut raw: Vec<String> = Vec::new();
        for (label, n) in runs {
            raw.extend(std::iter::repeat_n(label.to_string(), n));
        }
        let once = smooth_room_labels(&raw, 5).smoothed;
        let twice = smooth_room_labels(&once, 5).smoothed;
        prop_assert_eq!(once, twice);
    }
}
