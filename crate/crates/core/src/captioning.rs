//! Spatial frame captions from object detections, relative depth and room
//! labels.

use alloc::borrow::ToOwned;
use alloc::collections::{BTreeMap, BTreeSet};
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;

use serde::{Deserialize, Serialize};

use crate::numfmt::nearest_rank;

/// Stand-in list of 16 room types; deployments override it from config.
pub const DEFAULT_ROOM_VOCAB: [&str; 16] = [
    "bedroom",
    "bathroom",
    "kitchen",
    "living room",
    "dining room",
    "hallway",
    "office",
    "laundry room",
    "closet",
    "garage",
    "balcony",
    "staircase",
    "basement",
    "attic",
    "entryway",
    "patio",
];

pub const UNKNOWN_ROOM: &str = "unknown";

/// Normalized `[x0, y0, x1, y1]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(from = "[f64; 4]", into = "[f64; 4]")]
pub struct BBox {
    pub x0: f64,
    pub y0: f64,
    pub x1: f64,
    pub y1: f64,
}

impl From<[f64; 4]> for BBox {
    fn from(b: [f64; 4]) -> Self {
        BBox { x0: b[0], y0: b[1], x1: b[2], y1: b[3] }
    }
}

impl From<BBox> for [f64; 4] {
    fn from(b: BBox) -> Self {
        [b.x0, b.y0, b.x1, b.y1]
    }
}

impl BBox {
    pub fn is_valid(&self) -> bool {
        let unit = |v: f64| (0.0..=1.0).contains(&v);
        self.x0 < self.x1 && self.y0 < self.y1 && [self.x0, self.y0, self.x1, self.y1].into_iter().all(unit)
    }

    pub fn center_x(&self) -> f64 {
        (self.x0 + self.x1) / 2.0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObjectDetection {
    pub frame: String,
    pub tag: String,
    pub bbox: BBox,
    pub score: f64,
}

/// Relative depth raster, row-major, 0 = nearest.
#[derive(Debug, Clone, PartialEq)]
pub struct DepthMap {
    pub frame: String,
    pub width: usize,
    pub height: usize,
    pub values: Vec<f64>,
}

impl DepthMap {
    pub fn at(&self, px: usize, py: usize) -> f64 {
        self.values[py * self.width + px]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HBucket {
    Left,
    Middle,
    Right,
}

impl HBucket {
    pub const ALL: [HBucket; 3] = [HBucket::Left, HBucket::Middle, HBucket::Right];

    pub fn word(self) -> &'static str {
        match self {
            HBucket::Left => "left",
            HBucket::Middle => "middle",
            HBucket::Right => "right",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DistanceBand {
    Near,
    Closer,
    Further,
}

impl DistanceBand {
    pub const ALL: [DistanceBand; 3] = [DistanceBand::Near, DistanceBand::Closer, DistanceBand::Further];

    pub fn phrase(self) -> &'static str {
        match self {
            DistanceBand::Near => "the near distance",
            DistanceBand::Closer => "closer distance",
            DistanceBand::Further => "a further distance",
        }
    }
}

/// Case-folded tags with room names and repeats removed, first occurrence
/// order kept.
pub fn filter_tags(tags: &[String], room_vocab: &[String]) -> Vec<String> {
    let rooms: BTreeSet<String> = room_vocab.iter().map(|r| r.to_lowercase()).collect();
    let mut seen = BTreeSet::new();
    tags.iter()
        .map(|t| t.to_lowercase())
        .filter(|t| !rooms.contains(t) && seen.insert(t.clone()))
        .collect()
}

pub fn horizontal_bucket(bbox: &BBox) -> HBucket {
    let cx = bbox.center_x();
    if cx < 0.30 {
        HBucket::Left
    } else if cx >= 0.70 {
        HBucket::Right
    } else {
        HBucket::Middle
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DepthBands {
    pub t_near: f64,
    pub t_far: f64,
}

impl DepthBands {
    pub fn classify(&self, d: f64) -> DistanceBand {
        if d < self.t_near {
            DistanceBand::Near
        } else if d < self.t_far {
            DistanceBand::Closer
        } else {
            DistanceBand::Further
        }
    }
}

/// Nearest-rank 30th and 70th percentiles of the frame's depth values.
pub fn distance_bands(depth: &DepthMap) -> DepthBands {
    let mut sorted = depth.values.clone();
    sorted.sort_by(f64::total_cmp);
    DepthBands {
        t_near: nearest_rank(&sorted, 0.30).unwrap_or(0.0),
        t_far: nearest_rank(&sorted, 0.70).unwrap_or(0.0),
    }
}

/// Pixels whose centers fall inside the box (half-open on both axes). A box
/// too small to contain any center falls back to the pixel nearest its
/// center.
pub fn bbox_pixels(bbox: &BBox, width: usize, height: usize) -> Vec<(usize, usize)> {
    let span = |lo: f64, hi: f64, n: usize| -> (usize, usize) {
        // Center (p + 0.5) / n lies in [lo, hi) iff p in [lo·n − 0.5, hi·n − 0.5).
        let first = libm::ceil(lo * n as f64 - 0.5).max(0.0) as usize;
        let end = (libm::ceil(hi * n as f64 - 0.5).max(0.0) as usize).min(n);
        (first, end)
    };
    let (x0, x1) = span(bbox.x0, bbox.x1, width);
    let (y0, y1) = span(bbox.y0, bbox.y1, height);
    if x0 < x1 && y0 < y1 {
        return (y0..y1).flat_map(|y| (x0..x1).map(move |x| (x, y))).collect();
    }
    let nearest = |c: f64, n: usize| (libm::floor(c * n as f64) as usize).min(n - 1);
    alloc::vec![(nearest(bbox.center_x(), width), nearest((bbox.y0 + bbox.y1) / 2.0, height))]
}

/// Fraction of the box's pixels in each band, near to further.
pub fn band_ratios(bbox: &BBox, depth: &DepthMap, bands: &DepthBands) -> [f64; 3] {
    let pixels = bbox_pixels(bbox, depth.width, depth.height);
    let mut counts = [0usize; 3];
    for &(x, y) in &pixels {
        counts[bands.classify(depth.at(x, y)) as usize] += 1;
    }
    counts.map(|c| c as f64 / pixels.len() as f64)
}

pub const BAND_INCLUSION_RATIO: f64 = 0.30;

/// Bands holding more than 30% of the box's pixels, or else the single
/// largest band (nearer on ties). Never empty; ascending order.
pub fn assign_distance(bbox: &BBox, depth: &DepthMap, bands: &DepthBands) -> Vec<DistanceBand> {
    let ratios = band_ratios(bbox, depth, bands);
    let picked: Vec<DistanceBand> = DistanceBand::ALL
        .into_iter()
        .filter(|b| ratios[*b as usize] > BAND_INCLUSION_RATIO)
        .collect();
    if !picked.is_empty() {
        return picked;
    }
    let mut best = DistanceBand::Near;
    for b in DistanceBand::ALL {
        if ratios[b as usize] > ratios[best as usize] {
            best = b;
        }
    }
    alloc::vec![best]
}

pub fn sentence(tag: &str, bucket: HBucket, band: DistanceBand) -> String {
    format!("There is a {tag} to the {} of current spot in {}.", bucket.word(), band.phrase())
}

/// Inverse of [`sentence`].
pub fn parse_sentence(s: &str) -> Option<(String, HBucket, DistanceBand)> {
    let rest = s.strip_prefix("There is a ")?.strip_suffix('.')?;
    let split = rest.rfind(" to the ")?;
    let (tag, rest) = (&rest[..split], &rest[split + " to the ".len()..]);
    let (word, phrase) = rest.split_once(" of current spot in ")?;
    let bucket = HBucket::ALL.into_iter().find(|b| b.word() == word)?;
    let band = DistanceBand::ALL.into_iter().find(|b| b.phrase() == phrase)?;
    (!tag.is_empty()).then(|| (tag.to_owned(), bucket, band))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FrameCaption {
    pub frame: String,
    pub room: String,
    pub sentences: Vec<String>,
}

impl fmt::Display for FrameCaption {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "Room: {}", self.room)?;
        for s in &self.sentences {
            writeln!(f, "{s}")?;
        }
        Ok(())
    }
}

/// Caption one frame. Detections tagged with a room name are dropped; the
/// rest are ordered by score (descending), then tag, with one sentence per
/// distance band.
pub fn frame_caption(
    frame: &str,
    detections: &[ObjectDetection],
    depth: &DepthMap,
    room: &str,
    room_vocab: &[String],
) -> FrameCaption {
    let bands = distance_bands(depth);
    let rooms: BTreeSet<String> = room_vocab.iter().map(|r| r.to_lowercase()).collect();
    let mut dets: Vec<(String, &ObjectDetection)> = detections
        .iter()
        .map(|d| (d.tag.to_lowercase(), d))
        .filter(|(t, _)| !rooms.contains(t))
        .collect();
    dets.sort_by(|a, b| b.1.score.total_cmp(&a.1.score).then_with(|| a.0.cmp(&b.0)));
    let mut sentences = Vec::new();
    for (tag, d) in dets {
        let bucket = horizontal_bucket(&d.bbox);
        for band in assign_distance(&d.bbox, depth, &bands) {
            sentences.push(sentence(&tag, bucket, band));
        }
    }
    FrameCaption {
        frame: frame.into(),
        room: room.into(),
        sentences,
    }
}

/// Lower-cased label when it is in the vocabulary, otherwise `unknown`.
pub fn normalize_room(label: &str, room_vocab: &[String]) -> String {
    let l = label.trim().to_lowercase();
    if room_vocab.iter().any(|r| r.to_lowercase() == l) {
        l
    } else {
        UNKNOWN_ROOM.into()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RoomSequence {
    pub raw: Vec<String>,
    pub smoothed: Vec<String>,
    pub window: usize,
}

/// Centered majority vote over `window` frames, truncated at the ends. A tie
/// keeps the frame's own label when it is among the leaders, otherwise the
/// lexicographically first leader.
pub fn smooth_room_labels(raw: &[String], window: usize) -> RoomSequence {
    assert!(window % 2 == 1, "window must be odd");
    let half = window / 2;
    let smoothed = (0..raw.len())
        .map(|i| {
            let lo = i.saturating_sub(half);
            let hi = (i + half + 1).min(raw.len());
            let mut votes: BTreeMap<&str, usize> = BTreeMap::new();
            for l in &raw[lo..hi] {
                *votes.entry(l.as_str()).or_default() += 1;
            }
            let top = votes.values().copied().max().unwrap_or(0);
            if votes.get(raw[i].as_str()) == Some(&top) {
                return raw[i].clone();
            }
            votes.into_iter().find(|(_, n)| *n == top).map(|(l, _)| l.to_owned()).unwrap_or_default()
        })
        .collect();
    RoomSequence {
        raw: raw.to_vec(),
        smoothed,
        window,
    }
}
