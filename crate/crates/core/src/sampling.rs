//! Video filtering, metric scale calibration and trajectory sampling.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::camgeom::{camera_center, yaw_angle};
use crate::model::{FrameClock, ImageId, SparseModel, TimestampError};
use crate::numfmt::{interpolated, median, wrap_pi};
use crate::viewchange::temporal_nms;
use crate::Vec3;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SamplingError {
    #[error(transparent)]
    Timestamp(#[from] TimestampError),
    #[error("need at least {needed} consecutive frame pairs, found {found}")]
    InsufficientFrames { found: usize, needed: usize },
    #[error("camera never moves")]
    InsufficientMotion,
    #[error("invalid shot list: {0}")]
    InvalidShots(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Shot {
    pub start_s: f64,
    pub end_s: f64,
}

impl Shot {
    pub fn length(&self) -> f64 {
        self.end_s - self.start_s
    }
}

/// Ascending, non-overlapping shots.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ShotList {
    shots: Vec<Shot>,
}

impl ShotList {
    pub fn new(shots: Vec<Shot>) -> Result<Self, SamplingError> {
        for (i, s) in shots.iter().enumerate() {
            if !(s.end_s > s.start_s) {
                return Err(SamplingError::InvalidShots(format!("shot {i} ends before it starts")));
            }
            if i > 0 && s.start_s < shots[i - 1].end_s {
                return Err(SamplingError::InvalidShots(format!("shot {i} overlaps or precedes shot {}", i - 1)));
            }
        }
        Ok(ShotList { shots })
    }

    pub fn shots(&self) -> &[Shot] {
        &self.shots
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VideoMeta {
    pub video_id: String,
    pub duration_s: f64,
    #[serde(default = "default_fps")]
    pub fps: f64,
    #[serde(default)]
    pub title: Option<String>,
}

fn default_fps() -> f64 {
    3.0
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RejectReason {
    TooShort,
    Fragmented,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "decision", content = "reason")]
pub enum FilterDecision {
    Keep,
    Reject(RejectReason),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FilterParams {
    pub min_duration_s: f64,
    pub min_run_shots: usize,
    pub min_coverage: f64,
}

impl Default for FilterParams {
    fn default() -> Self {
        FilterParams {
            min_duration_s: 180.0,
            min_run_shots: 9,
            min_coverage: 0.8,
        }
    }
}

/// Keep a video iff it lasts at least `min_duration_s` and some run of at
/// least `min_run_shots` back-to-back shots covers more than `min_coverage`
/// of it. Shots are back-to-back when the gap between them is at most one
/// frame period.
pub fn filter_video(meta: &VideoMeta, shots: &ShotList, params: &FilterParams) -> FilterDecision {
    if !(meta.duration_s >= params.min_duration_s) {
        return FilterDecision::Reject(RejectReason::TooShort);
    }
    let tolerance = if meta.fps > 0.0 { 1.0 / meta.fps } else { 0.0 };
    let threshold = params.min_coverage * meta.duration_s;
    let s = shots.shots();
    let mut start = 0;
    while start < s.len() {
        let mut end = start + 1;
        while end < s.len() && s[end].start_s - s[end - 1].end_s <= tolerance + 1e-9 {
            end += 1;
        }
        // Shot lengths are positive, so the whole maximal run dominates any
        // of its sub-runs.
        let covered: f64 = s[start..end].iter().map(Shot::length).sum();
        if end - start >= params.min_run_shots && covered > threshold {
            return FilterDecision::Keep;
        }
        start = end;
    }
    FilterDecision::Reject(RejectReason::Fragmented)
}

/// Metric scale of a reconstruction derived from a nominal walking speed.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScaleCalibration {
    pub meters_per_unit: f64,
    pub nominal_speed_mps: f64,
    /// Median per-frame displacement in reconstruction units.
    pub median_step: f64,
    /// Fraction of consecutive pairs moving less than a tenth of the median step.
    pub stationary_fraction: f64,
}

/// A registered frame placed on the video timeline.
#[derive(Debug, Clone, PartialEq)]
pub struct TimedFrame {
    pub image_id: ImageId,
    pub name: String,
    pub index: u64,
    pub time_s: f64,
    pub center: Vec3,
}

/// Registered frames sorted by frame index.
pub fn timeline(model: &SparseModel, clock: &FrameClock) -> Result<Vec<TimedFrame>, SamplingError> {
    let mut out = model
        .frames
        .values()
        .map(|f| {
            let index = clock.pattern.index(&f.name)?;
            Ok(TimedFrame {
                image_id: f.id,
                name: f.name.clone(),
                index,
                time_s: clock.frame_timestamp(&f.name)?,
                center: camera_center(f),
            })
        })
        .collect::<Result<Vec<_>, TimestampError>>()?;
    out.sort_by_key(|f| f.index);
    Ok(out)
}

pub const MIN_CALIBRATION_PAIRS: usize = 10;

/// Scale from the median displacement between consecutive frames, after
/// dropping pairs below the 10th displacement percentile (pauses).
pub fn calibrate_scale(model: &SparseModel, clock: &FrameClock, nominal_speed_mps: f64) -> Result<ScaleCalibration, SamplingError> {
    let frames = timeline(model, clock)?;
    let mut steps: Vec<f64> = frames
        .windows(2)
        .filter(|w| w[1].index == w[0].index + 1)
        .map(|w| (w[1].center - w[0].center).norm())
        .collect();
    if steps.len() < MIN_CALIBRATION_PAIRS {
        return Err(SamplingError::InsufficientFrames {
            found: steps.len(),
            needed: MIN_CALIBRATION_PAIRS,
        });
    }
    if steps.iter().all(|&d| d < 1e-9) {
        return Err(SamplingError::InsufficientMotion);
    }
    steps.sort_by(f64::total_cmp);
    let cutoff = interpolated(&steps, 0.1).expect("non-empty");
    let moving: Vec<f64> = steps.iter().copied().filter(|&d| d >= cutoff).collect();
    let median_step = median(&moving).expect("non-empty");
    if median_step < 1e-9 {
        return Err(SamplingError::InsufficientMotion);
    }
    let stationary = steps.iter().filter(|&&d| d < 0.1 * median_step).count();
    Ok(ScaleCalibration {
        meters_per_unit: nominal_speed_mps / (median_step * clock.fps),
        nominal_speed_mps,
        median_step,
        stationary_fraction: stationary as f64 / steps.len() as f64,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrajectoryKind {
    Description,
    Action,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryFrame {
    pub image_id: ImageId,
    pub name: String,
    pub time_s: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub trajectory_id: String,
    pub kind: TrajectoryKind,
    pub frames: Vec<TrajectoryFrame>,
    /// One flag per frame for action trajectories; empty otherwise.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub decision_flags: Vec<bool>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub calibration: Option<ScaleCalibration>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DescriptionParams {
    pub period_s: f64,
    pub window_frames: usize,
    pub stride_frames: usize,
}

impl Default for DescriptionParams {
    fn default() -> Self {
        DescriptionParams {
            period_s: 2.0,
            window_frames: 7,
            stride_frames: 5,
        }
    }
}

fn to_traj_frame(f: &TimedFrame) -> TrajectoryFrame {
    TrajectoryFrame {
        image_id: f.image_id,
        name: f.name.clone(),
        time_s: f.time_s,
    }
}

/// Frames on the fixed `period_s` grid (phase anchored at frame 0), grouped
/// into sliding windows. A grid point with no registered frame within one
/// frame of it is skipped, and windows never span a gap that is off the
/// period by more than one frame.
pub fn sample_description_trajectories(
    model: &SparseModel,
    clock: &FrameClock,
    params: &DescriptionParams,
    id_prefix: &str,
) -> Result<Vec<Trajectory>, SamplingError> {
    let frames = timeline(model, clock)?;
    let (Some(first), Some(last)) = (frames.first(), frames.last()) else {
        return Ok(Vec::new());
    };
    let step = (libm::round(params.period_s * clock.fps) as u64).max(1);
    let by_index: BTreeMap<u64, &TimedFrame> = frames.iter().map(|f| (f.index, f)).collect();

    let mut samples: Vec<&TimedFrame> = Vec::new();
    let mut target = first.index.saturating_sub(1).div_ceil(step) * step;
    while target <= last.index + 1 {
        let pick = [Some(target), target.checked_sub(1), Some(target + 1)]
            .into_iter()
            .flatten()
            .find_map(|i| by_index.get(&i).copied());
        if let Some(f) = pick {
            if samples.last().is_none_or(|p| p.index < f.index) {
                samples.push(f);
            }
        }
        target += step;
    }

    let window = params.window_frames.max(2);
    let stride = params.stride_frames.max(1);
    let mut out = Vec::new();
    let mut run_start = 0;
    for i in 1..=samples.len() {
        let broken = i == samples.len() || (samples[i].index - samples[i - 1].index).abs_diff(step) > 1;
        if !broken {
            continue;
        }
        let run = &samples[run_start..i];
        let mut s = 0;
        while s + window <= run.len() {
            out.push(Trajectory {
                trajectory_id: format!("{id_prefix}-d{:04}", out.len()),
                kind: TrajectoryKind::Description,
                frames: run[s..s + window].iter().map(|f| to_traj_frame(f)).collect(),
                decision_flags: Vec::new(),
                calibration: None,
            });
            s += stride;
        }
        run_start = i;
    }
    Ok(out)
}

/// Walk the timeline emitting decision frames whenever reached and, between
/// them, the frame whose accumulated calibrated arc length since the last
/// emission is closest to `spacing_m`. The first frame is always emitted;
/// the last one too unless the camera has not moved since the previous
/// emission.
pub fn sample_action_trajectory(
    model: &SparseModel,
    clock: &FrameClock,
    cal: &ScaleCalibration,
    decision_frames: &BTreeSet<ImageId>,
    spacing_m: f64,
    trajectory_id: &str,
) -> Result<Trajectory, SamplingError> {
    let frames = timeline(model, clock)?;
    let mut emitted: Vec<usize> = Vec::new();
    if !frames.is_empty() {
        emitted.push(0);
    }
    let mut acc = 0.0;
    for i in 1..frames.len() {
        let step = (frames[i].center - frames[i - 1].center).norm() * cal.meters_per_unit;
        let before = acc;
        acc += step;
        if decision_frames.contains(&frames[i].image_id) {
            emitted.push(i);
            acc = 0.0;
            continue;
        }
        if acc < spacing_m {
            continue;
        }
        let prev_emitted = emitted.last() == Some(&(i - 1));
        if !prev_emitted && spacing_m - before < acc - spacing_m {
            emitted.push(i - 1);
            acc = step;
            if acc >= spacing_m {
                emitted.push(i);
                acc = 0.0;
            }
        } else {
            emitted.push(i);
            acc = 0.0;
        }
    }
    let last = frames.len().saturating_sub(1);
    if !frames.is_empty() && emitted.last() != Some(&last) && acc > 1e-9 {
        emitted.push(last);
    }

    Ok(Trajectory {
        trajectory_id: trajectory_id.into(),
        kind: TrajectoryKind::Action,
        decision_flags: emitted.iter().map(|&i| decision_frames.contains(&frames[i].image_id)).collect(),
        frames: emitted.iter().map(|&i| to_traj_frame(&frames[i])).collect(),
        calibration: Some(*cal),
    })
}

/// Parameters for picking decision frames at peaks of yaw rotation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DecisionParams {
    /// Yaw change is measured between the frames this many positions before
    /// and after along the timeline.
    pub half_window_frames: usize,
    pub min_turn_deg: f64,
    pub nms_window_frames: u64,
}

impl Default for DecisionParams {
    fn default() -> Self {
        DecisionParams {
            half_window_frames: 3,
            min_turn_deg: 30.0,
            nms_window_frames: 9,
        }
    }
}

/// Frames at local maxima of yaw rotation about `up`.
pub fn yaw_decision_frames(
    model: &SparseModel,
    clock: &FrameClock,
    up: &Vec3,
    params: &DecisionParams,
) -> Result<Vec<ImageId>, SamplingError> {
    let frames = timeline(model, clock)?;
    let yaws: Vec<Option<f64>> = frames
        .iter()
        .map(|f| yaw_angle(&model.frames[&f.image_id], up).ok())
        .collect();
    let w = params.half_window_frames.max(1);
    let mut indices = Vec::new();
    let mut scores = Vec::new();
    let mut ids = Vec::new();
    for i in w..frames.len().saturating_sub(w) {
        let (Some(a), Some(b)) = (yaws[i - w], yaws[i + w]) else { continue };
        let turn = wrap_pi(b - a).abs().to_degrees();
        if turn >= params.min_turn_deg {
            indices.push(frames[i].index);
            scores.push(turn);
            ids.push(frames[i].image_id);
        }
    }
    let keep = temporal_nms(&indices, &scores, params.nms_window_frames);
    Ok(ids.into_iter().zip(keep).filter_map(|(id, k)| k.then_some(id)).collect())
}
