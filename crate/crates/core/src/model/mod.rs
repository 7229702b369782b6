//! Sparse reconstruction models: cameras, posed frames and triangulated
//! points, plus their COLMAP text representation.

mod clock;
mod text;
mod validate;

use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;

use nalgebra::{Quaternion, UnitQuaternion};
use serde::{Deserialize, Serialize};

use crate::Vec3;

pub use clock::{FrameClock, FramePattern, TimestampError};
pub use text::{parse_sparse_model, write_sparse_model, ModelFile, ModelText, ParseError};
pub use validate::{validate_model, Violation, ViolationKind};

macro_rules! id_newtype {
    ($name:ident, $inner:ty) => {
        #[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
        #[serde(transparent)]
        pub struct $name(pub $inner);

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                self.0.fmt(f)
            }
        }
    };
}

id_newtype!(CameraId, u32);
id_newtype!(ImageId, u32);
id_newtype!(PointId, u64);

/// Supported intrinsic models.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum CameraModel {
    SimplePinhole,
    Pinhole,
    SimpleRadial,
}

impl CameraModel {
    pub fn name(self) -> &'static str {
        match self {
            CameraModel::SimplePinhole => "SIMPLE_PINHOLE",
            CameraModel::Pinhole => "PINHOLE",
            CameraModel::SimpleRadial => "SIMPLE_RADIAL",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        match name {
            "SIMPLE_PINHOLE" => Some(CameraModel::SimplePinhole),
            "PINHOLE" => Some(CameraModel::Pinhole),
            "SIMPLE_RADIAL" => Some(CameraModel::SimpleRadial),
            _ => None,
        }
    }

    /// Number of parameters the model carries.
    pub fn param_count(self) -> usize {
        match self {
            CameraModel::SimplePinhole => 3,
            CameraModel::Pinhole => 4,
            CameraModel::SimpleRadial => 4,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CameraIntrinsics {
    pub id: CameraId,
    pub model: CameraModel,
    pub width: u32,
    pub height: u32,
    /// SIMPLE_PINHOLE: f, cx, cy. PINHOLE: fx, fy, cx, cy. SIMPLE_RADIAL: f, cx, cy, k.
    pub params: Vec<f64>,
}

impl CameraIntrinsics {
    /// `(fx, fy, cx, cy, k)`; `k` is zero for distortion-free models.
    pub fn focal_center_k(&self) -> (f64, f64, f64, f64, f64) {
        let p = &self.params;
        match self.model {
            CameraModel::SimplePinhole => (p[0], p[0], p[1], p[2], 0.0),
            CameraModel::Pinhole => (p[0], p[1], p[2], p[3], 0.0),
            CameraModel::SimpleRadial => (p[0], p[0], p[1], p[2], p[3]),
        }
    }

    pub fn diagonal(&self) -> f64 {
        libm::hypot(self.width as f64, self.height as f64)
    }
}

/// A 2-D feature observation inside a frame.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Observation {
    pub x: f64,
    pub y: f64,
    pub point: Option<PointId>,
}

/// A registered frame: world-to-camera pose plus observations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FramePose {
    pub id: ImageId,
    /// Rotates world coordinates into camera coordinates.
    pub rotation: UnitQuaternion<f64>,
    /// Translation in the camera frame.
    pub translation: Vec3,
    pub camera_id: CameraId,
    pub name: String,
    pub observations: Vec<Observation>,
}

impl FramePose {
    /// Pose with no observations, mostly for tests and synthetic data.
    pub fn new(id: ImageId, rotation: UnitQuaternion<f64>, translation: Vec3, camera_id: CameraId, name: impl Into<String>) -> Self {
        FramePose {
            id,
            rotation,
            translation,
            camera_id,
            name: name.into(),
            observations: Vec::new(),
        }
    }
}

/// Build a unit quaternion from `(w, x, y, z)` components, normalizing.
/// Returns `None` for a zero quaternion. Input already unit to within
/// `1e-9` is kept as given, so a quaternion written at 12 significant digits
/// reads back to exactly the same components.
pub fn quat_wxyz(w: f64, x: f64, y: f64, z: f64) -> Option<UnitQuaternion<f64>> {
    let q = Quaternion::new(w, x, y, z);
    let n = q.norm();
    if !(n > 0.0) || !n.is_finite() {
        return None;
    }
    if (n - 1.0).abs() <= 1e-9 {
        return Some(UnitQuaternion::new_unchecked(q));
    }
    Some(UnitQuaternion::new_unchecked(q / n))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrackEntry {
    pub image_id: ImageId,
    pub point2d_idx: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenePoint {
    pub id: PointId,
    pub xyz: Vec3,
    pub rgb: [u8; 3],
    /// Reprojection error in pixels as reported by the reconstructor.
    pub error: f64,
    pub track: Vec<TrackEntry>,
}

/// One reconstruction, typically of a single video clip.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct SparseModel {
    pub clip_id: String,
    pub cameras: BTreeMap<CameraId, CameraIntrinsics>,
    pub frames: BTreeMap<ImageId, FramePose>,
    pub points: BTreeMap<PointId, ScenePoint>,
}

impl SparseModel {
    pub fn new(clip_id: impl Into<String>) -> Self {
        SparseModel {
            clip_id: clip_id.into(),
            ..Default::default()
        }
    }

    pub fn frame_by_name(&self, name: &str) -> Option<&FramePose> {
        self.frames.values().find(|f| f.name == name)
    }

    /// Map from frame name to image id.
    pub fn name_index(&self) -> BTreeMap<&str, ImageId> {
        self.frames.values().map(|f| (f.name.as_str(), f.id)).collect()
    }

    pub fn max_image_id(&self) -> u32 {
        self.frames.keys().next_back().map_or(0, |id| id.0)
    }

    pub fn max_point_id(&self) -> u64 {
        self.points.keys().next_back().map_or(0, |id| id.0)
    }

    pub fn max_camera_id(&self) -> u32 {
        self.cameras.keys().next_back().map_or(0, |id| id.0)
    }

    /// Number of observations linked to a 3-D point.
    pub fn linked_observation_count(&self) -> usize {
        self.frames
            .values()
            .map(|f| f.observations.iter().filter(|o| o.point.is_some()).count())
            .sum()
    }

    /// Start time in seconds encoded in a `"<start>_<end>"` clip id; merged
    /// models (`"a+b"`) report the start of their first component.
    pub fn clip_start(&self) -> Option<f64> {
        clip_start(&self.clip_id)
    }
}

/// Parse the start second out of a clip id such as `"90_190"`.
pub fn clip_start(clip_id: &str) -> Option<f64> {
    let first = clip_id.split('+').next()?;
    let (start, _) = first.split_once('_')?;
    start.parse().ok()
}
