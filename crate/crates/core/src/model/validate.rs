use alloc::collections::BTreeSet;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use super::{CameraModel, SparseModel};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ViolationKind {
    NonPositiveSize,
    BadCameraParams,
    NonUnitQuaternion,
    UnknownCamera,
    DanglingObservation,
    UnknownTrackImage,
    /// A track entry whose observation does not point back at the point, or
    /// an observation whose point's track does not list it.
    TrackMismatch,
    NegativeError,
    DuplicateName,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Violation {
    pub kind: ViolationKind,
    /// Camera, image or point id the violation is attached to.
    pub id: u64,
}

/// Check every structural invariant of a model. The result is empty iff the
/// model is consistent.
pub fn validate_model(model: &SparseModel) -> Vec<Violation> {
    let mut out = BTreeSet::new();
    let mut flag = |kind, id: u64| {
        out.insert(Violation { kind, id });
    };

    for cam in model.cameras.values() {
        let id = cam.id.0 as u64;
        if cam.width == 0 || cam.height == 0 {
            flag(ViolationKind::NonPositiveSize, id);
        }
        let focal_ok = match cam.model {
            CameraModel::Pinhole => cam.params.len() == 4 && cam.params[0] > 0.0 && cam.params[1] > 0.0,
            _ => cam.params.len() == cam.model.param_count() && cam.params[0] > 0.0,
        };
        if !focal_ok || cam.params.iter().any(|p| !p.is_finite()) {
            flag(ViolationKind::BadCameraParams, id);
        }
    }

    let mut names = BTreeSet::new();
    for frame in model.frames.values() {
        let id = frame.id.0 as u64;
        if (frame.rotation.quaternion().norm() - 1.0).abs() > 1e-6 {
            flag(ViolationKind::NonUnitQuaternion, id);
        }
        if !model.cameras.contains_key(&frame.camera_id) {
            flag(ViolationKind::UnknownCamera, id);
        }
        if !names.insert(frame.name.as_str()) {
            flag(ViolationKind::DuplicateName, id);
        }
        for (idx, obs) in frame.observations.iter().enumerate() {
            let Some(pid) = obs.point else { continue };
            match model.points.get(&pid) {
                None => flag(ViolationKind::DanglingObservation, id),
                Some(p) => {
                    let listed = p
                        .track
                        .iter()
                        .any(|e| e.image_id == frame.id && e.point2d_idx as usize == idx);
                    if !listed {
                        flag(ViolationKind::TrackMismatch, pid.0);
                    }
                }
            }
        }
    }

    for point in model.points.values() {
        if !(point.error >= 0.0) {
            flag(ViolationKind::NegativeError, point.id.0);
        }
        for entry in &point.track {
            match model.frames.get(&entry.image_id) {
                None => flag(ViolationKind::UnknownTrackImage, point.id.0),
                Some(frame) => {
                    let back = frame
                        .observations
                        .get(entry.point2d_idx as usize)
                        .and_then(|o| o.point);
                    if back != Some(point.id) {
                        flag(ViolationKind::TrackMismatch, point.id.0);
                    }
                }
            }
        }
    }
    out.into_iter().collect()
}
