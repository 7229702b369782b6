//! Input dataset layout and the perception sidecar formats.
//!
//! ```text
//! <data>/videos.jsonl
//! <data>/<video>/shots.jsonl
//! <data>/<video>/clips/<clip_id>/{cameras,images,points3D}.txt
//! <data>/<video>/tags.jsonl
//! <data>/<video>/detections.jsonl
//! <data>/<video>/rooms.jsonl
//! <data>/<video>/depth/<frame stem>.pgm
//! ```

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;
use walkforge_core::captioning::{DepthMap, ObjectDetection};
use walkforge_core::model::clip_start;
use walkforge_core::sampling::{SamplingError, Shot, ShotList, VideoMeta};

use crate::io::{self, IoError};
use crate::pgm::{self, PgmError};

#[derive(Debug, Error)]
pub enum SidecarError {
    #[error(transparent)]
    Io(#[from] IoError),
    #[error("{path}: {source}")]
    Pgm {
        path: PathBuf,
        #[source]
        source: PgmError,
    },
    #[error("{path}: detection for {frame} has an invalid box or score")]
    InvalidDetection { path: PathBuf, frame: String },
    #[error(transparent)]
    Shots(#[from] SamplingError),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TagRecord {
    pub frame: String,
    pub tags: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RoomRecord {
    pub frame: String,
    pub room: String,
}

pub fn videos_path(data_dir: &Path) -> PathBuf {
    data_dir.join("videos.jsonl")
}

pub fn read_videos(data_dir: &Path) -> Result<Vec<VideoMeta>, SidecarError> {
    Ok(io::read_jsonl(&videos_path(data_dir))?)
}

/// Paths of one video's inputs.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct VideoLayout {
    pub root: PathBuf,
}

impl VideoLayout {
    pub fn new(data_dir: &Path, video_id: &str) -> Self {
        VideoLayout {
            root: data_dir.join(video_id),
        }
    }

    pub fn shots(&self) -> PathBuf {
        self.root.join("shots.jsonl")
    }

    pub fn clips_dir(&self) -> PathBuf {
        self.root.join("clips")
    }

    pub fn clip(&self, clip_id: &str) -> PathBuf {
        self.clips_dir().join(clip_id)
    }

    pub fn tags(&self) -> PathBuf {
        self.root.join("tags.jsonl")
    }

    pub fn detections(&self) -> PathBuf {
        self.root.join("detections.jsonl")
    }

    pub fn rooms(&self) -> PathBuf {
        self.root.join("rooms.jsonl")
    }

    pub fn depth(&self, frame: &str) -> PathBuf {
        let stem = Path::new(frame).file_stem().map_or_else(|| frame.into(), |s| s.to_string_lossy().into_owned());
        self.root.join("depth").join(format!("{stem}.pgm"))
    }

    pub fn read_shots(&self) -> Result<ShotList, SidecarError> {
        let shots: Vec<Shot> = io::read_jsonl(&self.shots())?;
        Ok(ShotList::new(shots)?)
    }

    /// Clip directory names ordered by start second, then name.
    pub fn clip_ids(&self) -> Result<Vec<String>, SidecarError> {
        let dir = self.clips_dir();
        let entries = std::fs::read_dir(&dir).map_err(|e| {
            if e.kind() == std::io::ErrorKind::NotFound {
                IoError::MissingFile(dir.clone())
            } else {
                IoError::IoFailure { path: dir.clone(), source: e }
            }
        })?;
        let mut ids = Vec::new();
        for entry in entries {
            let entry = entry.map_err(|e| IoError::IoFailure { path: dir.clone(), source: e })?;
            if entry.path().is_dir() {
                ids.push(entry.file_name().to_string_lossy().into_owned());
            }
        }
        ids.sort_by(|a, b| {
            let sa = clip_start(a).unwrap_or(f64::INFINITY);
            let sb = clip_start(b).unwrap_or(f64::INFINITY);
            sa.total_cmp(&sb).then_with(|| a.cmp(b))
        });
        Ok(ids)
    }

    /// Tags by frame; a missing file means no tag filtering.
    pub fn read_tags(&self) -> Result<Option<BTreeMap<String, Vec<String>>>, SidecarError> {
        let path = self.tags();
        if !path.exists() {
            return Ok(None);
        }
        let records: Vec<TagRecord> = io::read_jsonl(&path)?;
        let mut out: BTreeMap<String, Vec<String>> = BTreeMap::new();
        for r in records {
            out.entry(r.frame).or_default().extend(r.tags);
        }
        Ok(Some(out))
    }

    pub fn read_detections(&self) -> Result<BTreeMap<String, Vec<ObjectDetection>>, SidecarError> {
        let path = self.detections();
        let records: Vec<ObjectDetection> = if path.exists() { io::read_jsonl(&path)? } else { Vec::new() };
        let mut out: BTreeMap<String, Vec<ObjectDetection>> = BTreeMap::new();
        for d in records {
            if !d.bbox.is_valid() || !(0.0..=1.0).contains(&d.score) {
                return Err(SidecarError::InvalidDetection { path, frame: d.frame });
            }
            out.entry(d.frame.clone()).or_default().push(d);
        }
        Ok(out)
    }

    pub fn read_rooms(&self) -> Result<BTreeMap<String, String>, SidecarError> {
        let path = self.rooms();
        let records: Vec<RoomRecord> = if path.exists() { io::read_jsonl(&path)? } else { Vec::new() };
        Ok(records.into_iter().map(|r| (r.frame, r.room)).collect())
    }

    pub fn read_depth(&self, frame: &str) -> Result<DepthMap, SidecarError> {
        let path = self.depth(frame);
        let bytes = io::read_bytes(&path)?;
        pgm::decode(frame, &bytes).map_err(|source| SidecarError::Pgm { path, source })
    }
}

/// Read a room vocabulary file: one label per non-comment line, exactly 16.
pub fn read_room_vocab(path: &Path) -> Result<Vec<String>, SidecarError> {
    let text = io::read_text(path)?;
    Ok(text
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
        .map(String::from)
        .collect())
}
