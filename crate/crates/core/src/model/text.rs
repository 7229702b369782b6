//! COLMAP sparse text layout (`cameras.txt`, `images.txt`, `points3D.txt`).

use alloc::collections::BTreeMap;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt::{self, Write as _};
use core::str::FromStr;

use thiserror::Error;

use super::{
    quat_wxyz, CameraId, CameraIntrinsics, CameraModel, FramePose, ImageId, Observation, PointId, ScenePoint,
    SparseModel, TrackEntry,
};
use crate::numfmt::fmt_g12;
use crate::Vec3;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ModelFile {
    Cameras,
    Images,
    Points,
}

impl ModelFile {
    pub const ALL: [ModelFile; 3] = [ModelFile::Cameras, ModelFile::Images, ModelFile::Points];

    pub fn file_name(self) -> &'static str {
        match self {
            ModelFile::Cameras => "cameras.txt",
            ModelFile::Images => "images.txt",
            ModelFile::Points => "points3D.txt",
        }
    }
}

impl fmt::Display for ModelFile {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.file_name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RefKind {
    Camera,
    Image,
    Point,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ParseError {
    #[error("{file}:{line}: {reason}")]
    MalformedLine { file: ModelFile, line: usize, reason: String },
    #[error("{file}:{line}: unsupported camera model {model}")]
    UnsupportedCameraModel { file: ModelFile, line: usize, model: String },
    #[error("dangling {kind:?} reference {id}")]
    DanglingReference { kind: RefKind, id: u64 },
}

/// The three text files of a model, in memory.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct ModelText {
    pub cameras: String,
    pub images: String,
    pub points: String,
}

impl ModelText {
    pub fn get(&self, file: ModelFile) -> &str {
        match file {
            ModelFile::Cameras => &self.cameras,
            ModelFile::Images => &self.images,
            ModelFile::Points => &self.points,
        }
    }
}

struct Cursor<'a> {
    file: ModelFile,
    line: usize,
    tokens: core::str::SplitAsciiWhitespace<'a>,
}

impl<'a> Cursor<'a> {
    fn new(file: ModelFile, line: usize, text: &'a str) -> Self {
        Cursor {
            file,
            line,
            tokens: text.split_ascii_whitespace(),
        }
    }

    fn err(&self, reason: impl Into<String>) -> ParseError {
        ParseError::MalformedLine {
            file: self.file,
            line: self.line,
            reason: reason.into(),
        }
    }

    fn next<T: FromStr>(&mut self, what: &str) -> Result<T, ParseError> {
        let tok = self.tokens.next().ok_or_else(|| self.err(alloc::format!("missing {what}")))?;
        tok.parse()
            .map_err(|_| self.err(alloc::format!("invalid {what} {tok:?}")))
    }

    fn rest(&mut self) -> Vec<&'a str> {
        self.tokens.by_ref().collect()
    }
}

/// Non-comment lines with 1-based line numbers. Blank lines are kept so the
/// two-line image records stay aligned.
fn data_lines(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim_end_matches('\r')))
        .filter(|(_, l)| !l.trim_start().starts_with('#'))
}

fn parse_cameras(text: &str) -> Result<BTreeMap<CameraId, CameraIntrinsics>, ParseError> {
    let mut cameras = BTreeMap::new();
    for (line, l) in data_lines(text).filter(|(_, l)| !l.trim().is_empty()) {
        let mut c = Cursor::new(ModelFile::Cameras, line, l);
        let id = CameraId(c.next("camera id")?);
        let model_name: String = c.next("camera model")?;
        let model = CameraModel::from_name(&model_name).ok_or_else(|| ParseError::UnsupportedCameraModel {
            file: ModelFile::Cameras,
            line,
            model: model_name.clone(),
        })?;
        let width = c.next("width")?;
        let height = c.next("height")?;
        let params = c
            .rest()
            .into_iter()
            .map(|t| t.parse::<f64>().map_err(|_| c.err(alloc::format!("invalid parameter {t:?}"))))
            .collect::<Result<Vec<_>, _>>()?;
        if params.len() != model.param_count() {
            return Err(c.err(alloc::format!(
                "{} expects {} parameters, found {}",
                model.name(),
                model.param_count(),
                params.len()
            )));
        }
        let cam = CameraIntrinsics {
            id,
            model,
            width,
            height,
            params,
        };
        if cameras.insert(id, cam).is_some() {
            return Err(c.err(alloc::format!("duplicate camera id {id}")));
        }
    }
    Ok(cameras)
}

fn parse_images(text: &str) -> Result<BTreeMap<ImageId, FramePose>, ParseError> {
    let mut frames = BTreeMap::new();
    let mut lines = data_lines(text).peekable();
    loop {
        // Skip blank separators between records; a blank line is only
        // meaningful as the (empty) observation line of a record.
        while lines.peek().is_some_and(|(_, l)| l.trim().is_empty()) {
            lines.next();
        }
        let Some((line, header)) = lines.next() else { break };
        let mut c = Cursor::new(ModelFile::Images, line, header);
        let id = ImageId(c.next("image id")?);
        let mut q = [0.0f64; 4];
        for (slot, what) in q.iter_mut().zip(["qw", "qx", "qy", "qz"]) {
            *slot = c.next(what)?;
        }
        let mut t = [0.0f64; 3];
        for (slot, what) in t.iter_mut().zip(["tx", "ty", "tz"]) {
            *slot = c.next(what)?;
        }
        let camera_id = CameraId(c.next("camera id")?);
        let name = c.rest().join(" ");
        if name.is_empty() {
            return Err(c.err("missing image name"));
        }
        let rotation = quat_wxyz(q[0], q[1], q[2], q[3]).ok_or_else(|| c.err("degenerate quaternion"))?;

        let observations = match lines.next() {
            None => Vec::new(),
            Some((obs_line, obs_text)) => parse_observations(obs_line, obs_text)?,
        };
        let pose = FramePose {
            id,
            rotation,
            translation: Vec3::new(t[0], t[1], t[2]),
            camera_id,
            name,
            observations,
        };
        if frames.insert(id, pose).is_some() {
            return Err(c.err(alloc::format!("duplicate image id {id}")));
        }
    }
    Ok(frames)
}

fn parse_observations(line: usize, text: &str) -> Result<Vec<Observation>, ParseError> {
    let err = |reason: String| ParseError::MalformedLine {
        file: ModelFile::Images,
        line,
        reason,
    };
    let tokens: Vec<&str> = text.split_ascii_whitespace().collect();
    if tokens.len() % 3 != 0 {
        return Err(err(alloc::format!(
            "observation line has {} tokens, expected triples",
            tokens.len()
        )));
    }
    tokens
        .chunks_exact(3)
        .map(|t| {
            let x: f64 = t[0].parse().map_err(|_| err(alloc::format!("invalid x {:?}", t[0])))?;
            let y: f64 = t[1].parse().map_err(|_| err(alloc::format!("invalid y {:?}", t[1])))?;
            let raw: i64 = t[2]
                .parse()
                .map_err(|_| err(alloc::format!("invalid point id {:?}", t[2])))?;
            let point = match raw {
                -1 => None,
                id if id >= 0 => Some(PointId(id as u64)),
                id => return Err(err(alloc::format!("negative point id {id}"))),
            };
            Ok(Observation { x, y, point })
        })
        .collect()
}

fn parse_points(text: &str) -> Result<BTreeMap<PointId, ScenePoint>, ParseError> {
    let mut points = BTreeMap::new();
    for (line, l) in data_lines(text).filter(|(_, l)| !l.trim().is_empty()) {
        let mut c = Cursor::new(ModelFile::Points, line, l);
        let id = PointId(c.next("point id")?);
        let x = c.next("x")?;
        let y = c.next("y")?;
        let z = c.next("z")?;
        let rgb = [c.next("r")?, c.next("g")?, c.next("b")?];
        let error = c.next("error")?;
        let rest = c.rest();
        if rest.len() % 2 != 0 {
            return Err(c.err("track must be (image id, point2d index) pairs"));
        }
        let track = rest
            .chunks_exact(2)
            .map(|p| {
                let image_id = p[0].parse().map_err(|_| c.err(alloc::format!("invalid track image {:?}", p[0])))?;
                let point2d_idx = p[1].parse().map_err(|_| c.err(alloc::format!("invalid track index {:?}", p[1])))?;
                Ok(TrackEntry {
                    image_id: ImageId(image_id),
                    point2d_idx,
                })
            })
            .collect::<Result<Vec<_>, ParseError>>()?;
        let point = ScenePoint {
            id,
            xyz: Vec3::new(x, y, z),
            rgb,
            error,
            track,
        };
        if points.insert(id, point).is_some() {
            return Err(c.err(alloc::format!("duplicate point id {id}")));
        }
    }
    Ok(points)
}

/// Parse the three model files and cross-link them. Quaternions are
/// normalized on load. One-sided track links are left for
/// [`validate_model`](super::validate_model) to report.
pub fn parse_sparse_model(clip_id: &str, cameras: &str, images: &str, points: &str) -> Result<SparseModel, ParseError> {
    let model = SparseModel {
        clip_id: clip_id.to_string(),
        cameras: parse_cameras(cameras)?,
        frames: parse_images(images)?,
        points: parse_points(points)?,
    };
    for frame in model.frames.values() {
        if !model.cameras.contains_key(&frame.camera_id) {
            return Err(ParseError::DanglingReference {
                kind: RefKind::Camera,
                id: frame.camera_id.0 as u64,
            });
        }
        for pid in frame.observations.iter().filter_map(|o| o.point) {
            if !model.points.contains_key(&pid) {
                return Err(ParseError::DanglingReference {
                    kind: RefKind::Point,
                    id: pid.0,
                });
            }
        }
    }
    for point in model.points.values() {
        for entry in &point.track {
            if !model.frames.contains_key(&entry.image_id) {
                return Err(ParseError::DanglingReference {
                    kind: RefKind::Image,
                    id: entry.image_id.0 as u64,
                });
            }
        }
    }
    Ok(model)
}

/// Render a model as the three text files, reals at twelve significant
/// digits.
pub fn write_sparse_model(model: &SparseModel) -> ModelText {
    let mut out = ModelText::default();

    let c = &mut out.cameras;
    c.push_str("# Camera list with one line of data per camera:\n");
    c.push_str("#   CAMERA_ID, MODEL, WIDTH, HEIGHT, PARAMS[]\n");
    let _ = writeln!(c, "# Number of cameras: {}", model.cameras.len());
    for cam in model.cameras.values() {
        let _ = write!(c, "{} {} {} {}", cam.id, cam.model.name(), cam.width, cam.height);
        for p in &cam.params {
            let _ = write!(c, " {}", fmt_g12(*p));
        }
        c.push('\n');
    }

    let im = &mut out.images;
    let n_obs: usize = model.frames.values().map(|f| f.observations.len()).sum();
    let mean_obs = if model.frames.is_empty() {
        0.0
    } else {
        n_obs as f64 / model.frames.len() as f64
    };
    im.push_str("# Image list with two lines of data per image:\n");
    im.push_str("#   IMAGE_ID, QW, QX, QY, QZ, TX, TY, TZ, CAMERA_ID, NAME\n");
    im.push_str("#   POINTS2D[] as (X, Y, POINT3D_ID)\n");
    let _ = writeln!(
        im,
        "# Number of images: {}, mean observations per image: {}",
        model.frames.len(),
        fmt_g12(mean_obs)
    );
    for f in model.frames.values() {
        let q = f.rotation.quaternion();
        let t = &f.translation;
        let _ = writeln!(
            im,
            "{} {} {} {} {} {} {} {} {} {}",
            f.id,
            fmt_g12(q.w),
            fmt_g12(q.i),
            fmt_g12(q.j),
            fmt_g12(q.k),
            fmt_g12(t.x),
            fmt_g12(t.y),
            fmt_g12(t.z),
            f.camera_id,
            f.name
        );
        let mut first = true;
        for o in &f.observations {
            if !first {
                im.push(' ');
            }
            first = false;
            let pid = o.point.map_or(-1i64, |p| p.0 as i64);
            let _ = write!(im, "{} {} {}", fmt_g12(o.x), fmt_g12(o.y), pid);
        }
        im.push('\n');
    }

    let pt = &mut out.points;
    let track_total: usize = model.points.values().map(|p| p.track.len()).sum();
    let mean_track = if model.points.is_empty() {
        0.0
    } else {
        track_total as f64 / model.points.len() as f64
    };
    pt.push_str("# 3D point list with one line of data per point:\n");
    pt.push_str("#   POINT3D_ID, X, Y, Z, R, G, B, ERROR, TRACK[] as (IMAGE_ID, POINT2D_IDX)\n");
    let _ = writeln!(
        pt,
        "# Number of points: {}, mean track length: {}",
        model.points.len(),
        fmt_g12(mean_track)
    );
    for p in model.points.values() {
        let _ = write!(
            pt,
            "{} {} {} {} {} {} {} {}",
            p.id,
            fmt_g12(p.xyz.x),
            fmt_g12(p.xyz.y),
            fmt_g12(p.xyz.z),
            p.rgb[0],
            p.rgb[1],
            p.rgb[2],
            fmt_g12(p.error)
        );
        for e in &p.track {
            let _ = write!(pt, " {} {}", e.image_id, e.point2d_idx);
        }
        pt.push('\n');
    }
    out
}
