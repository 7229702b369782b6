//! Stage orchestration over a run directory.
//!
//! ```text
//! <run>/manifest.json
//! <run>/llm_log.jsonl
//! <run>/metrics.json
//! <run>/spl_histogram.svg            (with --plot)
//! <run>/videos/<video>/...           per-stage outputs
//! ```

use std::collections::{BTreeMap, BTreeSet};
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;
use tracing::{info, warn};
use walkforge_core::camgeom::{estimate_up_axis, UpAxisEstimate};
use walkforge_core::captioning::{
    filter_tags, frame_caption, normalize_room, smooth_room_labels, DepthMap, FrameCaption, RoomSequence,
    DEFAULT_ROOM_VOCAB, UNKNOWN_ROOM,
};
use walkforge_core::episodes::{
    compute_metrics, emit_action_episode, replay_policy, score_episodes, ActionEpisode, CandidateSources,
    EpisodeError, EpisodeParams, EpisodeScore, NavMetrics, Policy, PolicyTrace,
};
use walkforge_core::merge::{merge_all, MergeParams, MergeReport};
use walkforge_core::model::{validate_model, ImageId, SparseModel};
use walkforge_core::promptgen::{
    assemble_prompt, ingest_response, prompt_digest, render_prompt, PromptBundle, PromptExample, PromptTemplate,
    Provenance, TrajectoryRecord,
};
use walkforge_core::sampling::{
    calibrate_scale, filter_video, sample_action_trajectory, sample_description_trajectories, yaw_decision_frames,
    DecisionParams, DescriptionParams, FilterDecision, FilterParams, ScaleCalibration, Trajectory, VideoMeta,
};
use walkforge_core::viewchange::{
    clusterize, select_candidates, significant_points, CandidatePair, ViewChangeParams, ViewChangePoint, ViewCluster,
};

use crate::config::{LlmMode, PipelineConfig};
use crate::io::{self, IoError};
use crate::llm::{Completer, HttpClient, LlmError, LlmLogEntry, StubClient};
use crate::manifest::{Counts, RunManifest, Stage, StageStatus, VideoState};
use crate::plot;
use crate::sidecar::{self, VideoLayout};

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("stage {stage} needs {needs} to be complete for video {video}")]
    PrerequisiteMissing { stage: Stage, needs: Stage, video: String },
    #[error("video {0} is not listed in videos.jsonl")]
    UnknownVideo(String),
    #[error("run directory belongs to a different configuration (digest {found}, expected {expected})")]
    ConfigMismatch { found: String, expected: String },
    #[error("room vocabulary must have exactly 16 entries, found {0}")]
    RoomVocab(usize),
    #[error(transparent)]
    Io(#[from] IoError),
    #[error(transparent)]
    Sidecar(#[from] sidecar::SidecarError),
    #[error("prompt template: {0}")]
    Template(String),
    #[error(transparent)]
    Metrics(#[from] EpisodeError),
}

/// Why one video's stage failed.
#[derive(Debug, Error)]
pub enum StageFailure {
    #[error(transparent)]
    Io(#[from] IoError),
    #[error(transparent)]
    Sidecar(#[from] sidecar::SidecarError),
    #[error("{0}")]
    Other(String),
}

fn fail(msg: impl std::fmt::Display) -> StageFailure {
    StageFailure::Other(msg.to_string())
}

/// Test hook: make writing the outputs of `stage` for `video` fail part way.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FaultInjection {
    pub stage: Stage,
    pub video: String,
}

#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    /// Videos to process; `None` means every listed video.
    pub videos: Option<Vec<String>>,
    /// Parallel videos; 0 lets the thread pool decide.
    pub jobs: usize,
    pub plot: bool,
    pub fault: Option<FaultInjection>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct StageReport {
    pub stage: Option<Stage>,
    pub processed: Vec<String>,
    pub failed: Vec<(String, String)>,
    pub skipped: Vec<String>,
}

impl StageReport {
    pub fn is_noop(&self) -> bool {
        self.processed.is_empty() && self.failed.is_empty()
    }
}

/// Overall exit status over the selected videos.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RunStatus {
    Ok,
    Partial,
    Failed,
}

impl RunStatus {
    pub fn exit_code(self) -> i32 {
        match self {
            RunStatus::Ok => 0,
            RunStatus::Failed => 1,
            RunStatus::Partial => 2,
        }
    }
}

pub fn video_dir(run_dir: &Path, video_id: &str) -> PathBuf {
    run_dir.join("videos").join(video_id)
}

pub fn manifest_path(run_dir: &Path) -> PathBuf {
    run_dir.join("manifest.json")
}

pub fn llm_log_path(run_dir: &Path) -> PathBuf {
    run_dir.join("llm_log.jsonl")
}

pub mod files {
    pub const INGEST: &str = "ingest.json";
    pub const MERGE_AUDIT: &str = "merge_audit.jsonl";
    pub const MERGE_REPORT: &str = "merge_report.json";
    pub const MODEL_DIR: &str = "model";
    pub const CALIBRATION: &str = "calibration.json";
    pub const DESCRIPTION: &str = "description_trajectories.jsonl";
    pub const YAW_DECISIONS: &str = "yaw_decisions.json";
    pub const VIEW_POINTS: &str = "view_points.jsonl";
    pub const CLUSTERS: &str = "clusters.jsonl";
    pub const PAIRS: &str = "pairs.jsonl";
    pub const DECISIONS: &str = "decision_frames.json";
    pub const ACTION: &str = "action_trajectories.jsonl";
    pub const CAPTIONS: &str = "captions.jsonl";
    pub const ROOMS: &str = "rooms.json";
    pub const PROMPTS: &str = "prompts.jsonl";
    pub const RECORDS: &str = "records.jsonl";
    pub const EPISODES: &str = "episodes.jsonl";
    pub const TRACES: &str = "traces.jsonl";
    pub const SCORES: &str = "scores.jsonl";
    pub const METRICS: &str = "metrics.json";
    pub const HISTOGRAM: &str = "spl_histogram.svg";
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClipSummary {
    pub clip_id: String,
    pub frames: usize,
    pub points: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IngestSummary {
    pub video_id: String,
    pub duration_s: f64,
    pub shots: usize,
    #[serde(flatten)]
    pub decision: FilterDecision,
    pub clips: Vec<ClipSummary>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationFile {
    pub calibration: ScaleCalibration,
    pub up: UpAxisEstimate,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecisionFrames {
    /// Yaw peaks plus walking-path positives, ascending.
    pub frames: Vec<ImageId>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoomsFile {
    pub frames: Vec<String>,
    #[serde(flatten)]
    pub sequence: RoomSequence,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PromptLine {
    pub trajectory_id: String,
    pub digest: String,
    pub prompt: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceLine {
    #[serde(flatten)]
    pub policy: Policy,
    #[serde(flatten)]
    pub trace: PolicyTrace,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreLine {
    #[serde(flatten)]
    pub policy: Policy,
    #[serde(flatten)]
    pub score: EpisodeScore,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyMetrics {
    pub policy: Policy,
    #[serde(flatten)]
    pub metrics: NavMetrics,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsFile {
    pub videos: Vec<String>,
    pub policies: Vec<PolicyMetrics>,
}

/// Outputs of one stage for one video, committed together.
#[derive(Default)]
struct StageOutput {
    files: Vec<(String, Vec<u8>)>,
    counts: Option<Box<dyn FnOnce(&mut Counts) + Send>>,
    skipped: Option<String>,
}

impl StageOutput {
    fn json<T: Serialize>(&mut self, name: &str, value: &T) {
        let mut text = serde_json::to_vec_pretty(value).expect("serializable");
        text.push(b'\n');
        self.files.push((name.into(), text));
    }

    fn jsonl<T: Serialize>(&mut self, name: &str, items: &[T]) {
        let mut out = Vec::new();
        for item in items {
            serde_json::to_writer(&mut out, item).expect("serializable");
            out.push(b'\n');
        }
        self.files.push((name.into(), out));
    }

    fn counts(&mut self, f: impl FnOnce(&mut Counts) + Send + 'static) {
        self.counts = Some(Box::new(f));
    }
}

/// Write every file to a temporary sibling first and rename only once all of
/// them are complete, so a failure leaves no new output visible.
fn commit(dir: &Path, files: &[(String, Vec<u8>)], fault: bool) -> Result<(), IoError> {
    let mut staged = Vec::with_capacity(files.len());
    for (k, (name, bytes)) in files.iter().enumerate() {
        let target = dir.join(name);
        let parent = target.parent().expect("inside the video dir").to_path_buf();
        let wrap = |source| IoError::IoFailure { path: target.clone(), source };
        std::fs::create_dir_all(&parent).map_err(wrap)?;
        let mut tmp = tempfile::Builder::new().prefix(".tmp-").tempfile_in(&parent).map_err(wrap)?;
        if fault && k == files.len() / 2 {
            tmp.write_all(&bytes[..bytes.len() / 2]).map_err(wrap)?;
            return Err(wrap(std::io::Error::other("injected fault")));
        }
        tmp.write_all(bytes).map_err(wrap)?;
        tmp.as_file().sync_all().map_err(wrap)?;
        staged.push((tmp, target));
    }
    for (tmp, target) in staged {
        tmp.persist(&target).map_err(|e| IoError::IoFailure { path: target.clone(), source: e.error })?;
    }
    Ok(())
}

/// Shared, read-only state for one stage invocation.
struct Ctx<'a> {
    cfg: &'a PipelineConfig,
    vocab: Vec<String>,
    template: Option<PromptTemplate>,
    completer: Option<Box<dyn Completer>>,
    llm_pool: Option<rayon::ThreadPool>,
}

impl Ctx<'_> {
    fn out_dir(&self, video: &str) -> PathBuf {
        video_dir(&self.cfg.run_dir, video)
    }

    fn layout(&self, video: &str) -> VideoLayout {
        VideoLayout::new(&self.cfg.data_dir, video)
    }

    fn read_model(&self, video: &str) -> Result<SparseModel, StageFailure> {
        Ok(io::read_model_dir(&self.out_dir(video).join(files::MODEL_DIR), video)?)
    }

    fn read<T: serde::de::DeserializeOwned>(&self, video: &str, name: &str) -> Result<T, StageFailure> {
        Ok(io::read_json(&self.out_dir(video).join(name))?)
    }

    fn read_lines<T: serde::de::DeserializeOwned>(&self, video: &str, name: &str) -> Result<Vec<T>, StageFailure> {
        Ok(io::read_jsonl(&self.out_dir(video).join(name))?)
    }
}

pub fn load_room_vocab(cfg: &PipelineConfig) -> Result<Vec<String>, PipelineError> {
    let vocab = match &cfg.room_vocab {
        Some(p) => sidecar::read_room_vocab(p)?,
        None => DEFAULT_ROOM_VOCAB.iter().map(|s| (*s).into()).collect(),
    };
    if vocab.len() != 16 {
        return Err(PipelineError::RoomVocab(vocab.len()));
    }
    Ok(vocab)
}

fn read_template_file(path: &Path) -> Result<String, PipelineError> {
    let text = io::read_text(path)?;
    Ok(text.lines().filter(|l| !l.starts_with('#')).collect::<Vec<_>>().join("\n").trim().to_string())
}

/// Template from `instruction.txt` and `example{1,2}_{input,output}.txt`.
/// Lines starting with `#` are notes and are dropped.
pub fn load_template(dir: &Path) -> Result<PromptTemplate, PipelineError> {
    let instruction = read_template_file(&dir.join("instruction.txt"))?;
    let mut examples = Vec::new();
    for i in 1..=2 {
        examples.push(PromptExample {
            input: read_template_file(&dir.join(format!("example{i}_input.txt")))?,
            output: read_template_file(&dir.join(format!("example{i}_output.txt")))?,
        });
    }
    PromptTemplate::new(instruction, examples).map_err(|e| PipelineError::Template(e.to_string()))
}

fn make_completer(cfg: &PipelineConfig) -> Box<dyn Completer> {
    match cfg.llm_mode {
        LlmMode::Stub => Box::new(StubClient::new(&cfg.stub_dir)),
        LlmMode::Live => Box::new(HttpClient::new(
            cfg.llm_endpoint.clone().unwrap_or_default(),
            cfg.llm_model.clone().unwrap_or_default(),
            cfg.llm_temperature.unwrap_or_default(),
        )),
    }
}

fn provenance_timestamp(cfg: &PipelineConfig) -> String {
    if cfg.provenance_timestamp == "now" {
        let secs = std::time::SystemTime::now()
            .duration_since(std::time::UNIX_EPOCH)
            .map(|d| d.as_secs())
            .unwrap_or_default();
        format!("unix:{secs}")
    } else {
        cfg.provenance_timestamp.clone()
    }
}

pub fn description_params(cfg: &PipelineConfig) -> DescriptionParams {
    DescriptionParams {
        period_s: cfg.sample_period_s,
        window_frames: cfg.window_frames,
        stride_frames: cfg.stride_frames,
    }
}

pub fn view_params(cfg: &PipelineConfig) -> ViewChangeParams {
    ViewChangeParams {
        radius_m: cfg.radius_m,
        threshold_deg: cfg.threshold_deg,
        nms_window_frames: cfg.nms_window_frames,
        eps_m: cfg.eps_m,
        min_pts: cfg.min_pts,
        gap_frames: cfg.gap_frames,
    }
}

pub fn merge_params(cfg: &PipelineConfig) -> MergeParams {
    MergeParams {
        min_shared: cfg.merge_min_shared,
        clock: cfg.clock(),
    }
}

fn read_clips(ctx: &Ctx, video: &str) -> Result<Vec<SparseModel>, StageFailure> {
    let layout = ctx.layout(video);
    let mut models = Vec::new();
    for clip in layout.clip_ids()? {
        models.push(io::read_model_dir(&layout.clip(&clip), &clip)?);
    }
    Ok(models)
}

fn stage_ingest(ctx: &Ctx, meta: &VideoMeta) -> Result<StageOutput, StageFailure> {
    let layout = ctx.layout(&meta.video_id);
    let shots = layout.read_shots()?;
    let params = FilterParams {
        min_duration_s: ctx.cfg.min_duration_s,
        min_run_shots: ctx.cfg.min_shots,
        min_coverage: ctx.cfg.shot_coverage,
    };
    let decision = filter_video(meta, &shots, &params);
    let mut out = StageOutput::default();
    let mut clips = Vec::new();
    if let FilterDecision::Reject(reason) = decision {
        out.skipped = Some(format!("rejected by filter: {}", serde_json::to_string(&reason).unwrap_or_default().trim_matches('"')));
    } else {
        let models = read_clips(ctx, &meta.video_id)?;
        if models.is_empty() {
            return Err(fail("no clips"));
        }
        for m in &models {
            let violations = validate_model(m);
            if let Some(v) = violations.first() {
                return Err(fail(format!("clip {}: {} violations, first {:?}", m.clip_id, violations.len(), v)));
            }
            clips.push(ClipSummary {
                clip_id: m.clip_id.clone(),
                frames: m.frames.len(),
                points: m.points.len(),
            });
        }
    }
    out.json(
        files::INGEST,
        &IngestSummary {
            video_id: meta.video_id.clone(),
            duration_s: meta.duration_s,
            shots: shots.shots().len(),
            decision,
            clips,
        },
    );
    Ok(out)
}

fn stage_merge(ctx: &Ctx, meta: &VideoMeta) -> Result<StageOutput, StageFailure> {
    let models = read_clips(ctx, &meta.video_id)?;
    let (merged, report) = merge_all(models, &merge_params(ctx.cfg)).map_err(fail)?;
    // The largest component (earliest on ties) becomes the video's model.
    let main = merged
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.frames.len().cmp(&b.1.frames.len()).then(b.0.cmp(&a.0)))
        .map(|(_, m)| m)
        .ok_or_else(|| fail("nothing to merge"))?;
    let mut out = StageOutput::default();
    out.jsonl(files::MERGE_AUDIT, &report.steps);
    out.json(files::MERGE_REPORT, &report);
    let text = walkforge_core::model::write_sparse_model(main);
    for f in walkforge_core::model::ModelFile::ALL {
        out.files.push((format!("{}/{}", files::MODEL_DIR, f.file_name()), text.get(f).as_bytes().to_vec()));
    }
    let n = merged.len();
    out.counts(move |c| c.merged_models = n);
    Ok(out)
}

fn stage_sample(ctx: &Ctx, meta: &VideoMeta) -> Result<StageOutput, StageFailure> {
    let model = ctx.read_model(&meta.video_id)?;
    let clock = ctx.cfg.clock();
    let calibration = calibrate_scale(&model, &clock, ctx.cfg.nominal_speed_mps).map_err(fail)?;
    let up = estimate_up_axis(&model).map_err(fail)?;
    let description =
        sample_description_trajectories(&model, &clock, &description_params(ctx.cfg), &meta.video_id).map_err(fail)?;
    let yaw = yaw_decision_frames(
        &model,
        &clock,
        &up.up,
        &DecisionParams {
            half_window_frames: ctx.cfg.yaw_half_window_frames,
            min_turn_deg: ctx.cfg.yaw_threshold_deg,
            nms_window_frames: ctx.cfg.decision_nms_frames,
        },
    )
    .map_err(fail)?;
    let mut out = StageOutput::default();
    out.json(files::CALIBRATION, &CalibrationFile { calibration, up });
    out.jsonl(files::DESCRIPTION, &description);
    out.json(files::YAW_DECISIONS, &DecisionFrames { frames: yaw });
    let n = description.len();
    out.counts(move |c| {
        c.description_trajectories = n;
        c.trajectories = c.description_trajectories + c.action_trajectories;
    });
    Ok(out)
}

/// The frames of `model` whose timestamps fall within `[t0, t1]`.
fn time_slice(model: &SparseModel, clock: &walkforge_core::model::FrameClock, t0: f64, t1: f64) -> SparseModel {
    let mut out = SparseModel::new(model.clip_id.clone());
    out.cameras = model.cameras.clone();
    out.frames = model
        .frames
        .iter()
        .filter(|(_, f)| clock.frame_timestamp(&f.name).is_ok_and(|t| t >= t0 - 1e-9 && t <= t1 + 1e-9))
        .map(|(id, f)| (*id, f.clone()))
        .collect();
    out
}

fn stage_detect(ctx: &Ctx, meta: &VideoMeta) -> Result<StageOutput, StageFailure> {
    let video = &meta.video_id;
    let model = ctx.read_model(video)?;
    let clock = ctx.cfg.clock();
    let cal: CalibrationFile = ctx.read(video, files::CALIBRATION)?;
    let description: Vec<Trajectory> = ctx.read_lines(video, files::DESCRIPTION)?;
    let yaw: DecisionFrames = ctx.read(video, files::YAW_DECISIONS)?;

    let params = view_params(ctx.cfg);
    let points: Vec<ViewChangePoint> = significant_points(&model, &clock, &cal.calibration, &params).map_err(fail)?;
    let clusters = clusterize(&points, params.eps_m, params.min_pts, params.gap_frames);
    let mut pairs: Vec<CandidatePair> = Vec::new();
    let mut decisions: BTreeSet<ImageId> = yaw.frames.iter().copied().collect();
    for c in &clusters {
        let sel = select_candidates(c, &model);
        pairs.extend(sel.pairs);
        decisions.extend(sel.decision_frames);
    }

    let mut actions = Vec::new();
    for d in &description {
        let (Some(first), Some(last)) = (d.frames.first(), d.frames.last()) else { continue };
        let slice = time_slice(&model, &clock, first.time_s, last.time_s);
        let id = format!("{}-a", d.trajectory_id);
        let t = sample_action_trajectory(&slice, &clock, &cal.calibration, &decisions, ctx.cfg.spacing_m, &id)
            .map_err(fail)?;
        actions.push(t);
    }

    let mut out = StageOutput::default();
    out.jsonl(files::VIEW_POINTS, &points);
    out.jsonl(files::CLUSTERS, &clusters);
    out.jsonl(files::PAIRS, &pairs);
    out.json(files::DECISIONS, &DecisionFrames { frames: decisions.into_iter().collect() });
    out.jsonl(files::ACTION, &actions);
    let n = actions.len();
    out.counts(move |c| {
        c.action_trajectories = n;
        c.trajectories = c.description_trajectories + c.action_trajectories;
    });
    Ok(out)
}

fn stage_caption(ctx: &Ctx, meta: &VideoMeta) -> Result<StageOutput, StageFailure> {
    let video = &meta.video_id;
    let layout = ctx.layout(video);
    let description: Vec<Trajectory> = ctx.read_lines(video, files::DESCRIPTION)?;
    let mut frames: BTreeMap<String, f64> = BTreeMap::new();
    for t in &description {
        for f in &t.frames {
            frames.insert(f.name.clone(), f.time_s);
        }
    }
    let mut ordered: Vec<(String, f64)> = frames.into_iter().collect();
    ordered.sort_by(|a, b| a.1.total_cmp(&b.1).then_with(|| a.0.cmp(&b.0)));
    let names: Vec<String> = ordered.into_iter().map(|(n, _)| n).collect();

    let raw_rooms = layout.read_rooms()?;
    let raw: Vec<String> = names
        .iter()
        .map(|n| raw_rooms.get(n).map_or_else(|| UNKNOWN_ROOM.to_string(), |r| normalize_room(r, &ctx.vocab)))
        .collect();
    let rooms = smooth_room_labels(&raw, ctx.cfg.smooth_window);

    let tags = layout.read_tags()?;
    let detections = layout.read_detections()?;
    let captions: Vec<FrameCaption> = names
        .par_iter()
        .zip(rooms.smoothed.par_iter())
        .map(|(name, room)| -> Result<FrameCaption, StageFailure> {
            let mut dets = detections.get(name).cloned().unwrap_or_default();
            if let Some(tags) = &tags {
                let allowed = filter_tags(tags.get(name).map_or(&[][..], Vec::as_slice), &ctx.vocab);
                dets.retain(|d| allowed.contains(&d.tag.to_lowercase()));
            }
            let depth = if dets.is_empty() {
                DepthMap { frame: name.clone(), width: 1, height: 1, values: vec![0.0] }
            } else {
                layout.read_depth(name)?
            };
            Ok(frame_caption(name, &dets, &depth, room, &ctx.vocab))
        })
        .collect::<Result<_, _>>()?;

    let mut out = StageOutput::default();
    out.jsonl(files::CAPTIONS, &captions);
    out.json(files::ROOMS, &RoomsFile { frames: names, sequence: rooms });
    let n = captions.len();
    out.counts(move |c| c.captions = n);
    Ok(out)
}

/// Prompts for every description trajectory of a captioned video.
pub fn video_prompts(
    run_dir: &Path,
    video: &str,
    template: &PromptTemplate,
) -> Result<Vec<(Trajectory, PromptBundle, String)>, IoError> {
    let dir = video_dir(run_dir, video);
    let description: Vec<Trajectory> = io::read_jsonl(&dir.join(files::DESCRIPTION))?;
    let captions: Vec<FrameCaption> = io::read_jsonl(&dir.join(files::CAPTIONS))?;
    let rooms: RoomsFile = io::read_json(&dir.join(files::ROOMS))?;
    let captions: BTreeMap<String, FrameCaption> = captions.into_iter().map(|c| (c.frame.clone(), c)).collect();
    let rooms: BTreeMap<String, String> = rooms.frames.into_iter().zip(rooms.sequence.smoothed).collect();
    let mut out = Vec::new();
    for t in description {
        // Every description frame is captioned by the caption stage.
        let bundle = assemble_prompt(&t, &captions, &rooms, template).expect("captions cover all frames");
        let text = render_prompt(&bundle);
        out.push((t, bundle, text));
    }
    Ok(out)
}

fn stage_prompt(ctx: &Ctx, meta: &VideoMeta, log: &mut Vec<LlmLogEntry>) -> Result<StageOutput, StageFailure> {
    let video = &meta.video_id;
    let template = ctx.template.as_ref().expect("loaded for the prompt stage");
    let completer = ctx.completer.as_deref().expect("loaded for the prompt stage");
    let prompts = video_prompts(&ctx.cfg.run_dir, video, template)?;
    let call = || {
        prompts
            .par_iter()
            .map(|(_, _, text)| completer.complete(text))
            .collect::<Vec<_>>()
    };
    let results = match &ctx.llm_pool {
        Some(pool) => pool.install(call),
        None => call(),
    };

    let endpoint = completer.endpoint_id();
    let timestamp = provenance_timestamp(ctx.cfg);
    let mut lines = Vec::new();
    let mut records: Vec<TrajectoryRecord> = Vec::new();
    let mut first_error: Option<LlmError> = None;
    let mut errors = 0;
    for ((traj, _, text), result) in prompts.iter().zip(results) {
        let digest = prompt_digest(text);
        lines.push(PromptLine {
            trajectory_id: traj.trajectory_id.clone(),
            digest: digest.clone(),
            prompt: text.clone(),
        });
        let mut entry = LlmLogEntry {
            digest: digest.clone(),
            trajectory_id: traj.trajectory_id.clone(),
            mode: completer.mode().into(),
            status: String::new(),
            attempts: 0,
            response: None,
        };
        match result {
            Ok(c) => {
                entry.attempts = c.attempts;
                let provenance = Provenance {
                    prompt_digest: digest,
                    endpoint: endpoint.clone(),
                    timestamp: timestamp.clone(),
                };
                match ingest_response(traj, video, &c.text, provenance, &ctx.cfg.refusal_markers) {
                    Ok(r) => {
                        entry.status = "ok".into();
                        records.push(r);
                    }
                    Err(e) => {
                        warn!(video = %video, trajectory = %traj.trajectory_id, "response rejected: {e}");
                        entry.status = match e {
                            walkforge_core::promptgen::PromptError::RefusalDetected(_) => "refused".into(),
                            walkforge_core::promptgen::PromptError::EmptyDescription => "empty".into(),
                            _ => "rejected".into(),
                        };
                    }
                }
                entry.response = Some(c.text);
            }
            Err(e) => {
                entry.status = e.status().into();
                errors += 1;
                first_error.get_or_insert(e);
            }
        }
        log.push(entry);
    }
    if let Some(e) = first_error {
        return Err(fail(format!("{errors} completion(s) failed, first: {e}")));
    }
    let mut out = StageOutput::default();
    out.jsonl(files::PROMPTS, &lines);
    out.jsonl(files::RECORDS, &records);
    let n = records.len();
    out.counts(move |c| c.records = n);
    Ok(out)
}

fn stage_emit(ctx: &Ctx, meta: &VideoMeta) -> Result<StageOutput, StageFailure> {
    let video = &meta.video_id;
    let model = ctx.read_model(video)?;
    let cal: CalibrationFile = ctx.read(video, files::CALIBRATION)?;
    let clusters: Vec<ViewCluster> = ctx.read_lines(video, files::CLUSTERS)?;
    let pairs: Vec<CandidatePair> = ctx.read_lines(video, files::PAIRS)?;
    let decisions: DecisionFrames = ctx.read(video, files::DECISIONS)?;
    let actions: Vec<Trajectory> = ctx.read_lines(video, files::ACTION)?;
    let records: Vec<TrajectoryRecord> = ctx.read_lines(video, files::RECORDS)?;
    let records: BTreeMap<String, TrajectoryRecord> =
        records.into_iter().map(|r| (r.trajectory_id.clone(), r)).collect();

    let sources = CandidateSources {
        clusters: &clusters,
        pairs: &pairs,
        decision_frames: &decisions.frames,
    };
    let params = EpisodeParams {
        negatives_per_step: ctx.cfg.negatives_k,
        proximity_m: ctx.cfg.proximity_m,
        seed: ctx.cfg.episode_seed,
    };
    let mut episodes = Vec::new();
    for t in &actions {
        let desc_id = t.trajectory_id.strip_suffix("-a").unwrap_or(&t.trajectory_id);
        match emit_action_episode(t, &model, &cal.calibration, &sources, records.get(desc_id), video, &params) {
            Ok(e) => episodes.push(e),
            Err(EpisodeError::TooShort(id)) => warn!(video = %video, trajectory = %id, "too short for an episode"),
            Err(e) => return Err(fail(e)),
        }
    }
    let mut out = StageOutput::default();
    out.jsonl(files::EPISODES, &episodes);
    let n = episodes.len();
    out.counts(move |c| c.episodes = n);
    Ok(out)
}

pub fn eval_policies(cfg: &PipelineConfig) -> [Policy; 3] {
    [Policy::Oracle, Policy::First, Policy::Random { seed: cfg.policy_seed }]
}

fn stage_eval(ctx: &Ctx, meta: &VideoMeta) -> Result<StageOutput, StageFailure> {
    let episodes: Vec<ActionEpisode> = ctx.read_lines(&meta.video_id, files::EPISODES)?;
    let mut traces = Vec::new();
    let mut scores = Vec::new();
    let mut metrics = Vec::new();
    for policy in eval_policies(ctx.cfg) {
        let t = replay_policy(&episodes, policy);
        let s = score_episodes(&episodes, &t, ctx.cfg.success_radius_m).map_err(fail)?;
        metrics.push(PolicyMetrics {
            policy,
            metrics: compute_metrics(&episodes, &t, ctx.cfg.success_radius_m).map_err(fail)?,
        });
        traces.extend(t.into_iter().map(|trace| TraceLine { policy, trace }));
        scores.extend(s.into_iter().map(|score| ScoreLine { policy, score }));
    }
    let mut out = StageOutput::default();
    out.jsonl(files::TRACES, &traces);
    out.jsonl(files::SCORES, &scores);
    out.json(
        files::METRICS,
        &MetricsFile {
            videos: vec![meta.video_id.clone()],
            policies: metrics,
        },
    );
    Ok(out)
}

/// Aggregate metrics over every evaluated video.
fn write_run_metrics(cfg: &PipelineConfig, manifest: &RunManifest, plot_svg: bool) -> Result<(), PipelineError> {
    let videos: Vec<String> = manifest
        .videos
        .iter()
        .filter(|(_, v)| v.stages.evaluated.is_done())
        .map(|(id, _)| id.clone())
        .collect();
    let mut episodes: Vec<ActionEpisode> = Vec::new();
    let mut traces: Vec<TraceLine> = Vec::new();
    for v in &videos {
        let dir = video_dir(&cfg.run_dir, v);
        episodes.extend(io::read_jsonl::<ActionEpisode>(&dir.join(files::EPISODES))?);
        traces.extend(io::read_jsonl::<TraceLine>(&dir.join(files::TRACES))?);
    }
    let mut policies = Vec::new();
    let mut spl_by_policy = Vec::new();
    for policy in eval_policies(cfg) {
        let t: Vec<PolicyTrace> = traces.iter().filter(|l| l.policy == policy).map(|l| l.trace.clone()).collect();
        match compute_metrics(&episodes, &t, cfg.success_radius_m) {
            Ok(metrics) => policies.push(PolicyMetrics { policy, metrics }),
            Err(EpisodeError::NoEpisodes) => continue,
            Err(e) => return Err(PipelineError::Metrics(e)),
        }
        let scores = score_episodes(&episodes, &t, cfg.success_radius_m).unwrap_or_default();
        spl_by_policy.push((policy_label(policy), scores.iter().map(|s| s.spl).collect::<Vec<_>>()));
    }
    io::write_json(&cfg.run_dir.join(files::METRICS), &MetricsFile { videos, policies })?;
    if plot_svg {
        io::write_atomic(&cfg.run_dir.join(files::HISTOGRAM), plot::spl_histogram(&spl_by_policy).as_bytes())?;
    }
    Ok(())
}

fn policy_label(p: Policy) -> String {
    match p {
        Policy::Oracle => "oracle".into(),
        Policy::First => "first".into(),
        Policy::Random { seed } => format!("random (seed {seed})"),
    }
}

fn load_manifest(cfg: &PipelineConfig) -> Result<RunManifest, PipelineError> {
    let path = manifest_path(&cfg.run_dir);
    let digest = cfg.digest();
    if !path.exists() {
        return Ok(RunManifest::new(&digest));
    }
    let m: RunManifest = io::read_json(&path)?;
    if m.config_digest != digest {
        return Err(PipelineError::ConfigMismatch {
            found: m.config_digest,
            expected: digest,
        });
    }
    Ok(m)
}

/// Manifest as currently persisted, if any.
pub fn read_manifest(run_dir: &Path) -> Result<Option<RunManifest>, PipelineError> {
    let path = manifest_path(run_dir);
    if !path.exists() {
        return Ok(None);
    }
    Ok(Some(io::read_json(&path)?))
}

fn select_videos(cfg: &PipelineConfig, opts: &RunOptions) -> Result<Vec<VideoMeta>, PipelineError> {
    let all = sidecar::read_videos(&cfg.data_dir)?;
    match &opts.videos {
        None => Ok(all),
        Some(ids) => ids
            .iter()
            .map(|id| {
                all.iter()
                    .find(|v| &v.video_id == id)
                    .cloned()
                    .ok_or_else(|| PipelineError::UnknownVideo(id.clone()))
            })
            .collect(),
    }
}

fn build_pool(threads: usize) -> rayon::ThreadPool {
    rayon::ThreadPoolBuilder::new().num_threads(threads).build().expect("thread pool")
}

/// Run one stage for the selected videos and persist the manifest.
pub fn run_stage(stage: Stage, cfg: &PipelineConfig, opts: &RunOptions) -> Result<StageReport, PipelineError> {
    let videos = select_videos(cfg, opts)?;
    let mut manifest = load_manifest(cfg)?;
    let mut report = StageReport {
        stage: Some(stage),
        ..StageReport::default()
    };

    let mut todo = Vec::new();
    for meta in &videos {
        let state = manifest.videos.entry(meta.video_id.clone()).or_default();
        let status = state.stages.get(stage);
        if status.is_done() || matches!(status, StageStatus::Skipped { .. }) {
            continue;
        }
        let blocked = Stage::ALL
            .iter()
            .take_while(|&&s| s != stage)
            .any(|&s| matches!(state.stages.get(s), StageStatus::Failed { .. }));
        if blocked {
            report.skipped.push(meta.video_id.clone());
            continue;
        }
        if let Some(needs) = stage.prerequisite() {
            match state.stages.get(needs) {
                StageStatus::Done => {}
                StageStatus::Pending => {
                    return Err(PipelineError::PrerequisiteMissing {
                        stage,
                        needs,
                        video: meta.video_id.clone(),
                    })
                }
                StageStatus::Skipped { reason } => {
                    let reason = reason.clone();
                    *state.stages.get_mut(stage) = StageStatus::Skipped { reason };
                    report.skipped.push(meta.video_id.clone());
                    continue;
                }
                StageStatus::Failed { .. } => {
                    report.skipped.push(meta.video_id.clone());
                    continue;
                }
            }
        }
        todo.push(meta.clone());
    }

    if todo.is_empty() {
        if !report.skipped.is_empty() {
            save_manifest(cfg, &mut manifest)?;
        }
        return Ok(report);
    }

    let vocab = load_room_vocab(cfg)?;
    let (template, completer, llm_pool) = if stage == Stage::Prompt {
        (
            Some(load_template(&cfg.prompt_dir)?),
            Some(make_completer(cfg)),
            Some(build_pool(cfg.llm_max_in_flight)),
        )
    } else {
        (None, None, None)
    };
    let ctx = Ctx {
        cfg,
        vocab,
        template,
        completer,
        llm_pool,
    };

    let started = Instant::now();
    let run_one = |meta: &VideoMeta| -> (Result<StageOutput, StageFailure>, Vec<LlmLogEntry>) {
        let mut log = Vec::new();
        let result = match stage {
            Stage::Ingest => stage_ingest(&ctx, meta),
            Stage::Merge => stage_merge(&ctx, meta),
            Stage::Sample => stage_sample(&ctx, meta),
            Stage::Detect => stage_detect(&ctx, meta),
            Stage::Caption => stage_caption(&ctx, meta),
            Stage::Prompt => stage_prompt(&ctx, meta, &mut log),
            Stage::Emit => stage_emit(&ctx, meta),
            Stage::Eval => stage_eval(&ctx, meta),
        };
        let fault = opts.fault.as_ref().is_some_and(|f| f.stage == stage && f.video == meta.video_id);
        let result = result.and_then(|out| {
            commit(&ctx.out_dir(&meta.video_id), &out.files, fault)?;
            Ok(out)
        });
        (result, log)
    };
    let results: Vec<_> = build_pool(opts.jobs).install(|| todo.par_iter().map(run_one).collect());

    let mut llm_log = Vec::new();
    for (meta, (result, log)) in todo.iter().zip(results) {
        llm_log.extend(log);
        let state: &mut VideoState = manifest.videos.get_mut(&meta.video_id).expect("registered above");
        match result {
            Ok(out) => {
                if let Some(f) = out.counts {
                    f(&mut state.counts);
                }
                *state.stages.get_mut(stage) = match out.skipped {
                    Some(reason) => StageStatus::Skipped { reason },
                    None => StageStatus::Done,
                };
                info!(stage = %stage, video = %meta.video_id, "done");
                report.processed.push(meta.video_id.clone());
            }
            Err(e) => {
                warn!(stage = %stage, video = %meta.video_id, "failed: {e}");
                *state.stages.get_mut(stage) = StageStatus::Failed { cause: e.to_string() };
                report.failed.push((meta.video_id.clone(), e.to_string()));
            }
        }
    }
    if !llm_log.is_empty() {
        let path = llm_log_path(&cfg.run_dir);
        for entry in &llm_log {
            io::append_line(&path, &io::to_json_line(entry))?;
        }
    }
    manifest.timings.insert(stage.name().into(), started.elapsed().as_secs_f64());
    save_manifest(cfg, &mut manifest)?;
    if stage == Stage::Eval {
        write_run_metrics(cfg, &manifest, opts.plot)?;
    }
    Ok(report)
}

fn save_manifest(cfg: &PipelineConfig, manifest: &mut RunManifest) -> Result<(), PipelineError> {
    manifest.recount();
    io::write_json(&manifest_path(&cfg.run_dir), manifest)?;
    Ok(())
}

/// Every stage in order.
pub fn run_all(cfg: &PipelineConfig, opts: &RunOptions) -> Result<Vec<StageReport>, PipelineError> {
    Stage::ALL.iter().map(|&s| run_stage(s, cfg, opts)).collect()
}

/// Aggregate status of `stages` over the selected videos.
pub fn run_status(cfg: &PipelineConfig, opts: &RunOptions, stages: &[Stage]) -> Result<RunStatus, PipelineError> {
    let videos = select_videos(cfg, opts)?;
    let Some(manifest) = read_manifest(&cfg.run_dir)? else {
        return Ok(RunStatus::Ok);
    };
    let failed = videos
        .iter()
        .filter(|v| {
            manifest.videos.get(&v.video_id).is_some_and(|s| {
                stages.iter().any(|&st| matches!(s.stages.get(st), StageStatus::Failed { .. }))
            })
        })
        .count();
    Ok(if failed == 0 {
        RunStatus::Ok
    } else if failed == videos.len() {
        RunStatus::Failed
    } else {
        RunStatus::Partial
    })
}

/// Run the stages up to captioning in `cfg.run_dir` and return every prompt
/// the prompt stage would send, keyed by video.
pub fn collect_prompts(
    cfg: &PipelineConfig,
) -> Result<Vec<(String, Trajectory, PromptBundle, String)>, PipelineError> {
    let opts = RunOptions::default();
    for stage in [Stage::Ingest, Stage::Merge, Stage::Sample, Stage::Detect, Stage::Caption] {
        run_stage(stage, cfg, &opts)?;
    }
    let template = load_template(&cfg.prompt_dir)?;
    let manifest = load_manifest(cfg)?;
    let mut out = Vec::new();
    for (video, state) in &manifest.videos {
        if !state.stages.captioned.is_done() {
            continue;
        }
        for (t, b, text) in video_prompts(&cfg.run_dir, video, &template)? {
            out.push((video.clone(), t, b, text));
        }
    }
    Ok(out)
}

/// Merge report of a merged video.
pub fn read_merge_report(run_dir: &Path, video: &str) -> Result<MergeReport, IoError> {
    io::read_json(&video_dir(run_dir, video).join(files::MERGE_REPORT))
}
