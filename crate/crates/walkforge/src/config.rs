//! Flat `key = value` pipeline configuration.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};
use thiserror::Error;
use walkforge_core::model::{FrameClock, FramePattern};
use walkforge_core::promptgen::DEFAULT_REFUSAL_MARKERS;

pub const ENV_PREFIX: &str = "WALKFORGE_";

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum KeyProblem {
    UnknownKey(String),
    OutOfRange(String),
    BadValue { key: String, value: String },
    Missing(String),
}

impl fmt::Display for KeyProblem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            KeyProblem::UnknownKey(k) => write!(f, "unknown key {k}"),
            KeyProblem::OutOfRange(k) => write!(f, "{k} out of range"),
            KeyProblem::BadValue { key, value } => write!(f, "{key}: cannot parse {value:?}"),
            KeyProblem::Missing(k) => write!(f, "{k} is required"),
        }
    }
}

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}:{line}: expected `key = value`")]
    Syntax { path: PathBuf, line: usize },
    #[error("invalid configuration: {}", .0.iter().map(|p| p.to_string()).collect::<Vec<_>>().join("; "))]
    Invalid(Vec<KeyProblem>),
}

impl ConfigError {
    pub fn problems(&self) -> &[KeyProblem] {
        match self {
            ConfigError::Invalid(p) => p,
            _ => &[],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LlmMode {
    Stub,
    Live,
}

impl LlmMode {
    pub fn as_str(self) -> &'static str {
        match self {
            LlmMode::Stub => "stub",
            LlmMode::Live => "live",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineConfig {
    pub fps: f64,
    pub frame_prefix: String,
    pub frame_pad: usize,
    pub frame_ext: String,

    pub min_duration_s: f64,
    pub min_shots: usize,
    pub shot_coverage: f64,
    pub merge_min_shared: usize,

    pub sample_period_s: f64,
    pub window_frames: usize,
    pub stride_frames: usize,
    pub spacing_m: f64,
    pub nominal_speed_mps: f64,
    pub yaw_half_window_frames: usize,
    pub yaw_threshold_deg: f64,
    pub decision_nms_frames: u64,

    pub threshold_deg: f64,
    pub radius_m: f64,
    pub nms_window_frames: u64,
    pub eps_m: f64,
    pub min_pts: usize,
    pub gap_frames: u64,

    pub smooth_window: usize,

    pub llm_mode: LlmMode,
    pub llm_endpoint: Option<String>,
    pub llm_model: Option<String>,
    pub llm_temperature: Option<f64>,
    pub llm_max_in_flight: usize,
    pub refusal_markers: Vec<String>,
    pub provenance_timestamp: String,

    pub success_radius_m: f64,
    pub negatives_k: usize,
    pub proximity_m: f64,
    pub episode_seed: u64,
    pub policy_seed: u64,

    pub data_dir: PathBuf,
    pub run_dir: PathBuf,
    pub prompt_dir: PathBuf,
    pub stub_dir: PathBuf,
    pub room_vocab: Option<PathBuf>,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            fps: 3.0,
            frame_prefix: "frame_".into(),
            frame_pad: 6,
            frame_ext: "jpg".into(),
            min_duration_s: 180.0,
            min_shots: 9,
            shot_coverage: 0.8,
            merge_min_shared: 4,
            sample_period_s: 2.0,
            window_frames: 7,
            stride_frames: 5,
            spacing_m: 1.5,
            nominal_speed_mps: 1.42,
            yaw_half_window_frames: 3,
            yaw_threshold_deg: 30.0,
            decision_nms_frames: 9,
            threshold_deg: 45.0,
            radius_m: 1.0,
            nms_window_frames: 9,
            eps_m: 0.75,
            min_pts: 2,
            gap_frames: 15,
            smooth_window: 5,
            llm_mode: LlmMode::Stub,
            llm_endpoint: None,
            llm_model: None,
            llm_temperature: None,
            llm_max_in_flight: 4,
            refusal_markers: DEFAULT_REFUSAL_MARKERS.iter().map(|s| (*s).into()).collect(),
            provenance_timestamp: "1970-01-01T00:00:00Z".into(),
            success_radius_m: 3.0,
            negatives_k: 3,
            proximity_m: 1.5,
            episode_seed: 0,
            policy_seed: 7,
            data_dir: "data".into(),
            run_dir: "run".into(),
            prompt_dir: "prompts".into(),
            stub_dir: "stubs".into(),
            room_vocab: None,
        }
    }
}

fn parse<T: std::str::FromStr>(key: &str, value: &str) -> Result<T, KeyProblem> {
    value.parse().map_err(|_| KeyProblem::BadValue {
        key: key.into(),
        value: value.into(),
    })
}

fn opt_string(v: &str) -> Option<String> {
    (!v.is_empty()).then(|| v.to_string())
}

impl PipelineConfig {
    pub fn clock(&self) -> FrameClock {
        FrameClock::new(
            FramePattern {
                prefix: self.frame_prefix.clone(),
                pad: self.frame_pad,
                ext: self.frame_ext.clone(),
            },
            self.fps,
        )
    }

    /// Apply one setting; `base` resolves relative paths.
    pub fn set(&mut self, key: &str, value: &str, base: &Path) -> Result<(), KeyProblem> {
        let path = |v: &str| base.join(v);
        match key {
            "fps" => self.fps = parse(key, value)?,
            "frame_prefix" => self.frame_prefix = value.into(),
            "frame_pad" => self.frame_pad = parse(key, value)?,
            "frame_ext" => self.frame_ext = value.into(),
            "min_duration_s" => self.min_duration_s = parse(key, value)?,
            "min_shots" => self.min_shots = parse(key, value)?,
            "shot_coverage" => self.shot_coverage = parse(key, value)?,
            "merge_min_shared" => self.merge_min_shared = parse(key, value)?,
            "sample_period_s" => self.sample_period_s = parse(key, value)?,
            "window_frames" => self.window_frames = parse(key, value)?,
            "stride_frames" => self.stride_frames = parse(key, value)?,
            "spacing_m" => self.spacing_m = parse(key, value)?,
            "nominal_speed_mps" => self.nominal_speed_mps = parse(key, value)?,
            "yaw_half_window_frames" => self.yaw_half_window_frames = parse(key, value)?,
            "yaw_threshold_deg" => self.yaw_threshold_deg = parse(key, value)?,
            "decision_nms_frames" => self.decision_nms_frames = parse(key, value)?,
            "threshold_deg" => self.threshold_deg = parse(key, value)?,
            "radius_m" => self.radius_m = parse(key, value)?,
            "nms_window_frames" => self.nms_window_frames = parse(key, value)?,
            "eps_m" => self.eps_m = parse(key, value)?,
            "min_pts" => self.min_pts = parse(key, value)?,
            "gap_frames" => self.gap_frames = parse(key, value)?,
            "smooth_window" => self.smooth_window = parse(key, value)?,
            "llm_mode" => {
                self.llm_mode = match value {
                    "stub" => LlmMode::Stub,
                    "live" => LlmMode::Live,
                    _ => {
                        return Err(KeyProblem::BadValue {
                            key: key.into(),
                            value: value.into(),
                        })
                    }
                }
            }
            "llm_endpoint" => self.llm_endpoint = opt_string(value),
            "llm_model" => self.llm_model = opt_string(value),
            "llm_temperature" => self.llm_temperature = if value.is_empty() { None } else { Some(parse(key, value)?) },
            "llm_max_in_flight" => self.llm_max_in_flight = parse(key, value)?,
            "refusal_markers" => {
                self.refusal_markers = value.split('|').map(str::trim).filter(|s| !s.is_empty()).map(String::from).collect()
            }
            "provenance_timestamp" => self.provenance_timestamp = value.into(),
            "success_radius_m" => self.success_radius_m = parse(key, value)?,
            "negatives_k" => self.negatives_k = parse(key, value)?,
            "proximity_m" => self.proximity_m = parse(key, value)?,
            "episode_seed" => self.episode_seed = parse(key, value)?,
            "policy_seed" => self.policy_seed = parse(key, value)?,
            "data_dir" => self.data_dir = path(value),
            "run_dir" => self.run_dir = path(value),
            "prompt_dir" => self.prompt_dir = path(value),
            "stub_dir" => self.stub_dir = path(value),
            "room_vocab" => self.room_vocab = opt_string(value).map(|v| path(&v)),
            _ => return Err(KeyProblem::UnknownKey(key.into())),
        }
        Ok(())
    }

    pub fn validate(&self) -> Vec<KeyProblem> {
        let mut bad = Vec::new();
        let mut check = |key: &str, ok: bool| {
            if !ok {
                bad.push(KeyProblem::OutOfRange(key.into()));
            }
        };
        let pos = |v: f64, hi: f64| v > 0.0 && v <= hi;
        check("fps", pos(self.fps, 240.0));
        check("frame_pad", self.frame_pad <= 20);
        check("frame_ext", !self.frame_ext.is_empty());
        check("min_duration_s", (0.0..=1e6).contains(&self.min_duration_s));
        check("min_shots", (1..=100_000).contains(&self.min_shots));
        check("shot_coverage", pos(self.shot_coverage, 1.0));
        check("merge_min_shared", (1..=100_000).contains(&self.merge_min_shared));
        check("sample_period_s", pos(self.sample_period_s, 600.0));
        check("window_frames", (2..=1000).contains(&self.window_frames));
        check("stride_frames", (1..=1000).contains(&self.stride_frames));
        check("spacing_m", pos(self.spacing_m, 100.0));
        check("nominal_speed_mps", pos(self.nominal_speed_mps, 10.0));
        check("yaw_half_window_frames", (1..=1000).contains(&self.yaw_half_window_frames));
        check("yaw_threshold_deg", pos(self.yaw_threshold_deg, 180.0));
        check("decision_nms_frames", self.decision_nms_frames <= 100_000);
        check("threshold_deg", pos(self.threshold_deg, 180.0));
        check("radius_m", pos(self.radius_m, 100.0));
        check("nms_window_frames", self.nms_window_frames <= 100_000);
        check("eps_m", pos(self.eps_m, 100.0));
        check("min_pts", (1..=10_000).contains(&self.min_pts));
        check("gap_frames", (1..=1_000_000).contains(&self.gap_frames));
        check("smooth_window", self.smooth_window % 2 == 1 && self.smooth_window <= 101);
        check("llm_max_in_flight", (1..=256).contains(&self.llm_max_in_flight));
        check("llm_temperature", self.llm_temperature.is_none_or(|t| (0.0..=2.0).contains(&t)));
        check("success_radius_m", pos(self.success_radius_m, 1000.0));
        check("negatives_k", self.negatives_k <= 64);
        check("proximity_m", pos(self.proximity_m, 1000.0));
        if self.llm_mode == LlmMode::Live {
            for (key, present) in [
                ("llm_endpoint", self.llm_endpoint.is_some()),
                ("llm_model", self.llm_model.is_some()),
                ("llm_temperature", self.llm_temperature.is_some()),
            ] {
                if !present {
                    bad.push(KeyProblem::Missing(key.into()));
                }
            }
        }
        bad
    }

    /// Every setting as `(key, value)` in key order, for digests and logs.
    pub fn entries(&self) -> BTreeMap<&'static str, String> {
        let p = |p: &Path| p.display().to_string();
        let o = |v: &Option<String>| v.clone().unwrap_or_default();
        BTreeMap::from([
            ("fps", self.fps.to_string()),
            ("frame_prefix", self.frame_prefix.clone()),
            ("frame_pad", self.frame_pad.to_string()),
            ("frame_ext", self.frame_ext.clone()),
            ("min_duration_s", self.min_duration_s.to_string()),
            ("min_shots", self.min_shots.to_string()),
            ("shot_coverage", self.shot_coverage.to_string()),
            ("merge_min_shared", self.merge_min_shared.to_string()),
            ("sample_period_s", self.sample_period_s.to_string()),
            ("window_frames", self.window_frames.to_string()),
            ("stride_frames", self.stride_frames.to_string()),
            ("spacing_m", self.spacing_m.to_string()),
            ("nominal_speed_mps", self.nominal_speed_mps.to_string()),
            ("yaw_half_window_frames", self.yaw_half_window_frames.to_string()),
            ("yaw_threshold_deg", self.yaw_threshold_deg.to_string()),
            ("decision_nms_frames", self.decision_nms_frames.to_string()),
            ("threshold_deg", self.threshold_deg.to_string()),
            ("radius_m", self.radius_m.to_string()),
            ("nms_window_frames", self.nms_window_frames.to_string()),
            ("eps_m", self.eps_m.to_string()),
            ("min_pts", self.min_pts.to_string()),
            ("gap_frames", self.gap_frames.to_string()),
            ("smooth_window", self.smooth_window.to_string()),
            ("llm_mode", self.llm_mode.as_str().into()),
            ("llm_endpoint", o(&self.llm_endpoint)),
            ("llm_model", o(&self.llm_model)),
            ("llm_temperature", self.llm_temperature.map(|t| t.to_string()).unwrap_or_default()),
            ("llm_max_in_flight", self.llm_max_in_flight.to_string()),
            ("refusal_markers", self.refusal_markers.join("|")),
            ("provenance_timestamp", self.provenance_timestamp.clone()),
            ("success_radius_m", self.success_radius_m.to_string()),
            ("negatives_k", self.negatives_k.to_string()),
            ("proximity_m", self.proximity_m.to_string()),
            ("episode_seed", self.episode_seed.to_string()),
            ("policy_seed", self.policy_seed.to_string()),
            ("data_dir", p(&self.data_dir)),
            ("run_dir", p(&self.run_dir)),
            ("prompt_dir", p(&self.prompt_dir)),
            ("stub_dir", p(&self.stub_dir)),
            ("room_vocab", self.room_vocab.as_deref().map(p).unwrap_or_default()),
        ])
    }

    /// SHA-256 over every setting except the output location, so the same
    /// inputs and tunables written to two run directories share a digest.
    pub fn digest(&self) -> String {
        let mut h = Sha256::new();
        for (k, v) in self.entries() {
            if k != "run_dir" {
                h.update(format!("{k} = {v}\n"));
            }
        }
        hex::encode(h.finalize())
    }
}

/// Parse config text; `base` resolves relative paths.
pub fn parse_config<I>(text: &str, origin: &Path, base: &Path, env: I) -> Result<PipelineConfig, ConfigError>
where
    I: IntoIterator<Item = (String, String)>,
{
    let mut cfg = PipelineConfig::default();
    // Path defaults are relative to the config file too.
    cfg.data_dir = base.join(&cfg.data_dir);
    cfg.run_dir = base.join(&cfg.run_dir);
    cfg.prompt_dir = base.join(&cfg.prompt_dir);
    cfg.stub_dir = base.join(&cfg.stub_dir);

    let mut problems = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let Some((k, v)) = line.split_once('=') else {
            return Err(ConfigError::Syntax {
                path: origin.to_path_buf(),
                line: i + 1,
            });
        };
        if let Err(p) = cfg.set(k.trim(), v.trim(), base) {
            problems.push(p);
        }
    }
    let mut env: Vec<(String, String)> = env.into_iter().filter(|(k, _)| k.starts_with(ENV_PREFIX)).collect();
    env.sort();
    for (k, v) in env {
        let key = k[ENV_PREFIX.len()..].to_ascii_lowercase();
        if let Err(p) = cfg.set(&key, v.trim(), base) {
            problems.push(p);
        }
    }
    problems.extend(cfg.validate());
    if problems.is_empty() {
        Ok(cfg)
    } else {
        Err(ConfigError::Invalid(problems))
    }
}

/// Read `path` and apply `WALKFORGE_*` overrides from `env`.
pub fn load_config<I>(path: &Path, env: I) -> Result<PipelineConfig, ConfigError>
where
    I: IntoIterator<Item = (String, String)>,
{
    let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let base = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    let base = std::path::absolute(base).unwrap_or_else(|_| base.to_path_buf());
    parse_config(&text, path, &base, env)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn load(text: &str, env: &[(&str, &str)]) -> Result<PipelineConfig, ConfigError> {
        let env = env.iter().map(|(k, v)| (k.to_string(), v.to_string()));
        parse_config(text, Path::new("t.conf"), Path::new("/base"), env)
    }

    #[test]
    fn empty_file_gives_defaults() {
        let c = load("", &[]).unwrap();
        assert_eq!(c.threshold_deg, 45.0);
        assert_eq!(c.nominal_speed_mps, 1.42);
        assert_eq!(c.spacing_m, 1.5);
        assert_eq!(c.success_radius_m, 3.0);
        assert_eq!(c.data_dir, Path::new("/base/data"));
    }

    #[test]
    fn env_beats_file() {
        let c = load("spacing_m = 2.0\n", &[("WALKFORGE_SPACING_M", "1.0"), ("OTHER", "x")]).unwrap();
        assert_eq!(c.spacing_m, 1.0);
        let c = load("spacing_m = 2.0 \n# comment\n", &[]).unwrap();
        assert_eq!(c.spacing_m, 2.0);
    }

    #[test]
    fn every_bad_key_is_listed() {
        let err = load("threshold_deg = 400\nbogus = 1\nmin_pts = x\nsmooth_window = 4\n", &[("WALKFORGE_NOPE", "1")]).unwrap_err();
        assert_eq!(
            err.problems(),
            [
                KeyProblem::UnknownKey("bogus".into()),
                KeyProblem::BadValue { key: "min_pts".into(), value: "x".into() },
                KeyProblem::UnknownKey("nope".into()),
                KeyProblem::OutOfRange("threshold_deg".into()),
                KeyProblem::OutOfRange("smooth_window".into()),
            ]
        );
    }

    #[test]
    fn live_mode_needs_model_and_temperature() {
        let err = load("llm_mode = live\nllm_endpoint = http://x\n", &[]).unwrap_err();
        assert_eq!(
            err.problems(),
            [KeyProblem::Missing("llm_model".into()), KeyProblem::Missing("llm_temperature".into())]
        );
    }

    #[test]
    fn syntax_error_has_line() {
        assert!(matches!(load("fps = 3\nnonsense\n", &[]), Err(ConfigError::Syntax { line: 2, .. })));
    }

    #[test]
    fn digest_ignores_run_dir_only() {
        let a = load("run_dir = a\n", &[]).unwrap();
        let b = load("run_dir = b\n", &[]).unwrap();
        let c = load("run_dir = a\nspacing_m = 1.4\n", &[]).unwrap();
        assert_eq!(a.digest(), b.digest());
        assert_ne!(a.digest(), c.digest());
    }

    #[test]
    fn refusal_markers_split_on_bar() {
        let c = load("refusal_markers = I'm sorry | As an AI\n", &[]).unwrap();
        assert_eq!(c.refusal_markers, ["I'm sorry", "As an AI"]);
    }
}
