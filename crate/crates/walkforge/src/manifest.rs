//! Run manifest: per-video stage status, output counts and timings.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Stage {
    Ingest,
    Merge,
    Sample,
    Detect,
    Caption,
    Prompt,
    Emit,
    Eval,
}

impl Stage {
    pub const ALL: [Stage; 8] = [
        Stage::Ingest,
        Stage::Merge,
        Stage::Sample,
        Stage::Detect,
        Stage::Caption,
        Stage::Prompt,
        Stage::Emit,
        Stage::Eval,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Stage::Ingest => "ingest",
            Stage::Merge => "merge",
            Stage::Sample => "sample",
            Stage::Detect => "detect",
            Stage::Caption => "caption",
            Stage::Prompt => "prompt",
            Stage::Emit => "emit",
            Stage::Eval => "eval",
        }
    }

    pub fn prerequisite(self) -> Option<Stage> {
        let i = Stage::ALL.iter().position(|&s| s == self).expect("listed");
        i.checked_sub(1).map(|p| Stage::ALL[p])
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Stage {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Stage::ALL
            .into_iter()
            .find(|st| st.name() == s)
            .ok_or_else(|| format!("unknown stage {s:?}"))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "state")]
pub enum StageStatus {
    #[default]
    Pending,
    Done,
    Failed {
        cause: String,
    },
    /// Not applicable, e.g. the video was rejected by the filter.
    Skipped {
        reason: String,
    },
}

impl StageStatus {
    pub fn is_done(&self) -> bool {
        matches!(self, StageStatus::Done)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct StageStatuses {
    pub ingested: StageStatus,
    pub merged: StageStatus,
    pub sampled: StageStatus,
    pub detected: StageStatus,
    pub captioned: StageStatus,
    pub prompted: StageStatus,
    pub emitted: StageStatus,
    pub evaluated: StageStatus,
}

impl StageStatuses {
    pub fn get(&self, stage: Stage) -> &StageStatus {
        match stage {
            Stage::Ingest => &self.ingested,
            Stage::Merge => &self.merged,
            Stage::Sample => &self.sampled,
            Stage::Detect => &self.detected,
            Stage::Caption => &self.captioned,
            Stage::Prompt => &self.prompted,
            Stage::Emit => &self.emitted,
            Stage::Eval => &self.evaluated,
        }
    }

    pub fn get_mut(&mut self, stage: Stage) -> &mut StageStatus {
        match stage {
            Stage::Ingest => &mut self.ingested,
            Stage::Merge => &mut self.merged,
            Stage::Sample => &mut self.sampled,
            Stage::Detect => &mut self.detected,
            Stage::Caption => &mut self.captioned,
            Stage::Prompt => &mut self.prompted,
            Stage::Emit => &mut self.emitted,
            Stage::Eval => &mut self.evaluated,
        }
    }
}

/// Line counts of the persisted outputs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Counts {
    pub merged_models: usize,
    pub description_trajectories: usize,
    pub action_trajectories: usize,
    pub trajectories: usize,
    pub captions: usize,
    pub records: usize,
    pub episodes: usize,
}

impl Counts {
    pub fn add(&mut self, other: &Counts) {
        self.merged_models += other.merged_models;
        self.description_trajectories += other.description_trajectories;
        self.action_trajectories += other.action_trajectories;
        self.trajectories += other.trajectories;
        self.captions += other.captions;
        self.records += other.records;
        self.episodes += other.episodes;
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct VideoState {
    pub stages: StageStatuses,
    pub counts: Counts,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub run_id: String,
    pub config_digest: String,
    pub videos: BTreeMap<String, VideoState>,
    pub totals: Counts,
    /// Wall-clock seconds of the last execution of each stage that did work.
    #[serde(default)]
    pub timings: BTreeMap<String, f64>,
}

impl RunManifest {
    pub fn new(config_digest: &str) -> Self {
        RunManifest {
            run_id: format!("run-{}", &config_digest[..12.min(config_digest.len())]),
            config_digest: config_digest.into(),
            videos: BTreeMap::new(),
            totals: Counts::default(),
            timings: BTreeMap::new(),
        }
    }

    pub fn recount(&mut self) {
        let mut t = Counts::default();
        for v in self.videos.values() {
            t.add(&v.counts);
        }
        self.totals = t;
    }
}
