//! Trajectory-summarization prompts and the records built from their
//! completions.

use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt::Write as _;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::captioning::{FrameCaption, UNKNOWN_ROOM};
use crate::sampling::Trajectory;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum PromptError {
    #[error("frame {0} has no caption")]
    MissingCaption(String),
    #[error("prompt template needs exactly 2 examples, found {0}")]
    ExampleCount(usize),
    #[error("response is empty")]
    EmptyDescription,
    #[error("response contains refusal marker {0:?}")]
    RefusalDetected(String),
    #[error("trajectory has {0} frames, need at least 2")]
    TooFewFrames(usize),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptExample {
    pub input: String,
    pub output: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptTemplate {
    pub task_instruction: String,
    examples: [PromptExample; 2],
}

impl PromptTemplate {
    pub fn new(task_instruction: impl Into<String>, examples: Vec<PromptExample>) -> Result<Self, PromptError> {
        let n = examples.len();
        let examples: [PromptExample; 2] = examples.try_into().map_err(|_| PromptError::ExampleCount(n))?;
        Ok(PromptTemplate {
            task_instruction: task_instruction.into(),
            examples,
        })
    }

    pub fn examples(&self) -> &[PromptExample; 2] {
        &self.examples
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FrameBlock {
    pub index: usize,
    pub frame: String,
    pub room: String,
    pub sentences: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptBundle {
    pub trajectory_id: String,
    pub template: PromptTemplate,
    pub frame_blocks: Vec<FrameBlock>,
}

/// Bundle a description trajectory with its captions. `rooms` maps frame
/// names to smoothed room labels; frames missing from it keep the room
/// stored on their caption.
pub fn assemble_prompt(
    trajectory: &Trajectory,
    captions: &BTreeMap<String, FrameCaption>,
    rooms: &BTreeMap<String, String>,
    template: &PromptTemplate,
) -> Result<PromptBundle, PromptError> {
    let frame_blocks = trajectory
        .frames
        .iter()
        .enumerate()
        .map(|(index, f)| {
            let cap = captions.get(&f.name).ok_or_else(|| PromptError::MissingCaption(f.name.clone()))?;
            let room = rooms.get(&f.name).unwrap_or(&cap.room);
            Ok(FrameBlock {
                index,
                frame: f.name.clone(),
                room: if room.is_empty() { UNKNOWN_ROOM.into() } else { room.clone() },
                sentences: cap.sentences.clone(),
            })
        })
        .collect::<Result<_, PromptError>>()?;
    Ok(PromptBundle {
        trajectory_id: trajectory.trajectory_id.clone(),
        template: template.clone(),
        frame_blocks,
    })
}

fn push_trimmed(out: &mut String, text: &str) {
    for (i, line) in text.trim_end().lines().enumerate() {
        if i > 0 {
            out.push('\n');
        }
        out.push_str(line.trim_end());
    }
}

pub fn render_prompt(bundle: &PromptBundle) -> String {
    let mut out = String::new();
    push_trimmed(&mut out, &bundle.template.task_instruction);
    out.push_str("\n\n");
    for (i, ex) in bundle.template.examples.iter().enumerate() {
        if i > 0 {
            out.push_str("\n\n");
        }
        out.push_str("Input:\n");
        push_trimmed(&mut out, &ex.input);
        out.push_str("\nOutput:\n");
        push_trimmed(&mut out, &ex.output);
    }
    out.push_str("\n\nInput:\n");
    for block in &bundle.frame_blocks {
        let _ = writeln!(out, "Frame {}:", block.index);
        let _ = writeln!(out, "Room: {}", block.room);
        for s in &block.sentences {
            out.push_str(s.trim_end());
            out.push('\n');
        }
    }
    out.push_str("\nOutput:\n");
    out
}

/// Lowercase hex SHA-256 of the prompt bytes.
pub fn prompt_digest(prompt: &str) -> String {
    hex::encode(Sha256::digest(prompt.as_bytes()))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Provenance {
    pub prompt_digest: String,
    /// Endpoint URL, or `stub`.
    pub endpoint: String,
    pub timestamp: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrajectoryRecord {
    pub trajectory_id: String,
    pub video_id: String,
    pub frames: Vec<String>,
    pub description: String,
    pub provenance: Provenance,
}

pub const DEFAULT_REFUSAL_MARKERS: [&str; 4] = ["I'm sorry", "I cannot", "I can't", "As an AI"];

/// Turn a completion into a record. Markers match case-insensitively.
pub fn ingest_response(
    trajectory: &Trajectory,
    video_id: &str,
    response: &str,
    provenance: Provenance,
    refusal_markers: &[String],
) -> Result<TrajectoryRecord, PromptError> {
    if trajectory.frames.len() < 2 {
        return Err(PromptError::TooFewFrames(trajectory.frames.len()));
    }
    let description = response.trim();
    if description.is_empty() {
        return Err(PromptError::EmptyDescription);
    }
    let lower = description.to_lowercase();
    if let Some(m) = refusal_markers.iter().find(|m| !m.is_empty() && lower.contains(&m.to_lowercase())) {
        return Err(PromptError::RefusalDetected(m.clone()));
    }
    Ok(TrajectoryRecord {
        trajectory_id: trajectory.trajectory_id.clone(),
        video_id: video_id.into(),
        frames: trajectory.frames.iter().map(|f| f.name.clone()).collect(),
        description: description.into(),
        provenance,
    })
}
