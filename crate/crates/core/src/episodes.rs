//! Navigation episodes built from action trajectories, policy replay and
//! SR / SPL / GP scoring.

use alloc::collections::BTreeSet;
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::camgeom::camera_center;
use crate::model::{ImageId, SparseModel};
use crate::promptgen::TrajectoryRecord;
use crate::sampling::{ScaleCalibration, Trajectory};
use crate::viewchange::{CandidatePair, ViewCluster};
use crate::Vec3;

pub const PLACEHOLDER_INSTRUCTION: &str = "follow the walkthrough";

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum EpisodeError {
    #[error("trajectory {0} has fewer than 2 frames")]
    TooShort(String),
    #[error("frame {0} is not in the model")]
    UnknownFrame(ImageId),
    #[error("{episodes} episodes but {traces} traces")]
    LengthMismatch { episodes: usize, traces: usize },
    #[error("no episodes to score")]
    NoEpisodes,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CandidateRole {
    Positive,
    Negative,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Candidate {
    pub frame: ImageId,
    pub name: String,
    pub role: CandidateRole,
    /// Calibrated meters.
    pub center: Vec3,
}

/// Either a candidate index or the STOP action.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Action {
    Candidate(usize),
    Stop,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeStep {
    pub observation: ImageId,
    pub observation_name: String,
    pub candidates: Vec<Candidate>,
    pub stop_allowed: bool,
    pub target: Action,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActionEpisode {
    pub episode_id: String,
    pub video_id: String,
    pub instruction: String,
    pub steps: Vec<EpisodeStep>,
    pub start_center: Vec3,
    pub goal_center: Vec3,
    pub gt_path_length: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpisodeParams {
    pub negatives_per_step: usize,
    /// A cluster counts as adjacent to a step when one of its members lies
    /// this close to the step's observation or target.
    pub proximity_m: f64,
    pub seed: u64,
}

impl Default for EpisodeParams {
    fn default() -> Self {
        EpisodeParams {
            negatives_per_step: 3,
            proximity_m: 1.5,
            seed: 0,
        }
    }
}

/// Everything detected in one video that episodes draw their distractors
/// from.
#[derive(Debug, Clone, Copy)]
pub struct CandidateSources<'a> {
    pub clusters: &'a [ViewCluster],
    pub pairs: &'a [CandidatePair],
    pub decision_frames: &'a [ImageId],
}

fn seed_for(base: u64, text: &str) -> u64 {
    // FNV-1a; only needs to be stable.
    text.bytes().fold(0xcbf2_9ce4_8422_2325 ^ base, |h, b| (h ^ b as u64).wrapping_mul(0x0000_0100_0000_01b3))
}

/// One episode per action trajectory: step `i` observes frame `i` and targets
/// frame `i + 1`; a final step observes the last frame and targets STOP.
pub fn emit_action_episode(
    trajectory: &Trajectory,
    model: &SparseModel,
    cal: &ScaleCalibration,
    sources: &CandidateSources<'_>,
    record: Option<&TrajectoryRecord>,
    video_id: &str,
    params: &EpisodeParams,
) -> Result<ActionEpisode, EpisodeError> {
    let n = trajectory.frames.len();
    if n < 2 {
        return Err(EpisodeError::TooShort(trajectory.trajectory_id.clone()));
    }
    let center_of = |id: ImageId| -> Result<Vec3, EpisodeError> {
        model
            .frames
            .get(&id)
            .map(|f| camera_center(f) * cal.meters_per_unit)
            .ok_or(EpisodeError::UnknownFrame(id))
    };
    let name_of = |id: ImageId| model.frames.get(&id).map(|f| f.name.clone()).unwrap_or_default();
    let centers: Vec<Vec3> = trajectory
        .frames
        .iter()
        .map(|f| center_of(f.image_id))
        .collect::<Result<_, _>>()?;

    let mut rng = ChaCha8Rng::seed_from_u64(seed_for(params.seed, &trajectory.trajectory_id));
    let mut steps = Vec::with_capacity(n);
    for i in 0..n - 1 {
        let here = trajectory.frames[i].image_id;
        let next = trajectory.frames[i + 1].image_id;
        let near = |c: &ViewCluster| {
            c.members.iter().any(|m| {
                m.image_id == here
                    || m.image_id == next
                    || (m.center - centers[i]).norm() <= params.proximity_m
                    || (m.center - centers[i + 1]).norm() <= params.proximity_m
            })
        };
        let adjacent: BTreeSet<usize> = sources.clusters.iter().filter(|c| near(c)).map(|c| c.cluster_id).collect();
        let mut pool: Vec<ImageId> = Vec::new();
        for p in sources.pairs.iter().filter(|p| adjacent.contains(&p.cluster_id)) {
            for id in [p.negative, p.positive] {
                if id != here && id != next && !pool.contains(&id) {
                    pool.push(id);
                }
            }
        }
        if pool.is_empty() {
            pool = sources
                .decision_frames
                .iter()
                .copied()
                .filter(|&id| id != here && id != next)
                .collect::<BTreeSet<_>>()
                .into_iter()
                .collect();
        }
        pool.retain(|id| model.frames.contains_key(id));
        let negatives: Vec<ImageId> = pool.choose_multiple(&mut rng, params.negatives_per_step).copied().collect();

        let mut candidates = Vec::with_capacity(negatives.len() + 1);
        candidates.push(Candidate {
            frame: next,
            name: trajectory.frames[i + 1].name.clone(),
            role: CandidateRole::Positive,
            center: centers[i + 1],
        });
        for id in negatives {
            candidates.push(Candidate {
                frame: id,
                name: name_of(id),
                role: CandidateRole::Negative,
                center: center_of(id)?,
            });
        }
        candidates.shuffle(&mut rng);
        let target = candidates.iter().position(|c| c.role == CandidateRole::Positive).expect("positive present");
        steps.push(EpisodeStep {
            observation: here,
            observation_name: trajectory.frames[i].name.clone(),
            candidates,
            stop_allowed: true,
            target: Action::Candidate(target),
        });
    }
    let last = &trajectory.frames[n - 1];
    steps.push(EpisodeStep {
        observation: last.image_id,
        observation_name: last.name.clone(),
        candidates: Vec::new(),
        stop_allowed: true,
        target: Action::Stop,
    });

    Ok(ActionEpisode {
        episode_id: format!("{}-ep", trajectory.trajectory_id),
        video_id: video_id.into(),
        instruction: record.map_or_else(|| PLACEHOLDER_INSTRUCTION.into(), |r| r.description.clone()),
        steps,
        start_center: centers[0],
        goal_center: centers[n - 1],
        gt_path_length: centers.windows(2).map(|w| (w[1] - w[0]).norm()).sum(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "policy")]
pub enum Policy {
    Oracle,
    Random { seed: u64 },
    First,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyTrace {
    pub episode_id: String,
    pub chosen: Vec<Action>,
    pub path_length: f64,
    pub final_center: Vec3,
    pub stopped: bool,
}

/// Replay `policy` over the episodes in order. A random policy draws from a
/// single stream seeded once per call.
pub fn replay_policy(episodes: &[ActionEpisode], policy: Policy) -> Vec<PolicyTrace> {
    let mut rng = match policy {
        Policy::Random { seed } => Some(ChaCha8Rng::seed_from_u64(seed)),
        _ => None,
    };
    episodes
        .iter()
        .map(|ep| {
            let mut here = ep.start_center;
            let mut trace = PolicyTrace {
                episode_id: ep.episode_id.clone(),
                chosen: Vec::new(),
                path_length: 0.0,
                final_center: here,
                stopped: false,
            };
            for step in &ep.steps {
                let options = step.candidates.len() + usize::from(step.stop_allowed);
                if options == 0 {
                    continue;
                }
                let action = match policy {
                    Policy::Oracle => step.target,
                    Policy::First if !step.candidates.is_empty() => Action::Candidate(0),
                    Policy::First => Action::Stop,
                    Policy::Random { .. } => {
                        let k = rng.as_mut().expect("seeded").random_range(0..options);
                        if k < step.candidates.len() {
                            Action::Candidate(k)
                        } else {
                            Action::Stop
                        }
                    }
                };
                trace.chosen.push(action);
                match action {
                    Action::Stop => {
                        trace.stopped = true;
                        break;
                    }
                    Action::Candidate(c) => {
                        let to = step.candidates[c].center;
                        trace.path_length += (to - here).norm();
                        here = to;
                    }
                }
            }
            trace.final_center = here;
            trace
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeScore {
    pub episode_id: String,
    pub success: bool,
    pub spl: f64,
    pub gp: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NavMetrics {
    pub sr: f64,
    pub spl: f64,
    pub gp: f64,
    pub n_episodes: usize,
    pub success_radius_m: f64,
}

pub fn score_episodes(
    episodes: &[ActionEpisode],
    traces: &[PolicyTrace],
    success_radius_m: f64,
) -> Result<Vec<EpisodeScore>, EpisodeError> {
    if episodes.len() != traces.len() {
        return Err(EpisodeError::LengthMismatch {
            episodes: episodes.len(),
            traces: traces.len(),
        });
    }
    Ok(episodes
        .iter()
        .zip(traces)
        .map(|(ep, tr)| {
            let remaining = (tr.final_center - ep.goal_center).norm();
            let success = tr.stopped && remaining <= success_radius_m;
            let longest = ep.gt_path_length.max(tr.path_length);
            let spl = if !success {
                0.0
            } else if longest > 0.0 {
                ep.gt_path_length / longest
            } else {
                1.0
            };
            EpisodeScore {
                episode_id: ep.episode_id.clone(),
                success,
                spl,
                gp: (ep.start_center - ep.goal_center).norm() - remaining,
            }
        })
        .collect())
}

pub fn compute_metrics(
    episodes: &[ActionEpisode],
    traces: &[PolicyTrace],
    success_radius_m: f64,
) -> Result<NavMetrics, EpisodeError> {
    let scores = score_episodes(episodes, traces, success_radius_m)?;
    if scores.is_empty() {
        return Err(EpisodeError::NoEpisodes);
    }
    let n = scores.len() as f64;
    let mean = |f: &dyn Fn(&EpisodeScore) -> f64| scores.iter().map(f).sum::<f64>() / n;
    Ok(NavMetrics {
        sr: mean(&|s| if s.success { 1.0 } else { 0.0 }),
        spl: mean(&|s| s.spl),
        gp: mean(&|s| s.gp),
        n_episodes: scores.len(),
        success_radius_m,
    })
}
