//! Planning tasks cut from scripted trajectories.

use std::io::{BufRead, Write};
use std::sync::Arc;

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use super::metrics::{goal_leaf_visibility, MjeReport};
use crate::camera::Camera;
use crate::error::{invalid, Error, Result};
use crate::policy::PolicyContext;
use crate::pose::Pose;
use crate::rng;
use crate::scene::Scene;
use crate::sim::{generate_trajectory, MotionConfig, Observation, WorldModelState, WORLD_MODEL_CONTEXT};
use crate::skeleton::KinematicModel;

/// A start state with context and a goal observation; the goal pose is for
/// scoring only.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Task {
    pub id: String,
    pub scene: Scene,
    /// Oldest first; the last entry is the current step.
    pub context_observations: Vec<Observation>,
    pub context_poses: Vec<Pose>,
    pub goal_observation: Observation,
    pub goal_pose: Pose,
    /// Steps from the current pose to the goal pose.
    pub horizon: usize,
    /// Leaf joints whose goal position projects into the current view.
    pub goal_visibility: [bool; 4],
    /// Error of standing still.
    pub initial: MjeReport,
}

impl Task {
    pub fn current_pose(&self) -> &Pose {
        self.context_poses.last().expect("tasks carry context")
    }

    pub fn current_observation(&self) -> &Observation {
        self.context_observations.last().expect("tasks carry context")
    }

    /// The most recent `keep` context entries as policy input.
    pub fn policy_context(&self, keep: usize) -> Result<PolicyContext> {
        Ok(PolicyContext::new(self.context_observations.clone(), self.context_poses.clone())?.truncated(keep))
    }

    pub fn world_model(
        &self,
        model: Arc<KinematicModel>,
        camera: Camera,
        noise_scale: f64,
        seed: u64,
    ) -> Result<WorldModelState> {
        WorldModelState::new(
            Arc::new(self.scene.clone()),
            model,
            camera,
            *self.current_pose(),
            self.context_observations.clone(),
            noise_scale,
            seed,
        )
    }

    /// The goal horizon encoded in a task id, if it follows the
    /// `{suite}-h{horizon}-{index}` pattern.
    pub fn horizon_from_id(id: &str) -> Option<usize> {
        let mut parts = id.rsplit('-');
        parts.next()?;
        parts.next()?.strip_prefix('h')?.parse().ok()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TaskConfig {
    /// Prefix of every task id.
    pub suite: String,
    pub count: usize,
    pub horizon: usize,
    pub context: usize,
    pub min_leaf_mje: f64,
    /// Largest number of trajectory steps skipped before the context starts.
    pub lead_in: usize,
    /// Attempts allowed per requested task before giving up.
    pub attempts_per_task: usize,
    pub motion: MotionConfig,
    pub seed: u64,
}

impl Default for TaskConfig {
    fn default() -> Self {
        TaskConfig {
            suite: "train".into(),
            count: 128,
            horizon: 8,
            context: WORLD_MODEL_CONTEXT,
            min_leaf_mje: 0.1,
            lead_in: 32,
            attempts_per_task: 20,
            motion: MotionConfig::default(),
            seed: 0,
        }
    }
}

/// Why a candidate was turned down.
#[derive(Default)]
struct Rejections {
    no_visible_goal_joint: usize,
    too_close: usize,
    motion: usize,
}

/// Samples `cfg.count` tasks, cycling through `scenes`. Each attempt draws
/// from its own substream, so the output depends only on the inputs.
pub fn generate_tasks(scenes: &[Scene], model: &KinematicModel, cam: &Camera, cfg: &TaskConfig) -> Result<Vec<Task>> {
    if scenes.is_empty() {
        return Err(invalid("task generation needs at least one scene"));
    }
    if cfg.context == 0 || cfg.context > WORLD_MODEL_CONTEXT {
        return Err(invalid(format!("task context must be in 1..={WORLD_MODEL_CONTEXT}")));
    }
    let max_attempts = cfg.count.max(1) * cfg.attempts_per_task.max(1);
    let mut tasks = Vec::with_capacity(cfg.count);
    let mut rejected = Rejections::default();
    let mut attempt = 0;
    while tasks.len() < cfg.count {
        if attempt == max_attempts {
            return Err(Error::TaskGeneration {
                attempts: attempt,
                accepted: tasks.len(),
                reason: format!(
                    "horizon {}: {} without a visible goal joint, {} with leaf MJE below {} m, {} motion failures",
                    cfg.horizon, rejected.no_visible_goal_joint, rejected.too_close, cfg.min_leaf_mje, rejected.motion
                ),
            });
        }
        let scene = &scenes[attempt % scenes.len()];
        let mut r = rng::substream(cfg.seed, &[attempt as u64]);
        attempt += 1;
        let skip = r.random_range(0..=cfg.lead_in);
        let length = skip + cfg.context + cfg.horizon;
        let frames = match generate_trajectory(scene, model, cam, &mut r, length, &cfg.motion) {
            Ok(f) => f,
            Err(_) => {
                rejected.motion += 1;
                continue;
            }
        };
        let window = &frames[skip..skip + cfg.context];
        let current = window.last().expect("context is non-empty").pose;
        let goal = &frames[skip + cfg.context - 1 + cfg.horizon];
        let visibility = goal_leaf_visibility(&goal.pose, &current, model, cam);
        if !visibility.contains(&true) {
            rejected.no_visible_goal_joint += 1;
            continue;
        }
        let initial = MjeReport::new(&current, &goal.pose, model, &visibility);
        if initial.leaf < cfg.min_leaf_mje {
            rejected.too_close += 1;
            continue;
        }
        tasks.push(Task {
            id: format!("{}-h{}-{:04}", cfg.suite, cfg.horizon, tasks.len()),
            scene: scene.clone(),
            context_observations: window.iter().map(|f| f.observation.clone()).collect(),
            context_poses: window.iter().map(|f| f.pose).collect(),
            goal_observation: goal.observation.clone(),
            goal_pose: goal.pose,
            horizon: cfg.horizon,
            goal_visibility: visibility,
            initial,
        });
    }
    Ok(tasks)
}

/// Rooms and a corridor used for generating and tuning task suites.
pub fn training_scenes() -> Result<Vec<Scene>> {
    let mut scenes = (0..4)
        .map(|i| Scene::default_room(format!("room-{i}"), &mut rng::substream(0x5CE9E, &[i])))
        .collect::<Result<Vec<_>>>()?;
    scenes.push(Scene::corridor("corridor", 12.0, 1.5)?);
    Ok(scenes)
}

/// Rooms drawn from a separate stream and never used for tuning.
pub fn holdout_scenes() -> Result<Vec<Scene>> {
    (0..2)
        .map(|i| Scene::default_room(format!("holdout-{i}"), &mut rng::substream(0x401D, &[i])))
        .collect()
}

pub fn write_tasks(mut out: impl Write, tasks: &[Task]) -> Result<()> {
    for t in tasks {
        serde_json::to_writer(&mut out, t)?;
        out.write_all(b"\n")?;
    }
    Ok(())
}

pub fn read_tasks(input: impl BufRead) -> Result<Vec<Task>> {
    let mut tasks = Vec::new();
    for line in input.lines() {
        let line = line?;
        if !line.trim().is_empty() {
            tasks.push(serde_json::from_str(&line)?);
        }
    }
    Ok(tasks)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bench::metrics::{mje, JointSubset};

    fn small(count: usize, horizon: usize) -> TaskConfig {
        TaskConfig {
            count,
            horizon,
            seed: 11,
            ..TaskConfig::default()
        }
    }

    #[test]
    fn generated_tasks_satisfy_both_filters() {
        let model = KinematicModel::default();
        let cam = Camera::default();
        let tasks = generate_tasks(&training_scenes().unwrap(), &model, &cam, &small(24, 8)).unwrap();
        assert_eq!(tasks.len(), 24);
        for t in &tasks {
            assert_eq!(t.context_observations.len(), 8);
            assert_eq!(goal_leaf_visibility(&t.goal_pose, t.current_pose(), &model, &cam), t.goal_visibility);
            assert!(t.goal_visibility.contains(&true));
            assert!(mje(t.current_pose(), &t.goal_pose, &model, JointSubset::Leaf) >= 0.1);
            assert_eq!(t.initial.all, mje(t.current_pose(), &t.goal_pose, &model, JointSubset::All));
            assert_eq!(Task::horizon_from_id(&t.id), Some(8));
        }
    }

    #[test]
    fn zero_horizon_is_rejected_with_diagnostics() {
        let err = generate_tasks(
            &training_scenes().unwrap(),
            &KinematicModel::default(),
            &Camera::default(),
            &small(3, 0),
        )
        .unwrap_err();
        match err {
            Error::TaskGeneration { accepted, reason, .. } => {
                assert_eq!(accepted, 0);
                assert!(reason.contains("leaf MJE"), "{reason}");
            }
            other => panic!("unexpected error {other}"),
        }
    }

    #[test]
    fn seeded_generation_writes_identical_files() {
        let model = KinematicModel::default();
        let cam = Camera::default();
        let scenes = training_scenes().unwrap();
        let write = || {
            let mut buf = Vec::new();
            write_tasks(&mut buf, &generate_tasks(&scenes, &model, &cam, &small(6, 8)).unwrap()).unwrap();
            buf
        };
        let a = write();
        assert_eq!(a, write());
        let back = read_tasks(a.as_slice()).unwrap();
        let mut again = Vec::new();
        write_tasks(&mut again, &back).unwrap();
        assert_eq!(a, again);
    }

    #[test]
    fn holdout_scenes_are_distinct() {
        let train = training_scenes().unwrap();
        for h in holdout_scenes().unwrap() {
            assert!(train.iter().all(|t| t.id != h.id && t.landmarks != h.landmarks));
        }
    }
}
