//! Interactive session state, independent of the transport.
//!
//! Seeding: the world model draws from `derive_seed(seed, [0])`, the `k`-th
//! committed step's policy sample from `substream(seed, [1, k])`, extra
//! diagnostic samples from `substream(seed, [1, k, s])`, and the idle start
//! context from `substream(seed, [3])`.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use lwm::camera::{camera_pose_of, project, Camera, LeafJoint, RigidTransform, WaypointSet, IMAGE_HALF_EXTENT};
use lwm::cem::{cem_plan, observation_cost, CemConfig, SearchSpace};
use lwm::lifted::{advance_context, LwmRollout};
use lwm::policy::{PolicyConfig, PolicyContext, WaypointPolicy};
use lwm::pose::{integrate_plan, Action, Pose};
use lwm::rng;
use lwm::scene::Scene;
use lwm::sim::{generate_trajectory, MotionConfig, MotionMix, Observation, WorldModel, WorldModelState, WORLD_MODEL_CONTEXT};
use lwm::skeleton::{Joint, KinematicModel};
use lwm::{Error, Result};

/// Version tag carried by every payload.
pub const SCHEMA: &str = "lwm/1";

/// Largest `sample_count` accepted by a step.
pub const MAX_SAMPLES: usize = 256;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SessionConfig {
    pub policy: PolicyConfig,
    /// Defaults for plan requests.
    pub cem: CemConfig,
    pub wm_noise: f64,
    /// Motion of the generated start context.
    pub motion: MotionConfig,
}

impl Default for SessionConfig {
    fn default() -> Self {
        SessionConfig {
            policy: PolicyConfig::default(),
            cem: CemConfig::default(),
            wm_noise: 0.0,
            motion: MotionConfig::default().with_mix(MotionMix::idle_only()),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct JointProjection {
    pub joint: &'static str,
    pub leaf: bool,
    pub u: f64,
    pub v: f64,
    pub depth: f64,
    pub visible: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ImageBounds {
    pub min: [f64; 2],
    pub max: [f64; 2],
}

const BOUNDS: ImageBounds = ImageBounds {
    min: [-IMAGE_HALF_EXTENT, -IMAGE_HALF_EXTENT],
    max: [IMAGE_HALF_EXTENT, IMAGE_HALF_EXTENT],
};

/// What the session currently sees, with its own joints projected into the
/// current camera.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct FramePayload {
    pub schema: &'static str,
    pub session_id: String,
    pub scene_id: String,
    /// Committed high-level steps so far.
    pub step: usize,
    pub observation: Observation,
    pub joints: Vec<JointProjection>,
    pub bounds: ImageBounds,
    pub context_len: usize,
}

/// One simulated low-level step. Joints are projected into the camera the
/// waypoints were placed in.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct StepFrame {
    pub schema: &'static str,
    pub index: usize,
    pub observation: Observation,
    pub action: Action,
    pub joints: Vec<JointProjection>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SampleSpread {
    pub samples: usize,
    /// Per leaf joint, RMS distance of final positions from their mean, meters.
    pub final_spread_m: Vec<(&'static str, f64)>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct StepPayload {
    pub schema: &'static str,
    pub session_id: String,
    pub step: usize,
    pub waypoints: WaypointSet,
    pub frames: Vec<StepFrame>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub diagnostics: Option<SampleSpread>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SnapshotPayload {
    pub schema: &'static str,
    pub session_id: String,
    pub snapshot_id: usize,
    pub observation: Observation,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PlanPayload {
    pub schema: &'static str,
    pub session_id: String,
    pub snapshot_id: usize,
    pub space: SearchSpace,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub waypoints: Option<Vec<WaypointSet>>,
    pub actions: Vec<Action>,
    pub best_cost: f64,
    /// Cost of the current view against the goal, for comparison.
    pub current_cost: f64,
    pub cost_history: Vec<f64>,
    /// Preview of the plan on a copy of the world model; not committed.
    pub frames: Vec<StepFrame>,
}

pub struct Session {
    id: String,
    scene: Arc<Scene>,
    seed: u64,
    config: SessionConfig,
    policy: WaypointPolicy,
    wm: WorldModelState,
    ctx: PolicyContext,
    history: Vec<(WaypointSet, LwmRollout)>,
    snapshots: Vec<Observation>,
}

fn projections(pose: &Pose, model: &KinematicModel, cam_pose: &RigidTransform, cam: &Camera) -> Vec<JointProjection> {
    let frames = model.frames(pose);
    Joint::ALL
        .into_iter()
        .map(|j| {
            let pr = project(&frames.position(j), cam_pose, cam);
            JointProjection {
                joint: j.name(),
                leaf: j.is_leaf(),
                u: pr.uv[0],
                v: pr.uv[1],
                depth: pr.depth,
                visible: pr.visible,
            }
        })
        .collect()
}

impl Session {
    /// Starts in `scene` after an idle lead-in of one world-model context.
    pub fn new(id: impl Into<String>, scene: Arc<Scene>, seed: u64, config: SessionConfig) -> Result<Self> {
        let model = Arc::new(KinematicModel::default());
        let camera = Camera::default();
        let policy = WaypointPolicy::new(model.clone(), camera, config.policy)?;
        let start = generate_trajectory(
            &scene,
            &model,
            &camera,
            &mut rng::substream(seed, &[3]),
            WORLD_MODEL_CONTEXT,
            &config.motion,
        )?;
        let observations: Vec<Observation> = start.iter().map(|f| f.observation.clone()).collect();
        let poses: Vec<Pose> = start.iter().map(|f| f.pose).collect();
        let current = *poses.last().expect("context is non-empty");
        let wm = WorldModelState::new(
            scene.clone(),
            model,
            camera,
            current,
            observations.clone(),
            config.wm_noise,
            rng::derive_seed(seed, &[0]),
        )?;
        let ctx = PolicyContext::new(observations, poses)?.truncated(config.policy.context + 1);
        Ok(Session {
            id: id.into(),
            scene,
            seed,
            config,
            policy,
            wm,
            ctx,
            history: Vec::new(),
            snapshots: Vec::new(),
        })
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn scene(&self) -> &Scene {
        &self.scene
    }

    pub fn config(&self) -> &SessionConfig {
        &self.config
    }

    pub fn world_model(&self) -> &WorldModelState {
        &self.wm
    }

    pub fn context(&self) -> &PolicyContext {
        &self.ctx
    }

    pub fn history(&self) -> &[(WaypointSet, LwmRollout)] {
        &self.history
    }

    fn camera_pose(&self) -> RigidTransform {
        camera_pose_of(self.ctx.current_pose(), self.policy.model(), self.policy.camera())
    }

    pub fn frame(&self) -> FramePayload {
        FramePayload {
            schema: SCHEMA,
            session_id: self.id.clone(),
            scene_id: self.scene.id.clone(),
            step: self.history.len(),
            observation: self.wm.latest().clone(),
            joints: projections(self.ctx.current_pose(), self.policy.model(), &self.camera_pose(), self.policy.camera()),
            bounds: BOUNDS,
            context_len: self.wm.context().len(),
        }
    }

    fn step_frames(&self, actions: &[Action], observations: &[Observation]) -> Vec<StepFrame> {
        let cam_pose = self.camera_pose();
        let mut pose = *self.ctx.current_pose();
        actions
            .iter()
            .zip(observations)
            .enumerate()
            .map(|(index, (a, o))| {
                pose = lwm::pose::apply_action(&pose, a);
                StepFrame {
                    schema: SCHEMA,
                    index,
                    observation: o.clone(),
                    action: *a,
                    joints: projections(&pose, self.policy.model(), &cam_pose, self.policy.camera()),
                }
            })
            .collect()
    }

    /// Runs the lifted world model on `waypoints` and commits the result.
    /// `on_frame` sees each low-level step as soon as it is simulated. With
    /// `sample_count > 1` the extra samples only feed the diagnostics.
    pub fn step(
        &mut self,
        waypoints: &WaypointSet,
        sample_count: usize,
        mut on_frame: impl FnMut(&StepFrame),
    ) -> Result<StepPayload> {
        if sample_count == 0 || sample_count > MAX_SAMPLES {
            return Err(Error::InvalidInput(format!("sample_count must be in 1..={MAX_SAMPLES}")));
        }
        let k = self.history.len() as u64;
        let actions = self
            .policy
            .generate_actions(&self.ctx, waypoints, &mut rng::substream(self.seed, &[1, k]))?;
        let cam_pose = self.camera_pose();
        let mut wm = self.wm.clone();
        let mut pose = *self.ctx.current_pose();
        let mut frames = Vec::with_capacity(actions.len());
        for (index, a) in actions.iter().enumerate() {
            let observation = wm.step(a)?;
            pose = lwm::pose::apply_action(&pose, a);
            let frame = StepFrame {
                schema: SCHEMA,
                index,
                observation,
                action: *a,
                joints: projections(&pose, self.policy.model(), &cam_pose, self.policy.camera()),
            };
            on_frame(&frame);
            frames.push(frame);
        }
        let diagnostics = (sample_count > 1).then(|| self.spread(waypoints, k, sample_count, &actions));
        let rollout = LwmRollout {
            observations: frames.iter().map(|f| f.observation.clone()).collect(),
            final_pose_estimate: integrate_plan(self.ctx.current_pose(), &actions),
            actions,
        };
        self.ctx = advance_context(&self.ctx, &rollout, self.config.policy.context + 1);
        self.wm = wm;
        self.history.push((*waypoints, rollout));
        Ok(StepPayload {
            schema: SCHEMA,
            session_id: self.id.clone(),
            step: self.history.len(),
            waypoints: *waypoints,
            frames,
            diagnostics,
        })
    }

    fn spread(&self, waypoints: &WaypointSet, k: u64, n: usize, first: &[Action]) -> SampleSpread {
        let start = self.ctx.current_pose();
        let mut finals = vec![integrate_plan(start, first)];
        for s in 1..n {
            let mut r = rng::substream(self.seed, &[1, k, s as u64]);
            if let Ok(a) = self.policy.generate_actions(&self.ctx, waypoints, &mut r) {
                finals.push(integrate_plan(start, &a));
            }
        }
        let model = self.policy.model();
        let positions: Vec<_> = finals.iter().map(|p| model.frames(p)).collect();
        let final_spread_m = LeafJoint::ALL
            .into_iter()
            .map(|leaf| {
                let pts: Vec<_> = positions.iter().map(|f| f.position(leaf.joint())).collect();
                let mean = pts.iter().fold(lwm::rotation::Vec3::zeros(), |a, p| a + p) / pts.len() as f64;
                let ms = pts.iter().map(|p| (p - mean).norm_squared()).sum::<f64>() / pts.len() as f64;
                (leaf.name(), ms.sqrt())
            })
            .collect();
        SampleSpread {
            samples: finals.len(),
            final_spread_m,
        }
    }

    /// Saves the current observation as a future plan goal.
    pub fn snapshot(&mut self) -> SnapshotPayload {
        self.save_snapshot(self.wm.latest().clone())
    }

    /// Saves a supplied observation, such as a frame from another session in
    /// the same scene, as a plan goal.
    pub fn save_snapshot(&mut self, observation: Observation) -> SnapshotPayload {
        self.snapshots.push(observation.clone());
        SnapshotPayload {
            schema: SCHEMA,
            session_id: self.id.clone(),
            snapshot_id: self.snapshots.len() - 1,
            observation,
        }
    }

    /// Plans toward a saved snapshot without changing the session. Without
    /// `cem`, the session defaults apply with seed `derive_seed(seed, [2])`.
    pub fn plan(&self, snapshot_id: usize, cem: Option<CemConfig>) -> Result<PlanPayload> {
        let goal = self
            .snapshots
            .get(snapshot_id)
            .ok_or_else(|| Error::NotFound(format!("snapshot {snapshot_id} in session {}", self.id)))?;
        let cfg = cem.unwrap_or(CemConfig {
            seed: rng::derive_seed(self.seed, &[2]),
            ..self.config.cem
        });
        let plan = cem_plan(&self.wm, &self.ctx, &self.policy, goal, &cfg)?;
        let mut preview = self.wm.fork(cfg.seed);
        let observations = plan
            .best_actions
            .iter()
            .map(|a| preview.step(a))
            .collect::<Result<Vec<_>>>()?;
        Ok(PlanPayload {
            schema: SCHEMA,
            session_id: self.id.clone(),
            snapshot_id,
            space: plan.space,
            waypoints: plan.best_hl.clone(),
            frames: self.step_frames(&plan.best_actions, &observations),
            actions: plan.best_actions,
            best_cost: plan.best_cost,
            current_cost: observation_cost(self.wm.latest(), goal, cfg.miss_penalty),
            cost_history: plan.cost_history,
        })
    }

    /// Cost of the current view against a saved snapshot.
    pub fn cost_to(&self, snapshot_id: usize) -> Option<f64> {
        self.snapshots
            .get(snapshot_id)
            .map(|g| observation_cost(self.wm.latest(), g, self.config.cem.miss_penalty))
    }
}
