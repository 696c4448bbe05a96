use std::collections::VecDeque;
use std::sync::Arc;

use rand_distr::{Distribution, Normal};

use super::observation::{render_observation, Observation};
use crate::camera::Camera;
use crate::error::{invalid, Result};
use crate::pose::{apply_action, Action, Pose};
use crate::rng::{self, Rng};
use crate::rotation::EulerAngles;
use crate::scene::Scene;
use crate::skeleton::KinematicModel;

/// Observation history length the world model conditions on.
pub const WORLD_MODEL_CONTEXT: usize = 8;

/// Observation-in, observation-out world model.
///
/// Implementations are values: planners clone or [`fork`](WorldModel::fork)
/// them per sample and never share mutable state.
pub trait WorldModel: Clone + Send + Sync {
    /// Predicts the next observation and appends it to the context.
    fn step(&mut self, action: &Action) -> Result<Observation>;

    /// Most recent observations, oldest first.
    fn context(&self) -> &VecDeque<Observation>;

    fn latest(&self) -> &Observation {
        self.context().back().expect("context is never empty")
    }

    /// Independent copy whose noise is drawn from substream `stream`.
    fn fork(&self, stream: u64) -> Self;
}

/// Kinematic simulator standing in for a learned video model: it integrates
/// actions on a hidden pose and renders the scene from the resulting camera.
#[derive(Clone, Debug)]
pub struct WorldModelState {
    scene: Arc<Scene>,
    model: Arc<KinematicModel>,
    camera: Camera,
    pose: Pose,
    context: VecDeque<Observation>,
    capacity: usize,
    noise_scale: f64,
    seed: u64,
    rng: Rng,
    clock: u64,
}

impl WorldModelState {
    /// Starts from the true `pose` with prior observations `history`
    /// (oldest first). An empty history is seeded with a render of `pose`.
    pub fn new(
        scene: Arc<Scene>,
        model: Arc<KinematicModel>,
        camera: Camera,
        pose: Pose,
        history: Vec<Observation>,
        noise_scale: f64,
        seed: u64,
    ) -> Result<Self> {
        if !pose.is_finite() {
            return Err(invalid("initial pose is not finite"));
        }
        if !(noise_scale.is_finite() && noise_scale >= 0.0) {
            return Err(invalid("world-model noise scale must be non-negative"));
        }
        let mut context: VecDeque<Observation> = history.into();
        if context.is_empty() {
            context.push_back(render_observation(&pose, &scene, &model, &camera));
        }
        while context.len() > WORLD_MODEL_CONTEXT {
            context.pop_front();
        }
        let clock = context.back().map_or(0, |o| o.timestamp);
        Ok(WorldModelState {
            scene,
            model,
            camera,
            pose,
            context,
            capacity: WORLD_MODEL_CONTEXT,
            noise_scale,
            seed,
            rng: rng::from_seed(seed),
            clock,
        })
    }

    pub fn scene(&self) -> &Arc<Scene> {
        &self.scene
    }

    pub fn model(&self) -> &Arc<KinematicModel> {
        &self.model
    }

    pub fn camera(&self) -> &Camera {
        &self.camera
    }

    pub fn noise_scale(&self) -> f64 {
        self.noise_scale
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    #[cfg(test)]
    pub(crate) fn hidden_pose(&self) -> &Pose {
        &self.pose
    }

    fn perturb(&mut self, pose: &mut Pose) {
        if self.noise_scale == 0.0 {
            return;
        }
        let n = Normal::new(0.0, self.noise_scale).expect("checked non-negative");
        for c in pose.pelvis_position.iter_mut() {
            *c += n.sample(&mut self.rng);
        }
        for e in pose.joint_angles.iter_mut() {
            let d = [n.sample(&mut self.rng), n.sample(&mut self.rng), n.sample(&mut self.rng)];
            *e = EulerAngles([e.0[0] + d[0], e.0[1] + d[1], e.0[2] + d[2]]);
        }
    }
}

impl WorldModel for WorldModelState {
    fn step(&mut self, action: &Action) -> Result<Observation> {
        if !action.is_finite() {
            return Err(invalid("action contains non-finite values"));
        }
        let mut next = apply_action(&self.pose, action);
        self.perturb(&mut next);
        self.pose = next;
        self.clock += 1;
        let obs = render_observation(&self.pose, &self.scene, &self.model, &self.camera)
            .with_timestamp(self.clock);
        if self.context.len() == self.capacity {
            self.context.pop_front();
        }
        self.context.push_back(obs.clone());
        Ok(obs)
    }

    fn context(&self) -> &VecDeque<Observation> {
        &self.context
    }

    fn fork(&self, stream: u64) -> Self {
        let mut out = self.clone();
        out.seed = rng::derive_seed(self.seed, &[stream]);
        out.rng = rng::from_seed(out.seed);
        out
    }
}
