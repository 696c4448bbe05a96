//! Waypoint-conditioned policy: turns a high-level action into `T`
//! low-level actions.
//!
//! Present waypoints are lifted to 3D goal positions, an IK solve produces a
//! goal pose, and the policy interpolates from the current pose to it. With
//! no usable waypoint it extrapolates the recent motion instead.

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::camera::{camera_pose_of, project, Camera, LeafJoint, RigidTransform, Waypoint, WaypointSet};
use crate::error::{invalid, Result};
use crate::ik::{self, IkOptions, IkSolution, IkTarget, ParamMask};
use crate::pose::{action_between, Action, Pose};
use crate::rotation::{geodesic_interpolate, rotation_distance, EulerAngles, Vec3};
use crate::sim::Observation;
use crate::skeleton::{Joint, KinematicModel, JOINT_COUNT};

/// How a 2D waypoint gets its depth.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum DepthMode {
    /// Infer depth from the current body configuration.
    #[default]
    #[serde(rename = "heuristic-2d")]
    Heuristic2d,
    /// Use the depth carried by each waypoint.
    #[serde(rename = "given-3d")]
    Given3d,
}

impl DepthMode {
    pub fn name(self) -> &'static str {
        match self {
            DepthMode::Heuristic2d => "heuristic-2d",
            DepthMode::Given3d => "given-3d",
        }
    }
}

impl fmt::Display for DepthMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for DepthMode {
    type Err = crate::Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "heuristic-2d" => Ok(DepthMode::Heuristic2d),
            "given-3d" => Ok(DepthMode::Given3d),
            _ => Err(invalid(format!("unknown depth mode {s:?}"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PolicyConfig {
    /// Actions produced per call.
    pub horizon: usize,
    /// Past steps kept in the context beyond the current one.
    pub context: usize,
    pub ik_damping: f64,
    pub ik_iterations: usize,
    /// Standard deviation of the goal perturbation when sampling, meters.
    pub goal_noise: f64,
    /// Per-iteration pull of untargeted parameters back to the start pose.
    pub hold_weight: f64,
    pub depth_mode: DepthMode,
    /// Largest pelvis displacement per generated step, meters.
    pub max_pelvis_step: f64,
    /// Largest rotation of any joint per generated step, radians.
    pub max_joint_step: f64,
    /// Per-step decay of the extrapolated action without waypoints.
    pub decay: f64,
}

impl Default for PolicyConfig {
    fn default() -> Self {
        PolicyConfig {
            horizon: 8,
            context: 3,
            ik_damping: 0.05,
            ik_iterations: 40,
            goal_noise: 0.03,
            hold_weight: 0.1,
            depth_mode: DepthMode::Heuristic2d,
            max_pelvis_step: 0.24,
            max_joint_step: 0.3,
            decay: 0.9,
        }
    }
}

impl PolicyConfig {
    pub fn validate(&self) -> Result<()> {
        if self.horizon == 0 {
            return Err(invalid("policy horizon must be at least one step"));
        }
        if !(self.ik_damping.is_finite() && self.ik_damping > 0.0) {
            return Err(invalid("IK damping must be positive"));
        }
        if !(self.goal_noise.is_finite() && self.goal_noise >= 0.0) {
            return Err(invalid("goal noise must be non-negative"));
        }
        if !(0.0..=1.0).contains(&self.hold_weight) {
            return Err(invalid("hold weight must lie in [0, 1]"));
        }
        if !(self.max_pelvis_step > 0.0 && self.max_joint_step > 0.0) {
            return Err(invalid("per-step caps must be positive"));
        }
        if !(0.0..=1.0).contains(&self.decay) {
            return Err(invalid("decay must lie in [0, 1]"));
        }
        Ok(())
    }

    pub fn deterministic(mut self) -> Self {
        self.goal_noise = 0.0;
        self
    }
}

/// Recent observations and poses, oldest first; the last pose is current.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PolicyContext {
    observations: Vec<Observation>,
    poses: Vec<Pose>,
}

impl PolicyContext {
    pub fn new(observations: Vec<Observation>, poses: Vec<Pose>) -> Result<Self> {
        if observations.len() != poses.len() {
            return Err(invalid("context needs one pose per observation"));
        }
        if poses.is_empty() {
            return Err(invalid("context must hold at least the current step"));
        }
        if observations.windows(2).any(|w| w[0].timestamp >= w[1].timestamp) {
            return Err(invalid("context observations must be time-ordered"));
        }
        if !poses.iter().all(Pose::is_finite) {
            return Err(invalid("context pose is not finite"));
        }
        Ok(PolicyContext {
            observations,
            poses,
        })
    }

    /// Keeps only the newest `keep` steps.
    pub fn truncated(mut self, keep: usize) -> Self {
        let keep = keep.max(1);
        if self.poses.len() > keep {
            let drop = self.poses.len() - keep;
            self.poses.drain(..drop);
            self.observations.drain(..drop);
        }
        self
    }

    /// Appends a step, dropping the oldest beyond `keep` entries.
    pub fn push(&mut self, observation: Observation, pose: Pose, keep: usize) {
        self.observations.push(observation);
        self.poses.push(pose);
        let keep = keep.max(1);
        if self.poses.len() > keep {
            self.poses.remove(0);
            self.observations.remove(0);
        }
    }

    pub fn observations(&self) -> &[Observation] {
        &self.observations
    }

    pub fn poses(&self) -> &[Pose] {
        &self.poses
    }

    pub fn current_pose(&self) -> &Pose {
        self.poses.last().expect("context is never empty")
    }

    pub fn latest_observation(&self) -> &Observation {
        self.observations.last().expect("context is never empty")
    }

    pub fn len(&self) -> usize {
        self.poses.len()
    }

    pub fn is_empty(&self) -> bool {
        self.poses.is_empty()
    }

    /// The action between the two newest poses, if there are two.
    pub fn last_action(&self) -> Option<Action> {
        let n = self.poses.len();
        (n >= 2).then(|| action_between(&self.poses[n - 2], &self.poses[n - 1]))
    }
}

/// Draws a waypoint mask: `true` hides the waypoint. Half the time nothing
/// is hidden; otherwise each waypoint is hidden independently with
/// probability one half.
pub fn sample_mask(rng: &mut impl rand::Rng) -> [bool; 4] {
    if rng.random_bool(0.5) {
        [false; 4]
    } else {
        [(); 4].map(|_| rng.random_bool(0.5))
    }
}

/// Horizontal range beyond which a floor-plane pelvis estimate is rejected.
const MAX_PELVIS_RANGE: f64 = 4.0;
/// Farthest a head goal may sit from the body-carried head position, meters.
const HEAD_LEEWAY: f64 = 0.15;
/// Closest a hand goal may be to the camera, meters.
const MIN_HAND_DEPTH: f64 = 0.2;

#[derive(Clone, Debug)]
pub struct WaypointPolicy {
    model: Arc<KinematicModel>,
    camera: Camera,
    config: PolicyConfig,
}

impl WaypointPolicy {
    pub fn new(model: Arc<KinematicModel>, camera: Camera, config: PolicyConfig) -> Result<Self> {
        config.validate()?;
        Ok(WaypointPolicy {
            model,
            camera,
            config,
        })
    }

    pub fn config(&self) -> &PolicyConfig {
        &self.config
    }

    pub fn model(&self) -> &Arc<KinematicModel> {
        &self.model
    }

    pub fn camera(&self) -> &Camera {
        &self.camera
    }

    /// Lifts every present waypoint to a world-space goal. Waypoints whose
    /// depth cannot be inferred are left out.
    pub fn backproject_set(&self, set: &WaypointSet, ctx: &PolicyContext) -> Vec<(LeafJoint, Vec3)> {
        let current = ctx.current_pose();
        let cam_pose = camera_pose_of(current, &self.model, &self.camera);
        let frames = self.model.frames(current);
        let pelvis_goal = set
            .get(LeafJoint::Pelvis)
            .and_then(|w| self.lift(w, &cam_pose, &frames.positions, None));
        let shift = pelvis_goal.map_or(Vec3::zeros(), |g| g - current.pelvis_position);
        let anchor = pelvis_goal.unwrap_or(current.pelvis_position);
        let mut out = Vec::with_capacity(set.len());
        for w in set.iter() {
            let goal = match w.joint {
                LeafJoint::Pelvis => pelvis_goal,
                _ => self.lift(w, &cam_pose, &frames.positions, Some((shift, anchor))),
            };
            if let Some(g) = goal {
                out.push((w.joint, g));
            }
        }
        out
    }

    /// Lifts one waypoint against the current pose.
    pub fn backproject_waypoint(&self, w: &Waypoint, ctx: &PolicyContext) -> Option<Vec3> {
        let single = WaypointSet::empty().with(w.joint, w.uv, w.depth);
        let current = ctx.current_pose();
        if w.joint == LeafJoint::Pelvis {
            return self.backproject_set(&single, ctx).first().map(|(_, g)| *g);
        }
        let cam_pose = camera_pose_of(current, &self.model, &self.camera);
        let frames = self.model.frames(current);
        self.lift(
            w,
            &cam_pose,
            &frames.positions,
            Some((Vec3::zeros(), current.pelvis_position)),
        )
    }

    /// `body` is the body translation implied by the pelvis goal and the
    /// pelvis position hands must stay within reach of.
    fn lift(
        &self,
        w: &Waypoint,
        cam_pose: &RigidTransform,
        positions: &[Vec3; JOINT_COUNT],
        body: Option<(Vec3, Vec3)>,
    ) -> Option<Vec3> {
        let ray = self.camera.ray(w.uv);
        let origin = cam_pose.translation;
        let dir = cam_pose.rotation * ray;
        let near = self.camera.near_plane;
        let at = |depth: f64| origin + dir * depth;

        if self.config.depth_mode == DepthMode::Given3d {
            if let Some(d) = w.depth {
                return Some(at(d));
            }
        }

        let here = positions[w.joint.joint().index()];
        match w.joint {
            LeafJoint::Pelvis => {
                // Meet the ray with the horizontal plane at the current pelvis height.
                if dir.y.abs() < 1e-9 {
                    return None;
                }
                let depth = (here.y - origin.y) / dir.y;
                let p = at(depth);
                let horizontal = ((p.x - here.x).powi(2) + (p.z - here.z).powi(2)).sqrt();
                (depth >= near && horizontal <= MAX_PELVIS_RANGE).then_some(p)
            }
            LeafJoint::Head => {
                let (shift, _) = body.unwrap_or_default();
                let carried = here + shift;
                let depth = cam_pose.apply_inverse(&carried).z;
                if depth < near {
                    return None;
                }
                // The head can lean only so far from where the body carries it.
                let off = at(depth) - carried;
                let n = off.norm();
                Some(if n > HEAD_LEEWAY { carried + off * (HEAD_LEEWAY / n) } else { carried + off })
            }
            LeafJoint::LeftHand | LeafJoint::RightHand => {
                // A hand out of view gives no depth cue.
                if !project(&here, cam_pose, &self.camera).visible {
                    return None;
                }
                let (shift, anchor) = body.unwrap_or_default();
                let depth = cam_pose.apply_inverse(&(here + shift)).z.max(MIN_HAND_DEPTH);
                let reach = self
                    .model
                    .chain_length(Joint::Pelvis, w.joint.joint())
                    .unwrap_or(f64::INFINITY);
                Some(at(clamp_to_sphere(&origin, &dir, depth, &anchor, reach, near)))
            }
        }
    }

    /// Damped least-squares goal pose meeting `targets`, starting from
    /// `start` and pulling untargeted parameters back toward it.
    pub fn solve_goal_pose(&self, targets: &[(LeafJoint, Vec3)], start: &Pose) -> IkSolution {
        self.solve_masked(targets, start, ParamMask::all())
    }

    fn solve_masked(&self, targets: &[(LeafJoint, Vec3)], start: &Pose, free: ParamMask) -> IkSolution {
        let targets: Vec<IkTarget> = targets
            .iter()
            .map(|(j, p)| IkTarget {
                joint: j.joint(),
                position: *p,
            })
            .collect();
        let opts = IkOptions {
            damping: self.config.ik_damping,
            max_iterations: self.config.ik_iterations,
            hold_gain: self.config.hold_weight,
            free,
            ..IkOptions::default()
        };
        ik::solve(&self.model, start, &targets, &opts)
    }

    /// Goal solve that keeps the gaze steady: the head's world orientation
    /// follows only the change of heading, and the spine absorbs the rest.
    fn steady_gaze_goal(&self, targets: &[(LeafJoint, Vec3)], current: &Pose, guess: &Pose) -> Pose {
        let carry = guess.angles(Joint::Pelvis).matrix() * current.angles(Joint::Pelvis).matrix().transpose();
        let gaze = carry * self.model.frames(current).rotation(Joint::Head);
        let mut free = ParamMask::all();
        free.0[ik::angle_block(Joint::Head)].fill(false);
        let mut pose = *guess;
        for _ in 0..2 {
            pose = self.solve_masked(targets, &pose, free).pose;
            let neck = self.model.frames(&pose).rotation(Joint::Neck);
            pose.set_angles(Joint::Head, EulerAngles::from_matrix_unchecked(&(neck.transpose() * gaze)));
        }
        pose
    }

    /// Starting guess for the IK: the current pose carried to the pelvis goal
    /// and turned to face the direction of travel.
    fn walking_guess(&self, current: &Pose, pelvis_goal: Option<Vec3>) -> Pose {
        let mut guess = *current;
        let Some(goal) = pelvis_goal else { return guess };
        guess.pelvis_position = goal;
        let d = goal - current.pelvis_position;
        let horizontal = (d.x * d.x + d.z * d.z).sqrt();
        if horizontal < 0.3 {
            return guess;
        }
        let frame = current.angles(Joint::Pelvis).matrix();
        let local = frame.transpose() * d;
        let turn = local.x.atan2(local.z);
        if turn.abs() > std::f64::consts::FRAC_PI_2 {
            return guess;
        }
        let cap = self.config.max_joint_step * self.config.horizon as f64;
        let r = frame * EulerAngles::heading(turn.clamp(-cap, cap)).matrix();
        guess.set_angles(Joint::Pelvis, EulerAngles::from_matrix_unchecked(&r));
        guess
    }

    /// Limits the goal so every interpolated step stays within the per-step caps.
    fn capped_goal(&self, current: &Pose, goal: &Pose) -> Pose {
        let t = self.config.horizon as f64;
        let mut out = *goal;
        let d = goal.pelvis_position - current.pelvis_position;
        let max_d = self.config.max_pelvis_step * t;
        if d.norm() > max_d {
            out.pelvis_position = current.pelvis_position + d * (max_d / d.norm());
        }
        let max_r = self.config.max_joint_step * t;
        for i in 0..JOINT_COUNT {
            let a = current.joint_angles[i].matrix();
            let b = goal.joint_angles[i].matrix();
            let dist = rotation_distance(&a, &b);
            if dist > max_r {
                let r = geodesic_interpolate(&a, &b, max_r / dist);
                out.joint_angles[i] = EulerAngles::from_matrix_unchecked(&r);
            }
        }
        out
    }

    /// Goal pose the policy would steer toward, or `None` when no waypoint
    /// is usable. `rng` perturbs the lifted goals by the configured noise.
    pub fn goal_pose(
        &self,
        ctx: &PolicyContext,
        set: &WaypointSet,
        rng: &mut impl rand::Rng,
    ) -> Option<Pose> {
        let mut targets = self.backproject_set(set, ctx);
        if targets.is_empty() {
            return None;
        }
        if self.config.goal_noise > 0.0 {
            let n = Normal::new(0.0, self.config.goal_noise).expect("validated noise");
            for (_, p) in targets.iter_mut() {
                for c in p.iter_mut() {
                    *c += n.sample(rng);
                }
            }
        }
        let current = ctx.current_pose();
        let pelvis_goal = targets
            .iter()
            .find(|(j, _)| *j == LeafJoint::Pelvis)
            .map(|(_, p)| *p);
        let guess = self.walking_guess(current, pelvis_goal);
        let solved = self.steady_gaze_goal(&targets, current, &guess);
        Some(self.capped_goal(current, &solved))
    }

    /// Produces `horizon` actions from the current pose toward the goal set
    /// by `set`, or extrapolated motion when `set` yields no goal.
    pub fn generate_actions(
        &self,
        ctx: &PolicyContext,
        set: &WaypointSet,
        rng: &mut impl rand::Rng,
    ) -> Result<Vec<Action>> {
        set.validate()?;
        let t = self.config.horizon;
        let Some(goal) = self.goal_pose(ctx, set, rng) else {
            return Ok(self.unconditioned(ctx));
        };
        let current = *ctx.current_pose();
        let mut prev = current;
        let mut actions = Vec::with_capacity(t);
        for k in 1..=t {
            let s = k as f64 / t as f64;
            let next = interpolate_pose(&current, &goal, s);
            actions.push(action_between(&prev, &next));
            prev = next;
        }
        Ok(actions)
    }

    /// Decayed continuation of the newest context action.
    pub fn unconditioned(&self, ctx: &PolicyContext) -> Vec<Action> {
        let last = ctx.last_action().unwrap_or_else(Action::zero);
        let mut scale = 1.0;
        (0..self.config.horizon)
            .map(|_| {
                scale *= self.config.decay;
                last.scaled(scale)
            })
            .collect()
    }
}

/// Linear in pelvis position, geodesic per joint rotation.
pub fn interpolate_pose(from: &Pose, to: &Pose, s: f64) -> Pose {
    let mut out = *from;
    out.pelvis_position = from.pelvis_position + (to.pelvis_position - from.pelvis_position) * s;
    for i in 0..JOINT_COUNT {
        let r = geodesic_interpolate(&from.joint_angles[i].matrix(), &to.joint_angles[i].matrix(), s);
        out.joint_angles[i] = EulerAngles::from_matrix_unchecked(&r);
    }
    out
}

/// Moves `depth` along the ray `origin + dir·t` into the ball of `radius`
/// about `center`, never closer than `near`. A ray that misses the ball
/// takes its closest approach.
fn clamp_to_sphere(origin: &Vec3, dir: &Vec3, depth: f64, center: &Vec3, radius: f64, near: f64) -> f64 {
    let oc = origin - center;
    let a = dir.norm_squared();
    let b = 2.0 * dir.dot(&oc);
    let c = oc.norm_squared() - radius * radius;
    let disc = b * b - 4.0 * a * c;
    if disc < 0.0 {
        return (-b / (2.0 * a)).max(near);
    }
    let root = disc.sqrt();
    let lo = (-b - root) / (2.0 * a);
    let hi = (-b + root) / (2.0 * a);
    if hi < near {
        return near;
    }
    depth.clamp(lo.max(near), hi)
}
