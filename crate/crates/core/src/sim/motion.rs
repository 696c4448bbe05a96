//! Scripted ground-truth motion built from walk, turn, reach and idle
//! primitives, sampled at one pose per control step.

use std::f64::consts::PI;
use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use super::observation::{render_observation, Observation};
use crate::camera::{camera_pose_of, project, Camera};
use crate::error::{invalid, Error, Result};
use crate::ik::{self, IkOptions, IkTarget, ParamMask};
use crate::pose::{action_between, apply_action, Pose};
use crate::rotation::{geodesic_interpolate, EulerAngles, Vec3};
use crate::scene::{Bounds, Scene};
use crate::skeleton::{Joint, KinematicModel};

/// Relative weights of the motion primitives.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MotionMix {
    pub walk: f64,
    pub turn: f64,
    pub reach: f64,
    pub idle: f64,
}

impl Default for MotionMix {
    fn default() -> Self {
        MotionMix {
            walk: 0.45,
            turn: 0.15,
            reach: 0.25,
            idle: 0.15,
        }
    }
}

impl MotionMix {
    pub fn walk_only() -> Self {
        MotionMix {
            walk: 1.0,
            turn: 0.0,
            reach: 0.0,
            idle: 0.0,
        }
    }

    pub fn idle_only() -> Self {
        MotionMix {
            walk: 0.0,
            turn: 0.0,
            reach: 0.0,
            idle: 1.0,
        }
    }

    fn weights(&self) -> [f64; 4] {
        [self.walk, self.turn, self.reach, self.idle]
    }

    fn validate(&self) -> Result<()> {
        let w = self.weights();
        if w.iter().any(|x| !x.is_finite() || *x < 0.0) || w.iter().sum::<f64>() <= 0.0 {
            return Err(invalid("motion mix weights must be non-negative with a positive sum"));
        }
        Ok(())
    }
}

/// Per-step bounds on generated motion.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MotionLimits {
    /// Largest pelvis translation per step, meters.
    pub pelvis_step: f64,
    /// Largest Euler component of any joint delta per step, radians.
    pub joint_delta: f64,
}

impl Default for MotionLimits {
    fn default() -> Self {
        MotionLimits {
            pelvis_step: 0.25,
            joint_delta: 0.4,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MotionConfig {
    pub mix: MotionMix,
    pub limits: MotionLimits,
    /// Walking speed, meters per step.
    pub step_size: f64,
    /// Pelvis height above the floor, meters.
    pub pelvis_height: f64,
    /// Keep the pelvis this far from the horizontal scene bounds.
    pub wall_margin: f64,
    /// Largest heading change per step, radians.
    pub turn_rate: f64,
    /// Amplitude of the idle pelvis sway, meters.
    pub sway: f64,
    /// Amplitude of the idle head yaw, radians.
    pub look: f64,
    /// Downward tilt of neck and head at rest, radians.
    pub gaze_pitch: f64,
}

impl Default for MotionConfig {
    fn default() -> Self {
        MotionConfig {
            mix: MotionMix::default(),
            limits: MotionLimits::default(),
            step_size: 0.18,
            pelvis_height: 1.0,
            wall_margin: 0.4,
            turn_rate: 0.3,
            sway: 0.01,
            look: 0.05,
            gaze_pitch: 0.25,
        }
    }
}

impl MotionConfig {
    pub fn with_mix(mut self, mix: MotionMix) -> Self {
        self.mix = mix;
        self
    }
}

/// One sample of a recorded trajectory.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryFrame {
    pub pose: Pose,
    pub observation: Observation,
}

/// Moves from `from` toward `to` by at most one step of `limits`.
pub fn limited_step(from: &Pose, to: &Pose, limits: &MotionLimits) -> Pose {
    let mut a = action_between(from, to);
    let n = a.pelvis_delta.norm();
    if n > limits.pelvis_step {
        a.pelvis_delta *= limits.pelvis_step / n;
    }
    let a = a.clamped(f64::INFINITY, limits.joint_delta);
    apply_action(from, &a)
}

fn wrap_angle(a: f64) -> f64 {
    (a + PI).rem_euclid(2.0 * PI) - PI
}

fn forward(heading: f64) -> Vec3 {
    Vec3::new(heading.sin(), 0.0, heading.cos())
}

#[derive(Clone, Copy)]
enum Side {
    Right,
    Left,
}

impl Side {
    fn chain(self) -> [Joint; 4] {
        match self {
            Side::Right => [Joint::RShoulder, Joint::RUpperArm, Joint::RForearm, Joint::RHand],
            Side::Left => [Joint::LShoulder, Joint::LUpperArm, Joint::LForearm, Joint::LHand],
        }
    }
}

/// Walkable area: the scene box shrunk by the wall margin.
#[derive(Clone, Copy)]
struct Area {
    min: [f64; 2],
    max: [f64; 2],
}

impl Area {
    fn clamp(&self, p: &mut Vec3) -> bool {
        let (x, z) = (p.x.clamp(self.min[0], self.max[0]), p.z.clamp(self.min[1], self.max[1]));
        let moved = x != p.x || z != p.z;
        p.x = x;
        p.z = z;
        moved
    }

    fn sample(&self, rng: &mut impl rand::Rng, y: f64) -> Vec3 {
        Vec3::new(
            rng.random_range(self.min[0]..=self.max[0]),
            y,
            rng.random_range(self.min[1]..=self.max[1]),
        )
    }
}

fn walkable(bounds: &Bounds, cfg: &MotionConfig) -> Result<Area> {
    let area = Area {
        min: [bounds.min[0] + cfg.wall_margin, bounds.min[2] + cfg.wall_margin],
        max: [bounds.max[0] - cfg.wall_margin, bounds.max[2] - cfg.wall_margin],
    };
    if area.min[0] > area.max[0] || area.min[1] > area.max[1] {
        return Err(Error::Infeasible(format!(
            "scene bounds leave no walkable area with a {} m wall margin",
            cfg.wall_margin
        )));
    }
    let y = -cfg.pelvis_height;
    if y < bounds.min[1] || y > bounds.max[1] {
        return Err(Error::Infeasible(format!(
            "pelvis height {} m does not fit the scene's vertical bounds",
            cfg.pelvis_height
        )));
    }
    Ok(area)
}

struct Generator<'a, R: rand::Rng> {
    scene: &'a Scene,
    model: &'a KinematicModel,
    cfg: &'a MotionConfig,
    rng: &'a mut R,
    area: Area,
    base: Vec3,
    heading: f64,
    /// Arm angles per side (shoulder, upper arm, forearm, hand) excluding swing.
    arms: [[EulerAngles; 4]; 2],
    swing_amp: f64,
    clock: usize,
    pose: Pose,
    out: Vec<Pose>,
    length: usize,
}

impl<R: rand::Rng> Generator<'_, R> {
    fn done(&self) -> bool {
        self.out.len() >= self.length
    }

    fn desired(&self) -> Pose {
        let k = self.clock as f64;
        let sway = self.cfg.sway * Vec3::new((0.5 * k).sin(), 0.0, (0.37 * k + 1.0).sin());
        let mut p = Pose::reference();
        let mut pelvis = self.base + sway;
        pelvis.y = -self.cfg.pelvis_height;
        p.pelvis_position = pelvis;
        p.set_angles(Joint::Pelvis, EulerAngles::heading(self.heading));
        let look = self.cfg.look * (0.23 * k).sin();
        p.set_angles(Joint::Neck, EulerAngles::new(0.0, -0.4 * self.cfg.gaze_pitch, 0.0));
        p.set_angles(Joint::Head, EulerAngles::new(0.0, -0.6 * self.cfg.gaze_pitch, look));
        let swing = self.swing_amp * (PI * k / 3.0).sin();
        for (s, side) in [Side::Right, Side::Left].into_iter().enumerate() {
            let sign = if s == 0 { 1.0 } else { -1.0 };
            for (angles, joint) in self.arms[s].iter().zip(side.chain()) {
                p.set_angles(joint, *angles);
            }
            let upper = side.chain()[1];
            let mut e = p.angles(upper);
            e.0[1] += sign * swing;
            p.set_angles(upper, e);
        }
        p
    }

    fn emit(&mut self) {
        let target = self.desired();
        let next = if self.out.is_empty() {
            target
        } else {
            limited_step(&self.pose, &target, &self.cfg.limits)
        };
        self.pose = next;
        self.out.push(next);
        self.clock += 1;
    }

    fn relax_swing(&mut self, walking: bool) {
        let goal = if walking { 0.2 } else { 0.0 };
        self.swing_amp += (goal - self.swing_amp).clamp(-0.05, 0.05);
    }

    fn pick_target(&mut self) -> Vec3 {
        let mut best = self.area.sample(self.rng, self.base.y);
        for _ in 0..16 {
            let c = self.area.sample(self.rng, self.base.y);
            let d = (c - self.base).norm();
            if d >= 1.5 {
                return c;
            }
            if d > (best - self.base).norm() {
                best = c;
            }
        }
        best
    }

    fn walk(&mut self, steps: usize) {
        let mut target = self.pick_target();
        for _ in 0..steps {
            if self.done() {
                return;
            }
            let to = target - self.base;
            let want = to.x.atan2(to.z);
            let turn = wrap_angle(want - self.heading).clamp(-self.cfg.turn_rate, self.cfg.turn_rate);
            self.heading = wrap_angle(self.heading + turn);
            self.base += self.cfg.step_size * forward(self.heading);
            let hit_wall = self.area.clamp(&mut self.base);
            if hit_wall || (target - self.base).norm() < 0.5 {
                target = self.pick_target();
            }
            self.relax_swing(true);
            self.emit();
        }
    }

    fn turn(&mut self) {
        let mag: f64 = self.rng.random_range(0.8..2.4);
        let total = if self.rng.random_bool(0.5) { mag } else { -mag };
        let steps = (total.abs() / self.cfg.turn_rate).ceil() as usize;
        let per = total / steps as f64;
        for _ in 0..steps {
            if self.done() {
                return;
            }
            self.heading = wrap_angle(self.heading + per);
            self.relax_swing(false);
            self.emit();
        }
    }

    fn idle(&mut self, steps: usize) {
        for _ in 0..steps {
            if self.done() {
                return;
            }
            self.relax_swing(false);
            self.emit();
        }
    }

    /// Point the reach aims at: a random landmark in front of the camera,
    /// or a point ahead of the chest.
    fn reach_goal(&mut self, shoulder: Vec3) -> Vec3 {
        let cam = Camera::default();
        let cam_pose = camera_pose_of(&self.pose, self.model, &cam);
        let ahead: Vec<Vec3> = self
            .scene
            .landmarks
            .iter()
            .map(|l| l.position())
            .filter(|x| project(x, &cam_pose, &cam).depth > 0.3)
            .collect();
        let aim = if ahead.is_empty() {
            shoulder + forward(self.heading) + Vec3::new(0.0, 0.2, 0.0)
        } else {
            ahead[self.rng.random_range(0..ahead.len())]
        };
        let reach = self.model.chain_length(Joint::RShoulder, Joint::RHand).unwrap_or(0.6);
        let dir = (aim - shoulder).try_normalize(1e-9).unwrap_or_else(|| forward(self.heading));
        shoulder + dir * (self.rng.random_range(0.6..0.85) * reach)
    }

    fn reach(&mut self) {
        let side = if self.rng.random_bool(0.5) { Side::Right } else { Side::Left };
        let s = side as usize;
        let chain = side.chain();
        let frames = self.model.frames(&self.pose);
        let goal = self.reach_goal(frames.position(chain[0]));
        let opts = IkOptions {
            max_iterations: 60,
            free: ParamMask::joints(&chain, false),
            ..IkOptions::default()
        };
        let mut start = self.desired();
        for (j, e) in chain.iter().zip(self.arms[s]) {
            start.set_angles(*j, e);
        }
        let sol = ik::solve(
            self.model,
            &start,
            &[IkTarget {
                joint: chain[3],
                position: goal,
            }],
            &opts,
        );
        let from = self.arms[s];
        let to = chain.map(|j| sol.pose.angles(j));
        let rest = [EulerAngles::ZERO; 4];
        let approach = self.rng.random_range(4..=6);
        let hold = self.rng.random_range(1..=3);
        let retract = self.rng.random_range(4..=6);
        self.blend_arm(s, from, to, approach);
        self.idle(hold);
        self.blend_arm(s, to, rest, retract);
    }

    fn blend_arm(&mut self, s: usize, from: [EulerAngles; 4], to: [EulerAngles; 4], steps: usize) {
        for k in 1..=steps {
            if self.done() {
                return;
            }
            let t = k as f64 / steps as f64;
            let t = t * t * (3.0 - 2.0 * t);
            for i in 0..4 {
                let r = geodesic_interpolate(&from[i].matrix(), &to[i].matrix(), t);
                self.arms[s][i] = EulerAngles::from_matrix_unchecked(&r);
            }
            self.relax_swing(false);
            self.emit();
        }
    }
}

/// Generates `length` poses of scripted motion inside `scene`.
pub fn generate_poses(
    scene: &Scene,
    model: &KinematicModel,
    rng: &mut impl rand::Rng,
    length: usize,
    cfg: &MotionConfig,
) -> Result<Vec<Pose>> {
    cfg.mix.validate()?;
    if !(cfg.step_size >= 0.0 && cfg.step_size <= cfg.limits.pelvis_step) {
        return Err(invalid("walking step exceeds the per-step pelvis limit"));
    }
    let area = walkable(&scene.bounds, cfg)?;
    let base = area.sample(rng, -cfg.pelvis_height);
    let heading = rng.random_range(-PI..PI);
    let mut g = Generator {
        scene,
        model,
        cfg,
        rng,
        area,
        base,
        heading,
        arms: [[EulerAngles::ZERO; 4]; 2],
        swing_amp: 0.0,
        clock: 0,
        pose: Pose::reference(),
        out: Vec::with_capacity(length),
        length,
    };
    g.emit();
    let weights = cfg.mix.weights();
    let total: f64 = weights.iter().sum();
    while !g.done() {
        let mut pick = g.rng.random_range(0.0..total);
        let mut choice = 3;
        for (i, w) in weights.iter().enumerate() {
            if pick < *w {
                choice = i;
                break;
            }
            pick -= w;
        }
        match choice {
            0 => {
                let n = g.rng.random_range(8..=16);
                g.walk(n);
            }
            1 => g.turn(),
            2 => g.reach(),
            _ => {
                let n = g.rng.random_range(4..=10);
                g.idle(n);
            }
        }
    }
    g.out.truncate(length);
    Ok(g.out)
}

/// Generates a trajectory and renders an observation at every pose.
/// Timestamps count steps from zero.
pub fn generate_trajectory(
    scene: &Scene,
    model: &KinematicModel,
    cam: &Camera,
    rng: &mut impl rand::Rng,
    length: usize,
    cfg: &MotionConfig,
) -> Result<Vec<TrajectoryFrame>> {
    if length == 0 {
        return Err(invalid("trajectory length must be positive"));
    }
    let poses = generate_poses(scene, model, rng, length, cfg)?;
    Ok(poses
        .into_iter()
        .enumerate()
        .map(|(t, pose)| TrajectoryFrame {
            observation: render_observation(&pose, scene, model, cam).with_timestamp(t as u64),
            pose,
        })
        .collect())
}

/// Writes one JSON object per line.
pub fn write_trajectory(mut out: impl Write, frames: &[TrajectoryFrame]) -> Result<()> {
    for f in frames {
        serde_json::to_writer(&mut out, f)?;
        out.write_all(b"\n")?;
    }
    Ok(())
}

pub fn read_trajectory(input: impl BufRead) -> Result<Vec<TrajectoryFrame>> {
    let mut frames = Vec::new();
    for line in input.lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        frames.push(serde_json::from_str(&line)?);
    }
    Ok(frames)
}
