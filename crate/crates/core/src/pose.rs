//! Body poses and the per-step actions that integrate them.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::rotation::{EulerAngles, Vec3};
use crate::skeleton::{Joint, JOINT_COUNT};

/// Length of the flat pose and action vectors.
pub const POSE_DIM: usize = 3 + 3 * JOINT_COUNT;

/// Pelvis position plus one Euler triple per joint, in [`Joint::ALL`] order.
///
/// The pelvis triple is the pelvis orientation in the reference frame,
/// every other triple is relative to the joint's parent.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(into = "Vec<f64>", try_from = "Vec<f64>")]
pub struct Pose {
    pub pelvis_position: Vec3,
    pub joint_angles: [EulerAngles; JOINT_COUNT],
}

/// Difference between consecutive poses.
///
/// `pelvis_delta` is expressed in the pelvis frame of the pose it is applied to.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(into = "Vec<f64>", try_from = "Vec<f64>")]
pub struct Action {
    pub pelvis_delta: Vec3,
    pub joint_deltas: [EulerAngles; JOINT_COUNT],
}

fn flatten(head: &Vec3, angles: &[EulerAngles; JOINT_COUNT]) -> [f64; POSE_DIM] {
    let mut out = [0.0; POSE_DIM];
    out[..3].copy_from_slice(head.as_slice());
    for (i, e) in angles.iter().enumerate() {
        out[3 + 3 * i..6 + 3 * i].copy_from_slice(&e.0);
    }
    out
}

fn unflatten(v: &[f64]) -> Result<(Vec3, [EulerAngles; JOINT_COUNT])> {
    if v.len() != POSE_DIM {
        return Err(invalid(format!("expected {POSE_DIM} scalars, got {}", v.len())));
    }
    if !v.iter().all(|x| x.is_finite()) {
        return Err(invalid("non-finite scalar in pose/action vector"));
    }
    let head = Vec3::new(v[0], v[1], v[2]);
    let mut angles = [EulerAngles::ZERO; JOINT_COUNT];
    for (i, e) in angles.iter_mut().enumerate() {
        e.0.copy_from_slice(&v[3 + 3 * i..6 + 3 * i]);
    }
    Ok((head, angles))
}

impl Pose {
    /// Pose that defines its own reference frame: pelvis at the origin, all angles zero.
    pub fn reference() -> Self {
        Pose {
            pelvis_position: Vec3::zeros(),
            joint_angles: [EulerAngles::ZERO; JOINT_COUNT],
        }
    }

    pub fn angles(&self, joint: Joint) -> EulerAngles {
        self.joint_angles[joint.index()]
    }

    pub fn set_angles(&mut self, joint: Joint, e: EulerAngles) {
        self.joint_angles[joint.index()] = e;
    }

    pub fn to_flat(&self) -> [f64; POSE_DIM] {
        flatten(&self.pelvis_position, &self.joint_angles)
    }

    pub fn from_flat(v: &[f64]) -> Result<Self> {
        let (pelvis_position, joint_angles) = unflatten(v)?;
        Ok(Pose {
            pelvis_position,
            joint_angles,
        })
    }

    pub fn is_finite(&self) -> bool {
        self.to_flat().iter().all(|x| x.is_finite())
    }

    /// Re-expresses this pose in the pelvis frame of `origin`, so that
    /// `origin.rebased(origin)` is the reference pose.
    pub fn rebased(&self, origin: &Pose) -> Pose {
        let frame = origin.angles(Joint::Pelvis).matrix();
        let mut out = *self;
        out.pelvis_position = frame.transpose() * (self.pelvis_position - origin.pelvis_position);
        let pelvis = frame.transpose() * self.angles(Joint::Pelvis).matrix();
        out.set_angles(Joint::Pelvis, EulerAngles::from_matrix_unchecked(&pelvis));
        out
    }
}

impl Action {
    pub fn zero() -> Self {
        Action {
            pelvis_delta: Vec3::zeros(),
            joint_deltas: [EulerAngles::ZERO; JOINT_COUNT],
        }
    }

    pub fn to_flat(&self) -> [f64; POSE_DIM] {
        flatten(&self.pelvis_delta, &self.joint_deltas)
    }

    pub fn from_flat(v: &[f64]) -> Result<Self> {
        let (pelvis_delta, joint_deltas) = unflatten(v)?;
        Ok(Action {
            pelvis_delta,
            joint_deltas,
        })
    }

    pub fn is_finite(&self) -> bool {
        self.to_flat().iter().all(|x| x.is_finite())
    }

    /// Every component multiplied by `factor`.
    pub fn scaled(&self, factor: f64) -> Self {
        Action {
            pelvis_delta: self.pelvis_delta * factor,
            joint_deltas: self.joint_deltas.map(|e| e.scaled(factor)),
        }
    }

    /// Largest absolute Euler component over all joints.
    pub fn max_joint_delta(&self) -> f64 {
        self.joint_deltas.iter().fold(0.0, |m, e| m.max(e.max_abs()))
    }

    /// Component-wise clamp of the pelvis delta and every joint delta.
    pub fn clamped(&self, pelvis_limit: f64, joint_limit: f64) -> Self {
        Action {
            pelvis_delta: self.pelvis_delta.map(|x| x.clamp(-pelvis_limit, pelvis_limit)),
            joint_deltas: self
                .joint_deltas
                .map(|e| EulerAngles(e.0.map(|a| a.clamp(-joint_limit, joint_limit)))),
        }
    }
}

macro_rules! flat_serde {
    ($t:ty) => {
        impl From<$t> for Vec<f64> {
            fn from(x: $t) -> Vec<f64> {
                x.to_flat().to_vec()
            }
        }
        impl TryFrom<Vec<f64>> for $t {
            type Error = Error;
            fn try_from(v: Vec<f64>) -> Result<$t> {
                <$t>::from_flat(&v)
            }
        }
    };
}
flat_serde!(Pose);
flat_serde!(Action);

/// The action that carries `from` to `to`.
pub fn action_between(from: &Pose, to: &Pose) -> Action {
    let pelvis_frame = from.angles(Joint::Pelvis).matrix();
    let pelvis_delta = pelvis_frame.transpose() * (to.pelvis_position - from.pelvis_position);
    let mut joint_deltas = [EulerAngles::ZERO; JOINT_COUNT];
    for (i, d) in joint_deltas.iter_mut().enumerate() {
        let rel = from.joint_angles[i].matrix().transpose() * to.joint_angles[i].matrix();
        *d = EulerAngles::from_matrix_unchecked(&rel);
    }
    Action {
        pelvis_delta,
        joint_deltas,
    }
}

/// Integrates one action: the pelvis moves along its current frame and every
/// joint rotation is right-multiplied by its delta.
pub fn apply_action(pose: &Pose, action: &Action) -> Pose {
    let pelvis_frame = pose.angles(Joint::Pelvis).matrix();
    let pelvis_position = pose.pelvis_position + pelvis_frame * action.pelvis_delta;
    let mut joint_angles = pose.joint_angles;
    for (i, e) in joint_angles.iter_mut().enumerate() {
        let composed = pose.joint_angles[i].matrix() * action.joint_deltas[i].matrix();
        *e = EulerAngles::from_matrix_unchecked(&composed);
    }
    Pose {
        pelvis_position,
        joint_angles,
    }
}

/// Left fold of [`apply_action`] starting at `start`.
pub fn integrate_plan(start: &Pose, actions: &[Action]) -> Pose {
    actions.iter().fold(*start, |p, a| apply_action(&p, a))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rotation::{rot_y, Mat3};
    use proptest::prelude::*;
    use std::f64::consts::FRAC_PI_2;

    fn max_rotation_error(a: &Pose, b: &Pose) -> f64 {
        (0..JOINT_COUNT)
            .map(|i| (a.joint_angles[i].matrix() - b.joint_angles[i].matrix()).norm())
            .fold(0.0, f64::max)
    }

    fn arb_pose() -> impl Strategy<Value = Pose> {
        prop::collection::vec(-3.0..3.0f64, POSE_DIM).prop_map(|mut v| {
            // Middle angles in (-1.5, 1.5); outer angles cover the full circle.
            for i in 0..JOINT_COUNT {
                v[3 + 3 * i + 1] *= 0.5;
            }
            Pose::from_flat(&v).unwrap()
        })
    }

    #[test]
    fn identical_poses_give_zero_action() {
        let p = Pose::from_flat(&[0.1; POSE_DIM]).unwrap();
        let a = action_between(&p, &p);
        assert!(a.to_flat().iter().all(|x| x.abs() < 1e-12));
    }

    #[test]
    fn zero_action_is_identity() {
        let p = Pose::from_flat(&[0.2; POSE_DIM]).unwrap();
        let q = apply_action(&p, &Action::zero());
        assert!((q.pelvis_position - p.pelvis_position).norm() < 1e-15);
        assert!(max_rotation_error(&p, &q) < 1e-12);
    }

    #[test]
    fn pure_translation_in_identity_frame() {
        let p = Pose::reference();
        let mut q = p;
        q.pelvis_position = Vec3::new(1.0, 0.0, 0.0);
        let a = action_between(&p, &q);
        assert!((a.pelvis_delta - Vec3::new(1.0, 0.0, 0.0)).norm() < 1e-15);
    }

    #[test]
    fn translation_expressed_in_rotated_pelvis_frame() {
        // Pelvis yawed +90° about Y: its local +Z points along world +X, so a
        // world step of +X is a local step of +Z.
        let mut p = Pose::reference();
        p.set_angles(Joint::Pelvis, EulerAngles::heading(FRAC_PI_2));
        let mut q = p;
        q.pelvis_position = Vec3::new(1.0, 0.0, 0.0);
        let a = action_between(&p, &q);
        let expected = rot_y(FRAC_PI_2).transpose() * Vec3::new(1.0, 0.0, 0.0);
        assert!((a.pelvis_delta - expected).norm() < 1e-12);
        assert!((a.pelvis_delta - Vec3::new(0.0, 0.0, 1.0)).norm() < 1e-12);
    }

    #[test]
    fn repeated_small_deltas_match_composed_transform() {
        let start = Pose::from_flat(&[0.05; POSE_DIM]).unwrap();
        let mut step = Action::zero();
        step.pelvis_delta = Vec3::new(0.02, -0.01, 0.1);
        for (i, e) in step.joint_deltas.iter_mut().enumerate() {
            *e = EulerAngles::new(0.01 * i as f64, -0.02, 0.015);
        }
        let actions = vec![step; 8];
        let end = integrate_plan(&start, &actions);

        // Oracle: compose the matrices directly.
        let mut pos = start.pelvis_position;
        let mut rots: Vec<Mat3> = start.joint_angles.iter().map(|e| e.matrix()).collect();
        for _ in 0..8 {
            pos += rots[0] * step.pelvis_delta;
            for (i, r) in rots.iter_mut().enumerate() {
                *r *= step.joint_deltas[i].matrix();
            }
        }
        assert!((end.pelvis_position - pos).norm() < 1e-12);
        for i in 0..JOINT_COUNT {
            assert!((end.joint_angles[i].matrix() - rots[i]).norm() < 1e-9);
        }
    }

    #[test]
    fn reversed_translations_return_home() {
        let start = Pose::reference();
        let mut fwd = Vec::new();
        for k in 0..5 {
            let mut a = Action::zero();
            a.pelvis_delta = Vec3::new(0.1 * k as f64, 0.05, -0.02 * k as f64);
            fwd.push(a);
        }
        let mut plan = fwd.clone();
        plan.extend(fwd.iter().rev().map(|a| a.scaled(-1.0)));
        let end = integrate_plan(&start, &plan);
        assert!(end.pelvis_position.norm() < 1e-12);
        assert!(integrate_plan(&start, &[]) == start);
    }

    #[test]
    fn rebased_origin_is_reference() {
        let p = Pose::from_flat(&[0.3; POSE_DIM]).unwrap();
        let r = p.rebased(&p);
        assert!(r.pelvis_position.norm() < 1e-12);
        assert!((r.angles(Joint::Pelvis).matrix() - Mat3::identity()).norm() < 1e-12);
    }

    #[test]
    fn flat_vectors_are_48_long() {
        assert_eq!(POSE_DIM, 48);
        let text = serde_json::to_string(&Pose::reference()).unwrap();
        let v: Vec<f64> = serde_json::from_str(&text).unwrap();
        assert_eq!(v.len(), 48);
        assert!(serde_json::from_str::<Pose>("[1.0, 2.0]").is_err());
    }

    proptest! {
        #[test]
        fn apply_inverts_action_between(p in arb_pose(), q in arb_pose()) {
            let back = apply_action(&p, &action_between(&p, &q));
            prop_assert!((back.pelvis_position - q.pelvis_position).norm() <= 1e-9);
            prop_assert!(max_rotation_error(&back, &q) <= 1e-9);
        }
    }
}
