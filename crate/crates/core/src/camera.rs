//! Head-mounted pinhole camera and the waypoint action space.
//!
//! Camera frame: `+X` right, `+Y` down, `+Z` along the optical axis. Image
//! coordinates are normalized about the principal point, with `+u` right and
//! `+v` down over `[-0.5, 0.5]²`.

use std::fmt;

use serde::de::{self, MapAccess, Visitor};
use serde::ser::SerializeMap;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{invalid, Result};
use crate::pose::Pose;
use crate::rotation::{Mat3, Vec3};
use crate::skeleton::{Joint, KinematicModel};

pub const IMAGE_HALF_EXTENT: f64 = 0.5;

pub fn in_image(uv: [f64; 2]) -> bool {
    uv.iter().all(|c| c.abs() <= IMAGE_HALF_EXTENT)
}

/// Rigid transform mapping local coordinates to the parent frame:
/// `x_parent = rotation * x_local + translation`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RigidTransform {
    pub rotation: Mat3,
    pub translation: Vec3,
}

impl Default for RigidTransform {
    fn default() -> Self {
        Self::identity()
    }
}

impl RigidTransform {
    pub fn identity() -> Self {
        RigidTransform {
            rotation: Mat3::identity(),
            translation: Vec3::zeros(),
        }
    }

    pub fn from_translation(t: Vec3) -> Self {
        RigidTransform {
            rotation: Mat3::identity(),
            translation: t,
        }
    }

    /// `self ∘ other`: apply `other` first, then `self`.
    pub fn compose(&self, other: &RigidTransform) -> RigidTransform {
        RigidTransform {
            rotation: self.rotation * other.rotation,
            translation: self.rotation * other.translation + self.translation,
        }
    }

    pub fn inverse(&self) -> RigidTransform {
        let rt = self.rotation.transpose();
        RigidTransform {
            rotation: rt,
            translation: -(rt * self.translation),
        }
    }

    pub fn apply(&self, p: &Vec3) -> Vec3 {
        self.rotation * p + self.translation
    }

    pub fn apply_inverse(&self, p: &Vec3) -> Vec3 {
        self.rotation.transpose() * (p - self.translation)
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Camera {
    /// Normalized image units per unit of `X/Z`.
    pub focal: f64,
    /// Camera pose in the Head joint frame.
    pub head_offset: RigidTransform,
    pub near_plane: f64,
}

impl Default for Camera {
    fn default() -> Self {
        Camera {
            focal: 0.5,
            head_offset: RigidTransform::from_translation(Vec3::new(0.0, 0.0, 0.08)),
            near_plane: 0.05,
        }
    }
}

impl Camera {
    pub fn new(focal: f64, head_offset: RigidTransform, near_plane: f64) -> Result<Self> {
        if !(focal.is_finite() && focal > 0.0) {
            return Err(invalid("focal length must be positive"));
        }
        if !(near_plane.is_finite() && near_plane > 0.0) {
            return Err(invalid("near plane must be positive"));
        }
        Ok(Camera {
            focal,
            head_offset,
            near_plane,
        })
    }

    /// Camera-frame ray direction through `uv`, scaled so its `Z` is one.
    pub fn ray(&self, uv: [f64; 2]) -> Vec3 {
        Vec3::new(uv[0] / self.focal, uv[1] / self.focal, 1.0)
    }
}

/// World pose of the camera for body pose `pose`.
pub fn camera_pose_of(pose: &Pose, model: &KinematicModel, cam: &Camera) -> RigidTransform {
    let frames = model.frames(pose);
    let head = RigidTransform {
        rotation: frames.rotation(Joint::Head),
        translation: frames.position(Joint::Head),
    };
    head.compose(&cam.head_offset)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Projection {
    pub uv: [f64; 2],
    pub visible: bool,
    /// Camera-frame `Z`; negative behind the camera.
    pub depth: f64,
}

/// Projects a world point. Points at or behind the camera plane report
/// `visible = false` and `uv = [0, 0]`.
pub fn project(point: &Vec3, cam_pose: &RigidTransform, cam: &Camera) -> Projection {
    let pc = cam_pose.apply_inverse(point);
    let depth = pc.z;
    if !(depth > 0.0) || !pc.iter().all(|c| c.is_finite()) {
        return Projection {
            uv: [0.0, 0.0],
            visible: false,
            depth: if depth.is_finite() { depth } else { 0.0 },
        };
    }
    let uv = [cam.focal * pc.x / depth, cam.focal * pc.y / depth];
    Projection {
        uv,
        visible: depth >= cam.near_plane && in_image(uv),
        depth,
    }
}

/// World point at camera-frame depth `depth` along the ray through `uv`.
pub fn backproject(uv: [f64; 2], depth: f64, cam_pose: &RigidTransform, cam: &Camera) -> Vec3 {
    cam_pose.apply(&(cam.ray(uv) * depth))
}

/// One of the four joints that carry waypoints.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum LeafJoint {
    Pelvis,
    Head,
    LeftHand,
    RightHand,
}

impl LeafJoint {
    pub const ALL: [LeafJoint; 4] = [
        LeafJoint::Pelvis,
        LeafJoint::Head,
        LeafJoint::LeftHand,
        LeafJoint::RightHand,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn joint(self) -> Joint {
        match self {
            LeafJoint::Pelvis => Joint::Pelvis,
            LeafJoint::Head => Joint::Head,
            LeafJoint::LeftHand => Joint::LHand,
            LeafJoint::RightHand => Joint::RHand,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            LeafJoint::Pelvis => "pelvis",
            LeafJoint::Head => "head",
            LeafJoint::LeftHand => "left_hand",
            LeafJoint::RightHand => "right_hand",
        }
    }

    pub fn from_name(name: &str) -> Option<LeafJoint> {
        LeafJoint::ALL.into_iter().find(|j| j.name() == name)
    }
}

impl fmt::Display for LeafJoint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Waypoint {
    pub joint: LeafJoint,
    pub uv: [f64; 2],
    pub depth: Option<f64>,
}

impl Waypoint {
    pub fn validate(&self) -> Result<()> {
        if !self.uv.iter().all(|c| c.is_finite()) || !in_image(self.uv) {
            return Err(invalid(format!(
                "{} waypoint {:?} is outside [-0.5, 0.5]²",
                self.joint, self.uv
            )));
        }
        if let Some(d) = self.depth {
            if !(d.is_finite() && d > 0.0) {
                return Err(invalid(format!("{} waypoint depth must be positive", self.joint)));
            }
        }
        Ok(())
    }
}

/// A high-level action: at most one waypoint per leaf joint. Missing entries
/// are masked or out of frame; an empty set means no goal conditioning.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct WaypointSet {
    entries: [Option<Waypoint>; 4],
}

impl WaypointSet {
    pub fn empty() -> Self {
        Self::default()
    }

    pub fn get(&self, joint: LeafJoint) -> Option<&Waypoint> {
        self.entries[joint.index()].as_ref()
    }

    pub fn insert(&mut self, w: Waypoint) {
        self.entries[w.joint.index()] = Some(w);
    }

    pub fn remove(&mut self, joint: LeafJoint) -> Option<Waypoint> {
        self.entries[joint.index()].take()
    }

    pub fn with(mut self, joint: LeafJoint, uv: [f64; 2], depth: Option<f64>) -> Self {
        self.insert(Waypoint { joint, uv, depth });
        self
    }

    pub fn len(&self) -> usize {
        self.entries.iter().flatten().count()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn iter(&self) -> impl Iterator<Item = &Waypoint> {
        self.entries.iter().flatten()
    }

    /// Drops every entry whose mask bit is set.
    pub fn masked(mut self, mask: &[bool; 4]) -> Self {
        for (entry, &m) in self.entries.iter_mut().zip(mask) {
            if m {
                *entry = None;
            }
        }
        self
    }

    pub fn validate(&self) -> Result<()> {
        self.iter().try_for_each(Waypoint::validate)
    }

    /// Present entries in leaf order as `u, v[, depth]` scalars.
    pub fn flatten(&self, include_depth: bool) -> Vec<f64> {
        let mut out = Vec::with_capacity(12);
        for w in self.iter() {
            out.extend_from_slice(&w.uv);
            if include_depth {
                out.push(w.depth.unwrap_or(f64::NAN));
            }
        }
        out
    }
}

/// Ground-truth waypoints: the goal pose's leaf joints projected into the
/// camera of the current pose. Joints that do not project visibly are absent.
pub fn waypoints_from_goal(
    goal: &Pose,
    current: &Pose,
    model: &KinematicModel,
    cam: &Camera,
    include_depth: bool,
) -> WaypointSet {
    let cam_pose = camera_pose_of(current, model, cam);
    let goal_frames = model.frames(goal);
    let mut set = WaypointSet::empty();
    for leaf in LeafJoint::ALL {
        let pr = project(&goal_frames.position(leaf.joint()), &cam_pose, cam);
        if pr.visible {
            set.insert(Waypoint {
                joint: leaf,
                uv: pr.uv,
                depth: include_depth.then_some(pr.depth),
            });
        }
    }
    set
}

#[derive(Serialize, Deserialize)]
struct WaypointWire {
    u: f64,
    v: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    depth: Option<f64>,
}

impl Serialize for WaypointSet {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        let mut map = s.serialize_map(Some(self.len()))?;
        for w in self.iter() {
            let wire = WaypointWire {
                u: w.uv[0],
                v: w.uv[1],
                depth: w.depth,
            };
            map.serialize_entry(w.joint.name(), &wire)?;
        }
        map.end()
    }
}

impl<'de> Deserialize<'de> for WaypointSet {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        struct SetVisitor;
        impl<'de> Visitor<'de> for SetVisitor {
            type Value = WaypointSet;
            fn expecting(&self, f: &mut fmt::Formatter) -> fmt::Result {
                f.write_str("a map from leaf-joint name to {u, v, depth?}")
            }
            fn visit_map<A: MapAccess<'de>>(self, mut map: A) -> std::result::Result<WaypointSet, A::Error> {
                let mut set = WaypointSet::empty();
                while let Some(key) = map.next_key::<String>()? {
                    let joint = LeafJoint::from_name(&key)
                        .ok_or_else(|| de::Error::custom(format!("unknown leaf joint {key:?}")))?;
                    if set.get(joint).is_some() {
                        return Err(de::Error::custom(format!("duplicate waypoint for {key}")));
                    }
                    let wire: WaypointWire = map.next_value()?;
                    set.insert(Waypoint {
                        joint,
                        uv: [wire.u, wire.v],
                        depth: wire.depth,
                    });
                }
                Ok(set)
            }
        }
        d.deserialize_map(SetVisitor)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rotation::{rot_y, EulerAngles};
    use std::f64::consts::FRAC_PI_2;

    fn identity_camera() -> Camera {
        Camera::new(0.5, RigidTransform::identity(), 0.05).unwrap()
    }

    #[test]
    fn identity_offset_sits_on_head() {
        let m = KinematicModel::default();
        let pose = Pose::reference();
        let cp = camera_pose_of(&pose, &m, &identity_camera());
        assert_eq!(cp.rotation, Mat3::identity());
        assert!((cp.translation - m.frames(&pose).position(Joint::Head)).norm() < 1e-15);
    }

    #[test]
    fn head_yaw_turns_optical_axis() {
        let m = KinematicModel::default();
        let mut pose = Pose::reference();
        pose.set_angles(Joint::Head, EulerAngles::heading(FRAC_PI_2));
        let cp = camera_pose_of(&pose, &m, &identity_camera());
        let forward = cp.rotation * Vec3::z();
        assert!((forward - rot_y(FRAC_PI_2) * Vec3::z()).norm() < 1e-12);
        assert!((forward - Vec3::x()).norm() < 1e-12);
    }

    #[test]
    fn translation_offset_moves_along_head_axis() {
        let m = KinematicModel::default();
        let mut pose = Pose::reference();
        pose.set_angles(Joint::Head, EulerAngles::heading(FRAC_PI_2));
        let cam = Camera::new(
            0.5,
            RigidTransform::from_translation(Vec3::new(0.0, 0.0, 0.05)),
            0.05,
        )
        .unwrap();
        let cp = camera_pose_of(&pose, &m, &cam);
        let head = m.frames(&pose).position(Joint::Head);
        assert!((cp.translation - (head + Vec3::new(0.05, 0.0, 0.0))).norm() < 1e-12);
    }

    #[test]
    fn projection_cases() {
        let cam = identity_camera();
        let at_origin = RigidTransform::identity();
        let on_axis = project(&Vec3::new(0.0, 0.0, 2.0), &at_origin, &cam);
        assert_eq!(on_axis.uv, [0.0, 0.0]);
        assert!(on_axis.visible);
        let edge = project(&Vec3::new(1.0, 0.0, 1.0), &at_origin, &cam);
        assert_eq!(edge.uv, [0.5, 0.0]);
        assert!(edge.visible);
        let behind = project(&Vec3::new(0.0, 0.0, -1.0), &at_origin, &cam);
        assert!(!behind.visible);
        assert!(behind.uv.iter().all(|c| c.is_finite()));
        let too_near = project(&Vec3::new(0.0, 0.0, 0.01), &at_origin, &cam);
        assert!(!too_near.visible);
    }

    #[test]
    fn goal_equal_to_current_reprojects_current_joints() {
        let m = KinematicModel::default();
        let cam = Camera::default();
        let mut pose = Pose::reference();
        // Raise both arms forward so the hands are in view.
        pose.set_angles(Joint::RUpperArm, EulerAngles::new(0.0, 1.4, 0.0));
        pose.set_angles(Joint::LUpperArm, EulerAngles::new(0.0, 1.4, 0.0));
        let set = waypoints_from_goal(&pose, &pose, &m, &cam, false);
        let cp = camera_pose_of(&pose, &m, &cam);
        let frames = m.frames(&pose);
        for leaf in [LeafJoint::LeftHand, LeafJoint::RightHand] {
            let w = set.get(leaf).expect("hand in view");
            let pr = project(&frames.position(leaf.joint()), &cp, &cam);
            assert_eq!(w.uv, pr.uv);
            assert_eq!(w.depth, None);
        }
        // The head sits behind its own camera.
        assert!(set.get(LeafJoint::Head).is_none());
    }

    #[test]
    fn goal_hand_at_known_camera_point() {
        let m = KinematicModel::default();
        let cam = Camera::default();
        let current = Pose::reference();
        let cp = camera_pose_of(&current, &m, &cam);
        let target = cp.apply(&Vec3::new(0.2, 0.0, 1.0));
        // Goal: the whole body shifted so that the right hand lands on `target`.
        let mut goal = current;
        goal.pelvis_position += target - m.frames(&current).position(Joint::RHand);
        let set = waypoints_from_goal(&goal, &current, &m, &cam, true);
        let w = set.get(LeafJoint::RightHand).unwrap();
        assert!((w.uv[0] - 0.1).abs() < 1e-12 && w.uv[1].abs() < 1e-12);
        assert!((w.depth.unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn goal_behind_camera_is_absent() {
        let m = KinematicModel::default();
        let cam = Camera::default();
        let current = Pose::reference();
        let mut goal = current;
        goal.pelvis_position.z -= 1.0;
        let set = waypoints_from_goal(&goal, &current, &m, &cam, false);
        assert!(set.get(LeafJoint::RightHand).is_none());
        assert!(set.get(LeafJoint::LeftHand).is_none());
    }

    #[test]
    fn waypoint_json_uses_leaf_names() {
        let set = WaypointSet::empty()
            .with(LeafJoint::Pelvis, [0.0, 0.1], None)
            .with(LeafJoint::RightHand, [0.25, -0.1], Some(0.8));
        let text = serde_json::to_string(&set).unwrap();
        assert_eq!(
            text,
            r#"{"pelvis":{"u":0.0,"v":0.1},"right_hand":{"u":0.25,"v":-0.1,"depth":0.8}}"#
        );
        let back: WaypointSet = serde_json::from_str(&text).unwrap();
        assert_eq!(back, set);
        assert!(serde_json::from_str::<WaypointSet>(r#"{"tail":{"u":0,"v":0}}"#).is_err());
    }

    #[test]
    fn validation_rejects_out_of_bounds() {
        let bad = WaypointSet::empty().with(LeafJoint::Head, [0.6, 0.0], None);
        assert!(bad.validate().is_err());
        let neg_depth = WaypointSet::empty().with(LeafJoint::Head, [0.0, 0.0], Some(-1.0));
        assert!(neg_depth.validate().is_err());
        assert!(WaypointSet::empty().validate().is_ok());
    }

    #[test]
    fn full_sets_flatten_to_8_or_12() {
        let mut set = WaypointSet::empty();
        for leaf in LeafJoint::ALL {
            set.insert(Waypoint {
                joint: leaf,
                uv: [0.0, 0.0],
                depth: Some(1.0),
            });
        }
        assert_eq!(set.flatten(false).len(), 8);
        assert_eq!(set.flatten(true).len(), 12);
    }
}
