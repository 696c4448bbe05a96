//! Mean joint error between predicted and ground-truth poses.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::camera::{camera_pose_of, project, Camera, LeafJoint};
use crate::error::{invalid, Result};
use crate::pose::Pose;
use crate::skeleton::{forward_kinematics, Joint, KinematicModel, JOINT_COUNT};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum JointSubset {
    /// Pelvis, head and both hands.
    Leaf,
    /// The eleven joints between the leaves.
    Intermediate,
    All,
}

impl JointSubset {
    pub const ALL: [JointSubset; 3] = [JointSubset::Leaf, JointSubset::Intermediate, JointSubset::All];

    pub fn name(self) -> &'static str {
        match self {
            JointSubset::Leaf => "leaf",
            JointSubset::Intermediate => "intermediate",
            JointSubset::All => "all",
        }
    }

    pub fn contains(self, joint: Joint) -> bool {
        match self {
            JointSubset::Leaf => joint.is_leaf(),
            JointSubset::Intermediate => !joint.is_leaf(),
            JointSubset::All => true,
        }
    }
}

impl fmt::Display for JointSubset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for JointSubset {
    type Err = crate::Error;
    fn from_str(s: &str) -> Result<Self> {
        JointSubset::ALL
            .into_iter()
            .find(|x| x.name() == s)
            .ok_or_else(|| invalid(format!("unknown joint subset {s:?}")))
    }
}

/// Euclidean distance of every joint between the two poses' FK positions.
pub fn joint_distances(p_hat: &Pose, p_g: &Pose, model: &KinematicModel) -> [f64; JOINT_COUNT] {
    let a = forward_kinematics(p_hat, model);
    let b = forward_kinematics(p_g, model);
    std::array::from_fn(|i| (a.0[i] - b.0[i]).norm())
}

fn subset_mean(distances: &[f64; JOINT_COUNT], subset: JointSubset) -> f64 {
    let picked: Vec<f64> = Joint::ALL
        .into_iter()
        .filter(|j| subset.contains(*j))
        .map(|j| distances[j.index()])
        .collect();
    picked.iter().sum::<f64>() / picked.len() as f64
}

pub fn mje(p_hat: &Pose, p_g: &Pose, model: &KinematicModel, subset: JointSubset) -> f64 {
    subset_mean(&joint_distances(p_hat, p_g, model), subset)
}

/// Which leaf joints of `goal` project visibly into the camera of `current`.
pub fn goal_leaf_visibility(goal: &Pose, current: &Pose, model: &KinematicModel, cam: &Camera) -> [bool; 4] {
    let cam_pose = camera_pose_of(current, model, cam);
    let frames = model.frames(goal);
    LeafJoint::ALL.map(|leaf| project(&frames.position(leaf.joint()), &cam_pose, cam).visible)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MjeReport {
    pub leaf: f64,
    pub intermediate: f64,
    pub all: f64,
    /// Indexed like [`Joint::ALL`].
    pub per_joint: [f64; JOINT_COUNT],
    /// Mean error of the leaf joints whose goal position was in view.
    pub leaf_visible: Option<f64>,
    /// Mean error of the leaf joints whose goal position was out of view.
    pub leaf_hidden: Option<f64>,
}

impl MjeReport {
    pub fn new(p_hat: &Pose, p_g: &Pose, model: &KinematicModel, visibility: &[bool; 4]) -> Self {
        Self::from_distances(joint_distances(p_hat, p_g, model), visibility)
    }

    pub fn from_distances(per_joint: [f64; JOINT_COUNT], visibility: &[bool; 4]) -> Self {
        let split = |want: bool| {
            let v: Vec<f64> = LeafJoint::ALL
                .into_iter()
                .filter(|l| visibility[l.index()] == want)
                .map(|l| per_joint[l.joint().index()])
                .collect();
            (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
        };
        MjeReport {
            leaf: subset_mean(&per_joint, JointSubset::Leaf),
            intermediate: subset_mean(&per_joint, JointSubset::Intermediate),
            all: subset_mean(&per_joint, JointSubset::All),
            leaf_visible: split(true),
            leaf_hidden: split(false),
            per_joint,
        }
    }

    /// Per-joint mean of several reports against the same goal.
    pub fn mean(reports: &[MjeReport], visibility: &[bool; 4]) -> Option<Self> {
        if reports.is_empty() {
            return None;
        }
        let n = reports.len() as f64;
        let per_joint = std::array::from_fn(|i| reports.iter().map(|r| r.per_joint[i]).sum::<f64>() / n);
        Some(Self::from_distances(per_joint, visibility))
    }

    pub fn get(&self, subset: JointSubset) -> f64 {
        match subset {
            JointSubset::Leaf => self.leaf,
            JointSubset::Intermediate => self.intermediate,
            JointSubset::All => self.all,
        }
    }
}
