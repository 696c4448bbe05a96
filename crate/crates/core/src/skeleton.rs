//! The 15-joint upper-body kinematic tree and forward kinematics.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::pose::Pose;
use crate::rotation::{Mat3, Vec3, EULER_CONVENTION};

pub const JOINT_COUNT: usize = 15;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Joint {
    Pelvis,
    L5,
    L3,
    T12,
    T8,
    Neck,
    Head,
    RShoulder,
    RUpperArm,
    RForearm,
    RHand,
    LShoulder,
    LUpperArm,
    LForearm,
    LHand,
}

impl Joint {
    /// Serialization order of joints inside a pose vector.
    pub const ALL: [Joint; JOINT_COUNT] = [
        Joint::Pelvis,
        Joint::L5,
        Joint::L3,
        Joint::T12,
        Joint::T8,
        Joint::Neck,
        Joint::Head,
        Joint::RShoulder,
        Joint::RUpperArm,
        Joint::RForearm,
        Joint::RHand,
        Joint::LShoulder,
        Joint::LUpperArm,
        Joint::LForearm,
        Joint::LHand,
    ];

    pub const LEAVES: [Joint; 4] = [Joint::Pelvis, Joint::Head, Joint::LHand, Joint::RHand];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Joint> {
        Joint::ALL.get(i).copied()
    }

    pub fn name(self) -> &'static str {
        match self {
            Joint::Pelvis => "Pelvis",
            Joint::L5 => "L5",
            Joint::L3 => "L3",
            Joint::T12 => "T12",
            Joint::T8 => "T8",
            Joint::Neck => "Neck",
            Joint::Head => "Head",
            Joint::RShoulder => "R_Shoulder",
            Joint::RUpperArm => "R_UpperArm",
            Joint::RForearm => "R_Forearm",
            Joint::RHand => "R_Hand",
            Joint::LShoulder => "L_Shoulder",
            Joint::LUpperArm => "L_UpperArm",
            Joint::LForearm => "L_Forearm",
            Joint::LHand => "L_Hand",
        }
    }

    pub fn from_name(name: &str) -> Option<Joint> {
        Joint::ALL.into_iter().find(|j| j.name() == name)
    }

    pub fn is_leaf(self) -> bool {
        Joint::LEAVES.contains(&self)
    }

    /// Parent in the standard tree.
    pub fn standard_parent(self) -> Option<Joint> {
        use Joint::*;
        match self {
            Pelvis => None,
            L5 => Some(Pelvis),
            L3 => Some(L5),
            T12 => Some(L3),
            T8 => Some(T12),
            Neck => Some(T8),
            Head => Some(Neck),
            RShoulder | LShoulder => Some(T8),
            RUpperArm => Some(RShoulder),
            RForearm => Some(RUpperArm),
            RHand => Some(RForearm),
            LUpperArm => Some(LShoulder),
            LForearm => Some(LUpperArm),
            LHand => Some(LForearm),
        }
    }
}

impl fmt::Display for Joint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Tree topology plus per-subject bone offsets.
///
/// Each offset is the bone from the parent to the child, expressed in the
/// child's frame. Offsets are in meters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "KinematicModelFile", into = "KinematicModelFile")]
pub struct KinematicModel {
    parents: [Option<usize>; JOINT_COUNT],
    offsets: [Vec3; JOINT_COUNT],
    /// Joint indices ordered so every parent precedes its children.
    order: Vec<usize>,
    /// `descends[j][t]`: joint `t` is `j` or lies below it.
    descends: [[bool; JOINT_COUNT]; JOINT_COUNT],
}

impl Default for KinematicModel {
    fn default() -> Self {
        Self::anthropometric_default()
    }
}

impl KinematicModel {
    /// Standard tree with stand-in anthropometric bone lengths.
    pub fn anthropometric_default() -> Self {
        use Joint::*;
        let up = |len: f64| Vec3::new(0.0, -len, 0.0);
        let down = |len: f64| Vec3::new(0.0, len, 0.0);
        let mut offsets = [Vec3::zeros(); JOINT_COUNT];
        for j in [L5, L3, T12, T8, Neck] {
            offsets[j.index()] = up(0.10);
        }
        offsets[Head.index()] = up(0.15);
        offsets[RShoulder.index()] = Vec3::new(0.20, 0.0, 0.0);
        offsets[LShoulder.index()] = Vec3::new(-0.20, 0.0, 0.0);
        offsets[RUpperArm.index()] = down(0.28);
        offsets[LUpperArm.index()] = down(0.28);
        offsets[RForearm.index()] = down(0.25);
        offsets[LForearm.index()] = down(0.25);
        offsets[RHand.index()] = down(0.08);
        offsets[LHand.index()] = down(0.08);
        let parents = Joint::ALL.map(|j| j.standard_parent().map(Joint::index));
        Self::new(parents, offsets).expect("default skeleton is a valid tree")
    }

    /// Builds a model from a parent table and bone offsets, validating the tree.
    pub fn new(parents: [Option<usize>; JOINT_COUNT], offsets: [Vec3; JOINT_COUNT]) -> Result<Self> {
        if parents[Joint::Pelvis.index()].is_some() {
            return Err(invalid("Pelvis must be the root"));
        }
        for (j, p) in parents.iter().enumerate().skip(1) {
            match p {
                None => return Err(invalid(format!("{} has no parent", Joint::ALL[j]))),
                Some(p) if *p >= JOINT_COUNT || *p == j => {
                    return Err(invalid(format!("{} has an invalid parent", Joint::ALL[j])))
                }
                _ => {}
            }
            let len = offsets[j].norm();
            if !(len.is_finite() && len > 0.0) {
                return Err(invalid(format!("bone to {} must have positive length", Joint::ALL[j])));
            }
        }

        // Depth-first from the root; anything unreached means a cycle.
        let mut order = Vec::with_capacity(JOINT_COUNT);
        let mut stack = vec![Joint::Pelvis.index()];
        while let Some(j) = stack.pop() {
            order.push(j);
            for c in (0..JOINT_COUNT).rev() {
                if parents[c] == Some(j) {
                    stack.push(c);
                }
            }
        }
        if order.len() != JOINT_COUNT {
            return Err(invalid("parent map is not a tree rooted at Pelvis"));
        }

        let mut descends = [[false; JOINT_COUNT]; JOINT_COUNT];
        for t in 0..JOINT_COUNT {
            let mut cur = Some(t);
            while let Some(j) = cur {
                descends[j][t] = true;
                cur = parents[j];
            }
        }

        Ok(Self {
            parents,
            offsets,
            order,
            descends,
        })
    }

    pub fn parent(&self, joint: Joint) -> Option<Joint> {
        self.parents[joint.index()].and_then(Joint::from_index)
    }

    pub fn offset(&self, joint: Joint) -> Vec3 {
        self.offsets[joint.index()]
    }

    pub fn bone_length(&self, joint: Joint) -> f64 {
        self.offsets[joint.index()].norm()
    }

    /// `true` when `joint` equals `ancestor` or lies in its subtree.
    pub fn is_in_subtree(&self, ancestor: Joint, joint: Joint) -> bool {
        self.descends[ancestor.index()][joint.index()]
    }

    pub fn topological_order(&self) -> &[usize] {
        &self.order
    }

    /// Sum of bone lengths from `ancestor` down to `joint`.
    pub fn chain_length(&self, ancestor: Joint, joint: Joint) -> Option<f64> {
        if !self.is_in_subtree(ancestor, joint) {
            return None;
        }
        let mut total = 0.0;
        let mut cur = joint;
        while cur != ancestor {
            total += self.bone_length(cur);
            cur = self.parent(cur)?;
        }
        Some(total)
    }

    /// World-frame rotation and position of every joint.
    pub fn frames(&self, pose: &Pose) -> JointFrames {
        let mut rotations = [Mat3::identity(); JOINT_COUNT];
        let mut positions = [Vec3::zeros(); JOINT_COUNT];
        for &j in &self.order {
            let local = pose.joint_angles[j].matrix();
            match self.parents[j] {
                None => {
                    rotations[j] = local;
                    positions[j] = pose.pelvis_position;
                }
                Some(p) => {
                    rotations[j] = rotations[p] * local;
                    positions[j] = positions[p] + rotations[j] * self.offsets[j];
                }
            }
        }
        JointFrames {
            rotations,
            positions,
        }
    }
}

/// World-frame rotations and positions produced by forward kinematics.
#[derive(Clone, Debug)]
pub struct JointFrames {
    pub rotations: [Mat3; JOINT_COUNT],
    pub positions: [Vec3; JOINT_COUNT],
}

impl JointFrames {
    pub fn position(&self, joint: Joint) -> Vec3 {
        self.positions[joint.index()]
    }

    pub fn rotation(&self, joint: Joint) -> Mat3 {
        self.rotations[joint.index()]
    }
}

/// World positions of all 15 joints, indexable by [`Joint`].
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct JointPositions(pub [Vec3; JOINT_COUNT]);

impl std::ops::Index<Joint> for JointPositions {
    type Output = Vec3;
    fn index(&self, j: Joint) -> &Vec3 {
        &self.0[j.index()]
    }
}

pub fn forward_kinematics(pose: &Pose, model: &KinematicModel) -> JointPositions {
    JointPositions(model.frames(pose).positions)
}

#[derive(Serialize, Deserialize)]
struct KinematicModelFile {
    euler_convention: String,
    joints: Vec<String>,
    parents: BTreeMap<String, String>,
    bone_offsets: BTreeMap<String, [f64; 3]>,
}

impl From<KinematicModel> for KinematicModelFile {
    fn from(m: KinematicModel) -> Self {
        let mut parents = BTreeMap::new();
        let mut bone_offsets = BTreeMap::new();
        for j in Joint::ALL.into_iter().skip(1) {
            if let Some(p) = m.parent(j) {
                parents.insert(j.name().to_string(), p.name().to_string());
            }
            let o = m.offset(j);
            bone_offsets.insert(j.name().to_string(), [o.x, o.y, o.z]);
        }
        KinematicModelFile {
            euler_convention: EULER_CONVENTION.to_string(),
            joints: Joint::ALL.iter().map(|j| j.name().to_string()).collect(),
            parents,
            bone_offsets,
        }
    }
}

impl TryFrom<KinematicModelFile> for KinematicModel {
    type Error = Error;

    fn try_from(f: KinematicModelFile) -> Result<Self> {
        if f.euler_convention != EULER_CONVENTION {
            return Err(invalid(format!(
                "unsupported Euler convention {:?}, expected {EULER_CONVENTION}",
                f.euler_convention
            )));
        }
        let expected: Vec<&str> = Joint::ALL.iter().map(|j| j.name()).collect();
        if f.joints != expected {
            return Err(invalid("joint order must match the standard 15-joint layout"));
        }
        let lookup = |name: &str| {
            Joint::from_name(name).ok_or_else(|| invalid(format!("unknown joint {name:?}")))
        };
        let mut parents = [None; JOINT_COUNT];
        for (child, parent) in &f.parents {
            parents[lookup(child)?.index()] = Some(lookup(parent)?.index());
        }
        let mut offsets = [Vec3::zeros(); JOINT_COUNT];
        for (joint, o) in &f.bone_offsets {
            offsets[lookup(joint)?.index()] = Vec3::new(o[0], o[1], o[2]);
        }
        KinematicModel::new(parents, offsets)
    }
}
