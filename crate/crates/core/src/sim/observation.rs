use serde::{Deserialize, Serialize};

use crate::camera::{camera_pose_of, project, Camera};
use crate::pose::Pose;
use crate::scene::Scene;
use crate::skeleton::KinematicModel;

/// One visible landmark in normalized image coordinates.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Feature {
    pub id: u32,
    pub u: f64,
    pub v: f64,
}

impl Feature {
    pub fn uv(&self) -> [f64; 2] {
        [self.u, self.v]
    }
}

/// Sparse egocentric frame: the landmarks in view, sorted by id.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Observation {
    pub timestamp: u64,
    pub features: Vec<Feature>,
}

impl Observation {
    /// Same landmarks at the same image positions, ignoring the timestamp.
    pub fn same_view(&self, other: &Observation) -> bool {
        self.features == other.features
    }

    pub fn with_timestamp(mut self, timestamp: u64) -> Self {
        self.timestamp = timestamp;
        self
    }

    pub fn feature(&self, id: u32) -> Option<&Feature> {
        self.features
            .binary_search_by_key(&id, |f| f.id)
            .ok()
            .map(|i| &self.features[i])
    }
}

pub fn render_observation(pose: &Pose, scene: &Scene, model: &KinematicModel, cam: &Camera) -> Observation {
    let cam_pose = camera_pose_of(pose, model, cam);
    let features = scene
        .landmarks
        .iter()
        .filter_map(|l| {
            let pr = project(&l.position(), &cam_pose, cam);
            pr.visible.then_some(Feature {
                id: l.id,
                u: pr.uv[0],
                v: pr.uv[1],
            })
        })
        .collect();
    Observation {
        timestamp: 0,
        features,
    }
}
