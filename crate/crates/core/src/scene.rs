//! Synthetic scenes of point landmarks.

use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::rotation::Vec3;

pub const MIN_LANDMARKS: usize = 8;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Landmark {
    pub id: u32,
    pub position: [f64; 3],
}

impl Landmark {
    pub fn position(&self) -> Vec3 {
        Vec3::from(self.position)
    }
}

/// Axis-aligned box in world coordinates (`+Y` is down, the floor is `y = 0`).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Bounds {
    pub min: [f64; 3],
    pub max: [f64; 3],
}

impl Bounds {
    pub fn contains(&self, p: &Vec3) -> bool {
        (0..3).all(|i| p[i] >= self.min[i] && p[i] <= self.max[i])
    }

    pub fn extent(&self) -> Vec3 {
        Vec3::new(
            self.max[0] - self.min[0],
            self.max[1] - self.min[1],
            self.max[2] - self.min[2],
        )
    }

    pub fn center(&self) -> Vec3 {
        Vec3::new(
            0.5 * (self.max[0] + self.min[0]),
            0.5 * (self.max[1] + self.min[1]),
            0.5 * (self.max[2] + self.min[2]),
        )
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "SceneFile")]
pub struct Scene {
    pub id: String,
    pub landmarks: Vec<Landmark>,
    pub bounds: Bounds,
}

#[derive(Deserialize)]
struct SceneFile {
    id: String,
    landmarks: Vec<Landmark>,
    bounds: Bounds,
}

impl TryFrom<SceneFile> for Scene {
    type Error = Error;
    fn try_from(f: SceneFile) -> Result<Scene> {
        Scene::new(f.id, f.landmarks, f.bounds)
    }
}

impl Scene {
    pub fn new(id: impl Into<String>, landmarks: Vec<Landmark>, bounds: Bounds) -> Result<Self> {
        let id = id.into();
        if landmarks.len() < MIN_LANDMARKS {
            return Err(invalid(format!(
                "scene {id} has {} landmarks, need at least {MIN_LANDMARKS}",
                landmarks.len()
            )));
        }
        let mut seen = HashSet::new();
        for l in &landmarks {
            if !seen.insert(l.id) {
                return Err(invalid(format!("scene {id} repeats landmark id {}", l.id)));
            }
            if !l.position.iter().all(|c| c.is_finite()) {
                return Err(invalid(format!("landmark {} has a non-finite position", l.id)));
            }
        }
        if (0..3).any(|i| !(bounds.max[i] > bounds.min[i])) {
            return Err(invalid(format!("scene {id} has empty bounds")));
        }
        let mut landmarks = landmarks;
        landmarks.sort_by_key(|l| l.id);
        Ok(Scene { id, landmarks, bounds })
    }

    /// Room of `width × depth × height` meters centred on the origin with the
    /// floor at `y = 0`, landmarks uniform inside it.
    pub fn random_room(
        id: impl Into<String>,
        rng: &mut impl rand::Rng,
        landmark_count: usize,
        size: [f64; 3],
    ) -> Result<Self> {
        let [w, h, d] = size;
        let bounds = Bounds {
            min: [-0.5 * w, -h, -0.5 * d],
            max: [0.5 * w, 0.0, 0.5 * d],
        };
        let landmarks = (0..landmark_count as u32)
            .map(|id| Landmark {
                id,
                position: [
                    rng.random_range(bounds.min[0]..bounds.max[0]),
                    rng.random_range(bounds.min[1]..bounds.max[1]),
                    rng.random_range(bounds.min[2]..bounds.max[2]),
                ],
            })
            .collect();
        Scene::new(id, landmarks, bounds)
    }

    /// The default 6 × 6 × 2.5 m room with 32 landmarks.
    pub fn default_room(id: impl Into<String>, rng: &mut impl rand::Rng) -> Result<Self> {
        Scene::random_room(id, rng, 32, [6.0, 2.5, 6.0])
    }

    /// Straight corridor along `+Z`: two walls of landmarks at `x = ±half_width`.
    pub fn corridor(id: impl Into<String>, length: f64, half_width: f64) -> Result<Self> {
        let mut landmarks = Vec::new();
        let rows = [-0.4, -1.2, -2.0];
        let mut next = 0u32;
        let mut z = -1.0;
        while z <= length {
            for &x in &[-half_width, half_width] {
                for &y in &rows {
                    landmarks.push(Landmark { id: next, position: [x, y, z] });
                    next += 1;
                }
            }
            z += 0.5;
        }
        let bounds = Bounds {
            min: [-half_width, -2.5, -1.5],
            max: [half_width, 0.0, length + 0.5],
        };
        Scene::new(id, landmarks, bounds)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;

    #[test]
    fn random_rooms_are_valid_and_reproducible() {
        let a = Scene::default_room("a", &mut rng::from_seed(3)).unwrap();
        let b = Scene::default_room("a", &mut rng::from_seed(3)).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.landmarks.len(), 32);
        assert!(a.landmarks.iter().all(|l| a.bounds.contains(&l.position())));
    }

    #[test]
    fn rejects_duplicates_and_sparse_scenes() {
        let bounds = Bounds { min: [-1.0; 3], max: [1.0; 3] };
        let few: Vec<_> = (0..3).map(|id| Landmark { id, position: [0.0; 3] }).collect();
        assert!(Scene::new("few", few, bounds).is_err());
        let dup: Vec<_> = (0..10).map(|i| Landmark { id: i % 9, position: [0.0; 3] }).collect();
        assert!(Scene::new("dup", dup, bounds).is_err());
    }

    #[test]
    fn json_is_validated() {
        let s = Scene::corridor("c", 6.0, 1.0).unwrap();
        let text = serde_json::to_string(&s).unwrap();
        let back: Scene = serde_json::from_str(&text).unwrap();
        assert_eq!(back, s);
        let broken = r#"{"id":"x","landmarks":[],"bounds":{"min":[0,0,0],"max":[1,1,1]}}"#;
        assert!(serde_json::from_str::<Scene>(broken).is_err());
    }
}
