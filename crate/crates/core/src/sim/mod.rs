//! Simulated environment: observation rendering, the low-level world model,
//! and scripted ground-truth motion.

mod motion;
mod observation;
mod world_model;

pub use motion::{
    generate_poses, generate_trajectory, limited_step, read_trajectory, write_trajectory,
    MotionConfig, MotionLimits, MotionMix, TrajectoryFrame,
};
pub use observation::{render_observation, Feature, Observation};
pub use world_model::{WorldModel, WorldModelState, WORLD_MODEL_CONTEXT};
