//! Planning with a lifted world model over a 15-joint egocentric body.
//!
//! The crate covers the whole pipeline: rotation and pose algebra
//! ([`rotation`], [`pose`], [`skeleton`]), the head camera and waypoint
//! actions ([`camera`]), a simulated observation world model ([`sim`]), the
//! waypoint-conditioned policy ([`policy`]), its composition with the world
//! model ([`lifted`]), cross-entropy planning in both action spaces ([`cem`])
//! and the evaluation harness ([`bench`]).

pub mod bench;
pub mod camera;
pub mod cem;
pub mod error;
pub mod ik;
pub mod lifted;
pub mod policy;
pub mod pose;
pub mod rng;
pub mod rotation;
pub mod scene;
pub mod sim;
pub mod skeleton;

pub use error::{Error, Result};
