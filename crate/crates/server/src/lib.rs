//! Interactive control server: sessions that steer the lifted world model
//! with waypoints over HTTP JSON and a websocket.
//!
//! Routes:
//! - `GET  /scenes`
//! - `POST /sessions` with `{scene_id, seed, config}`
//! - `GET  /sessions/{id}/frame`
//! - `POST /sessions/{id}/step` with `{waypoints, sample_count}`
//! - `POST /sessions/{id}/snapshot`, optionally with `{observation}`
//! - `POST /sessions/{id}/plan` with `{snapshot_id, cem}`
//! - `GET  /sessions/{id}/socket` (websocket; step requests in, frames out)
//!
//! Every payload carries `"schema": "lwm/1"`. A request to a session that is
//! already busy is rejected with 409.

mod api;
mod session;

pub use api::{router, ApiError, AppState, CreateRequest, PlanRequest, SnapshotRequest, StepRequest};
pub use session::{
    FramePayload, ImageBounds, JointProjection, PlanPayload, SampleSpread, Session, SessionConfig, SnapshotPayload,
    StepFrame, StepPayload, MAX_SAMPLES, SCHEMA,
};

/// Training rooms, the corridor and the holdout rooms.
pub fn default_scenes() -> lwm::Result<Vec<lwm::scene::Scene>> {
    let mut scenes = lwm::bench::training_scenes()?;
    scenes.extend(lwm::bench::holdout_scenes()?);
    Ok(scenes)
}
