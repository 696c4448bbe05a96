//! Runs the control server on the default scenes.
//!
//! ```text
//! cargo run --release -p lwm-server --example serve -- 127.0.0.1:8080
//! curl -s -XPOST localhost:8080/sessions -d '{"scene_id":"corridor","seed":1}'
//! curl -s -XPOST localhost:8080/sessions/s0/step -d '{"waypoints":{"pelvis":{"u":0.0,"v":0.1}}}'
//! ```

use lwm_server::{default_scenes, router, AppState};

#[tokio::main]
async fn main() -> Result<(), Box<dyn std::error::Error>> {
    let addr = std::env::args().nth(1).unwrap_or_else(|| "127.0.0.1:8080".to_string());
    let state = AppState::new(default_scenes()?);
    eprintln!("scenes: {}", state.scene_ids().join(", "));
    let listener = tokio::net::TcpListener::bind(&addr).await?;
    eprintln!("listening on http://{}", listener.local_addr()?);
    axum::serve(listener, router(state)).await?;
    Ok(())
}
