//! Generates a trajectory in the corridor, then steers the lifted world model with
//! a short chain of waypoint sets and writes both as JSON lines.
//!
//! ```text
//! cargo run --release -p lwm --example rollout -- /tmp/rollout
//! ```

use std::fs::File;
use std::io::BufWriter;
use std::path::PathBuf;
use std::sync::Arc;

use lwm::camera::{Camera, LeafJoint, WaypointSet};
use lwm::lifted::lwm_chain;
use lwm::policy::{PolicyConfig, PolicyContext, WaypointPolicy};
use lwm::rng;
use lwm::scene::Scene;
use lwm::sim::{generate_trajectory, write_trajectory, MotionConfig, WorldModel, WorldModelState, WORLD_MODEL_CONTEXT};
use lwm::skeleton::KinematicModel;

fn main() -> lwm::Result<()> {
    let out = PathBuf::from(std::env::args().nth(1).unwrap_or_else(|| "rollout-out".into()));
    std::fs::create_dir_all(&out)?;

    let model = Arc::new(KinematicModel::default());
    let cam = Camera::default();
    let scene = Arc::new(Scene::corridor("corridor", 12.0, 1.5)?);
    std::fs::write(out.join("scene.json"), serde_json::to_string_pretty(&*scene)?)?;

    let frames = generate_trajectory(&scene, &model, &cam, &mut rng::from_seed(3), 40, &MotionConfig::default())?;
    write_trajectory(BufWriter::new(File::create(out.join("trajectory.jsonl"))?), &frames)?;

    let context = &frames[frames.len() - WORLD_MODEL_CONTEXT..];
    let observations: Vec<_> = context.iter().map(|f| f.observation.clone()).collect();
    let poses: Vec<_> = context.iter().map(|f| f.pose).collect();
    let wm = WorldModelState::new(scene.clone(), model.clone(), cam, poses[7], observations.clone(), 0.005, 3)?;
    let policy = WaypointPolicy::new(model, cam, PolicyConfig::default())?;
    let keep = policy.config().context + 1;
    let ctx = PolicyContext::new(observations, poses)?.truncated(keep);

    let plan = [
        WaypointSet::empty().with(LeafJoint::Pelvis, [0.0, 0.3], None),
        WaypointSet::empty().with(LeafJoint::Pelvis, [0.2, 0.3], None),
        WaypointSet::empty(),
    ];
    let (rollouts, end, _) = lwm_chain(&wm, &ctx, &policy, &plan, &mut rng::from_seed(4))?;
    let file = File::create(out.join("rollouts.jsonl"))?;
    let mut w = BufWriter::new(file);
    for (hl, r) in plan.iter().zip(&rollouts) {
        serde_json::to_writer(&mut w, &serde_json::json!({ "waypoints": hl, "rollout": r }))?;
        std::io::Write::write_all(&mut w, b"\n")?;
        let p = r.final_pose_estimate.pelvis_position;
        println!(
            "{} waypoint(s): {} frames, {} landmarks in the last view, pelvis at [{:+.2} {:+.2} {:+.2}]",
            hl.len(),
            r.observations.len(),
            r.final_observation().features.len(),
            p.x,
            p.y,
            p.z
        );
    }
    println!("world-model clock after the chain: {}", end.latest().timestamp);
    println!("wrote {}", out.display());
    Ok(())
}
