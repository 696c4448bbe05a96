//! Plans toward a goal observation with low-level and lifted CEM and scores
//! both plans against the hidden goal pose.
//!
//! ```text
//! cargo run --release -p lwm --example plan
//! ```

use std::sync::Arc;

use lwm::bench::{generate_tasks, mje, training_scenes, JointSubset, TaskConfig};
use lwm::camera::Camera;
use lwm::cem::{cem_plan, CemConfig, SearchSpace};
use lwm::lifted::lwm_chain;
use lwm::policy::{PolicyConfig, WaypointPolicy};
use lwm::pose::integrate_plan;
use lwm::rng;
use lwm::sim::WorldModel;
use lwm::skeleton::KinematicModel;

fn main() -> lwm::Result<()> {
    let model = Arc::new(KinematicModel::default());
    let cam = Camera::default();
    let tasks = generate_tasks(
        &training_scenes()?,
        &model,
        &cam,
        &TaskConfig {
            count: 1,
            seed: 5,
            ..TaskConfig::default()
        },
    )?;
    let task = &tasks[0];
    let policy = WaypointPolicy::new(model.clone(), cam, PolicyConfig::default())?;
    let ctx = task.policy_context(policy.config().context + 1)?;
    let wm = task.world_model(model.clone(), cam, 0.005, 11)?;
    println!(
        "task {} in {}: standing still leaves {:.3} m mean joint error",
        task.id, task.scene.id, task.initial.all
    );

    for space in [SearchSpace::LowLevel, SearchSpace::Lifted2d, SearchSpace::Lifted3d] {
        let cfg = CemConfig {
            seed: 21,
            ..CemConfig::for_space(space)
        };
        let plan = cem_plan(&wm, &ctx, &policy, &task.goal_observation, &cfg)?;
        let end = match &plan.best_hl {
            Some(hl) => {
                let (rollouts, _, _) = lwm_chain(&wm.fork(1), &ctx, &policy, hl, &mut rng::from_seed(2))?;
                rollouts.last().expect("one step").final_pose_estimate
            }
            None => integrate_plan(task.current_pose(), &plan.best_actions),
        };
        println!(
            "{:<10} cost per iteration {:?}, final joint error {:.3} m",
            space.name(),
            plan.cost_history.iter().map(|c| (c * 1e3).round() / 1e3).collect::<Vec<_>>(),
            mje(&end, &task.goal_pose, &model, JointSubset::All)
        );
        if let Some(hl) = plan.best_hl {
            println!("           waypoints {}", serde_json::to_string(&hl)?);
        }
    }
    Ok(())
}
