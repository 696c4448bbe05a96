//! Egocentric projection and the waypoint form of a goal pose.
//!
//! ```text
//! cargo run --release -p lwm --example waypoints
//! ```

use lwm::camera::{backproject, camera_pose_of, project, waypoints_from_goal, Camera};
use lwm::pose::Pose;
use lwm::rotation::{EulerAngles, Vec3};
use lwm::skeleton::{Joint, KinematicModel};

fn main() {
    let model = KinematicModel::default();
    let cam = Camera::default();
    let current = Pose::reference();
    let cam_pose = camera_pose_of(&current, &model, &cam);

    let point = Vec3::new(0.3, -1.2, 2.0);
    let pr = project(&point, &cam_pose, &cam);
    let back = backproject(pr.uv, pr.depth, &cam_pose, &cam);
    println!(
        "world {:?} -> uv [{:+.4} {:+.4}] depth {:.3} visible {} -> back {:?}",
        point.as_slice(),
        pr.uv[0],
        pr.uv[1],
        pr.depth,
        pr.visible,
        back.as_slice()
    );

    let mut goal = current;
    goal.pelvis_position += Vec3::new(0.2, 0.0, 1.5);
    goal.set_angles(Joint::RUpperArm, EulerAngles::new(0.0, 1.4, 0.0));
    goal.set_angles(Joint::LUpperArm, EulerAngles::new(0.0, 1.1, 0.0));
    let set = waypoints_from_goal(&goal, &current, &model, &cam, true);
    println!("waypoints for the goal pose, seen from the current camera:");
    println!("{}", serde_json::to_string_pretty(&set).expect("waypoints serialize"));
    println!("masked out: {}", 4 - set.len());
}
