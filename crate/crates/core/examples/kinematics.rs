//! Euler angles, forward kinematics and pose deltas.
//!
//! ```text
//! cargo run --release -p lwm --example kinematics
//! ```

use lwm::pose::{action_between, apply_action, Pose};
use lwm::rotation::{matrix_to_euler, rotation_distance, EulerAngles, EULER_CONVENTION};
use lwm::skeleton::{forward_kinematics, Joint, KinematicModel};

fn main() -> lwm::Result<()> {
    let model = KinematicModel::default();

    let e = EulerAngles::new(0.3, -0.2, 1.1);
    let back = matrix_to_euler(&e.matrix())?;
    println!("{EULER_CONVENTION}: {:?} -> {:?}", e.0, back.0);

    let rest = Pose::reference();
    let positions = forward_kinematics(&rest, &model);
    println!("reference pose:");
    for j in Joint::ALL {
        let p = positions.0[j.index()];
        let parent = model.parent(j).map_or("-", Joint::name);
        println!("  {:<12} parent {:<12} at [{:+.3} {:+.3} {:+.3}]", j.name(), parent, p.x, p.y, p.z);
    }

    let mut reach = rest;
    reach.pelvis_position.z += 0.4;
    reach.set_angles(Joint::Pelvis, EulerAngles::heading(0.5));
    reach.set_angles(Joint::RUpperArm, EulerAngles::new(0.0, 1.2, 0.0));
    let action = action_between(&rest, &reach);
    let replayed = apply_action(&rest, &action);
    let hand = forward_kinematics(&replayed, &model).0[Joint::RHand.index()];
    println!(
        "pelvis delta in body frame {:?}, right hand now at [{:+.3} {:+.3} {:+.3}]",
        action.pelvis_delta.as_slice(),
        hand.x,
        hand.y,
        hand.z
    );
    let err = (replayed.pelvis_position - reach.pelvis_position).norm()
        + Joint::ALL
            .iter()
            .map(|&j| rotation_distance(&replayed.angles(j).matrix(), &reach.angles(j).matrix()))
            .sum::<f64>();
    println!("round-trip error {err:.2e}");
    Ok(())
}
