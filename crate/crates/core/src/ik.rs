//! Damped least-squares inverse kinematics over the flat pose vector.
//!
//! Joint targets are tracked with a damped pseudo-inverse step; a pull back
//! toward the starting pose runs in the task null space, so joints that no
//! target constrains stay where they started.

use nalgebra::{DMatrix, DVector};

use crate::pose::{Pose, POSE_DIM};
use crate::rotation::{rot_x, rot_z, Mat3, Vec3};
use crate::skeleton::{Joint, KinematicModel};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct IkTarget {
    pub joint: Joint,
    pub position: Vec3,
}

/// Which entries of the 48-vector the solver may change.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ParamMask(pub [bool; POSE_DIM]);

impl ParamMask {
    pub fn all() -> Self {
        ParamMask([true; POSE_DIM])
    }

    /// Only the angles of `joints`, optionally plus the pelvis position.
    pub fn joints(joints: &[Joint], pelvis_position: bool) -> Self {
        let mut m = [false; POSE_DIM];
        if pelvis_position {
            m[..3].fill(true);
        }
        for j in joints {
            let base = 3 + 3 * j.index();
            m[base..base + 3].fill(true);
        }
        ParamMask(m)
    }
}

#[derive(Clone, Copy, Debug)]
pub struct IkOptions {
    pub damping: f64,
    pub max_iterations: usize,
    /// Stop once every target is within this distance, meters.
    pub tolerance: f64,
    /// Per-iteration null-space pull toward the start pose, in `[0, 1]`.
    pub hold_gain: f64,
    /// Largest parameter step per iteration (Euclidean norm).
    pub max_step: f64,
    pub free: ParamMask,
}

impl Default for IkOptions {
    fn default() -> Self {
        IkOptions {
            damping: 0.05,
            max_iterations: 40,
            tolerance: 1e-4,
            hold_gain: 0.1,
            max_step: 0.5,
            free: ParamMask::all(),
        }
    }
}

#[derive(Clone, Copy, Debug)]
pub struct IkSolution {
    pub pose: Pose,
    /// Largest remaining target distance, meters.
    pub residual: f64,
    pub iterations: usize,
}

fn residual_of(model: &KinematicModel, pose: &Pose, targets: &[IkTarget]) -> (DVector<f64>, f64) {
    let frames = model.frames(pose);
    let mut e = DVector::zeros(3 * targets.len());
    let mut worst = 0.0_f64;
    for (k, t) in targets.iter().enumerate() {
        let d = t.position - frames.position(t.joint);
        worst = worst.max(d.norm());
        e.fixed_rows_mut::<3>(3 * k).copy_from(&d);
    }
    (e, worst)
}

/// Jacobian of the stacked target positions with respect to the free parameters.
pub fn position_jacobian(
    model: &KinematicModel,
    pose: &Pose,
    joints: &[Joint],
    cols: &[usize],
) -> DMatrix<f64> {
    let frames = model.frames(pose);
    let mut jac = DMatrix::zeros(3 * joints.len(), cols.len());
    for (c, &param) in cols.iter().enumerate() {
        if param < 3 {
            for k in 0..joints.len() {
                jac[(3 * k + param, c)] = 1.0;
            }
            continue;
        }
        let j = (param - 3) / 3;
        let comp = (param - 3) % 3;
        let parent = model.parent(Joint::ALL[j]);
        let parent_rot = parent.map_or(Mat3::identity(), |p| frames.rotation(p));
        let pivot = parent.map_or(pose.pelvis_position, |p| frames.position(p));
        let [a, b, _] = pose.joint_angles[j].0;
        let axis = match comp {
            0 => parent_rot * Vec3::z(),
            1 => parent_rot * rot_z(a) * Vec3::x(),
            _ => parent_rot * rot_z(a) * rot_x(b) * Vec3::y(),
        };
        for (k, &t) in joints.iter().enumerate() {
            if model.is_in_subtree(Joint::ALL[j], t) {
                let d = axis.cross(&(frames.position(t) - pivot));
                jac.fixed_view_mut::<3, 1>(3 * k, c).copy_from(&d);
            }
        }
    }
    jac
}

pub fn solve(model: &KinematicModel, start: &Pose, targets: &[IkTarget], opts: &IkOptions) -> IkSolution {
    let (_, mut residual) = residual_of(model, start, targets);
    if targets.is_empty() || residual < opts.tolerance {
        return IkSolution {
            pose: *start,
            residual,
            iterations: 0,
        };
    }
    let cols: Vec<usize> = (0..POSE_DIM).filter(|&i| opts.free.0[i]).collect();
    let joints: Vec<Joint> = targets.iter().map(|t| t.joint).collect();
    let origin = start.to_flat();
    let mut theta = origin;
    let mut pose = *start;
    let damping2 = opts.damping * opts.damping;
    let mut iterations = 0;

    while iterations < opts.max_iterations && residual >= opts.tolerance {
        iterations += 1;
        let (e, _) = residual_of(model, &pose, targets);
        let jac = position_jacobian(model, &pose, &joints, &cols);
        let mut gram = &jac * jac.transpose();
        for i in 0..gram.nrows() {
            gram[(i, i)] += damping2;
        }
        let Some(chol) = gram.cholesky() else { break };
        let task = jac.transpose() * chol.solve(&e);

        let hold = DVector::from_iterator(
            cols.len(),
            cols.iter().map(|&i| -opts.hold_gain * (theta[i] - origin[i])),
        );
        let null = &hold - jac.transpose() * chol.solve(&(&jac * &hold));

        let mut step = task + null;
        let norm = step.norm();
        if norm > opts.max_step {
            step *= opts.max_step / norm;
        }
        for (c, &i) in cols.iter().enumerate() {
            theta[i] += step[c];
        }
        pose = Pose::from_flat(&theta).unwrap_or(pose);
        residual = residual_of(model, &pose, targets).1;
    }

    IkSolution {
        pose,
        residual,
        iterations,
    }
}

/// Flat index of the pelvis-position block and each joint's angle block.
pub fn angle_block(joint: Joint) -> std::ops::Range<usize> {
    let base = 3 + 3 * joint.index();
    base..base + 3
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rotation::EulerAngles;

    fn bent_pose() -> Pose {
        let mut p = Pose::reference();
        p.set_angles(Joint::RUpperArm, EulerAngles::new(0.2, 0.9, -0.1));
        p.set_angles(Joint::RForearm, EulerAngles::new(0.0, 0.6, 0.0));
        p.set_angles(Joint::T8, EulerAngles::new(0.05, 0.1, 0.2));
        p
    }

    #[test]
    fn jacobian_matches_finite_differences() {
        let m = KinematicModel::default();
        let p = bent_pose();
        let joints = [Joint::RHand, Joint::Head, Joint::Pelvis];
        let cols: Vec<usize> = (0..POSE_DIM).collect();
        let jac = position_jacobian(&m, &p, &joints, &cols);
        let h = 1e-6;
        for c in 0..POSE_DIM {
            let mut plus = p.to_flat();
            let mut minus = p.to_flat();
            plus[c] += h;
            minus[c] -= h;
            let fp = m.frames(&Pose::from_flat(&plus).unwrap());
            let fm = m.frames(&Pose::from_flat(&minus).unwrap());
            for (k, &j) in joints.iter().enumerate() {
                let fd = (fp.position(j) - fm.position(j)) / (2.0 * h);
                for r in 0..3 {
                    assert!((jac[(3 * k + r, c)] - fd[r]).abs() < 1e-7, "col {c} joint {j}");
                }
            }
        }
    }

    #[test]
    fn no_targets_returns_start() {
        let m = KinematicModel::default();
        let p = bent_pose();
        let s = solve(&m, &p, &[], &IkOptions::default());
        assert_eq!(s.pose, p);
        assert_eq!(s.iterations, 0);
    }

    #[test]
    fn reaches_nearby_target_and_keeps_free_joints() {
        let m = KinematicModel::default();
        let p = bent_pose();
        let hand = m.frames(&p).position(Joint::RHand);
        let target = IkTarget { joint: Joint::RHand, position: hand + Vec3::new(0.0, 0.0, 0.1) };
        let s = solve(&m, &p, &[target], &IkOptions::default());
        assert!(s.residual < 1e-3, "residual {}", s.residual);
        let frames = m.frames(&s.pose);
        assert!((frames.position(Joint::RHand) - target.position).norm() < 1e-3);
        // The left arm is untouched in the null space of a right-hand target.
        let left = angle_block(Joint::LForearm);
        let before = p.to_flat();
        let after = s.pose.to_flat();
        for i in left {
            assert!((before[i] - after[i]).abs() < 1e-9);
        }
    }

    #[test]
    fn masked_parameters_never_move() {
        let m = KinematicModel::default();
        let p = bent_pose();
        let mut moved = p;
        moved.set_angles(Joint::RUpperArm, EulerAngles::new(0.3, 0.8, 0.0));
        let hand = m.frames(&moved).position(Joint::RHand);
        let opts = IkOptions {
            free: ParamMask::joints(&[Joint::RUpperArm, Joint::RForearm], false),
            ..IkOptions::default()
        };
        let target = IkTarget { joint: Joint::RHand, position: hand };
        let s = solve(&m, &p, &[target], &opts);
        let before = p.to_flat();
        let after = s.pose.to_flat();
        for i in 0..POSE_DIM {
            if !opts.free.0[i] {
                assert_eq!(before[i], after[i]);
            }
        }
        assert!(s.residual < 1e-3, "residual {} after {}", s.residual, s.iterations);
    }
}
