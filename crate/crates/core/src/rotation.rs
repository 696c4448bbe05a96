//! Rotation algebra on SO(3).
//!
//! Every joint orientation is stored as intrinsic Z-X-Y Euler angles:
//! `R = Rz(a) * Rx(b) * Ry(c)`. The body frame is camera-aligned:
//! `+X` right, `+Y` down (gravity), `+Z` forward, so a pure heading change
//! is a rotation about `Y`, the last intrinsic axis.

use nalgebra::{Matrix3, Rotation3, UnitQuaternion, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};

pub type Mat3 = Matrix3<f64>;
pub type Vec3 = Vector3<f64>;

/// Tag written into serialized files so readers can reject a mismatched convention.
pub const EULER_CONVENTION: &str = "intrinsic-ZXY";

/// Below this value of `cos(b)` the first and third axes are treated as aligned.
const GIMBAL_EPS: f64 = 1e-12;

/// Intrinsic Z-X-Y Euler angles in radians.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct EulerAngles(pub [f64; 3]);

impl EulerAngles {
    pub const ZERO: EulerAngles = EulerAngles([0.0; 3]);

    pub fn new(z: f64, x: f64, y: f64) -> Self {
        EulerAngles([z, x, y])
    }

    /// Pure rotation about the vertical axis.
    pub fn heading(yaw: f64) -> Self {
        EulerAngles([0.0, 0.0, yaw])
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|a| a.is_finite())
    }

    pub fn scaled(&self, factor: f64) -> Self {
        EulerAngles(self.0.map(|a| a * factor))
    }

    pub fn max_abs(&self) -> f64 {
        self.0.iter().fold(0.0_f64, |m, a| m.max(a.abs()))
    }

    /// The rotation matrix; callers are expected to hold finite angles.
    pub fn matrix(&self) -> Mat3 {
        let [a, b, c] = self.0;
        rot_z(a) * rot_x(b) * rot_y(c)
    }

    /// Inverse of [`EulerAngles::matrix`] without the orthonormality check.
    pub fn from_matrix_unchecked(r: &Mat3) -> Self {
        let cb = r[(0, 1)].hypot(r[(1, 1)]);
        if cb < GIMBAL_EPS {
            // Gimbal lock: third angle is zero, the first absorbs the combined twist.
            let a = r[(1, 0)].atan2(r[(0, 0)]);
            let rest = rot_z(a).transpose() * r;
            let b = rest[(2, 1)].atan2(rest[(1, 1)]);
            return EulerAngles([a, b, 0.0]);
        }
        let a = (-r[(0, 1)]).atan2(r[(1, 1)]);
        // Peel off Rz(a) so b and c come from O(1) entries even near the singularity.
        let rest = rot_z(a).transpose() * r;
        let b = rest[(2, 1)].atan2(rest[(1, 1)]);
        let c = rest[(0, 2)].atan2(rest[(0, 0)]);
        EulerAngles([a, b, c])
    }
}

pub fn rot_x(t: f64) -> Mat3 {
    let (s, c) = t.sin_cos();
    Mat3::new(1.0, 0.0, 0.0, 0.0, c, -s, 0.0, s, c)
}

pub fn rot_y(t: f64) -> Mat3 {
    let (s, c) = t.sin_cos();
    Mat3::new(c, 0.0, s, 0.0, 1.0, 0.0, -s, 0.0, c)
}

pub fn rot_z(t: f64) -> Mat3 {
    let (s, c) = t.sin_cos();
    Mat3::new(c, -s, 0.0, s, c, 0.0, 0.0, 0.0, 1.0)
}

/// Checked conversion from Euler angles to a rotation matrix.
pub fn euler_to_matrix(e: &EulerAngles) -> Result<Mat3> {
    if !e.is_finite() {
        return Err(invalid(format!("non-finite Euler angles {:?}", e.0)));
    }
    Ok(e.matrix())
}

/// Checked conversion from a rotation matrix to Euler angles.
///
/// At gimbal lock (`b = ±π/2`) the result is canonicalised to `c = 0`.
pub fn matrix_to_euler(r: &Mat3) -> Result<EulerAngles> {
    if !r.iter().all(|v| v.is_finite()) {
        return Err(invalid("non-finite rotation matrix"));
    }
    if !is_rotation(r, 1e-6) {
        return Err(invalid("matrix is not a proper rotation within 1e-6"));
    }
    Ok(EulerAngles::from_matrix_unchecked(r))
}

pub fn is_rotation(r: &Mat3, tol: f64) -> bool {
    let err = (r.transpose() * r - Mat3::identity()).abs().max();
    err <= tol && r.determinant() > 0.0
}

/// Rotation vector (axis * angle) of `r`, robust for angles near π.
pub fn log_so3(r: &Mat3) -> Vec3 {
    let q = UnitQuaternion::from_rotation_matrix(&Rotation3::from_matrix_unchecked(*r));
    q.scaled_axis()
}

pub fn exp_so3(v: &Vec3) -> Mat3 {
    Rotation3::new(*v).into_inner()
}

/// Geodesic distance between two rotations in radians.
pub fn rotation_distance(a: &Mat3, b: &Mat3) -> f64 {
    log_so3(&(a.transpose() * b)).norm()
}

/// Point at fraction `s` along the geodesic from `from` to `to`.
pub fn geodesic_interpolate(from: &Mat3, to: &Mat3, s: f64) -> Mat3 {
    let delta = log_so3(&(from.transpose() * to));
    from * exp_so3(&(delta * s))
}
