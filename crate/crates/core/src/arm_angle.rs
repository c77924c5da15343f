//! Redundancy parameter built on the shoulder center S, the elbow center E
//! and the flange center C.
//!
//! S and C stay fixed while the arm moves through its self-motion, so the
//! line SC is a valid rotation axis for the redundancy. The arm angle is the
//! signed dihedral angle about `SC/|SC|` from the half-plane spanned by SC and
//! `z7` (reference plane) to the half-plane spanned by SC and SE (arm plane).
//!
//! In the special configuration (C straight above S, `z7` in the base
//! xz-plane) this reduces to `psi = atan2(E_y, E_x) + pi`.

use nalgebra::{Matrix3, Vector3};

use crate::error::{Error, Result};
use crate::kinematics::{forward_chain, rot_y, rot_z, wrap_angle, JointConfig, RobotParams, Transform};

/// Threshold on the norm of the cross product of two unit vectors below
/// which they are treated as parallel.
pub const TOL_PARALLEL: f64 = 1e-8;

/// Minimum accepted `|SC|` in meters.
pub const TOL_LEN: f64 = 1e-9;

/// Arm angle in `(-pi, pi]`.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
pub struct ArmAngle(f64);

impl ArmAngle {
    pub fn new(psi: f64) -> Self {
        Self(wrap_angle(psi))
    }

    pub fn radians(self) -> f64 {
        self.0
    }
}

impl From<ArmAngle> for f64 {
    fn from(a: ArmAngle) -> f64 {
        a.0
    }
}

/// Arm angle from the four geometric ingredients, all in the base frame.
pub fn arm_angle_from_points(
    s: &Vector3<f64>,
    e: &Vector3<f64>,
    c: &Vector3<f64>,
    z7: &Vector3<f64>,
) -> Result<ArmAngle> {
    let sc = c - s;
    let d_sc = sc.norm();
    if d_sc < TOL_LEN {
        return Err(Error::ZeroSc { d_sc });
    }
    let n = sc / d_sc;
    let z7 = z7.normalize();
    let ref_cross = n.cross(&z7).norm();
    if ref_cross < TOL_PARALLEL {
        return Err(Error::DegenerateReference { cross: ref_cross });
    }
    let se = e - s;
    let se_len = se.norm();
    let arm_cross = if se_len > 0.0 { n.cross(&(se / se_len)).norm() } else { 0.0 };
    if arm_cross < TOL_PARALLEL {
        return Err(Error::DegenerateArm { cross: arm_cross });
    }
    // Components orthogonal to the rotation axis.
    let reference = z7 - n * n.dot(&z7);
    let arm = se - n * n.dot(&se);
    let psi = n.dot(&reference.cross(&arm)).atan2(reference.dot(&arm));
    Ok(ArmAngle::new(psi))
}

/// Arm angle of a joint configuration.
pub fn arm_angle(params: &RobotParams, joints: &JointConfig) -> Result<ArmAngle> {
    let frames = forward_chain(params, joints);
    let z7 = frames[7].rotation.column(2).into_owned();
    arm_angle_from_points(
        &frames[2].translation,
        &frames[4].translation,
        &frames[7].translation,
        &z7,
    )
}

/// `Trans(0, 0, d_bs + d_sc) * RotY(q) * RotZ(al)`.
pub fn special_pose(d_bs: f64, d_sc: f64, q: f64, al: f64) -> Transform {
    Transform::from_parts_unchecked(rot_y(q) * rot_z(al), Vector3::new(0.0, 0.0, d_bs + d_sc))
}

/// Three-parameter description of a flange pose plus the rotation about the
/// shoulder center that carries the pose onto its special configuration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReducedPose {
    /// `|SC|` in meters.
    pub d_sc: f64,
    /// Signed angle from SC to `z7`, in `[-pi, 0]`.
    pub q: f64,
    /// Angle from `x72 = y_v x z7` to `x7` about `z7`.
    pub al: f64,
    /// Maps base-frame directions of the given pose onto the special configuration.
    pub align_rotation: Matrix3<f64>,
}

impl ReducedPose {
    pub fn special_pose(&self, d_bs: f64) -> Transform {
        special_pose(d_bs, self.d_sc, self.q, self.al)
    }

    /// Applies the inverse alignment (a rotation about the shoulder center)
    /// to a pose expressed in the special configuration.
    pub fn restore(&self, special: &Transform, d_bs: f64) -> Transform {
        let s = Vector3::new(0.0, 0.0, d_bs);
        let back = self.align_rotation.transpose();
        Transform::from_parts_unchecked(
            back * special.rotation,
            back * (special.translation - s) + s,
        )
    }
}

/// Reduces an arbitrary flange pose to `(d_sc, q, al)`.
pub fn reduce_pose(params: &RobotParams, pose: &Transform) -> Result<ReducedPose> {
    let s = params.shoulder();
    let sc = pose.translation - s;
    let d_sc = sc.norm();
    if d_sc < TOL_LEN {
        return Err(Error::ZeroSc { d_sc });
    }
    let zv = sc / d_sc;
    let z7 = pose.rotation.column(2).into_owned();
    let x7 = pose.rotation.column(0).into_owned();
    let yv = z7.cross(&zv);
    let cross = yv.norm();
    if cross < TOL_PARALLEL {
        return Err(Error::AxisParallel { cross });
    }
    let yv = yv / cross;
    // -acos(zv . z7), evaluated without the precision loss of acos near +-1.
    let q = -cross.atan2(zv.dot(&z7));
    let x72 = yv.cross(&z7);
    let al = x72.cross(&x7).dot(&z7).atan2(x72.dot(&x7));
    let xv = yv.cross(&zv);
    let align_rotation = Matrix3::from_rows(&[xv.transpose(), yv.transpose(), zv.transpose()]);
    Ok(ReducedPose {
        d_sc,
        q,
        al,
        align_rotation,
    })
}
