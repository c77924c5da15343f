//! Singular configurations of the arm and of the arm-angle parameterization.
//!
//! Kinematic singularities (task-space rank loss):
//! `q4 in {0, pi}`; `q2 = +-pi/2 and q3 in {0, pi}`;
//! `q2 = +-pi/2 and q6 = +-acos(-a_wr/d_ew)`; `q5 in {0, pi} and q6 = +-acos(-a_wr/d_ew)`.
//!
//! Algorithmic singularities (the solver loses uniqueness):
//! `q2 = +-pi/2`; `q6 = +-acos(-a_wr/d_ew)`;
//! `(d_ew + a_wr cos q6) sin q4 - a_wr cos q4 sin q5 sin q6 = 0`.
//! The last one is where the unsquared `q6` constraint has a double root.
//! [`Condition::FlangeAxisAlongSc`] adds the case where `z7` is parallel to
//! SC, which leaves the reference plane of the arm angle undefined.

use std::f64::consts::{FRAC_PI_2, PI};

use nalgebra::{SMatrix, Vector3};
use serde::Serialize;

use crate::kinematics::{
    angle_distance, forward_chain, forward_kinematics, JointConfig, RobotParams, NUM_JOINTS,
};

/// Angle conditions count as hit below this distance (rad).
pub const HIT_TOL: f64 = 1e-6;
/// The compound expression counts as hit below this magnitude (m).
pub const HIT_TOL_M: f64 = 1e-9;
/// Default finite-difference step of [`numeric_jacobian`].
pub const JACOBIAN_STEP: f64 = 1e-6;

pub type Jacobian = SMatrix<f64, 6, NUM_JOINTS>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum SingularityKind {
    Kinematic,
    Algorithmic,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Condition {
    /// `q4 in {0, pi}`
    ElbowStraight,
    /// `q2 = +-pi/2 && q3 in {0, pi}`
    ShoulderAlignedQ3,
    /// `q2 = +-pi/2 && q6 = +-acos(-a_wr/d_ew)`
    ShoulderAlignedWristOffset,
    /// `q5 in {0, pi} && q6 = +-acos(-a_wr/d_ew)`
    WristPlanarOffset,
    /// `q2 = +-pi/2`
    ShoulderAligned,
    /// `q6 = +-acos(-a_wr/d_ew)`
    WristOffsetAligned,
    /// `(d_ew + a_wr cos q6) sin q4 - a_wr cos q4 sin q5 sin q6 = 0`
    TangentRoot,
    /// `z7` parallel to SC
    FlangeAxisAlongSc,
}

impl Condition {
    pub const KINEMATIC: [Condition; 4] = [
        Condition::ElbowStraight,
        Condition::ShoulderAlignedQ3,
        Condition::ShoulderAlignedWristOffset,
        Condition::WristPlanarOffset,
    ];

    pub const ALGORITHMIC: [Condition; 4] = [
        Condition::ShoulderAligned,
        Condition::WristOffsetAligned,
        Condition::TangentRoot,
        Condition::FlangeAxisAlongSc,
    ];

    pub fn kind(self) -> SingularityKind {
        if Self::KINEMATIC.contains(&self) {
            SingularityKind::Kinematic
        } else {
            SingularityKind::Algorithmic
        }
    }

    /// Whether [`Condition::distance`] is in meters rather than radians.
    pub fn is_length(self) -> bool {
        self == Condition::TangentRoot
    }

    /// Distance of `joints` from the condition's set: radians for angle
    /// conditions (the larger of the two for conjunctions), meters for
    /// the compound expression.
    pub fn distance(self, joints: &JointConfig, params: &RobotParams) -> f64 {
        let q = joints.as_array();
        let q6_star = params.q6_offset_singular();
        let d2 = nearest(q[1], &[FRAC_PI_2, -FRAC_PI_2]);
        let d3 = nearest(q[2], &[0.0, PI]);
        let d4 = nearest(q[3], &[0.0, PI]);
        let d5 = nearest(q[4], &[0.0, PI]);
        let d6 = nearest(q[5], &[q6_star, -q6_star]);
        match self {
            Condition::ElbowStraight => d4,
            Condition::ShoulderAlignedQ3 => d2.max(d3),
            Condition::ShoulderAlignedWristOffset => d2.max(d6),
            Condition::WristPlanarOffset => d5.max(d6),
            Condition::ShoulderAligned => d2,
            Condition::WristOffsetAligned => d6,
            Condition::TangentRoot => {
                let (s4, c4) = q[3].sin_cos();
                let s5 = q[4].sin();
                let (s6, c6) = q[5].sin_cos();
                let (a_wr, d_ew) = (params.a_wr(), params.d_ew());
                ((d_ew + a_wr * c6) * s4 - a_wr * c4 * s5 * s6).abs()
            }
            Condition::FlangeAxisAlongSc => {
                let pose = forward_kinematics(params, joints);
                let sc = pose.translation - params.shoulder();
                let n = sc.norm();
                if n == 0.0 {
                    return 0.0;
                }
                let z7: Vector3<f64> = pose.rotation.column(2).into_owned();
                (sc / n).cross(&z7).norm().min(1.0).asin()
            }
        }
    }
}

fn nearest(q: f64, set: &[f64]) -> f64 {
    set.iter().map(|s| angle_distance(q, *s)).fold(f64::INFINITY, f64::min)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct HitTolerances {
    pub angle: f64,
    pub length: f64,
}

impl Default for HitTolerances {
    fn default() -> Self {
        Self {
            angle: HIT_TOL,
            length: HIT_TOL_M,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Hit {
    pub condition: Condition,
    pub distance: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct SingularityReport {
    pub kinematic_hits: Vec<Hit>,
    pub algorithmic_hits: Vec<Hit>,
    pub min_singular_value: Option<f64>,
}

impl SingularityReport {
    pub fn is_singular(&self) -> bool {
        !self.kinematic_hits.is_empty() || !self.algorithmic_hits.is_empty()
    }

    pub fn hits(&self) -> impl Iterator<Item = &Hit> {
        self.kinematic_hits.iter().chain(self.algorithmic_hits.iter())
    }

    pub fn contains(&self, condition: Condition) -> bool {
        self.hits().any(|h| h.condition == condition)
    }
}

/// Evaluates every listed condition and keeps those within tolerance.
pub fn classify(joints: &JointConfig, params: &RobotParams, tol: HitTolerances) -> SingularityReport {
    let mut report = SingularityReport::default();
    for condition in Condition::KINEMATIC.into_iter().chain(Condition::ALGORITHMIC) {
        let distance = condition.distance(joints, params);
        let limit = if condition.is_length() { tol.length } else { tol.angle };
        if distance < limit {
            let hit = Hit {
                condition,
                distance,
            };
            match condition.kind() {
                SingularityKind::Kinematic => report.kinematic_hits.push(hit),
                SingularityKind::Algorithmic => report.algorithmic_hits.push(hit),
            }
        }
    }
    report
}

/// [`classify`] plus the smallest singular value of the numeric Jacobian.
pub fn classify_with_jacobian(
    joints: &JointConfig,
    params: &RobotParams,
    tol: HitTolerances,
) -> SingularityReport {
    let mut report = classify(joints, params, tol);
    report.min_singular_value = Some(min_singular_value(&numeric_jacobian(joints, params, JACOBIAN_STEP)));
    report
}

/// Smallest angular distance to any kinematic condition and to the two
/// single-joint algorithmic conditions.
pub fn angular_margin(joints: &JointConfig, params: &RobotParams) -> f64 {
    Condition::KINEMATIC
        .into_iter()
        .chain([Condition::ShoulderAligned, Condition::WristOffsetAligned])
        .map(|c| c.distance(joints, params))
        .fold(f64::INFINITY, f64::min)
}

/// Central-difference Jacobian of frame 7: rows 0..3 linear velocity of its
/// origin, rows 3..6 angular velocity, both in the base frame.
pub fn numeric_jacobian(joints: &JointConfig, params: &RobotParams, h: f64) -> Jacobian {
    let mut jac = Jacobian::zeros();
    let nominal = forward_kinematics(params, joints).rotation;
    for i in 0..NUM_JOINTS {
        let mut plus = *joints;
        let mut minus = *joints;
        plus.0[i] += h;
        minus.0[i] -= h;
        let tp = forward_kinematics(params, &plus);
        let tm = forward_kinematics(params, &minus);
        let v = (tp.translation - tm.translation) / (2.0 * h);
        let dr = (tp.rotation - tm.rotation) / (2.0 * h) * nominal.transpose();
        let w = Vector3::new(
            0.5 * (dr[(2, 1)] - dr[(1, 2)]),
            0.5 * (dr[(0, 2)] - dr[(2, 0)]),
            0.5 * (dr[(1, 0)] - dr[(0, 1)]),
        );
        jac.fixed_view_mut::<3, 1>(0, i).copy_from(&v);
        jac.fixed_view_mut::<3, 1>(3, i).copy_from(&w);
    }
    jac
}

/// Geometric Jacobian from the joint axes: column `i` is
/// `(z_i x (p7 - o_i), z_i)`.
pub fn geometric_jacobian(joints: &JointConfig, params: &RobotParams) -> Jacobian {
    let frames = forward_chain(params, joints);
    let p7 = frames[NUM_JOINTS].translation;
    let mut jac = Jacobian::zeros();
    for i in 0..NUM_JOINTS {
        let f = &frames[i + 1];
        let z: Vector3<f64> = f.rotation.column(2).into_owned();
        let v = z.cross(&(p7 - f.translation));
        jac.fixed_view_mut::<3, 1>(0, i).copy_from(&v);
        jac.fixed_view_mut::<3, 1>(3, i).copy_from(&z);
    }
    jac
}

pub fn min_singular_value(jac: &Jacobian) -> f64 {
    jac.svd(false, false).singular_values.min()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn params() -> RobotParams {
        RobotParams::moz1_placeholder()
    }

    #[test]
    fn straight_elbow_is_kinematic() {
        let q = JointConfig([0.3, 0.4, -1.0, 0.0, 0.6, 0.9, 0.2]);
        let r = classify(&q, &params(), HitTolerances::default());
        assert_eq!(r.kinematic_hits.len(), 1);
        assert_eq!(r.kinematic_hits[0].condition, Condition::ElbowStraight);
        assert_eq!(r.kinematic_hits[0].distance, 0.0);
    }

    #[test]
    fn shoulder_and_offset_families() {
        let p = params();
        let q = JointConfig([0.3, FRAC_PI_2, -1.0, 0.8, 0.6, p.q6_offset_singular(), 0.2]);
        let r = classify(&q, &p, HitTolerances::default());
        assert!(r.contains(Condition::ShoulderAlignedWristOffset));
        assert!(r.contains(Condition::ShoulderAligned));
        assert!(r.contains(Condition::WristOffsetAligned));
        assert!(!r.contains(Condition::ElbowStraight));
    }

    #[test]
    fn generic_configuration_is_clear() {
        let q = JointConfig([0.3, 0.4, -1.0, 0.8, 0.6, 0.9, 0.2]);
        let r = classify(&q, &params(), HitTolerances::default());
        assert!(!r.is_singular());
    }

    #[test]
    fn numeric_matches_geometric_at_zero() {
        let p = params();
        let q = JointConfig::zeros();
        let num = numeric_jacobian(&q, &p, 1e-6);
        let geo = geometric_jacobian(&q, &p);
        assert!((num - geo).amax() < 1e-6);
    }

    #[test]
    fn zero_pose_axes() {
        // Joint 1 rotates about base z, the flange sits on the x axis at
        // d_se + d_ew + a_wr.
        let p = params();
        let jac = geometric_jacobian(&JointConfig::zeros(), &p);
        let reach = p.d_se() + p.d_ew() + p.a_wr();
        let col0 = jac.column(0);
        assert!((col0[1] - reach).abs() < 1e-12);
        assert!((col0[5] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn rank_drop_at_straight_elbow() {
        let p = params();
        let q = JointConfig([0.3, 0.4, -1.0, 0.0, 0.6, 0.9, 0.2]);
        assert!(min_singular_value(&numeric_jacobian(&q, &p, 1e-6)) < 1e-6);
        let q = JointConfig([0.3, 0.4, -1.0, 0.8, 0.6, 0.9, 0.2]);
        assert!(min_singular_value(&numeric_jacobian(&q, &p, 1e-6)) > 1e-3);
    }

    #[test]
    fn compound_distance_is_metric() {
        let p = params();
        let q = JointConfig([0.0, 0.0, 0.0, FRAC_PI_2, 0.0, 0.0, 0.0]);
        let d = Condition::TangentRoot.distance(&q, &p);
        assert!((d - (p.d_ew() + p.a_wr())).abs() < 1e-15);
    }
}
