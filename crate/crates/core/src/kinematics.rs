//! Robot description, the modified-DH frame convention and forward kinematics.
//!
//! Every joint transform is `RotX(alpha) * TransX(a) * RotZ(theta_offset + q) * TransZ(d)`.
//! The default table places the shoulder frame (`F_S = 0T2`) at `(0, 0, d_bs)`,
//! the elbow frame (`F_E = 0T4`) at distance `d_se` from it, the wrist frame
//! (`F_W = 0T6`) at distance `d_ew` from the elbow and the flange center
//! (`0T7`) at the offset `a_wr` from the wrist, measured along `x6`.

use std::f64::consts::{FRAC_PI_2, PI, TAU};
use std::ops::{Index, Mul};
use std::path::Path;

use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Tolerance on `R^T R - I` and `det R - 1` for a rotation to be accepted.
pub const ROTATION_TOL: f64 = 1e-9;

/// Tolerance of the construction-time table consistency check.
const TABLE_TOL: f64 = 1e-9;

pub const NUM_JOINTS: usize = 7;

/// Wraps an angle into `(-pi, pi]`.
pub fn wrap_angle(x: f64) -> f64 {
    let mut y = x % TAU;
    if y > PI {
        y -= TAU;
    } else if y <= -PI {
        y += TAU;
    }
    y
}

/// Absolute angular distance between two angles, modulo `2 pi`.
pub fn angle_distance(a: f64, b: f64) -> f64 {
    wrap_angle(a - b).abs()
}

/// Rigid-body transform: proper rotation plus translation (meters).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Transform {
    pub rotation: Matrix3<f64>,
    pub translation: Vector3<f64>,
}

impl Transform {
    pub fn identity() -> Self {
        Self {
            rotation: Matrix3::identity(),
            translation: Vector3::zeros(),
        }
    }

    /// Builds a transform, rejecting rotations that are not orthonormal with
    /// determinant +1 within [`ROTATION_TOL`].
    pub fn new(rotation: Matrix3<f64>, translation: Vector3<f64>) -> Result<Self> {
        if !rotation.iter().chain(translation.iter()).all(|v| v.is_finite()) {
            return Err(Error::InvalidRotation("non-finite entry".into()));
        }
        let ortho = (rotation.transpose() * rotation - Matrix3::identity()).amax();
        if ortho > ROTATION_TOL {
            return Err(Error::InvalidRotation(format!(
                "R^T R deviates from identity by {ortho:e}"
            )));
        }
        let det = rotation.determinant();
        if (det - 1.0).abs() > ROTATION_TOL {
            return Err(Error::InvalidRotation(format!("determinant {det}")));
        }
        Ok(Self {
            rotation,
            translation,
        })
    }

    pub fn from_parts_unchecked(rotation: Matrix3<f64>, translation: Vector3<f64>) -> Self {
        Self {
            rotation,
            translation,
        }
    }

    /// Unit quaternion `[w, x, y, z]`; the norm must be 1 within [`ROTATION_TOL`].
    pub fn from_quaternion(wxyz: [f64; 4], translation: Vector3<f64>) -> Result<Self> {
        let [w, x, y, z] = wxyz;
        let norm = (w * w + x * x + y * y + z * z).sqrt();
        if !norm.is_finite() || (norm - 1.0).abs() > ROTATION_TOL {
            return Err(Error::InvalidRotation(format!(
                "quaternion norm {norm} is not 1"
            )));
        }
        let (w, x, y, z) = (w / norm, x / norm, y / norm, z / norm);
        let rotation = Matrix3::new(
            1.0 - 2.0 * (y * y + z * z),
            2.0 * (x * y - w * z),
            2.0 * (x * z + w * y),
            2.0 * (x * y + w * z),
            1.0 - 2.0 * (x * x + z * z),
            2.0 * (y * z - w * x),
            2.0 * (x * z - w * y),
            2.0 * (y * z + w * x),
            1.0 - 2.0 * (x * x + y * y),
        );
        Self::new(rotation, translation)
    }

    pub fn translation(x: f64, y: f64, z: f64) -> Self {
        Self {
            rotation: Matrix3::identity(),
            translation: Vector3::new(x, y, z),
        }
    }

    pub fn rot_x(angle: f64) -> Self {
        Self::from_parts_unchecked(rot_x(angle), Vector3::zeros())
    }

    pub fn rot_y(angle: f64) -> Self {
        Self::from_parts_unchecked(rot_y(angle), Vector3::zeros())
    }

    pub fn rot_z(angle: f64) -> Self {
        Self::from_parts_unchecked(rot_z(angle), Vector3::zeros())
    }

    pub fn inverse(&self) -> Self {
        let rt = self.rotation.transpose();
        Self {
            rotation: rt,
            translation: -(rt * self.translation),
        }
    }

    pub fn transform_point(&self, p: &Vector3<f64>) -> Vector3<f64> {
        self.rotation * p + self.translation
    }

    /// Euclidean translation error (m) and geodesic rotation angle (rad)
    /// between two poses.
    pub fn pose_error(&self, other: &Transform) -> (f64, f64) {
        (
            (self.translation - other.translation).norm(),
            rotation_angle_between(&self.rotation, &other.rotation),
        )
    }

    /// Larger of the translation and rotation components of [`Self::pose_error`].
    pub fn pose_distance(&self, other: &Transform) -> f64 {
        let (t, r) = self.pose_error(other);
        t.max(r)
    }

    pub fn is_finite(&self) -> bool {
        self.rotation
            .iter()
            .chain(self.translation.iter())
            .all(|v| v.is_finite())
    }
}

impl Mul for Transform {
    type Output = Transform;

    fn mul(self, rhs: Transform) -> Transform {
        Transform {
            rotation: self.rotation * rhs.rotation,
            translation: self.rotation * rhs.translation + self.translation,
        }
    }
}

impl Mul for &Transform {
    type Output = Transform;

    fn mul(self, rhs: &Transform) -> Transform {
        *self * *rhs
    }
}

pub(crate) fn rot_x(a: f64) -> Matrix3<f64> {
    let (s, c) = a.sin_cos();
    Matrix3::new(1.0, 0.0, 0.0, 0.0, c, -s, 0.0, s, c)
}

pub(crate) fn rot_y(a: f64) -> Matrix3<f64> {
    let (s, c) = a.sin_cos();
    Matrix3::new(c, 0.0, s, 0.0, 1.0, 0.0, -s, 0.0, c)
}

pub(crate) fn rot_z(a: f64) -> Matrix3<f64> {
    let (s, c) = a.sin_cos();
    Matrix3::new(c, -s, 0.0, s, c, 0.0, 0.0, 0.0, 1.0)
}

/// Geodesic angle of `a^T b`, accurate for small angles.
pub fn rotation_angle_between(a: &Matrix3<f64>, b: &Matrix3<f64>) -> f64 {
    let m = a.transpose() * b;
    let v = Vector3::new(m[(2, 1)] - m[(1, 2)], m[(0, 2)] - m[(2, 0)], m[(1, 0)] - m[(0, 1)]);
    let s = 0.5 * v.norm();
    let c = 0.5 * (m.trace() - 1.0);
    s.atan2(c)
}

/// One modified-DH row.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(from = "[f64; 4]", into = "[f64; 4]")]
pub struct MdhRow {
    pub alpha: f64,
    pub a: f64,
    pub d: f64,
    pub theta_offset: f64,
}

impl MdhRow {
    pub const fn new(alpha: f64, a: f64, d: f64, theta_offset: f64) -> Self {
        Self {
            alpha,
            a,
            d,
            theta_offset,
        }
    }

    fn is_finite(&self) -> bool {
        self.alpha.is_finite() && self.a.is_finite() && self.d.is_finite() && self.theta_offset.is_finite()
    }
}

impl From<[f64; 4]> for MdhRow {
    fn from(v: [f64; 4]) -> Self {
        Self::new(v[0], v[1], v[2], v[3])
    }
}

impl From<MdhRow> for [f64; 4] {
    fn from(r: MdhRow) -> Self {
        [r.alpha, r.a, r.d, r.theta_offset]
    }
}

/// Single-joint transform `RotX(alpha) * TransX(a) * RotZ(theta_offset + q) * TransZ(d)`.
pub fn mdh_transform(row: &MdhRow, q: f64) -> Transform {
    let (sa, ca) = row.alpha.sin_cos();
    let (st, ct) = (row.theta_offset + q).sin_cos();
    let rotation = Matrix3::new(
        ct,
        -st,
        0.0,
        ca * st,
        ca * ct,
        -sa,
        sa * st,
        sa * ct,
        ca,
    );
    let translation = Vector3::new(row.a, -sa * row.d, ca * row.d);
    Transform {
        rotation,
        translation,
    }
}

/// Seven joint angles in radians.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct JointConfig(pub [f64; NUM_JOINTS]);

impl JointConfig {
    pub const fn new(q: [f64; NUM_JOINTS]) -> Self {
        Self(q)
    }

    pub const fn zeros() -> Self {
        Self([0.0; NUM_JOINTS])
    }

    pub fn as_array(&self) -> &[f64; NUM_JOINTS] {
        &self.0
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|q| q.is_finite())
    }

    /// Representative with every angle in `(-pi, pi]`.
    pub fn normalized(&self) -> Self {
        Self(self.0.map(wrap_angle))
    }

    /// Largest per-joint angular distance, modulo `2 pi`.
    pub fn max_angle_distance(&self, other: &JointConfig) -> f64 {
        self.0
            .iter()
            .zip(other.0.iter())
            .map(|(a, b)| angle_distance(*a, *b))
            .fold(0.0, f64::max)
    }
}

impl Index<usize> for JointConfig {
    type Output = f64;

    fn index(&self, i: usize) -> &f64 {
        &self.0[i]
    }
}

impl From<[f64; NUM_JOINTS]> for JointConfig {
    fn from(q: [f64; NUM_JOINTS]) -> Self {
        Self(q)
    }
}

/// Shoulder, elbow, wrist and flange-center points in the base frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FramePoints {
    pub s: Vector3<f64>,
    pub e: Vector3<f64>,
    pub w: Vector3<f64>,
    pub c: Vector3<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
struct ParamsFile {
    d_bs: f64,
    d_se: f64,
    d_ew: f64,
    a_wr: f64,
    mdh: [MdhRow; NUM_JOINTS],
}

/// Link lengths and the MDH table of the arm.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "ParamsFile", into = "ParamsFile")]
pub struct RobotParams {
    d_bs: f64,
    d_se: f64,
    d_ew: f64,
    a_wr: f64,
    mdh: [MdhRow; NUM_JOINTS],
}

impl TryFrom<ParamsFile> for RobotParams {
    type Error = Error;

    fn try_from(f: ParamsFile) -> Result<Self> {
        RobotParams::new(f.d_bs, f.d_se, f.d_ew, f.a_wr, f.mdh)
    }
}

impl From<RobotParams> for ParamsFile {
    fn from(p: RobotParams) -> Self {
        ParamsFile {
            d_bs: p.d_bs,
            d_se: p.d_se,
            d_ew: p.d_ew,
            a_wr: p.a_wr,
            mdh: p.mdh,
        }
    }
}

/// Placeholder parameter file shipped with the crate. Only `a_wr` is a
/// published value; the three link lengths are stand-ins.
pub const MOZ1_PLACEHOLDER_JSON: &str = include_str!("../params/moz1_placeholder.json");

impl RobotParams {
    /// Validates lengths and checks that `mdh` realizes the structure the
    /// closed-form solver assumes.
    pub fn new(d_bs: f64, d_se: f64, d_ew: f64, a_wr: f64, mdh: [MdhRow; NUM_JOINTS]) -> Result<Self> {
        for (name, v) in [("d_bs", d_bs), ("d_se", d_se), ("d_ew", d_ew), ("a_wr", a_wr)] {
            if !v.is_finite() {
                return Err(Error::InvalidParams(format!("{name} is not finite")));
            }
        }
        if d_bs <= 0.0 || d_se <= 0.0 || d_ew <= 0.0 {
            return Err(Error::InvalidParams(
                "d_bs, d_se and d_ew must be strictly positive".into(),
            ));
        }
        if a_wr < 0.0 {
            return Err(Error::InvalidParams("a_wr must be non-negative".into()));
        }
        if a_wr >= d_ew {
            return Err(Error::InvalidParams(format!(
                "a_wr ({a_wr}) must be smaller than d_ew ({d_ew})"
            )));
        }
        if let Some(i) = mdh.iter().position(|r| !r.is_finite()) {
            return Err(Error::InvalidParams(format!("mdh row {} is not finite", i + 1)));
        }
        let params = Self {
            d_bs,
            d_se,
            d_ew,
            a_wr,
            mdh,
        };
        params.check_table()?;
        Ok(params)
    }

    /// Lengths combined with the standard table for this arm family.
    pub fn with_lengths(d_bs: f64, d_se: f64, d_ew: f64, a_wr: f64) -> Result<Self> {
        Self::new(d_bs, d_se, d_ew, a_wr, standard_table(d_bs, d_se, d_ew, a_wr))
    }

    /// The bundled placeholder parameter set (`a_wr = 0.0905 m`).
    pub fn moz1_placeholder() -> Self {
        Self::from_json_str(MOZ1_PLACEHOLDER_JSON).expect("bundled parameter file is valid")
    }

    pub fn from_json_str(s: &str) -> Result<Self> {
        serde_json::from_str(s).map_err(|e| Error::InvalidParams(e.to_string()))
    }

    pub fn from_json_file(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::InvalidParams(format!("{}: {e}", path.display())))?;
        Self::from_json_str(&text)
    }

    pub fn d_bs(&self) -> f64 {
        self.d_bs
    }

    pub fn d_se(&self) -> f64 {
        self.d_se
    }

    pub fn d_ew(&self) -> f64 {
        self.d_ew
    }

    pub fn a_wr(&self) -> f64 {
        self.a_wr
    }

    pub fn mdh(&self) -> &[MdhRow; NUM_JOINTS] {
        &self.mdh
    }

    /// Shoulder center in the base frame; stationary for every configuration.
    pub fn shoulder(&self) -> Vector3<f64> {
        Vector3::new(0.0, 0.0, self.d_bs)
    }

    /// `|acos(-a_wr/d_ew)|`: the q6 value at which the elbow lies on the flange axis.
    pub fn q6_offset_singular(&self) -> f64 {
        (-self.a_wr / self.d_ew).acos()
    }

    fn check_table(&self) -> Result<()> {
        let probes = [
            [0.0; NUM_JOINTS],
            [0.3, -0.7, 1.1, 0.9, -1.3, 0.4, 2.2],
            [-2.1, 1.4, -0.2, -1.7, 2.6, -2.3, -0.8],
            [1.2, 2.9, 2.4, -2.8, 0.5, 1.9, 1.0],
        ];
        for probe in probes {
            let q = JointConfig(probe);
            let frames = forward_chain(self, &q);
            let s = frames[2].translation;
            let e = frames[4].translation;
            let w = frames[6].translation;
            let c = frames[7].translation;
            let fail = |what: &str| {
                Err(Error::InvalidParams(format!(
                    "mdh table inconsistent with the arm structure: {what} at q = {probe:?}"
                )))
            };
            if (s - self.shoulder()).norm() > TABLE_TOL {
                return fail("shoulder center is not at (0, 0, d_bs)");
            }
            if ((e - s).norm() - self.d_se).abs() > TABLE_TOL {
                return fail("|E - S| != d_se");
            }
            if ((w - e).norm() - self.d_ew).abs() > TABLE_TOL {
                return fail("|W - E| != d_ew");
            }
            if ((c - w).norm() - self.a_wr).abs() > TABLE_TOL {
                return fail("|C - W| != a_wr");
            }
            // The closed-form solver relies on these frame relations.
            let r03 = frames[3].rotation;
            if (r03 - shoulder_rotation_closed_form(q[0], q[1], q[2])).amax() > TABLE_TOL {
                return fail("0R3 does not match the spherical-shoulder closed form");
            }
            let s_in_6 = frames[6].inverse().transform_point(&s);
            let (s4, c4) = q[3].sin_cos();
            let (s5, c5) = q[4].sin_cos();
            let (s6, c6) = q[5].sin_cos();
            let expected_s6 = Vector3::new(
                -self.d_se * (c4 * c6 + s4 * s5 * s6) - self.d_ew * c6,
                self.d_se * (c4 * s6 - c6 * s4 * s5) + self.d_ew * s6,
                self.d_se * c5 * s4,
            );
            if (s_in_6 - expected_s6).amax() > TABLE_TOL {
                return fail("shoulder center in frame 6 does not match the forearm closed form");
            }
            let e_in_7 = frames[7].inverse().transform_point(&e);
            let t6 = self.a_wr + self.d_ew * c6;
            let r6 = self.d_ew * s6;
            let (s7, c7) = q[6].sin_cos();
            let expected_e7 = Vector3::new(-t6 * c7, t6 * s7, -r6);
            if (e_in_7 - expected_e7).amax() > TABLE_TOL {
                return fail("elbow center in frame 7 does not match the wrist closed form");
            }
        }
        Ok(())
    }
}

impl Default for RobotParams {
    fn default() -> Self {
        Self::moz1_placeholder()
    }
}

/// MDH table realizing the spherical shoulder, the in-line elbow and the
/// `a_wr` offset between joints 6 and 7.
pub fn standard_table(d_bs: f64, d_se: f64, d_ew: f64, a_wr: f64) -> [MdhRow; NUM_JOINTS] {
    [
        MdhRow::new(0.0, 0.0, d_bs, 0.0),
        MdhRow::new(-FRAC_PI_2, 0.0, 0.0, -FRAC_PI_2),
        MdhRow::new(FRAC_PI_2, 0.0, -d_se, FRAC_PI_2),
        MdhRow::new(FRAC_PI_2, 0.0, 0.0, 0.0),
        MdhRow::new(-FRAC_PI_2, 0.0, -d_ew, -FRAC_PI_2),
        MdhRow::new(-FRAC_PI_2, 0.0, 0.0, FRAC_PI_2),
        MdhRow::new(FRAC_PI_2, a_wr, 0.0, 0.0),
    ]
}

/// `0R3(q1, q2, q3)` of the spherical shoulder in closed form.
pub fn shoulder_rotation_closed_form(q1: f64, q2: f64, q3: f64) -> Matrix3<f64> {
    let (s1, c1) = q1.sin_cos();
    let (s2, c2) = q2.sin_cos();
    let (s3, c3) = q3.sin_cos();
    Matrix3::new(
        -c1 * s2 * s3 - c3 * s1,
        s1 * s3 - c1 * c3 * s2,
        -c1 * c2,
        c1 * c3 - s1 * s2 * s3,
        -c3 * s1 * s2 - c1 * s3,
        -c2 * s1,
        -c2 * s3,
        -c2 * c3,
        s2,
    )
}

/// All frames `0T0 .. 0T7`.
pub fn forward_chain(params: &RobotParams, joints: &JointConfig) -> [Transform; NUM_JOINTS + 1] {
    let mut frames = [Transform::identity(); NUM_JOINTS + 1];
    for i in 0..NUM_JOINTS {
        frames[i + 1] = frames[i] * mdh_transform(&params.mdh[i], joints[i]);
    }
    frames
}

/// `0T7`.
pub fn forward_kinematics(params: &RobotParams, joints: &JointConfig) -> Transform {
    forward_chain(params, joints)[NUM_JOINTS]
}

pub fn frame_points(params: &RobotParams, joints: &JointConfig) -> FramePoints {
    let frames = forward_chain(params, joints);
    FramePoints {
        s: frames[2].translation,
        e: frames[4].translation,
        w: frames[6].translation,
        c: frames[7].translation,
    }
}

/// Rotation `i-1 R i` of a single joint.
pub(crate) fn joint_rotation(params: &RobotParams, joint: usize, q: f64) -> Matrix3<f64> {
    mdh_transform(&params.mdh[joint], q).rotation
}
