//! Analytical inverse kinematics.
//!
//! A request `(0T7, psi)` is first reduced to the special configuration
//! `(d_sc, q, al)`. There the wrist joints follow from two scalar
//! constraints in `(q6, q8 = q7 - al)`:
//!
//! * arm equation: the elbow's horizontal direction in the special frame
//!   has angle `psi - pi`;
//! * pose equation: `a_wr t6 - d_sc (r6 cos q - t6 cos q8 sin q) - k = 0`,
//!
//! with `t6 = a_wr + d_ew cos q6` and `r6 = d_ew sin q6`. Eliminating `q8`
//! gives `tm1 + t6 tm2 + t6^2 tm3 + r6 y (k - a_wr t6) = 0`, which squares to
//! a quartic in `t6`. Each real root yields up to two `q4`, and each of
//! those up to two `(q1, q2, q3)` from the shoulder rotation, for at most
//! 16 branches.
//!
//! Squaring admits roots that belong to `psi + pi` or to the opposite sign
//! of `sin q6`. Every candidate is therefore checked against the unsquared
//! constraint and both original equations, and the final joints are
//! re-verified by forward kinematics. Nothing is dropped silently: each
//! discarded candidate is listed in [`SolutionSet::rejected`].
//!
//! All loops run a fixed number of times (4 roots x 2 signs x 2 x 2, and
//! fixed-count polishing), so the work per request is bounded.

use std::f64::consts::{FRAC_PI_2, PI};

use arrayvec::ArrayVec;
use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use crate::arm_angle::{reduce_pose, ReducedPose, TOL_PARALLEL};
use crate::error::{Error, Result};
use crate::kinematics::{
    forward_kinematics, joint_rotation, wrap_angle, JointConfig, RobotParams, Transform,
};
use crate::quartic::{complex_roots, QuarticCoeffs, RealRoots};

/// Below this `|t6|` (m) the elbow sits on the flange axis and `q8` is free.
/// `t6 = 0` is a double root of the quartic, which rounding splits by about
/// `sqrt(eps)` times the link scale (wider near a straight elbow), hence
/// the loose value.
pub const T6_DEGENERATE_TOL: f64 = 1e-6;
/// `|g0| / max|g|` below which `t6 = 0` is reported as a quartic root.
pub const G0_DEGENERATE_TOL: f64 = 1e-15;
/// Below this `d_se |sin q4|` (m) `q5` is undefined.
pub const ELBOW_DEGENERATE_TOL: f64 = 1e-10;
/// `|r33|` above `1 - SHOULDER_DEGENERATE_TOL` leaves `q1`, `q3` undefined.
pub const SHOULDER_DEGENERATE_TOL: f64 = 1e-10;
/// Maximum deviation (rad) between the requested arm angle and the one a
/// candidate realizes; spurious `psi + pi` roots miss by `pi`.
pub const ARM_DIRECTION_TOL: f64 = 1e-6;
/// Quartic roots with a relative imaginary part up to this are still tried:
/// a tangent root is a double root, which rounding may split into a complex
/// pair of width about `sqrt(eps)`. Every candidate is verified anyway.
pub const NEAR_REAL_TOL: f64 = 1e-6;
/// Relative `|dF/dq6|` below which a root is flagged as tangent.
pub const TANGENT_TOL: f64 = 1e-6;

const Q6_POLISH_STEPS: usize = 2;
const Q8_POLISH_STEPS: usize = 2;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ToleranceSet {
    /// Max translation (m) and rotation (rad) error of the FK re-check.
    pub pose_tol: f64,
    /// Branches closer than this on every joint are duplicates.
    pub angle_merge_tol: f64,
    /// Unsquared constraint residual, relative to its natural scale.
    pub branch_residual_tol: f64,
    /// acos/asin arguments this far beyond +-1 are clamped; further is infeasible.
    pub sin_domain_tol: f64,
}

impl Default for ToleranceSet {
    fn default() -> Self {
        Self {
            pose_tol: 1e-8,
            angle_merge_tol: 1e-7,
            branch_residual_tol: 1e-7,
            sin_domain_tol: 1e-9,
        }
    }
}

impl ToleranceSet {
    pub fn validate(&self) -> Result<()> {
        let all = [
            self.pose_tol,
            self.angle_merge_tol,
            self.branch_residual_tol,
            self.sin_domain_tol,
        ];
        if all.iter().all(|t| t.is_finite() && *t > 0.0) {
            Ok(())
        } else {
            Err(Error::InvalidParams("tolerances must be positive".into()))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IkRequest {
    pub pose: Transform,
    pub psi: f64,
    pub params: RobotParams,
    pub tolerances: ToleranceSet,
}

impl IkRequest {
    pub fn new(params: RobotParams, pose: Transform, psi: f64) -> Self {
        Self {
            pose,
            psi,
            params,
            tolerances: ToleranceSet::default(),
        }
    }
}

/// Intermediate quantities of the `t6` quartic.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct QuarticSetup {
    pub d_sc: f64,
    pub q: f64,
    pub psi: f64,
    pub a_wr: f64,
    pub d_ew: f64,
    /// `(a_wr^2 + d_se^2 - d_sc^2 - d_ew^2) / 2`, m^2.
    pub k: f64,
    /// `2 d_sc cos q`, m.
    pub y: f64,
    pub tm1: f64,
    pub tm2: f64,
    pub tm3: f64,
    pub coeffs: QuarticCoeffs,
}

impl QuarticSetup {
    /// `tm1 + t6 tm2 + t6^2 tm3 + r6 y (k - a_wr t6)`.
    pub fn unsquared(&self, t6: f64, r6: f64) -> f64 {
        self.tm1 + t6 * self.tm2 + t6 * t6 * self.tm3 + r6 * self.y * (self.k - self.a_wr * t6)
    }

    /// The unsquared constraint as a function of `q6`, with its derivative.
    pub fn unsquared_in_q6(&self, q6: f64) -> (f64, f64) {
        let (s6, c6) = q6.sin_cos();
        let t6 = self.a_wr + self.d_ew * c6;
        let r6 = self.d_ew * s6;
        let dt6 = -self.d_ew * s6;
        let dr6 = self.d_ew * c6;
        let f = self.unsquared(t6, r6);
        let df = dt6 * self.tm2 + 2.0 * t6 * dt6 * self.tm3 + dr6 * self.y * (self.k - self.a_wr * t6)
            - r6 * self.y * self.a_wr * dt6;
        (f, df)
    }

    /// Natural magnitude of the unsquared constraint over `|t6| <= a_wr + d_ew`.
    pub fn residual_scale(&self) -> f64 {
        let l = self.a_wr + self.d_ew;
        [
            self.tm1.abs(),
            self.tm2.abs() * l,
            self.tm3.abs() * l * l,
            self.d_ew * self.y.abs() * (self.k.abs() + self.a_wr * l),
        ]
        .into_iter()
        .fold(f64::MIN_POSITIVE, f64::max)
    }
}

/// Builds `k`, `y`, `tm1..tm3` and the quartic coefficients `g0..g4`.
pub fn build_quartic(d_sc: f64, q: f64, psi: f64, params: &RobotParams) -> Result<QuarticSetup> {
    let sin_q = q.sin().abs();
    if sin_q < TOL_PARALLEL {
        return Err(Error::AxisParallel { cross: sin_q });
    }
    if !(d_sc > 0.0) {
        return Err(Error::ZeroSc { d_sc });
    }
    let a_wr = params.a_wr();
    let d_ew = params.d_ew();
    let d_se = params.d_se();
    let aw2 = a_wr * a_wr;
    let de2 = d_ew * d_ew;
    let ds2 = d_sc * d_sc;
    let k = (aw2 + d_se * d_se - ds2 - de2) / 2.0;
    let y = 2.0 * d_sc * q.cos();
    let (sp, cp) = psi.sin_cos();
    let (cp2, sp2) = (cp * cp, sp * sp);
    let cq2 = q.cos().powi(2);
    let c2q = (2.0 * q).cos();

    let tm1 = cp2 * (k * k - (aw2 - de2) * ds2 * cq2)
        + 0.5 * (-2.0 * aw2 * ds2 + 2.0 * de2 * ds2 + k * k + k * k * c2q) * sp2;
    let tm2 = -2.0 * a_wr * cp2 * (k - ds2 * cq2) + a_wr * (2.0 * ds2 - k - k * c2q) * sp2;
    let tm3 = (6.0 * aw2 - 8.0 * ds2 + 2.0 * aw2 * (2.0 * psi).cos() - aw2 * (2.0 * (psi - q)).cos()
        + 2.0 * aw2 * c2q
        - aw2 * (2.0 * (psi + q)).cos())
        / 8.0;

    let y2 = y * y;
    let g4 = tm3 * tm3 + aw2 * y2;
    let g3 = 2.0 * tm2 * tm3 - 2.0 * a_wr * (aw2 + k) * y2;
    let g2 = tm2 * tm2 + 2.0 * tm1 * tm3 + (aw2 * aw2 - aw2 * (de2 - 4.0 * k) + k * k) * y2;
    let g1 = 2.0 * tm1 * tm2 - 2.0 * a_wr * k * (aw2 - de2 + k) * y2;
    let g0 = tm1 * tm1 + (aw2 - de2) * k * k * y2;

    Ok(QuarticSetup {
        d_sc,
        q,
        psi,
        a_wr,
        d_ew,
        k,
        y,
        tm1,
        tm2,
        tm3,
        coeffs: QuarticCoeffs::new(g4, g3, g2, g1, g0),
    })
}

/// Geometric conditions under which the solver cannot produce a unique branch.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Degeneracy {
    /// `t6 = 0` (`q6 = +-acos(-a_wr/d_ew)`): elbow on the flange axis, `q8` free.
    WristOffsetAligned,
    /// `dF/dq6 = 0`: two wrist branches meet.
    TangentRoot,
    /// Elbow on line SC in the special frame: arm plane undefined.
    ArmPlaneUndefined,
    /// `sin q4 = 0`: `q5` undefined.
    ElbowStraight,
    /// `q2 = +-pi/2`: only `q1 + q3` or `q1 - q3` is determined.
    ShoulderAligned,
}

/// Why a candidate did not become a branch.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "reason", rename_all = "snake_case")]
pub enum RejectReason {
    /// Quartic roots with a non-negligible imaginary part.
    ComplexRoots { count: usize },
    /// A cosine outside `[-1, 1]` by more than `sin_domain_tol`.
    DomainViolation { quantity: &'static str, value: f64 },
    /// The unsquared `t6` constraint fails for this sign of `sin q6`.
    UnsquaredResidual { residual: f64 },
    /// The candidate realizes `psi + pi` instead of `psi`.
    ArmDirection { residual: f64 },
    /// The pose equation is not met after solving for `q8`.
    PoseEquation { residual: f64 },
    Degenerate { kind: Degeneracy },
    FkMismatch { error: f64 },
    Duplicate { of: usize },
}

impl RejectReason {
    pub fn tag(&self) -> &'static str {
        match self {
            RejectReason::ComplexRoots { .. } => "complex_roots",
            RejectReason::DomainViolation { .. } => "domain_violation",
            RejectReason::UnsquaredResidual { .. } => "unsquared_residual",
            RejectReason::ArmDirection { .. } => "arm_direction",
            RejectReason::PoseEquation { .. } => "pose_equation",
            RejectReason::Degenerate { .. } => "degenerate",
            RejectReason::FkMismatch { .. } => "fk_mismatch",
            RejectReason::Duplicate { .. } => "duplicate",
        }
    }
}

/// Position of a candidate in the `root x q6 sign x q4 sign x q2 sign` tree.
/// `None` marks a level the candidate never reached.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct BranchLabel {
    pub root_index: Option<u8>,
    pub q6_sign: Option<i8>,
    pub q4_sign: Option<i8>,
    pub q2_sign: Option<i8>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Rejection {
    pub label: BranchLabel,
    #[serde(flatten)]
    pub reason: RejectReason,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BranchResiduals {
    /// `max(translation error m, rotation error rad)` of the FK re-check.
    pub pose_error: f64,
    /// Requested minus realized arm angle (rad, wrapped).
    pub arm_eq_residual: f64,
    /// Pose equation residual divided by `d_sc` (m).
    pub pose_eq_residual: f64,
    /// Unsquared constraint residual relative to its scale.
    pub unsquared_residual: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct IkBranch {
    pub joints: JointConfig,
    pub root_index: u8,
    pub t6: f64,
    pub r6: f64,
    pub q8: f64,
    pub q6_sign: i8,
    pub q4_sign: i8,
    /// `sign(cos q2)`.
    pub q2_sign: i8,
    pub tangent_root: bool,
    pub residuals: BranchResiduals,
}

impl IkBranch {
    pub fn label(&self) -> BranchLabel {
        BranchLabel {
            root_index: Some(self.root_index),
            q6_sign: Some(self.q6_sign),
            q4_sign: Some(self.q4_sign),
            q2_sign: Some(self.q2_sign),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct SolutionSet {
    pub branches: Vec<IkBranch>,
    pub rejected: Vec<Rejection>,
}

impl SolutionSet {
    pub fn len(&self) -> usize {
        self.branches.len()
    }

    pub fn is_empty(&self) -> bool {
        self.branches.is_empty()
    }

    /// Degeneracies met while solving, from rejections and tangent roots.
    pub fn degeneracies(&self) -> Vec<Degeneracy> {
        let mut out: Vec<Degeneracy> = self
            .rejected
            .iter()
            .filter_map(|r| match r.reason {
                RejectReason::Degenerate { kind } => Some(kind),
                _ => None,
            })
            .chain(
                self.branches
                    .iter()
                    .filter(|b| b.tangent_root)
                    .map(|_| Degeneracy::TangentRoot),
            )
            .collect();
        out.sort();
        out.dedup();
        out
    }

    /// Branch closest to `joints` and its largest per-joint distance.
    pub fn closest(&self, joints: &JointConfig) -> Option<(&IkBranch, f64)> {
        self.branches
            .iter()
            .map(|b| (b, b.joints.max_angle_distance(joints)))
            .min_by(|a, b| a.1.total_cmp(&b.1))
    }
}

/// One admissible `(q6, q8)` pair.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct WristSolution {
    pub root_index: u8,
    pub q6_sign: i8,
    pub q6: f64,
    pub q8: f64,
    pub t6: f64,
    pub r6: f64,
    pub tangent_root: bool,
    pub arm_eq_residual: f64,
    pub pose_eq_residual: f64,
    pub unsquared_residual: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct WristSolutions {
    pub solutions: ArrayVec<WristSolution, 8>,
    pub rejected: Vec<Rejection>,
}

/// Solves the `t6` quartic and recovers every admissible `(q6, q8)` pair.
///
/// `sin q8` and `cos q8` come from the pose equation and the arm equation
/// directly (not from the `tan psi` form), followed by two Gauss-Newton
/// steps on both equations.
pub fn solve_q6_q8(setup: &QuarticSetup, tol: &ToleranceSet) -> WristSolutions {
    let mut out = WristSolutions::default();
    let roots = match complex_roots(&setup.coeffs) {
        Ok(all) => {
            let near_real: ArrayVec<f64, 4> = all
                .iter()
                .filter(|z| z.im.abs() <= NEAR_REAL_TOL * z.re.abs().max(1.0))
                .map(|z| z.re)
                .collect();
            RealRoots::from_candidates(&near_real)
        }
        Err(_) => {
            out.rejected.push(Rejection {
                label: BranchLabel::default(),
                reason: RejectReason::ComplexRoots { count: 4 },
            });
            return out;
        }
    };
    // t6 = 0 is a root exactly when g0 vanishes; root clusters near 0 can
    // hide it from the per-root test.
    if setup.coeffs.g0.abs() <= G0_DEGENERATE_TOL * setup.coeffs.max_abs() {
        out.rejected.push(Rejection {
            label: BranchLabel::default(),
            reason: RejectReason::Degenerate {
                kind: Degeneracy::WristOffsetAligned,
            },
        });
    }
    let real_count = roots.count_with_multiplicity();
    let degree = setup.coeffs.effective_degree().unwrap_or(0);
    if real_count < degree {
        out.rejected.push(Rejection {
            label: BranchLabel::default(),
            reason: RejectReason::ComplexRoots {
                count: degree - real_count,
            },
        });
    }

    let scale = setup.residual_scale();
    let d_ew = setup.d_ew;
    let a_wr = setup.a_wr;
    for (index, t6_root) in roots.roots().iter().enumerate() {
        let root_label = BranchLabel {
            root_index: Some(index as u8),
            ..Default::default()
        };
        let cos6 = (t6_root - a_wr) / d_ew;
        if cos6.abs() > 1.0 + tol.sin_domain_tol {
            out.rejected.push(Rejection {
                label: root_label,
                reason: RejectReason::DomainViolation {
                    quantity: "cos_q6",
                    value: cos6,
                },
            });
            continue;
        }
        let cos6 = cos6.clamp(-1.0, 1.0);
        let sin6 = (1.0 - cos6 * cos6).sqrt();
        let signs: &[i8] = if sin6 < 1e-8 { &[1] } else { &[1, -1] };
        for &sign in signs {
            let label = BranchLabel {
                q6_sign: Some(sign),
                ..root_label
            };
            let q6_raw = (f64::from(sign) * sin6).atan2(cos6);
            let residual = setup.unsquared_in_q6(q6_raw).0 / scale;
            if residual.abs() > tol.branch_residual_tol {
                out.rejected.push(Rejection {
                    label,
                    reason: RejectReason::UnsquaredResidual { residual },
                });
                continue;
            }
            let q6 = polish_q6(setup, q6_raw);
            let (f, df) = setup.unsquared_in_q6(q6);
            let tangent_root = df.abs() < TANGENT_TOL * scale;
            let (s6, c6) = q6.sin_cos();
            let t6 = a_wr + d_ew * c6;
            let r6 = d_ew * s6;
            match solve_q8(setup, t6, r6, tol) {
                Ok((q8, arm_res, pose_res)) => out.solutions.push(WristSolution {
                    root_index: index as u8,
                    q6_sign: sign,
                    q6,
                    q8,
                    t6,
                    r6,
                    tangent_root,
                    arm_eq_residual: arm_res,
                    pose_eq_residual: pose_res,
                    unsquared_residual: f / scale,
                }),
                Err(reason) => out.rejected.push(Rejection { label, reason }),
            }
        }
    }
    out
}

/// Newton on the unsquared constraint in `q6`, fixed step count, steps that
/// increase the residual are refused.
fn polish_q6(setup: &QuarticSetup, mut q6: f64) -> f64 {
    for _ in 0..Q6_POLISH_STEPS {
        let (f, df) = setup.unsquared_in_q6(q6);
        if f == 0.0 || df == 0.0 {
            break;
        }
        let next = q6 - f / df;
        if next.is_finite() && setup.unsquared_in_q6(next).0.abs() <= f.abs() {
            q6 = next;
        } else {
            break;
        }
    }
    q6
}

/// Elbow `(E_x, E_y)` in the special frame for a given `q8`.
fn elbow_xy(setup: &QuarticSetup, t6: f64, r6: f64, q8: f64) -> (f64, f64) {
    let (sq, cq) = setup.q.sin_cos();
    (-r6 * sq - t6 * cq * q8.cos(), t6 * q8.sin())
}

/// Residuals of the pose equation (divided by `d_sc`) and of the arm
/// equation written as `E_x sin psi - E_y cos psi`, with their `q8`
/// derivatives.
fn q8_residuals(setup: &QuarticSetup, t6: f64, r6: f64, q8: f64) -> ([f64; 2], [f64; 2]) {
    let (sq, cq) = setup.q.sin_cos();
    let (sp, cp) = setup.psi.sin_cos();
    let (s8, c8) = q8.sin_cos();
    let p = (setup.k + setup.d_sc * r6 * cq - setup.a_wr * t6) / setup.d_sc;
    let pose = t6 * sq * c8 - p;
    let d_pose = -t6 * sq * s8;
    let (ex, ey) = (-r6 * sq - t6 * cq * c8, t6 * s8);
    let arm = ex * sp - ey * cp;
    let d_arm = t6 * cq * s8 * sp - t6 * c8 * cp;
    ([pose, arm], [d_pose, d_arm])
}

fn solve_q8(
    setup: &QuarticSetup,
    t6: f64,
    r6: f64,
    tol: &ToleranceSet,
) -> std::result::Result<(f64, f64, f64), RejectReason> {
    if t6.abs() < T6_DEGENERATE_TOL {
        return Err(RejectReason::Degenerate {
            kind: Degeneracy::WristOffsetAligned,
        });
    }
    let (sq, cq) = setup.q.sin_cos();
    let (sp, cp) = setup.psi.sin_cos();
    // Pose equation: d_sc t6 sin q cos q8 = k + d_sc r6 cos q - a_wr t6.
    let c8 = (setup.k + setup.d_sc * r6 * cq - setup.a_wr * t6) / (setup.d_sc * t6 * sq);
    if c8.abs() > 1.0 + tol.sin_domain_tol {
        return Err(RejectReason::DomainViolation {
            quantity: "cos_q8",
            value: c8,
        });
    }
    let c8 = c8.clamp(-1.0, 1.0);
    // Arm equation: E_x sin psi = E_y cos psi with E_y = t6 sin q8.
    let s8 = if cp.abs() >= 0.5 {
        sp * (-r6 * sq - t6 * cq * c8) / (t6 * cp)
    } else {
        // E_y must point along sin(psi - pi) = -sin psi.
        let sign = if -sp * t6 >= 0.0 { 1.0 } else { -1.0 };
        sign * (1.0 - c8 * c8).sqrt()
    };
    let mut q8 = s8.atan2(c8);
    for _ in 0..Q8_POLISH_STEPS {
        let (r, j) = q8_residuals(setup, t6, r6, q8);
        let jj = j[0] * j[0] + j[1] * j[1];
        if jj == 0.0 {
            break;
        }
        let step = -(j[0] * r[0] + j[1] * r[1]) / jj;
        let next = q8 + step;
        let (rn, _) = q8_residuals(setup, t6, r6, next);
        if rn[0].hypot(rn[1]) <= r[0].hypot(r[1]) {
            q8 = next;
        } else {
            break;
        }
    }
    let q8 = wrap_angle(q8);
    let (ex, ey) = elbow_xy(setup, t6, r6, q8);
    if ex.hypot(ey) < T6_DEGENERATE_TOL {
        return Err(RejectReason::Degenerate {
            kind: Degeneracy::ArmPlaneUndefined,
        });
    }
    let arm_residual = wrap_angle(setup.psi - (ey.atan2(ex) + PI));
    if arm_residual.abs() > ARM_DIRECTION_TOL {
        return Err(RejectReason::ArmDirection {
            residual: arm_residual,
        });
    }
    let pose_residual = q8_residuals(setup, t6, r6, q8).0[0];
    if pose_residual.abs() > tol.branch_residual_tol {
        return Err(RejectReason::PoseEquation {
            residual: pose_residual,
        });
    }
    Ok((q8, arm_residual, pose_residual))
}

/// `q7 = q8 + al`, wrapped.
pub fn solve_q7(q8: f64, al: f64) -> f64 {
    wrap_angle(q8 + al)
}

/// Shoulder center expressed in frame 6 for the special configuration.
pub fn shoulder_in_frame6(d_sc: f64, q: f64, q8: f64, params: &RobotParams) -> Vector3<f64> {
    let (sq, cq) = q.sin_cos();
    let (s8, c8) = q8.sin_cos();
    Vector3::new(params.a_wr() + d_sc * sq * c8, d_sc * cq, d_sc * sq * s8)
}

/// Both elbow angles `[+acos, -acos]` closing the shoulder-elbow-wrist triangle.
pub fn solve_q4(s6: &Vector3<f64>, params: &RobotParams, sin_domain_tol: f64) -> Result<[f64; 2]> {
    let (d_se, d_ew) = (params.d_se(), params.d_ew());
    let cos_q4 = (s6.norm_squared() - d_ew * d_ew - d_se * d_se) / (2.0 * d_se * d_ew);
    if cos_q4.abs() > 1.0 + sin_domain_tol {
        return Err(Error::Unreachable { cos_q4 });
    }
    let q4 = cos_q4.clamp(-1.0, 1.0).acos();
    Ok([q4, -q4])
}

/// `q5` from the first two rows of `5S`.
///
/// `(-S_x sin q6 - S_y cos q6, S_z) = d_se sin q4 (sin q5, cos q5)`, so the
/// `atan2` arguments are multiplied by `sign(sin q4)` to serve both elbow
/// branches.
pub fn solve_q5(s6: &Vector3<f64>, q6: f64, q4: f64, params: &RobotParams) -> Result<f64> {
    let (s6s, c6) = q6.sin_cos();
    let x = -s6.x * s6s - s6.y * c6;
    let z = s6.z;
    let s4 = q4.sin();
    if x.hypot(z) < ELBOW_DEGENERATE_TOL || params.d_se() * s4.abs() < ELBOW_DEGENERATE_TOL {
        return Err(Error::ElbowDegenerate);
    }
    let sign = s4.signum();
    Ok((sign * x).atan2(sign * z))
}

/// One `(q1, q2, q3)` solution of the spherical shoulder.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ShoulderSolution {
    pub q1: f64,
    pub q2: f64,
    pub q3: f64,
    /// `sign(cos q2)`.
    pub q2_sign: i8,
}

/// `0R3 = 0R7 * 7R6(q7) * 6R5(q6) * 5R4(q5) * 4R3(q4)`.
pub fn shoulder_rotation(
    params: &RobotParams,
    r07: &Matrix3<f64>,
    q4: f64,
    q5: f64,
    q6: f64,
    q7: f64,
) -> Matrix3<f64> {
    r07 * joint_rotation(params, 6, q7).transpose()
        * joint_rotation(params, 5, q6).transpose()
        * joint_rotation(params, 4, q5).transpose()
        * joint_rotation(params, 3, q4).transpose()
}

/// Both shoulder solutions from `0R3`, `q2 = pi/2 +- acos(r33)`.
pub fn solve_q123(r03: &Matrix3<f64>) -> Result<[ShoulderSolution; 2]> {
    let r33 = r03[(2, 2)];
    if r33.abs() >= 1.0 - SHOULDER_DEGENERATE_TOL {
        return Err(Error::WristLikeDegenerate { r33_abs: r33.abs() });
    }
    let a = r33.clamp(-1.0, 1.0).acos();
    let make = |q2: f64| {
        let sgn2: f64 = if q2.cos() >= 0.0 { 1.0 } else { -1.0 };
        ShoulderSolution {
            q1: (-r03[(1, 2)] * sgn2).atan2(-r03[(0, 2)] * sgn2),
            q2: wrap_angle(q2),
            q3: (-r03[(2, 0)] * sgn2).atan2(-r03[(2, 1)] * sgn2),
            q2_sign: sgn2 as i8,
        }
    };
    Ok([make(FRAC_PI_2 - a), make(FRAC_PI_2 + a)])
}

/// Solves a pose already in the special configuration described by `reduced`
/// (its alignment rotation is ignored).
pub fn solve_special(
    reduced: &ReducedPose,
    psi: f64,
    params: &RobotParams,
    tol: &ToleranceSet,
) -> Result<SolutionSet> {
    let target = reduced.special_pose(params.d_bs());
    solve_reduced(params, reduced, psi, &target, tol)
}

/// Full solve of an arbitrary flange pose.
pub fn solve(request: &IkRequest) -> Result<SolutionSet> {
    let pose = Transform::new(request.pose.rotation, request.pose.translation)?;
    if !request.psi.is_finite() {
        return Err(Error::InvalidParams("psi is not finite".into()));
    }
    request.tolerances.validate()?;
    let reduced = reduce_pose(&request.params, &pose)?;
    solve_reduced(&request.params, &reduced, request.psi, &pose, &request.tolerances)
}

/// `q4..q7` come from the special configuration; `q1..q3` use the rotation
/// of `target` itself, and every branch is checked against `target`.
fn solve_reduced(
    params: &RobotParams,
    reduced: &ReducedPose,
    psi: f64,
    target: &Transform,
    tol: &ToleranceSet,
) -> Result<SolutionSet> {
    let psi = wrap_angle(psi);
    let setup = build_quartic(reduced.d_sc, reduced.q, psi, params)?;
    let wrist = solve_q6_q8(&setup, tol);
    let mut set = SolutionSet {
        branches: Vec::with_capacity(16),
        rejected: wrist.rejected,
    };

    for w in &wrist.solutions {
        let wrist_label = BranchLabel {
            root_index: Some(w.root_index),
            q6_sign: Some(w.q6_sign),
            ..Default::default()
        };
        let q7 = solve_q7(w.q8, reduced.al);
        let s6 = shoulder_in_frame6(reduced.d_sc, reduced.q, w.q8, params);
        let q4s = match solve_q4(&s6, params, tol.sin_domain_tol) {
            Ok(q4s) => q4s,
            Err(e) => {
                let value = match e {
                    Error::Unreachable { cos_q4 } => cos_q4,
                    _ => f64::NAN,
                };
                set.rejected.push(Rejection {
                    label: wrist_label,
                    reason: RejectReason::DomainViolation {
                        quantity: "cos_q4",
                        value,
                    },
                });
                continue;
            }
        };
        for (q4, q4_sign) in q4s.into_iter().zip([1i8, -1]) {
            let elbow_label = BranchLabel {
                q4_sign: Some(q4_sign),
                ..wrist_label
            };
            let q5 = match solve_q5(&s6, w.q6, q4, params) {
                Ok(q5) => q5,
                Err(_) => {
                    set.rejected.push(Rejection {
                        label: elbow_label,
                        reason: RejectReason::Degenerate {
                            kind: Degeneracy::ElbowStraight,
                        },
                    });
                    continue;
                }
            };
            let r03 = shoulder_rotation(params, &target.rotation, q4, q5, w.q6, q7);
            let shoulders = match solve_q123(&r03) {
                Ok(s) => s,
                Err(_) => {
                    set.rejected.push(Rejection {
                        label: elbow_label,
                        reason: RejectReason::Degenerate {
                            kind: Degeneracy::ShoulderAligned,
                        },
                    });
                    continue;
                }
            };
            for sh in shoulders {
                let label = BranchLabel {
                    q2_sign: Some(sh.q2_sign),
                    ..elbow_label
                };
                let joints = JointConfig([sh.q1, sh.q2, sh.q3, q4, q5, wrap_angle(w.q6), q7]);
                let pose_error = forward_kinematics(params, &joints).pose_distance(target);
                if !(pose_error <= tol.pose_tol) {
                    set.rejected.push(Rejection {
                        label,
                        reason: RejectReason::FkMismatch { error: pose_error },
                    });
                    continue;
                }
                if let Some(of) = set
                    .branches
                    .iter()
                    .position(|b| b.joints.max_angle_distance(&joints) < tol.angle_merge_tol)
                {
                    set.rejected.push(Rejection {
                        label,
                        reason: RejectReason::Duplicate { of },
                    });
                    continue;
                }
                set.branches.push(IkBranch {
                    joints,
                    root_index: w.root_index,
                    t6: w.t6,
                    r6: w.r6,
                    q8: w.q8,
                    q6_sign: w.q6_sign,
                    q4_sign,
                    q2_sign: sh.q2_sign,
                    tangent_root: w.tangent_root,
                    residuals: BranchResiduals {
                        pose_error,
                        arm_eq_residual: w.arm_eq_residual,
                        pose_eq_residual: w.pose_eq_residual,
                        unsquared_residual: w.unsquared_residual,
                    },
                });
            }
        }
    }
    set.branches
        .sort_by_key(|b| (b.root_index, b.q6_sign, -b.q4_sign, -b.q2_sign));
    Ok(set)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::arm_angle::{arm_angle, special_pose};
    use crate::kinematics::{forward_chain, shoulder_rotation_closed_form};
    use approx::assert_relative_eq;

    fn params() -> RobotParams {
        RobotParams::moz1_placeholder()
    }

    #[test]
    fn psi_zero_drops_sine_terms() {
        let p = params();
        let (d_sc, q) = (0.45, -0.8);
        let s = build_quartic(d_sc, q, 0.0, &p).unwrap();
        let (aw, de) = (p.a_wr(), p.d_ew());
        let cq2 = q.cos().powi(2);
        assert_relative_eq!(s.tm1, s.k * s.k - (aw * aw - de * de) * d_sc * d_sc * cq2, epsilon = 1e-15);
        assert_relative_eq!(s.tm2, -2.0 * aw * (s.k - d_sc * d_sc * cq2), epsilon = 1e-15);
    }

    #[test]
    fn zero_offset_drops_odd_y_terms() {
        let p = RobotParams::with_lengths(0.3, 0.35, 0.3, 0.0).unwrap();
        let s = build_quartic(0.5, -1.1, 0.7, &p).unwrap();
        assert_eq!(s.tm2, 0.0);
        assert_eq!(s.coeffs.g3, 0.0);
        assert_eq!(s.coeffs.g1, 0.0);
    }

    #[test]
    fn quartic_rejects_parallel_axis() {
        assert!(matches!(build_quartic(0.4, 0.0, 0.3, &params()), Err(Error::AxisParallel { .. })));
        assert!(matches!(build_quartic(0.4, -PI, 0.3, &params()), Err(Error::AxisParallel { .. })));
    }

    #[test]
    fn q7_wraps() {
        assert_eq!(solve_q7(0.0, 0.0), 0.0);
        assert_relative_eq!(solve_q7(PI, PI), 0.0, epsilon = 1e-15);
        assert_relative_eq!(solve_q7(-2.0, -2.0), 2.0 * PI - 4.0, epsilon = 1e-15);
    }

    #[test]
    fn shoulder_in_frame6_axis_case() {
        let p = params();
        let s = shoulder_in_frame6(0.5, -FRAC_PI_2, 0.0, &p);
        assert_relative_eq!(s.x, p.a_wr() - 0.5, epsilon = 1e-15);
        assert_relative_eq!(s.y, 0.0, epsilon = 1e-15);
        assert_relative_eq!(s.z, 0.0, epsilon = 1e-15);
    }

    #[test]
    fn q4_right_angle_and_straight() {
        let p = params();
        let (d_se, d_ew) = (p.d_se(), p.d_ew());
        let s6 = Vector3::new((d_se * d_se + d_ew * d_ew).sqrt(), 0.0, 0.0);
        let [a, b] = solve_q4(&s6, &p, 1e-9).unwrap();
        assert_relative_eq!(a, FRAC_PI_2, epsilon = 1e-12);
        assert_relative_eq!(b, -FRAC_PI_2, epsilon = 1e-12);
        let s6 = Vector3::new(0.0, d_se + d_ew, 0.0);
        let [a, b] = solve_q4(&s6, &p, 1e-9).unwrap();
        assert!(a.abs() < 1e-7 && b.abs() < 1e-7);
        let s6 = Vector3::new(0.0, d_se + d_ew + 1e-3, 0.0);
        assert!(matches!(solve_q4(&s6, &p, 1e-9), Err(Error::Unreachable { .. })));
    }

    #[test]
    fn q5_degenerate_on_straight_elbow() {
        let p = params();
        let s6 = Vector3::new(0.0, 0.0, 0.0);
        assert_eq!(solve_q5(&s6, 0.3, 0.0, &p), Err(Error::ElbowDegenerate));
        let s6 = Vector3::new(-(p.d_ew() + p.d_se()), 0.0, 0.0);
        assert_eq!(solve_q5(&s6, 0.0, 0.0, &p), Err(Error::ElbowDegenerate));
    }

    #[test]
    fn q123_boundary_is_degenerate() {
        let r = shoulder_rotation_closed_form(0.3, FRAC_PI_2, 0.2);
        assert!(matches!(solve_q123(&r), Err(Error::WristLikeDegenerate { .. })));
    }

    #[test]
    fn q123_both_branches_recompose() {
        let r = shoulder_rotation_closed_form(0.7, -0.4, 2.1);
        let sols = solve_q123(&r).unwrap();
        for s in sols {
            let back = shoulder_rotation_closed_form(s.q1, s.q2, s.q3);
            assert!((back - r).amax() < 1e-12);
        }
        assert!(sols.iter().any(|s| (s.q1 - 0.7).abs() < 1e-12
            && (s.q2 + 0.4).abs() < 1e-12
            && (s.q3 - 2.1).abs() < 1e-12));
        assert_ne!(sols[0].q2_sign, sols[1].q2_sign);
    }

    #[test]
    fn recovers_seed_wrist_pair() {
        let p = params();
        let seed = JointConfig([0.3, 0.5, -1.0, 1.2, 0.4, -0.9, 1.7]);
        let pose = forward_kinematics(&p, &seed);
        let psi = arm_angle(&p, &seed).unwrap().radians();
        let r = reduce_pose(&p, &pose).unwrap();
        let setup = build_quartic(r.d_sc, r.q, psi, &p).unwrap();
        let wrist = solve_q6_q8(&setup, &ToleranceSet::default());
        let q8 = wrap_angle(seed[6] - r.al);
        assert!(wrist
            .solutions
            .iter()
            .any(|w| (w.q6 - seed[5]).abs() < 1e-8 && crate::kinematics::angle_distance(w.q8, q8) < 1e-8));
        for w in &wrist.solutions {
            let (s, c) = w.q8.sin_cos();
            assert_relative_eq!(s * s + c * c, 1.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn special_solve_round_trip() {
        let p = params();
        let seed = JointConfig([0.0, 0.0, 0.0, 1.0, 0.5, 0.8, -0.4]);
        // Move the seed pose into its special configuration and solve there.
        let pose = forward_kinematics(&p, &seed);
        let psi = arm_angle(&p, &seed).unwrap().radians();
        let r = reduce_pose(&p, &pose).unwrap();
        let set = solve_special(&r, psi, &p, &ToleranceSet::default()).unwrap();
        let special = r.special_pose(p.d_bs());
        assert!(!set.is_empty());
        for b in &set.branches {
            assert!(forward_kinematics(&p, &b.joints).pose_distance(&special) < 1e-8);
        }
        // q4..q7 are shared with the original configuration.
        assert!(set.branches.iter().any(|b| (3..7).all(|i| (b.joints[i] - seed[i]).abs() < 1e-8)));
    }

    #[test]
    fn out_of_reach_is_empty_with_reasons() {
        let p = params();
        let reach = p.d_se() + p.d_ew() + p.a_wr();
        let r = ReducedPose {
            d_sc: reach + 0.1,
            q: -1.0,
            al: 0.2,
            align_rotation: Matrix3::identity(),
        };
        let set = solve_special(&r, 0.4, &p, &ToleranceSet::default()).unwrap();
        assert!(set.is_empty());
        assert!(!set.rejected.is_empty());
    }

    #[test]
    fn general_solve_with_identity_rotation() {
        let p = params();
        let pose = Transform::translation(0.35, 0.2, 0.45);
        let set = solve(&IkRequest::new(p, pose, 0.5)).unwrap();
        assert!(set.len() <= 16);
        assert!(!set.is_empty());
        for b in &set.branches {
            assert!(forward_kinematics(&p, &b.joints).pose_distance(&pose) < 1e-9);
            let psi = arm_angle(&p, &b.joints).unwrap().radians();
            assert!(crate::kinematics::angle_distance(psi, 0.5) < 1e-8);
        }
    }

    #[test]
    fn parallel_flange_axis_is_a_request_error() {
        let p = params();
        let pose = special_pose(p.d_bs(), 0.5, 0.0, 0.3);
        assert!(matches!(
            solve(&IkRequest::new(p, pose, 0.1)),
            Err(Error::AxisParallel { .. })
        ));
    }

    #[test]
    fn invalid_rotation_is_rejected() {
        let p = params();
        let mut pose = Transform::translation(0.3, 0.1, 0.5);
        pose.rotation[(0, 1)] = 0.01;
        assert_eq!(solve(&IkRequest::new(p, pose, 0.1)).unwrap_err().tag(), "invalid_rotation");
    }

    #[test]
    fn shoulder_rotation_matches_chain() {
        let p = params();
        let q = JointConfig([0.4, -0.3, 1.2, -0.7, 2.0, 0.1, -1.4]);
        let frames = forward_chain(&p, &q);
        let r03 = shoulder_rotation(&p, &frames[7].rotation, q[3], q[4], q[5], q[6]);
        assert!((r03 - frames[3].rotation).amax() < 1e-14);
    }
}
