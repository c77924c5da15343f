use thiserror::Error;

/// Errors raised by the solver and its supporting geometry.
///
/// Every variant maps to a stable, machine-readable tag via [`Error::tag`];
/// the CLI forwards that tag verbatim in its JSON error output.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid robot parameters: {0}")]
    InvalidParams(String),

    #[error("invalid rotation: {0}")]
    InvalidRotation(String),

    #[error("shoulder and flange center coincide (|SC| = {d_sc:e} m)")]
    ZeroSc { d_sc: f64 },

    #[error("flange axis z7 is parallel to SC (|z7 x SC/|SC|| = {cross:e})")]
    AxisParallel { cross: f64 },

    #[error("reference plane undefined: SC parallel to z7 (|cross| = {cross:e})")]
    DegenerateReference { cross: f64 },

    #[error("arm plane undefined: elbow lies on line SC (|cross| = {cross:e})")]
    DegenerateArm { cross: f64 },

    #[error("polynomial is identically zero")]
    AllCoefficientsZero,

    #[error("polynomial has no variable part after degree reduction")]
    DegreeZero,

    #[error("elbow cannot close the triangle (cos q4 = {cos_q4})")]
    Unreachable { cos_q4: f64 },

    #[error("q5 undefined: elbow fully stretched or folded")]
    ElbowDegenerate,

    #[error("q1 and q3 undefined: |r33| = {r33_abs} (q2 = +-pi/2)")]
    WristLikeDegenerate { r33_abs: f64 },

    #[error("numerical IK did not converge after {iterations} iterations (error {error:e})")]
    NoConvergence { iterations: usize, error: f64 },
}

impl Error {
    pub fn tag(&self) -> &'static str {
        match self {
            Error::InvalidParams(_) => "invalid_params",
            Error::InvalidRotation(_) => "invalid_rotation",
            Error::ZeroSc { .. } => "zero_sc",
            Error::AxisParallel { .. } => "axis_parallel",
            Error::DegenerateReference { .. } => "degenerate_reference",
            Error::DegenerateArm { .. } => "degenerate_arm",
            Error::AllCoefficientsZero => "all_coefficients_zero",
            Error::DegreeZero => "degree_zero",
            Error::Unreachable { .. } => "unreachable",
            Error::ElbowDegenerate => "elbow_degenerate",
            Error::WristLikeDegenerate { .. } => "wrist_like_degenerate",
            Error::NoConvergence { .. } => "no_convergence",
        }
    }

    /// True for errors caused by a singular or degenerate geometric input
    /// rather than a malformed one.
    pub fn is_degenerate(&self) -> bool {
        !matches!(self, Error::InvalidParams(_) | Error::InvalidRotation(_))
    }
}

pub type Result<T> = std::result::Result<T, Error>;
