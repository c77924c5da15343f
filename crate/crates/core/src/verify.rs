//! Independent oracles: a second forward-kinematics implementation on plain
//! arrays, a companion-matrix quartic root finder, a damped-least-squares
//! numerical IK and the harnesses that compare them with the closed-form
//! solver.

use nalgebra::{DMatrix, DVector, Matrix3, Schur, Vector3};
use num_complex::Complex64;
use rand::Rng;
use serde::Serialize;

use crate::arm_angle::arm_angle_from_points;
use crate::error::{Error, Result};
use crate::ik::{solve, IkRequest, SolutionSet};
use crate::kinematics::{
    forward_kinematics, wrap_angle, JointConfig, RobotParams, Transform, NUM_JOINTS,
};
use crate::quartic::{solve_quartic, QuarticCoeffs, RealRoots};
use crate::singularity::{angular_margin, Condition};

type M4 = [[f64; 4]; 4];

fn mat_mul(a: &M4, b: &M4) -> M4 {
    let mut out = [[0.0; 4]; 4];
    for (i, row) in out.iter_mut().enumerate() {
        for (j, cell) in row.iter_mut().enumerate() {
            *cell = (0..4).map(|k| a[i][k] * b[k][j]).sum();
        }
    }
    out
}

fn elementary_rot_x(t: f64) -> M4 {
    let (s, c) = t.sin_cos();
    [[1.0, 0.0, 0.0, 0.0], [0.0, c, -s, 0.0], [0.0, s, c, 0.0], [0.0, 0.0, 0.0, 1.0]]
}

fn elementary_rot_z(t: f64) -> M4 {
    let (s, c) = t.sin_cos();
    [[c, -s, 0.0, 0.0], [s, c, 0.0, 0.0], [0.0, 0.0, 1.0, 0.0], [0.0, 0.0, 0.0, 1.0]]
}

fn elementary_shift(axis: usize, d: f64) -> M4 {
    let mut m = [[1.0, 0.0, 0.0, 0.0], [0.0, 1.0, 0.0, 0.0], [0.0, 0.0, 1.0, 0.0], [0.0, 0.0, 0.0, 1.0]];
    m[axis][3] = d;
    m
}

/// Base-frame transforms of frames 0..=7 built from elementary rotations
/// and shifts.
fn oracle_chain(params: &RobotParams, joints: &JointConfig) -> [M4; NUM_JOINTS + 1] {
    let mut frames = [elementary_shift(0, 0.0); NUM_JOINTS + 1];
    for (i, row) in params.mdh().iter().enumerate() {
        let mut t = mat_mul(&frames[i], &elementary_rot_x(row.alpha));
        t = mat_mul(&t, &elementary_shift(0, row.a));
        t = mat_mul(&t, &elementary_rot_z(row.theta_offset + joints.0[i]));
        frames[i + 1] = mat_mul(&t, &elementary_shift(2, row.d));
    }
    frames
}

fn to_transform(m: &M4) -> Transform {
    let r = Matrix3::from_fn(|i, j| m[i][j]);
    Transform::from_parts_unchecked(r, Vector3::new(m[0][3], m[1][3], m[2][3]))
}

fn origin(m: &M4) -> Vector3<f64> {
    Vector3::new(m[0][3], m[1][3], m[2][3])
}

/// Flange pose computed without the kinematics module.
pub fn fk_oracle(params: &RobotParams, joints: &JointConfig) -> Transform {
    to_transform(&oracle_chain(params, joints)[NUM_JOINTS])
}

/// Arm angle evaluated on oracle frames.
fn oracle_arm_angle(params: &RobotParams, joints: &JointConfig) -> Result<f64> {
    let f = oracle_chain(params, joints);
    let z7 = Vector3::new(f[7][0][2], f[7][1][2], f[7][2][2]);
    arm_angle_from_points(&origin(&f[2]), &origin(&f[4]), &origin(&f[7]), &z7).map(f64::from)
}

/// Largest absolute difference between corresponding entries of the two
/// homogeneous matrices.
pub fn max_component_deviation(a: &Transform, b: &Transform) -> f64 {
    (a.rotation - b.rotation).amax().max((a.translation - b.translation).amax())
}

const ORACLE_DEGREE_TOL: f64 = 1e-12;
const ORACLE_IMAG_TOL: f64 = 1e-7;
const ORACLE_REFINE_STEPS: usize = 2;

/// Real roots from the eigenvalues of the companion matrix, refined by
/// Newton steps on the original polynomial.
pub fn quartic_oracle(c: &QuarticCoeffs) -> Result<RealRoots> {
    let desc = c.descending();
    let scale = desc.iter().fold(0.0_f64, |m, g| m.max(g.abs()));
    if scale == 0.0 || !scale.is_finite() {
        return Err(Error::AllCoefficientsZero);
    }
    let lead_idx = desc
        .iter()
        .position(|g| g.abs() > ORACLE_DEGREE_TOL * scale)
        .expect("nonzero scale");
    let poly = &desc[lead_idx..];
    let degree = poly.len() - 1;
    if degree == 0 {
        return Err(Error::DegreeZero);
    }
    let mut companion = DMatrix::<f64>::zeros(degree, degree);
    for j in 0..degree {
        companion[(0, j)] = -poly[j + 1] / poly[0];
    }
    for i in 1..degree {
        companion[(i, i - 1)] = 1.0;
    }
    let eig = companion_eigenvalues(companion)?;
    let mut real = Vec::with_capacity(degree);
    for z in eig {
        if z.im.abs() < ORACLE_IMAG_TOL * z.re.abs().max(1.0) {
            real.push(newton_refine(poly, z.re));
        }
    }
    Ok(RealRoots::from_candidates(&real))
}

const SCHUR_MAX_ITERS: usize = 10_000;

/// The plain Francis iteration can cycle on companion matrices with
/// symmetric root patterns (e.g. `t^4 + 1`); on failure the matrix is
/// replaced by an orthogonally similar one.
fn companion_eigenvalues(companion: DMatrix<f64>) -> Result<Vec<Complex64>> {
    let n = companion.nrows();
    let first = Schur::try_new(companion.clone(), f64::EPSILON, SCHUR_MAX_ITERS);
    let schur = match first {
        Some(s) => s,
        None => {
            let mut q = DMatrix::<f64>::identity(n, n);
            for i in 0..n.saturating_sub(1) {
                let (s, c) = (0.37 + 0.1 * i as f64).sin_cos();
                let mut g = DMatrix::<f64>::identity(n, n);
                g[(i, i)] = c;
                g[(i + 1, i + 1)] = c;
                g[(i, i + 1)] = -s;
                g[(i + 1, i)] = s;
                q = g * q;
            }
            Schur::try_new(&q * companion * q.transpose(), f64::EPSILON, SCHUR_MAX_ITERS).ok_or(
                Error::NoConvergence {
                    iterations: SCHUR_MAX_ITERS,
                    error: f64::NAN,
                },
            )?
        }
    };
    Ok(schur
        .complex_eigenvalues()
        .iter()
        .map(|z| Complex64::new(z.re, z.im))
        .collect())
}

fn newton_refine(poly: &[f64], mut x: f64) -> f64 {
    for _ in 0..ORACLE_REFINE_STEPS {
        let (mut p, mut dp) = (0.0, 0.0);
        for g in poly {
            dp = dp * x + p;
            p = p * x + g;
        }
        if dp == 0.0 {
            break;
        }
        let step = p / dp;
        if !step.is_finite() || step.abs() > 1e-6 * x.abs().max(1.0) {
            break;
        }
        x -= step;
    }
    x
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct NumericIkOptions {
    pub max_iters: usize,
    pub damping: f64,
    /// Convergence threshold on the largest pose-error component.
    pub tol: f64,
    /// Optional arm angle target, which pins the self-motion.
    pub psi: Option<f64>,
}

impl Default for NumericIkOptions {
    fn default() -> Self {
        Self {
            max_iters: 200,
            damping: 1e-6,
            tol: 1e-12,
            psi: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct NumericIkResult {
    pub joints: JointConfig,
    pub iterations: usize,
    pub error: f64,
}

/// Damped-least-squares IK on the 6-D pose error.
pub fn numeric_ik(
    params: &RobotParams,
    pose: &Transform,
    seed: &JointConfig,
    max_iters: usize,
    damping: f64,
) -> Result<NumericIkResult> {
    numeric_ik_with(
        params,
        pose,
        seed,
        &NumericIkOptions {
            max_iters,
            damping,
            ..Default::default()
        },
    )
}

fn task_error(
    params: &RobotParams,
    pose: &Transform,
    joints: &JointConfig,
    psi: Option<f64>,
) -> Result<DVector<f64>> {
    let now = fk_oracle(params, joints);
    let dp = pose.translation - now.translation;
    let dr = pose.rotation * now.rotation.transpose();
    // Rotation vector of the residual rotation.
    let axis = Vector3::new(dr[(2, 1)] - dr[(1, 2)], dr[(0, 2)] - dr[(2, 0)], dr[(1, 0)] - dr[(0, 1)]);
    let sin2 = axis.norm();
    let angle = sin2.atan2(dr.trace() - 1.0);
    let w = if sin2 < 1e-300 { Vector3::zeros() } else { axis * (angle / sin2) };
    let mut e = DVector::zeros(if psi.is_some() { 7 } else { 6 });
    e.fixed_rows_mut::<3>(0).copy_from(&dp);
    e.fixed_rows_mut::<3>(3).copy_from(&w);
    if let Some(target) = psi {
        e[6] = wrap_angle(target - oracle_arm_angle(params, joints)?);
    }
    Ok(e)
}

fn task_jacobian(
    params: &RobotParams,
    pose: &Transform,
    joints: &JointConfig,
    psi: Option<f64>,
) -> Result<DMatrix<f64>> {
    const H: f64 = 1e-7;
    let rows = if psi.is_some() { 7 } else { 6 };
    let mut jac = DMatrix::zeros(rows, NUM_JOINTS);
    for i in 0..NUM_JOINTS {
        let mut plus = *joints;
        let mut minus = *joints;
        plus.0[i] += H;
        minus.0[i] -= H;
        let ep = task_error(params, pose, &plus, psi)?;
        let em = task_error(params, pose, &minus, psi)?;
        let mut col = (&em - &ep) / (2.0 * H);
        if psi.is_some() {
            col[6] = wrap_angle(em[6] - ep[6]) / (2.0 * H);
        }
        jac.set_column(i, &col);
    }
    Ok(jac)
}

/// [`numeric_ik`] with explicit options.
pub fn numeric_ik_with(
    params: &RobotParams,
    pose: &Transform,
    seed: &JointConfig,
    opts: &NumericIkOptions,
) -> Result<NumericIkResult> {
    if !seed.is_finite() {
        return Err(Error::InvalidParams("non-finite seed".into()));
    }
    const MAX_STEP: f64 = 0.5;
    let mut q = *seed;
    let mut err = task_error(params, pose, &q, opts.psi)?;
    for it in 0..=opts.max_iters {
        let size = err.amax();
        if size < opts.tol {
            return Ok(NumericIkResult {
                joints: q,
                iterations: it,
                error: size,
            });
        }
        if it == opts.max_iters {
            break;
        }
        let jac = task_jacobian(params, pose, &q, opts.psi)?;
        let jjt = &jac * jac.transpose()
            + DMatrix::identity(err.len(), err.len()) * (opts.damping * opts.damping);
        let Some(y) = jjt.lu().solve(&err) else {
            break;
        };
        let mut dq = jac.transpose() * y;
        let big = dq.amax();
        if big > MAX_STEP {
            dq *= MAX_STEP / big;
        }
        for i in 0..NUM_JOINTS {
            q.0[i] += dq[i];
        }
        err = task_error(params, pose, &q, opts.psi)?;
    }
    Err(Error::NoConvergence {
        iterations: opts.max_iters,
        error: err.amax(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CheckRow {
    pub sample: usize,
    pub label: String,
    pub error: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CheckResult {
    pub name: String,
    pub passed: bool,
    pub samples: usize,
    pub failures: usize,
    pub max_error: f64,
    pub tolerance: f64,
    /// Failing rows (capped) followed by the worst row.
    pub detail: Vec<CheckRow>,
}

const DETAIL_CAP: usize = 32;

struct Tally {
    name: String,
    tolerance: f64,
    samples: usize,
    failures: usize,
    max_error: f64,
    worst: Option<CheckRow>,
    detail: Vec<CheckRow>,
}

impl Tally {
    fn new(name: &str, tolerance: f64) -> Self {
        Self {
            name: name.into(),
            tolerance,
            samples: 0,
            failures: 0,
            max_error: 0.0,
            worst: None,
            detail: Vec::new(),
        }
    }

    fn record(&mut self, sample: usize, label: impl Into<String>, error: f64) {
        let row = CheckRow {
            sample,
            label: label.into(),
            error,
        };
        let bad = !(error <= self.tolerance);
        if bad {
            self.failures += 1;
            if self.detail.len() < DETAIL_CAP {
                self.detail.push(row.clone());
            }
        }
        if !(error <= self.max_error) {
            self.max_error = if error.is_nan() { f64::INFINITY } else { error };
            self.worst = Some(row);
        }
    }

    fn finish(mut self) -> CheckResult {
        if let Some(w) = self.worst.take() {
            if !self.detail.contains(&w) {
                self.detail.push(w);
            }
        }
        CheckResult {
            passed: self.failures == 0,
            name: self.name,
            samples: self.samples,
            failures: self.failures,
            max_error: self.max_error,
            tolerance: self.tolerance,
            detail: self.detail,
        }
    }
}

/// Uniform joint sample in `(-pi, pi]^7`.
pub fn sample_joints<R: Rng + ?Sized>(rng: &mut R) -> JointConfig {
    let mut q = [0.0; NUM_JOINTS];
    for v in &mut q {
        *v = rng.gen_range(-std::f64::consts::PI..std::f64::consts::PI);
    }
    JointConfig(q)
}

/// Distance to every singular set, the compound one scaled to radians by
/// `d_ew`, and to the flange-axis condition.
pub fn singular_margin(joints: &JointConfig, params: &RobotParams) -> f64 {
    angular_margin(joints, params)
        .min(Condition::TangentRoot.distance(joints, params) / params.d_ew())
        .min(Condition::FlangeAxisAlongSc.distance(joints, params))
}

/// Rejection sampler for configurations at least `margin` away from every
/// singular set and with a defined arm angle.
pub fn sample_nonsingular<R: Rng + ?Sized>(
    rng: &mut R,
    params: &RobotParams,
    margin: f64,
) -> JointConfig {
    loop {
        let q = sample_joints(rng);
        if singular_margin(&q, params) >= margin && crate::arm_angle::arm_angle(params, &q).is_ok() {
            return q;
        }
    }
}

/// `forward_kinematics` against [`fk_oracle`] on random configurations.
pub fn check_fk<R: Rng + ?Sized>(
    params: &RobotParams,
    samples: usize,
    tol: f64,
    rng: &mut R,
) -> CheckResult {
    let mut t = Tally::new("fk_oracle", tol);
    for i in 0..samples {
        let q = sample_joints(rng);
        let e = max_component_deviation(&forward_kinematics(params, &q), &fk_oracle(params, &q));
        t.samples += 1;
        t.record(i, "pose", e);
    }
    t.finish()
}

/// Largest absolute gap between two root sets; infinite
/// when the sets differ in size or multiplicity.
pub fn root_set_deviation(a: &RealRoots, b: &RealRoots) -> f64 {
    if a.roots().len() != b.roots().len() || a.multiplicities() != b.multiplicities() {
        return f64::INFINITY;
    }
    a.roots()
        .iter()
        .zip(b.roots())
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}

/// Uniform coefficients in `[-range, range]`, skipping sets whose
/// discriminant is within `disc_filter` of zero.
pub fn sample_quartic<R: Rng + ?Sized>(rng: &mut R, range: f64, disc_filter: f64) -> QuarticCoeffs {
    loop {
        let mut g = [0.0; 5];
        for v in &mut g {
            *v = rng.gen_range(-range..=range);
        }
        let c = QuarticCoeffs::new(g[0], g[1], g[2], g[3], g[4]);
        if c.discriminant().abs() > disc_filter {
            return c;
        }
    }
}

/// `solve_quartic` against [`quartic_oracle`].
pub fn check_quartic<R: Rng + ?Sized>(samples: usize, tol: f64, rng: &mut R) -> CheckResult {
    let mut t = Tally::new("quartic_oracle", tol);
    for i in 0..samples {
        let c = sample_quartic(rng, 10.0, 1e-10);
        let e = match (solve_quartic(&c), quartic_oracle(&c)) {
            (Ok(a), Ok(b)) => root_set_deviation(&a, &b),
            _ => f64::INFINITY,
        };
        t.samples += 1;
        t.record(i, format!("{:?}", c.descending()), e);
    }
    t.finish()
}

/// Outcome of one FK-generated IK request.
#[derive(Debug, Clone)]
pub struct RoundTrip {
    pub seed: JointConfig,
    pub psi: f64,
    pub solutions: Result<SolutionSet>,
    /// Per-joint distance from the seed to the closest branch.
    pub seed_distance: f64,
}

pub fn round_trip(params: &RobotParams, seed: &JointConfig) -> Result<RoundTrip> {
    let psi = crate::arm_angle::arm_angle(params, seed)?.radians();
    let pose = forward_kinematics(params, seed);
    let solutions = solve(&IkRequest::new(params.clone(), pose, psi));
    let seed_distance = solutions
        .as_ref()
        .ok()
        .and_then(|s| s.closest(seed))
        .map_or(f64::INFINITY, |(_, d)| d);
    Ok(RoundTrip {
        seed: *seed,
        psi,
        solutions,
        seed_distance,
    })
}

/// Seed recovery over random nonsingular configurations; `max_error` is the
/// worst per-joint distance from a seed to its closest branch.
pub fn check_round_trip<R: Rng + ?Sized>(
    params: &RobotParams,
    samples: usize,
    tol: f64,
    rng: &mut R,
) -> CheckResult {
    let mut t = Tally::new("round_trip", tol);
    for i in 0..samples {
        let q = sample_nonsingular(rng, params, 1e-2);
        let e = round_trip(params, &q).map_or(f64::INFINITY, |r| r.seed_distance);
        t.samples += 1;
        t.record(i, format!("{:?}", q.0), e);
    }
    t.finish()
}

/// Every branch of `set` must stay put under [`numeric_ik`] seeded on it.
pub fn check_fixed_point(
    params: &RobotParams,
    pose: &Transform,
    set: &SolutionSet,
    tol: f64,
) -> CheckResult {
    let mut t = Tally::new("numeric_ik_fixed_point", tol);
    for (i, b) in set.branches.iter().enumerate() {
        let opts = NumericIkOptions::default();
        let e = match numeric_ik_with(params, pose, &b.joints, &opts) {
            Ok(r) if r.iterations <= 3 => r.joints.max_angle_distance(&b.joints),
            _ => f64::INFINITY,
        };
        t.samples += 1;
        t.record(i, format!("{:?}", b.label()), e);
    }
    t.finish()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn params() -> RobotParams {
        RobotParams::moz1_placeholder()
    }

    #[test]
    fn oracle_matches_at_zero() {
        let p = params();
        let q = JointConfig::zeros();
        assert!(max_component_deviation(&fk_oracle(&p, &q), &forward_kinematics(&p, &q)) < 1e-15);
    }

    #[test]
    fn oracle_matches_on_boundaries() {
        let p = params();
        let pi = std::f64::consts::PI;
        for k in 0..128u32 {
            let q = JointConfig(std::array::from_fn(|i| if (k >> i) & 1 == 1 { pi } else { -pi }));
            assert!(max_component_deviation(&fk_oracle(&p, &q), &forward_kinematics(&p, &q)) < 1e-12);
        }
    }

    #[test]
    fn companion_oracle_known_roots() {
        let c = QuarticCoeffs::new(1.0, -10.0, 35.0, -50.0, 24.0);
        let r = quartic_oracle(&c).unwrap();
        for (x, want) in r.roots().iter().zip([1.0, 2.0, 3.0, 4.0]) {
            assert!((x - want).abs() < 1e-12);
        }
        assert!(quartic_oracle(&QuarticCoeffs::new(1.0, 0.0, 0.0, 0.0, 1.0)).unwrap().is_empty());
        assert_eq!(
            quartic_oracle(&QuarticCoeffs::new(0.0, 0.0, 0.0, 0.0, 2.0)),
            Err(Error::DegreeZero)
        );
        assert_eq!(
            quartic_oracle(&QuarticCoeffs::new(0.0, 0.0, 0.0, 0.0, 0.0)),
            Err(Error::AllCoefficientsZero)
        );
        let r = quartic_oracle(&QuarticCoeffs::new(0.0, 0.0, 1.0, -3.0, 2.0)).unwrap();
        assert_eq!(r.roots().len(), 2);
    }

    #[test]
    fn numeric_ik_fixed_point_and_basin() {
        let p = params();
        let q = JointConfig([0.4, -1.2, 0.8, 1.5, -0.6, 2.0, -1.1]);
        let pose = forward_kinematics(&p, &q);
        let r = numeric_ik(&p, &pose, &q, 200, 1e-6).unwrap();
        assert!(r.iterations <= 1);
        assert!(r.joints.max_angle_distance(&q) < 1e-10);

        let psi = crate::arm_angle::arm_angle(&p, &q).unwrap().radians();
        let mut seed = q;
        for (i, v) in seed.0.iter_mut().enumerate() {
            *v += 1e-3 * if i % 2 == 0 { 1.0 } else { -1.0 };
        }
        let opts = NumericIkOptions {
            psi: Some(psi),
            ..Default::default()
        };
        let r = numeric_ik_with(&p, &pose, &seed, &opts).unwrap();
        assert!(r.joints.max_angle_distance(&q) < 1e-9);
    }

    #[test]
    fn numeric_ik_reports_non_convergence() {
        let p = params();
        let far = Transform::translation(5.0, 0.0, 0.0);
        let r = numeric_ik(&p, &far, &JointConfig::zeros(), 20, 1e-6);
        assert!(matches!(r, Err(Error::NoConvergence { iterations: 20, .. })));
    }

    #[test]
    fn harnesses_pass_on_small_runs() {
        let p = params();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        assert!(check_fk(&p, 200, 1e-12, &mut rng).passed);
        let q = check_quartic(500, 1e-10, &mut rng);
        assert!(q.passed, "{q:?}");
        let rt = check_round_trip(&p, 50, 1e-6, &mut rng);
        assert!(rt.failures <= 1, "{rt:?}");
    }

    #[test]
    fn branches_are_fixed_points() {
        let p = params();
        let q = JointConfig([0.4, -1.2, 0.8, 1.5, -0.6, 2.0, -1.1]);
        let rt = round_trip(&p, &q).unwrap();
        let set = rt.solutions.unwrap();
        let res = check_fixed_point(&p, &forward_kinematics(&p, &q), &set, 1e-10);
        assert!(res.passed, "{res:?}");
    }
}
