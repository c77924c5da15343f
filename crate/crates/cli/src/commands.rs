use std::time::Instant;

use nalgebra::{UnitQuaternion, Vector3};
use nonsrs_ik::arm_angle::arm_angle as eval_arm_angle;
use nonsrs_ik::ik::{solve, IkRequest, SolutionSet};
use nonsrs_ik::kinematics::{forward_kinematics, frame_points, RobotParams, Transform};
use nonsrs_ik::singularity::{classify_with_jacobian, Condition, HitTolerances};
use nonsrs_ik::verify::{
    check_fixed_point, check_fk, check_quartic, check_round_trip, round_trip, sample_nonsingular, CheckResult,
};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde_json::{json, Value};

use crate::input::{one_or_many, pose_from, IkSpec, JointsSpec, SweepSpec};
use crate::{CliError, Outcome};

fn to_value<T: serde::Serialize>(x: &T) -> Value {
    serde_json::to_value(x).expect("plain data serializes")
}

fn vec3(v: &Vector3<f64>) -> Value {
    json!([v.x, v.y, v.z])
}

fn pose_value(t: &Transform) -> Value {
    let r = &t.rotation;
    let q = UnitQuaternion::from_matrix(r);
    json!({
        "position": vec3(&t.translation),
        "rotation": [[r[(0, 0)], r[(0, 1)], r[(0, 2)]], [r[(1, 0)], r[(1, 1)], r[(1, 2)]], [r[(2, 0)], r[(2, 1)], r[(2, 2)]]],
        "quaternion": [q.w, q.i, q.j, q.k],
    })
}

fn solution_value(psi: f64, set: &SolutionSet) -> Value {
    json!({
        "psi": psi,
        "branch_count": set.len(),
        "branches": to_value(&set.branches),
        "rejected": to_value(&set.rejected),
        "degeneracies": to_value(&set.degeneracies()),
    })
}

/// Runs `f` over every item (in parallel for batches) and keeps input
/// order; per-item errors become error objects in a batch.
fn map_items<T, F>(items: Vec<T>, batch: bool, f: F) -> Result<Outcome, CliError>
where
    T: Send + Sync,
    F: Fn(&T) -> Result<Value, CliError> + Send + Sync,
{
    if !batch {
        return f(&items[0]).map(Outcome::from);
    }
    let results: Vec<Result<Value, CliError>> = items.par_iter().map(&f).collect();
    let mut code = 0;
    let values = results
        .into_iter()
        .map(|r| match r {
            Ok(v) => v,
            Err(e) => {
                code = code.max(e.exit_code());
                e.to_json()
            }
        })
        .collect();
    Ok(Outcome {
        value: Value::Array(values),
        code,
    })
}

pub fn ik(params: &RobotParams, input: Value) -> Result<Outcome, CliError> {
    let (specs, batch) = one_or_many::<IkSpec>(input)?;
    map_items(specs, batch, |spec| {
        let pose = spec.transform()?;
        let request = IkRequest {
            tolerances: spec.tolerances,
            ..IkRequest::new(params.clone(), pose, spec.psi)
        };
        let set = solve(&request)?;
        Ok(solution_value(spec.psi, &set))
    })
}

pub fn fk(params: &RobotParams, input: Value) -> Result<Outcome, CliError> {
    let (specs, batch) = one_or_many::<JointsSpec>(input)?;
    map_items(specs, batch, |spec| {
        let q = spec.config()?;
        let pose = forward_kinematics(params, &q);
        let pts = frame_points(params, &q);
        let (psi, psi_error) = match eval_arm_angle(params, &q) {
            Ok(a) => (json!(a.radians()), Value::Null),
            Err(e) => (Value::Null, json!(e.tag())),
        };
        Ok(json!({
            "joints": to_value(&q),
            "pose": pose_value(&pose),
            "points": {"s": vec3(&pts.s), "e": vec3(&pts.e), "w": vec3(&pts.w), "c": vec3(&pts.c)},
            "psi": psi,
            "psi_error": psi_error,
        }))
    })
}

pub fn arm_angle(params: &RobotParams, input: Value) -> Result<Outcome, CliError> {
    let (specs, batch) = one_or_many::<JointsSpec>(input)?;
    map_items(specs, batch, |spec| {
        let psi = eval_arm_angle(params, &spec.config()?)?;
        Ok(json!({"psi": psi.radians()}))
    })
}

pub fn classify(params: &RobotParams, input: Value, angle: f64, length: f64) -> Result<Outcome, CliError> {
    if !(angle > 0.0 && length > 0.0) {
        return Err(CliError::Parse("hit tolerances must be positive".into()));
    }
    let tol = HitTolerances { angle, length };
    let (specs, batch) = one_or_many::<JointsSpec>(input)?;
    map_items(specs, batch, |spec| {
        let q = spec.config()?;
        let report = classify_with_jacobian(&q, params, tol);
        let distances: serde_json::Map<String, Value> = Condition::KINEMATIC
            .into_iter()
            .chain(Condition::ALGORITHMIC)
            .map(|c| {
                let key = to_value(&c).as_str().unwrap_or_default().to_string();
                (key, json!(c.distance(&q, params)))
            })
            .collect();
        let mut v = to_value(&report);
        v["singular"] = json!(report.is_singular());
        v["distances"] = Value::Object(distances);
        Ok(v)
    })
}

pub fn sweep(params: &RobotParams, input: Value) -> Result<Outcome, CliError> {
    let spec: SweepSpec = serde_json::from_value(input).map_err(|e| CliError::Parse(format!("input: {e}")))?;
    let pose = pose_from(&spec.position, &spec.rotation)?;
    // Pose-level degeneracies fail the whole sweep.
    nonsrs_ik::arm_angle::reduce_pose(params, &pose)?;
    let grid = spec.psi_grid.values();
    let rows: Vec<Value> = grid
        .par_iter()
        .map(|&psi| {
            let request = IkRequest {
                tolerances: spec.tolerances,
                ..IkRequest::new(params.clone(), pose, psi)
            };
            match solve(&request) {
                Ok(set) => json!({
                    "psi": psi,
                    "branch_count": set.len(),
                    "branches": set.branches.iter().map(|b| json!({
                        "joints": to_value(&b.joints),
                        "label": to_value(&b.label()),
                        "tangent_root": b.tangent_root,
                        "pose_error": b.residuals.pose_error,
                    })).collect::<Vec<_>>(),
                    "rejected_count": set.rejected.len(),
                    "degeneracies": to_value(&set.degeneracies()),
                }),
                Err(e) => json!({"psi": psi, "error": {"tag": e.tag(), "message": e.to_string()}}),
            }
        })
        .collect();
    Ok(json!({"pose": pose_value(&pose), "rows": rows}).into())
}

fn percentile(sorted: &[u128], p: usize) -> u128 {
    sorted[(sorted.len() * p / 100).min(sorted.len() - 1)]
}

pub fn bench(params: &RobotParams, count: usize, seed: u64) -> Result<Outcome, CliError> {
    if count == 0 {
        return Err(CliError::Parse("count must be positive".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let requests: Vec<IkRequest> = (0..count)
        .map(|_| {
            let q = sample_nonsingular(&mut rng, params, 1e-2);
            let psi = eval_arm_angle(params, &q).expect("sampler keeps the arm angle defined").radians();
            IkRequest::new(params.clone(), forward_kinematics(params, &q), psi)
        })
        .collect();
    for r in requests.iter().take(count.min(200)) {
        std::hint::black_box(solve(r).ok());
    }
    let mut branches = 0usize;
    let mut times: Vec<u128> = requests
        .iter()
        .map(|r| {
            let start = Instant::now();
            let out = std::hint::black_box(solve(std::hint::black_box(r)));
            let ns = start.elapsed().as_nanos();
            branches += out.map_or(0, |s| s.len());
            ns
        })
        .collect();
    times.sort_unstable();
    let p50 = percentile(&times, 50);
    let p99 = percentile(&times, 99);
    let mean = times.iter().sum::<u128>() as f64 / times.len() as f64;
    Ok(json!({
        "requests": count,
        "seed": seed,
        "mean_branches": branches as f64 / count as f64,
        "latency_ns": {
            "min": times[0] as u64,
            "p50": p50 as u64,
            "p90": percentile(&times, 90) as u64,
            "p99": p99 as u64,
            "max": times[times.len() - 1] as u64,
            "mean": mean,
        },
        "p99_over_p50": p99 as f64 / p50.max(1) as f64,
    })
    .into())
}

/// Fixed-point check over the branches of `requests` round-trip requests,
/// folded into a single result.
fn fixed_point_summary(params: &RobotParams, requests: usize, rng: &mut ChaCha8Rng) -> CheckResult {
    let mut total = CheckResult {
        name: "numeric_ik_fixed_point".into(),
        passed: true,
        samples: 0,
        failures: 0,
        max_error: 0.0,
        tolerance: 1e-10,
        detail: Vec::new(),
    };
    for i in 0..requests {
        let q = sample_nonsingular(rng, params, 1e-2);
        let Ok(rt) = round_trip(params, &q) else { continue };
        let Ok(set) = rt.solutions else { continue };
        let pose = forward_kinematics(params, &q);
        let mut part = check_fixed_point(params, &pose, &set, total.tolerance);
        for row in &mut part.detail {
            row.sample = i;
        }
        total.passed &= part.passed;
        total.samples += part.samples;
        total.failures += part.failures;
        total.max_error = total.max_error.max(part.max_error);
        if !part.passed {
            total.detail.extend(part.detail.into_iter().take(4));
        }
    }
    total
}

pub fn check(params: &RobotParams, samples: usize, seed: u64) -> Result<Outcome, CliError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let results = vec![
        check_fk(params, samples, 1e-12, &mut rng),
        check_quartic(samples, 1e-10, &mut rng),
        check_round_trip(params, samples, 1e-6, &mut rng),
        fixed_point_summary(params, samples.min(100), &mut rng),
    ];
    let passed = results.iter().all(|r| r.passed);
    let value = json!({"passed": passed, "samples": samples, "seed": seed, "results": to_value(&results)});
    if passed {
        Ok(value.into())
    } else {
        Err(CliError::CheckFailed(value))
    }
}
