use std::f64::consts::{FRAC_PI_2, PI};

use nalgebra::{Rotation3, Unit, Vector3};
use nonsrs_ik::arm_angle::{arm_angle, arm_angle_from_points, reduce_pose, special_pose};
use nonsrs_ik::ik::{solve, IkRequest};
use nonsrs_ik::kinematics::{
    angle_distance, forward_kinematics, frame_points, JointConfig, RobotParams, Transform,
};
use nonsrs_ik::singularity::{classify, min_singular_value, numeric_jacobian, Condition, HitTolerances};
use nonsrs_ik::verify::{
    check_fixed_point, check_fk, fk_oracle, max_component_deviation, numeric_ik, numeric_ik_with,
    sample_joints, sample_nonsingular, NumericIkOptions,
};
use nonsrs_ik::Error;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn params() -> RobotParams {
    RobotParams::moz1_placeholder()
}

#[test]
fn fk_oracle_hundred_thousand() {
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let res = check_fk(&params(), 100_000, 1e-12, &mut rng);
    assert!(res.passed, "{res:?}");
}

#[test]
fn frame_distances_hundred_thousand() {
    let p = params();
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..100_000 {
        let f = frame_points(&p, &sample_joints(&mut rng));
        assert_eq!(f.s, p.shoulder());
        assert!(((f.e - f.s).norm() - p.d_se()).abs() < 1e-9);
        assert!(((f.w - f.e).norm() - p.d_ew()).abs() < 1e-9);
        assert!(((f.c - f.w).norm() - p.a_wr()).abs() < 1e-9);
    }
}

#[test]
fn zero_pose_layout_from_oracle() {
    // With this table the zero pose stretches the arm along +x at shoulder
    // height, the wrist offset continuing the line.
    let p = params();
    let q = JointConfig::zeros();
    let oracle = fk_oracle(&p, &q);
    assert!(max_component_deviation(&oracle, &forward_kinematics(&p, &q)) < 1e-15);
    let f = frame_points(&p, &q);
    let x = Vector3::x();
    assert!((f.e - (f.s + x * p.d_se())).norm() < 1e-9);
    assert!((f.w - (f.e + x * p.d_ew())).norm() < 1e-9);
    assert!((f.c - (f.w + x * p.a_wr())).norm() < 1e-9);
    assert!((oracle.translation - f.c).norm() < 1e-15);
}

#[test]
fn reduce_special_ten_thousand() {
    let p = params();
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    for _ in 0..10_000 {
        let d_sc = rng.gen_range(0.05..1.0);
        let q = rng.gen_range(-PI + 0.05..-0.05);
        let al = rng.gen_range(-PI..PI);
        let r = reduce_pose(&p, &special_pose(p.d_bs(), d_sc, q, al)).unwrap();
        assert!((r.d_sc - d_sc).abs() < 1e-10);
        assert!((r.q - q).abs() < 1e-10);
        assert!(angle_distance(r.al, al) < 1e-10);
    }
}

#[test]
fn arm_angle_follows_rotation_about_sc() {
    let p = params();
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    for _ in 0..1000 {
        let q = sample_nonsingular(&mut rng, &p, 1e-2);
        let f = frame_points(&p, &q);
        let z7 = forward_kinematics(&p, &q).rotation.column(2).into_owned();
        let psi = arm_angle_from_points(&f.s, &f.e, &f.c, &z7).unwrap().radians();
        let axis = Unit::new_normalize(f.c - f.s);
        let theta = rng.gen_range(-PI..PI);
        let rot = Rotation3::from_axis_angle(&axis, theta);
        let e_rot = f.s + rot * (f.e - f.s);
        // Whole arm (elbow and flange axis) rotated: unchanged.
        let whole = arm_angle_from_points(&f.s, &e_rot, &f.c, &(rot * z7)).unwrap().radians();
        assert!(angle_distance(whole, psi) < 1e-10);
        // Elbow alone rotated: shifted by theta.
        let elbow = arm_angle_from_points(&f.s, &e_rot, &f.c, &z7).unwrap().radians();
        assert!(angle_distance(elbow, psi + theta) < 1e-10);
    }
}

#[test]
fn branches_are_numeric_fixed_points() {
    let p = params();
    let mut rng = ChaCha8Rng::seed_from_u64(14);
    for _ in 0..200 {
        let q = sample_nonsingular(&mut rng, &p, 1e-2);
        let pose = forward_kinematics(&p, &q);
        let psi = arm_angle(&p, &q).unwrap().radians();
        let set = solve(&IkRequest::new(p.clone(), pose, psi)).unwrap();
        let res = check_fixed_point(&p, &pose, &set, 1e-10);
        assert!(res.passed, "{res:?}");
    }
}

#[test]
fn numeric_basin_returns_to_branch() {
    let p = params();
    let mut rng = ChaCha8Rng::seed_from_u64(15);
    for _ in 0..50 {
        let q = sample_nonsingular(&mut rng, &p, 5e-2);
        let pose = forward_kinematics(&p, &q);
        let psi = arm_angle(&p, &q).unwrap().radians();
        let mut seed = q;
        for v in &mut seed.0 {
            *v += rng.gen_range(-1e-3..1e-3);
        }
        let opts = NumericIkOptions {
            psi: Some(psi),
            ..Default::default()
        };
        let r = numeric_ik_with(&p, &pose, &seed, &opts).unwrap();
        assert!(r.joints.max_angle_distance(&q) < 1e-9);
        // Without the arm-angle row the iteration still lands on the pose.
        let free = numeric_ik(&p, &pose, &seed, 200, 1e-6).unwrap();
        assert!(forward_kinematics(&p, &free.joints).pose_distance(&pose) < 1e-10);
    }
}

#[test]
fn numeric_from_zero_may_fail_far_away() {
    let p = params();
    let pose = Transform::from_parts_unchecked(
        Rotation3::from_euler_angles(2.5, -1.0, 0.7).into_inner(),
        Vector3::new(-0.3, 0.4, 0.1),
    );
    match numeric_ik(&p, &pose, &JointConfig::zeros(), 200, 1e-6) {
        Ok(r) => assert!(forward_kinematics(&p, &r.joints).pose_distance(&pose) < 1e-10),
        Err(e) => assert!(matches!(e, Error::NoConvergence { .. })),
    }
}

#[test]
fn generic_sigma_dominates_families() {
    let p = params();
    let mut rng = ChaCha8Rng::seed_from_u64(16);
    let q6_star = p.q6_offset_singular();
    let mut family_max: f64 = 0.0;
    for family in 0..4 {
        for _ in 0..100 {
            let mut q = sample_joints(&mut rng);
            match family {
                0 => q.0[3] = 0.0,
                1 => (q.0[1], q.0[2]) = (FRAC_PI_2, PI),
                2 => (q.0[1], q.0[5]) = (-FRAC_PI_2, q6_star),
                _ => (q.0[4], q.0[5]) = (0.0, -q6_star),
            }
            family_max = family_max.max(min_singular_value(&numeric_jacobian(&q, &p, 1e-6)));
        }
    }
    let mut generic_min = f64::INFINITY;
    for _ in 0..1000 {
        let q = sample_nonsingular(&mut rng, &p, 0.1);
        generic_min = generic_min.min(min_singular_value(&numeric_jacobian(&q, &p, 1e-6)));
    }
    assert!(family_max < 1e-5, "{family_max}");
    assert!(generic_min > 10.0 * family_max, "{generic_min} vs {family_max}");
}

#[test]
fn axis_parallel_failure_is_classified() {
    let p = params();
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    let mut found = 0;
    while found < 20 {
        let q0 = sample_nonsingular(&mut rng, &p, 1e-2);
        let pose = forward_kinematics(&p, &q0);
        let sc = (pose.translation - p.shoulder()).normalize();
        let x = Vector3::z().cross(&sc).normalize();
        let target = Transform::from_parts_unchecked(
            nalgebra::Matrix3::from_columns(&[x, sc.cross(&x), sc]),
            pose.translation,
        );
        let Ok(r) = numeric_ik_with(&p, &target, &q0, &NumericIkOptions::default()) else {
            continue;
        };
        found += 1;
        let fk = forward_kinematics(&p, &r.joints);
        let err = solve(&IkRequest::new(p.clone(), fk, 0.3)).unwrap_err();
        assert!(matches!(err, Error::AxisParallel { .. }));
        let report = classify(&r.joints, &p, HitTolerances::default());
        assert!(report.contains(Condition::FlangeAxisAlongSc));
        assert!(!report.algorithmic_hits.is_empty());
    }
}
