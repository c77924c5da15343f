use std::io::Write;
use std::process::{Command, Output, Stdio};

use serde_json::{json, Value};

fn run(args: &[&str], stdin: Option<&str>) -> Output {
    let mut child = Command::new(env!("CARGO_BIN_EXE_nonsrs-ik"))
        .args(args)
        .stdin(Stdio::piped())
        .stdout(Stdio::piped())
        .stderr(Stdio::piped())
        .spawn()
        .unwrap();
    let mut pipe = child.stdin.take().unwrap();
    pipe.write_all(stdin.unwrap_or("").as_bytes()).unwrap();
    drop(pipe);
    child.wait_with_output().unwrap()
}

fn parse(out: &Output) -> Value {
    serde_json::from_slice(&out.stdout).unwrap()
}

fn floats(v: &Value) -> Vec<f64> {
    v.as_array().unwrap().iter().map(|x| x.as_f64().unwrap()).collect()
}

const JOINTS: [f64; 7] = [0.3, -0.5, 0.7, 1.2, 0.4, -0.6, 0.9];

fn ik_request_for(joints: &[f64; 7]) -> Value {
    let fk = run(&["fk", "-i", &json!(joints).to_string()], None);
    assert_eq!(fk.status.code(), Some(0));
    let d = parse(&fk);
    json!({"position": d["pose"]["position"], "rotation": d["pose"]["rotation"], "psi": d["psi"]})
}

#[test]
fn fk_zero_joints_layout() {
    let out = run(&["fk", "-i", "[0, 0, 0, 0, 0, 0, 0]"], None);
    assert_eq!(out.status.code(), Some(0));
    let d = parse(&out);
    let s = floats(&d["points"]["s"]);
    let c = floats(&d["points"]["c"]);
    // Collinear along +x at shoulder height, so the arm angle is undefined.
    assert!((c[2] - s[2]).abs() < 1e-12 && c[1].abs() < 1e-12 && c[0] > 0.5);
    assert!(d["psi"].is_null());
    assert_eq!(d["psi_error"], "degenerate_arm");
    assert_eq!(floats(&d["pose"]["position"]), c);
}

#[test]
fn ik_recovers_fk_fixture() {
    let req = ik_request_for(&JOINTS);
    let out = run(&["ik"], Some(&req.to_string()));
    assert_eq!(out.status.code(), Some(0));
    let d = parse(&out);
    let branches = d["branches"].as_array().unwrap();
    assert_eq!(d["branch_count"].as_u64().unwrap() as usize, branches.len());
    let hit = branches.iter().any(|b| {
        floats(&b["joints"])
            .iter()
            .zip(JOINTS)
            .all(|(a, b)| (a - b).abs() < 1e-9)
    });
    assert!(hit, "{d}");
}

#[test]
fn non_orthonormal_rotation_is_invalid_input() {
    let req = json!({"position": [0.4, 0.1, 0.5], "rotation": [[1.0, 0.1, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]], "psi": 0.0});
    let out = run(&["ik", "-i", &req.to_string()], None);
    assert_eq!(out.status.code(), Some(1));
    assert_eq!(parse(&out)["error"]["tag"], "invalid_rotation");
    assert!(!out.stderr.is_empty());
}

#[test]
fn flange_axis_along_sc_is_degenerate() {
    // Shoulder at (0, 0, d_bs); put the flange straight above it with z7 up.
    let fk = parse(&run(&["fk", "-i", "[0, 0, 0, 0, 0, 0, 0]"], None));
    let s = floats(&fk["points"]["s"]);
    let req = json!({"position": [s[0], s[1], s[2] + 0.5], "rotation": [1.0, 0.0, 0.0, 0.0], "psi": 0.0});
    let out = run(&["ik", "-i", &req.to_string()], None);
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(parse(&out)["error"]["tag"], "axis_parallel");
}

#[test]
fn output_is_byte_deterministic() {
    let req = ik_request_for(&JOINTS).to_string();
    let a = run(&["ik", "-i", &req], None);
    let b = run(&["ik", "-i", &req], None);
    assert_eq!(a.stdout, b.stdout);
    let c = run(&["check", "--samples", "20", "--seed", "3"], None);
    let d = run(&["check", "--samples", "20", "--seed", "3"], None);
    assert_eq!(c.stdout, d.stdout);
}

#[test]
fn batch_keeps_order_and_reports_item_errors() {
    let fixtures: Vec<[f64; 7]> = (0..6)
        .map(|k| {
            let mut q = JOINTS;
            q[0] += 0.2 * k as f64;
            q
        })
        .collect();
    let mut batch: Vec<Value> = fixtures.iter().map(ik_request_for).collect();
    batch.insert(2, json!({"position": [0.4, 0.1, 0.5], "rotation": [2.0, 0.0, 0.0, 0.0], "psi": 0.0}));
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("out.json");
    let out = run(&["ik", "-o", path.to_str().unwrap()], Some(&Value::Array(batch).to_string()));
    assert_eq!(out.status.code(), Some(1));
    assert!(out.stdout.is_empty());
    let d: Value = serde_json::from_str(&std::fs::read_to_string(&path).unwrap()).unwrap();
    let items = d.as_array().unwrap();
    assert_eq!(items.len(), 7);
    assert_eq!(items[2]["error"]["tag"], "invalid_rotation");
    let solved: Vec<&Value> = items.iter().enumerate().filter(|(i, _)| *i != 2).map(|(_, v)| v).collect();
    for (item, q) in solved.iter().zip(&fixtures) {
        let hit = item["branches"].as_array().unwrap().iter().any(|b| {
            let j = floats(&b["joints"]);
            (0..7).all(|i| {
                let d = (j[i] - q[i]).rem_euclid(std::f64::consts::TAU);
                d.min(std::f64::consts::TAU - d) < 1e-9
            })
        });
        assert!(hit);
    }
}

#[test]
fn arm_angle_matches_fk() {
    let fk = parse(&run(&["fk", "-i", &json!(JOINTS).to_string()], None));
    let out = run(&["arm-angle", "-i", &json!({"joints": JOINTS}).to_string()], None);
    assert_eq!(out.status.code(), Some(0));
    assert_eq!(parse(&out)["psi"], fk["psi"]);
    let zero = run(&["arm-angle", "-i", "[0, 0, 0, 0, 0, 0, 0]"], None);
    assert_eq!(zero.status.code(), Some(2));
}

#[test]
fn classify_flags_straight_elbow() {
    let out = run(&["classify", "-i", "[0.3, -0.5, 0.7, 0.0, 0.4, -0.6, 0.9]"], None);
    assert_eq!(out.status.code(), Some(0));
    let d = parse(&out);
    assert_eq!(d["singular"], true);
    let kinematic: Vec<&str> = d["kinematic_hits"]
        .as_array()
        .unwrap()
        .iter()
        .map(|h| h["condition"].as_str().unwrap())
        .collect();
    assert!(kinematic.contains(&"elbow_straight"), "{d}");
    let generic = parse(&run(&["classify", "-i", &json!(JOINTS).to_string()], None));
    assert_eq!(generic["singular"], false);
}

#[test]
fn sweep_rows_follow_grid() {
    let req = ik_request_for(&JOINTS);
    let sweep = json!({
        "position": req["position"],
        "rotation": req["rotation"],
        "psi_grid": {"start": -3.0, "stop": 3.0, "count": 13}
    });
    let out = run(&["sweep", "-i", &sweep.to_string()], None);
    assert_eq!(out.status.code(), Some(0));
    let rows = parse(&out)["rows"].as_array().unwrap().clone();
    assert_eq!(rows.len(), 13);
    for (k, row) in rows.iter().enumerate() {
        assert!((row["psi"].as_f64().unwrap() - (-3.0 + 0.5 * k as f64)).abs() < 1e-12);
    }
    assert!(rows.iter().any(|r| r["branch_count"].as_u64().unwrap_or(0) > 0));
}

#[test]
fn bench_and_check_small() {
    let out = run(&["bench", "--count", "200", "--seed", "1"], None);
    assert_eq!(out.status.code(), Some(0));
    let d = parse(&out);
    assert_eq!(d["requests"], 200);
    let lat = &d["latency_ns"];
    assert!(lat["p50"].as_u64().unwrap() <= lat["p99"].as_u64().unwrap());
    let out = run(&["check", "--samples", "100"], None);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stdout));
    let d = parse(&out);
    assert_eq!(d["passed"], true);
    assert_eq!(d["results"].as_array().unwrap().len(), 4);
}

#[test]
fn params_file_and_bad_input() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("params.json");
    std::fs::write(&path, "{\"not\": \"params\"}").unwrap();
    let out = run(&["--params", path.to_str().unwrap(), "fk", "-i", "[0,0,0,0,0,0,0]"], None);
    assert_eq!(out.status.code(), Some(1));
    let out = run(&["ik", "-i", "{\"position\": [0, 0, 0]}"], None);
    assert_eq!(out.status.code(), Some(1));
    assert_eq!(parse(&out)["error"]["tag"], "parse");
}
