use std::io::Read;
use std::path::Path;

use nalgebra::{Matrix3, Vector3};
use nonsrs_ik::ik::ToleranceSet;
use nonsrs_ik::kinematics::{JointConfig, Transform};
use serde::Deserialize;
use serde_json::Value;

use crate::CliError;

/// `-` reads stdin, text starting with `{` or `[` is inline JSON, anything
/// else is a file path.
pub fn read_json(source: &str) -> Result<Value, CliError> {
    let text = if source == "-" {
        let mut buf = String::new();
        std::io::stdin()
            .read_to_string(&mut buf)
            .map_err(|e| CliError::Io(format!("stdin: {e}")))?;
        buf
    } else if source.trim_start().starts_with(['{', '[']) {
        source.to_string()
    } else {
        std::fs::read_to_string(Path::new(source)).map_err(|e| CliError::Io(format!("{source}: {e}")))?
    };
    serde_json::from_str(&text).map_err(|e| CliError::Parse(format!("input: {e}")))
}

#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
pub enum RotationSpec {
    Matrix([[f64; 3]; 3]),
    Flat([f64; 9]),
    Quaternion([f64; 4]),
}

pub fn pose_from(position: &[f64; 3], rotation: &RotationSpec) -> Result<Transform, CliError> {
    let t = Vector3::from(*position);
    let pose = match rotation {
        RotationSpec::Matrix(m) => Transform::new(Matrix3::from_fn(|i, j| m[i][j]), t),
        RotationSpec::Flat(m) => Transform::new(Matrix3::from_row_slice(m), t),
        RotationSpec::Quaternion(q) => Transform::from_quaternion(*q, t),
    };
    pose.map_err(CliError::Solver)
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IkSpec {
    pub position: [f64; 3],
    pub rotation: RotationSpec,
    pub psi: f64,
    #[serde(default)]
    pub tolerances: ToleranceSet,
}

impl IkSpec {
    pub fn transform(&self) -> Result<Transform, CliError> {
        pose_from(&self.position, &self.rotation)
    }
}

#[derive(Debug, Clone, Copy, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    pub start: f64,
    pub stop: f64,
    pub count: usize,
}

impl GridSpec {
    /// `count` evenly spaced values from `start` to `stop` inclusive.
    pub fn values(&self) -> Vec<f64> {
        match self.count {
            0 => Vec::new(),
            1 => vec![self.start],
            n => (0..n)
                .map(|i| self.start + (self.stop - self.start) * i as f64 / (n - 1) as f64)
                .collect(),
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSpec {
    pub position: [f64; 3],
    pub rotation: RotationSpec,
    pub psi_grid: GridSpec,
    #[serde(default)]
    pub tolerances: ToleranceSet,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
pub enum JointsSpec {
    Bare([f64; 7]),
    Wrapped { joints: [f64; 7] },
}

impl JointsSpec {
    pub fn config(&self) -> Result<JointConfig, CliError> {
        let q = match self {
            JointsSpec::Bare(q) | JointsSpec::Wrapped { joints: q } => JointConfig(*q),
        };
        if q.is_finite() {
            Ok(q)
        } else {
            Err(CliError::Parse("joints must be finite".into()))
        }
    }
}

/// A single object or an array of them; arrays are batches.
pub fn one_or_many<T: for<'de> Deserialize<'de>>(value: Value) -> Result<(Vec<T>, bool), CliError> {
    // A bare 7-vector of joints is a single item, not a batch.
    let batch = matches!(&value, Value::Array(items) if items.iter().all(|v| !v.is_number()));
    if batch {
        let Value::Array(items) = value else { unreachable!() };
        let parsed = items
            .into_iter()
            .enumerate()
            .map(|(i, v)| serde_json::from_value(v).map_err(|e| CliError::Parse(format!("item {i}: {e}"))))
            .collect::<Result<Vec<T>, _>>()?;
        Ok((parsed, true))
    } else {
        let one = serde_json::from_value(value).map_err(|e| CliError::Parse(format!("input: {e}")))?;
        Ok((vec![one], false))
    }
}
