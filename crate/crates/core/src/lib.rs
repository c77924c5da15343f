//! Closed-form inverse kinematics for 7-DOF anthropomorphic arms whose
//! joint-6 and joint-7 axes are offset (`a_wr`), with the redundancy
//! resolved by an arm angle defined on the shoulder, elbow and flange
//! centers.

pub mod arm_angle;
pub mod error;
pub mod ik;
pub mod kinematics;
pub mod quartic;
pub mod singularity;
pub mod verify;

pub use error::{Error, Result};
