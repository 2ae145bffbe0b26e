//! Kinematics, calibration and evaluation toolkit for a 5-DOF remote-center-of-motion
//! surgical arm observed by an OCT scanner.
//!
//! Every numeric type is generic over [`Real`] (`f32` or `f64`); the `*64`
//! aliases below fix the scalar to `f64`, which is what the file formats and the
//! command-line tool use.

pub mod calibration;
pub mod error;
pub mod io;
pub mod kinematics;
pub mod localization;
pub mod rcm;
pub mod scalar;
pub mod simulator;
pub mod workspace;

pub use error::{Error, Result};
pub use scalar::Real;

pub type JointState64 = kinematics::JointState<f64>;
pub type JointLimits64 = kinematics::JointLimits<f64>;
pub type RobotModel64 = kinematics::RobotModel<f64>;
pub type RigidTransform64 = kinematics::RigidTransform<f64>;
pub type CalibrationParams64 = calibration::CalibrationParams<f64>;
pub type Measurement64 = calibration::Measurement<f64>;
pub type ToolLine64 = rcm::ToolLine<f64>;
pub type OctPointCloud64 = localization::OctPointCloud<f64>;
pub type TipEstimate64 = localization::TipEstimate<f64>;
pub type SpmDesign64 = workspace::SpmDesign<f64>;
pub type WorkspaceGrid64 = workspace::WorkspaceGrid<f64>;
