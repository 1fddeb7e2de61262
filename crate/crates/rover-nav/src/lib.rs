//! Proprioceptive localization and wheel-slip detection for skid-steer
//! rovers.
//!
//! The crate mechanizes a strapdown inertial solution in a local NED frame,
//! keeps it honest with an error-state Kalman filter fed by stationary and
//! vehicle-constraint pseudo-measurements (zero velocity, zero angular rate,
//! non-holonomic motion), and compares the filtered body velocity against
//! wheel-encoder speed to estimate and classify longitudinal slip. A
//! built-in scenario simulator provides ground truth for end-to-end
//! verification, and the evaluation module scores any estimator log against
//! that truth.
//!
//! Modules, bottom of the stack first:
//!
//! * [`earth`]: ellipsoid constants, radii, gravity, Earth/transport rates,
//!   DCM and Euler plumbing.
//! * [`mech`]: strapdown mechanization of attitude, velocity, position.
//! * [`eskf`]: 15-state error filter (attitude, velocity, position, IMU
//!   biases) with propagation, gated updates, and closed-loop correction.
//! * [`pseudo`]: stationarity detection and the ZUPT / ZARU / NHC
//!   measurement builders.
//! * [`slip`]: slip ratio, five-class classification, confusion matrices.
//! * [`sim`]: truth-trajectory generation and IMU/encoder synthesis by
//!   inverting the mechanization and slip equations.
//! * [`io`]: CSV schemas for sensor logs, trajectories, and slip records.
//! * [`config`]: pipeline configuration with sensor-grade defaults.
//! * [`pipeline`]: the filter runner and the dead-reckoning comparators.
//! * [`eval`]: ENU error metrics, heading series, histograms, reports.

pub mod config;
pub mod earth;
pub mod eskf;
pub mod eval;
pub mod io;
pub mod mech;
pub mod pipeline;
pub mod pseudo;
pub mod sim;
pub mod slip;

use thiserror::Error;

/// Numerical and kinematic failures raised by the math layers.
#[derive(Debug, Error)]
pub enum NavError {
    /// Latitude magnitude beyond the supported band; curvilinear terms
    /// degenerate near the poles.
    #[error("latitude {latitude_deg:.4} deg is inside the polar exclusion band")]
    PolarRegion { latitude_deg: f64 },

    /// Pitch at +/-90 deg: roll and yaw are not separable.
    #[error("gimbal lock: pitch magnitude at 90 deg")]
    GimbalLock,

    /// A sample carried a timestamp at or before the current state time.
    #[error("non-increasing timestamp {t:.6} s after state time {state_t:.6} s")]
    NonMonotonicTime { state_t: f64, t: f64 },

    /// Gap between consecutive samples exceeded the configured maximum.
    #[error("sample gap of {gap:.4} s at t = {t:.4} s exceeds the {max:.4} s limit")]
    SampleGap { t: f64, gap: f64, max: f64 },

    /// Innovation covariance could not be factorized.
    #[error("innovation covariance is not invertible")]
    SingularUpdate,

    /// Covariance lost positive semidefiniteness beyond tolerance.
    #[error("covariance not positive semidefinite: min eigenvalue {min_eigenvalue:.3e} (trace {trace:.3e}) at t = {t:.4} s")]
    CovarianceNotPsd { min_eigenvalue: f64, trace: f64, t: f64 },

    /// A non-finite value slipped into a computation.
    #[error("non-finite value in {context}")]
    NonFinite { context: &'static str },

    /// A scenario description violated its bounds.
    #[error("invalid scenario: {reason}")]
    InvalidScenario { reason: String },

    /// An input stream was too short to run on.
    #[error("{context} stream needs at least two samples")]
    EmptyStream { context: &'static str },

    /// Estimate and reference logs share no time window.
    #[error("no estimate epochs fall inside the reference time window")]
    EmptyOverlap,
}
