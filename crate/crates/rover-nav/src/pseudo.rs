//! Pseudo-measurement construction and stationarity detection.
//!
//! When the rover is stopped, zero-velocity and zero-angular-rate
//! observations pin the filter; while driving, the non-holonomic constraint
//! (wheels neither slide sideways nor leave the ground) supplies two axes of
//! velocity information. Each builder returns the innovation and the
//! measurement Jacobian over the 15-element error vector.

use std::collections::VecDeque;

use nalgebra::{SMatrix, SVector, Vector3};
use serde::{Deserialize, Serialize};

use crate::eskf::{ErrorFilterState, BG, VEL};
use crate::mech::{ImuSample, NavState};
use crate::slip::{odometry_yaw_rate, wheel_speed, WheelSample};

/// Chassis dimensions and sensor placement.
///
/// Defaults describe a four-wheel skid-steer rover with 24 cm polyurethane
/// wheels, 0.685 m track width, and 0.544 m wheelbase; the lever arm runs
/// from the rear-axle wheel frame to the body center.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct VehicleGeometry {
    /// Wheel radius (m).
    pub wheel_radius: f64,
    /// Lateral distance between wheel centers (m).
    pub track: f64,
    /// Longitudinal distance between axles (m).
    pub wheelbase: f64,
    /// Lever arm from the non-steerable wheel frame to the body frame (m),
    /// body axes.
    pub lever_arm: [f64; 3],
}

impl Default for VehicleGeometry {
    fn default() -> Self {
        VehicleGeometry {
            wheel_radius: 0.12,
            track: 0.685,
            wheelbase: 0.544,
            lever_arm: [0.272, 0.3425, 0.0],
        }
    }
}

/// Zero-velocity observation: the innovation is the negated velocity
/// estimate and the Jacobian holds `-I` in the velocity block, so the
/// update algebra sees the full velocity as error. Frame-independent.
pub fn zupt_measurement(nav: &NavState) -> (SVector<f64, 3>, SMatrix<f64, 3, 15>) {
    let dz = -nav.velocity;
    let mut h = SMatrix::<f64, 3, 15>::zeros();
    for i in 0..3 {
        h[(i, VEL + i)] = -1.0;
    }
    (dz, h)
}

/// Zero-angular-rate observation: the innovation is the negated
/// bias-compensated gyro reading and the Jacobian holds `-I` in the
/// gyro-bias block, so residual rate while truly stationary is attributed
/// to gyro bias. Frame-independent.
pub fn zaru_measurement(
    imu: &ImuSample,
    efs: &ErrorFilterState,
) -> (SVector<f64, 3>, SMatrix<f64, 3, 15>) {
    let compensated = imu.angular_rate - efs.gyro_bias;
    let dz = -compensated;
    let mut h = SMatrix::<f64, 3, 15>::zeros();
    for i in 0..3 {
        h[(i, BG + i)] = -1.0;
    }
    (dz, h)
}

/// Non-holonomic constraint: lateral and vertical body-frame velocity at
/// the wheel frame should vanish for a wheel that rolls without side-slip.
///
/// `imu` must already be bias-compensated (the angular rate feeds the
/// lever-arm term). The innovation takes the lateral/vertical rows of
/// `C_n^b v - [w x] |L|` with the lever arm entering element-wise absolute;
/// the Jacobian carries the matching rows of `-C_n^b` in the velocity
/// block.
pub fn nhc_measurement(
    nav: &NavState,
    imu: &ImuSample,
    geom: &VehicleGeometry,
) -> (SVector<f64, 2>, SMatrix<f64, 2, 15>) {
    let c_nb = nav.attitude.transposed();
    let v_body = c_nb * nav.velocity;
    let lever_abs = Vector3::new(
        geom.lever_arm[0].abs(),
        geom.lever_arm[1].abs(),
        geom.lever_arm[2].abs(),
    );
    let lever_term = imu.angular_rate.cross(&lever_abs);
    let at_wheel = v_body - lever_term;
    let dz = SVector::<f64, 2>::new(-at_wheel[1], -at_wheel[2]);
    let mut h = SMatrix::<f64, 2, 15>::zeros();
    for j in 0..3 {
        h[(0, VEL + j)] = -c_nb[(1, j)];
        h[(1, VEL + j)] = -c_nb[(2, j)];
    }
    (dz, h)
}

/// Thresholds for declaring the rover stationary.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DetectorConfig {
    /// Sliding-window length (s).
    pub window_length: f64,
    /// Every wheel must stay below this angular rate (rad/s).
    pub wheel_rate_stop: f64,
    /// Specific-force magnitude standard deviation ceiling (m/s^2).
    pub accel_mag_std_max: f64,
    /// Yaw-axis gyro standard deviation ceiling (rad/s), for the
    /// zero-angular-rate flag.
    pub gyro_std_max: f64,
    /// Wheel-odometry yaw rate ceiling (rad/s), for the zero-angular-rate
    /// flag.
    pub odometry_yaw_rate_max: f64,
    /// Consecutive windows the raw verdict must hold before the detector
    /// asserts; de-assertion is immediate.
    pub hysteresis_windows: u32,
    /// Minimum IMU samples for a window to count as valid.
    pub min_imu_samples: usize,
}

impl Default for DetectorConfig {
    fn default() -> Self {
        DetectorConfig {
            window_length: 0.5,
            wheel_rate_stop: 0.01,
            accel_mag_std_max: 0.05,
            gyro_std_max: 0.005,
            odometry_yaw_rate_max: 0.01,
            hysteresis_windows: 2,
            min_imu_samples: 10,
        }
    }
}

/// Outcome of one stationarity assessment.
#[derive(Clone, Debug, PartialEq)]
pub struct StationarityVerdict {
    /// Vehicle judged at rest: zero-velocity update is valid.
    pub is_zero_velocity: bool,
    /// Additionally no rotation: zero-angular-rate update is valid.
    pub is_zero_angular_rate: bool,
    /// Yaw-axis gyro standard deviation over the window (rad/s).
    pub gyro_yaw_std: f64,
    /// Mean circumferential wheel speed over the window (m/s).
    pub encoder_speed: f64,
    /// Standard deviation of the specific-force magnitude (m/s^2).
    pub accel_mag_std: f64,
    /// Why the verdict is negative, when it is for a structural reason.
    pub reason: Option<&'static str>,
}

impl StationarityVerdict {
    fn negative(reason: &'static str) -> Self {
        StationarityVerdict {
            is_zero_velocity: false,
            is_zero_angular_rate: false,
            gyro_yaw_std: 0.0,
            encoder_speed: 0.0,
            accel_mag_std: 0.0,
            reason: Some(reason),
        }
    }
}

/// Streaming stationarity detector.
///
/// Feed every IMU sample and every wheel-encoder sample; `assess` evaluates
/// the most recent window. The raw per-window verdict must persist for
/// `hysteresis_windows` window lengths before the detector asserts, so the
/// filter never acts on a single quiet window; any disqualifying sample
/// clears the assertion immediately.
#[derive(Clone, Debug)]
pub struct StationarityDetector {
    config: DetectorConfig,
    wheel_radius: f64,
    track: f64,
    imu: VecDeque<(f64, f64, f64)>,
    wheels: VecDeque<WheelSample>,
    zero_velocity_since: Option<f64>,
    zero_rate_since: Option<f64>,
}

impl StationarityDetector {
    pub fn new(config: DetectorConfig, geometry: &VehicleGeometry) -> Self {
        StationarityDetector {
            config,
            wheel_radius: geometry.wheel_radius,
            track: geometry.track,
            imu: VecDeque::new(),
            wheels: VecDeque::new(),
            zero_velocity_since: None,
            zero_rate_since: None,
        }
    }

    pub fn push_imu(&mut self, sample: &ImuSample) {
        self.imu.push_back((
            sample.t,
            sample.specific_force.norm(),
            sample.angular_rate[2],
        ));
        let horizon = sample.t - self.config.window_length;
        while self.imu.front().is_some_and(|&(t, _, _)| t < horizon) {
            self.imu.pop_front();
        }
    }

    pub fn push_wheels(&mut self, sample: &WheelSample) {
        self.wheels.push_back(*sample);
        let horizon = sample.t - self.config.window_length;
        while self.wheels.front().is_some_and(|w| w.t < horizon) {
            self.wheels.pop_front();
        }
    }

    /// Evaluate the window ending at `t` and fold the hysteresis state.
    /// Meant to be called at a regular cadence (every filter epoch): the
    /// hold timers run from the first assessment where the raw verdict
    /// turned true.
    pub fn assess(&mut self, t: f64) -> StationarityVerdict {
        let raw = self.window_verdict(t);
        let hold = (self.config.hysteresis_windows.saturating_sub(1)) as f64
            * self.config.window_length;

        if raw.is_zero_velocity {
            self.zero_velocity_since.get_or_insert(t);
        } else {
            self.zero_velocity_since = None;
        }
        if raw.is_zero_angular_rate {
            self.zero_rate_since.get_or_insert(t);
        } else {
            self.zero_rate_since = None;
        }

        let zv = raw.is_zero_velocity
            && self.zero_velocity_since.is_some_and(|s| t - s >= hold);
        let za = zv
            && raw.is_zero_angular_rate
            && self.zero_rate_since.is_some_and(|s| t - s >= hold);
        let reason = if raw.is_zero_velocity && !zv {
            Some("hysteresis hold")
        } else {
            raw.reason
        };
        StationarityVerdict {
            is_zero_velocity: zv,
            is_zero_angular_rate: za,
            reason,
            ..raw
        }
    }

    fn window_verdict(&self, t: f64) -> StationarityVerdict {
        let start = t - self.config.window_length;
        let imu: Vec<_> = self
            .imu
            .iter()
            .filter(|&&(ts, _, _)| ts >= start && ts <= t)
            .collect();
        if imu.len() < self.config.min_imu_samples.max(2) {
            return StationarityVerdict::negative("imu window underfull");
        }
        let span = imu.last().unwrap().0 - imu.first().unwrap().0;
        if span < 0.9 * self.config.window_length {
            return StationarityVerdict::negative("imu window underfull");
        }
        let wheels: Vec<_> = self
            .wheels
            .iter()
            .filter(|w| w.t >= start && w.t <= t)
            .collect();
        if wheels.is_empty() {
            return StationarityVerdict::negative("wheel window underfull");
        }

        let accel_mag_std = std_dev(imu.iter().map(|&&(_, a, _)| a));
        let gyro_yaw_std = std_dev(imu.iter().map(|&&(_, _, g)| g));
        let encoder_speed = wheels
            .iter()
            .map(|w| wheel_speed(w, self.wheel_radius).abs())
            .sum::<f64>()
            / wheels.len() as f64;
        let wheels_stopped = wheels
            .iter()
            .all(|w| w.rates.iter().all(|r| r.abs() < self.config.wheel_rate_stop));
        let odo_yaw_quiet = wheels.iter().all(|w| {
            odometry_yaw_rate(w, self.wheel_radius, self.track).abs()
                < self.config.odometry_yaw_rate_max
        });

        let is_zero_velocity = wheels_stopped && accel_mag_std < self.config.accel_mag_std_max;
        let is_zero_angular_rate =
            is_zero_velocity && gyro_yaw_std < self.config.gyro_std_max && odo_yaw_quiet;
        StationarityVerdict {
            is_zero_velocity,
            is_zero_angular_rate,
            gyro_yaw_std,
            encoder_speed,
            accel_mag_std,
            reason: None,
        }
    }
}

fn std_dev(values: impl Iterator<Item = f64>) -> f64 {
    let v: Vec<f64> = values.collect();
    let n = v.len() as f64;
    if v.len() < 2 {
        return 0.0;
    }
    let mean = v.iter().sum::<f64>() / n;
    let var = v.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0);
    var.sqrt()
}
