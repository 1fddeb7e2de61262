//! Filter execution: wires mechanization, error-state propagation,
//! pseudo-measurement scheduling, stationarity detection, and slip
//! bookkeeping into runnable estimators.
//!
//! Three estimators are produced from the same sensor streams:
//!
//! * [`run_filter`] — the aided solution: strapdown mechanization with the
//!   error-state filter, zero-velocity / zero-angular-rate updates at
//!   stationary epochs (detected or scripted), and the lateral/vertical
//!   velocity constraint while rolling.
//! * [`run_comparators`] — two dead-reckoning baselines: direct integration
//!   of the raw IMU (mechanization only, no updates) and differential-drive
//!   wheel odometry (heading from the left/right wheel-speed difference,
//!   distance from mean wheel speed).
//!
//! Per-epoch order inside the filter: mechanize to the new epoch, propagate
//! the error state over the same interval (Jacobians evaluated at the
//! pre-update state with bias-compensated specific force), feed the
//! stationarity detector, apply whichever measurements are due, then fold
//! any correction back into the navigation state. The vehicle constraint is
//! attempted at every epoch — a parked vehicle satisfies it trivially — and
//! suspended only above the configured yaw-rate ceiling or at detected slip
//! severities where wheel evidence says the constraint is unreliable.
//!
//! Slip records are produced per wheel epoch with zero-order-hold state: the
//! most recent filter solution at or before the wheel timestamp supplies the
//! body-frame forward velocity.
//!
//! Everything here is deterministic: same inputs, bit-identical outputs.

use nalgebra::{SMatrix, Vector3};
use serde::{Deserialize, Serialize};

use crate::config::PipelineConfig;
use crate::earth::{euler_to_dcm, Euler};
use crate::eskf::{
    self, chi_square_gate_999, correct_state, discretize, process_noise, system_matrix,
    ErrorFilterState, UpdateOutcome,
};
use crate::mech::{mechanize_step, position_update, ImuSample, NavState};
use crate::pseudo::{
    nhc_measurement, zaru_measurement, zupt_measurement, StationarityDetector,
};
use crate::sim::UpdateSchedule;
use crate::slip::{
    classify_with_no_slip_band, odometry_yaw_rate, slip_ratio, wheel_speed, SlipClass,
    SlipRecord, WheelSample,
};
use crate::NavError;

/// Attitude matrices are renormalized every step; anything beyond this
/// orthonormality error is counted as a health violation.
pub const DCM_ORTHONORMALITY_LIMIT: f64 = 1e-9;

/// Where zero-velocity / zero-angular-rate updates come from.
#[derive(Clone, Debug)]
pub enum ZeroUpdatePolicy {
    /// Never apply them (pure propagation, or constraint-only runs).
    Off,
    /// Apply them whenever the stationarity detector asserts.
    Detected,
    /// Apply them whenever the scripted schedule is active, ignoring the
    /// detector. Used by benchmark protocols with pulsed updates.
    Scripted(UpdateSchedule),
}

/// Which measurements the filter run may apply.
#[derive(Clone, Debug)]
pub struct RunOptions {
    /// Source of stationary-epoch updates.
    pub zero_updates: ZeroUpdatePolicy,
    /// Apply the lateral/vertical velocity constraint.
    pub lateral_constraint: bool,
}

impl RunOptions {
    /// Detector-driven zero updates plus the vehicle constraint: the full
    /// aided estimator.
    pub fn aided() -> Self {
        RunOptions { zero_updates: ZeroUpdatePolicy::Detected, lateral_constraint: true }
    }

    /// Detector-driven zero updates only.
    pub fn zero_updates_only() -> Self {
        RunOptions { zero_updates: ZeroUpdatePolicy::Detected, lateral_constraint: false }
    }

    /// Scripted zero updates only.
    pub fn scripted(schedule: UpdateSchedule) -> Self {
        RunOptions { zero_updates: ZeroUpdatePolicy::Scripted(schedule), lateral_constraint: false }
    }

    /// Scripted zero updates plus the vehicle constraint.
    pub fn scripted_with_constraint(schedule: UpdateSchedule) -> Self {
        RunOptions { zero_updates: ZeroUpdatePolicy::Scripted(schedule), lateral_constraint: true }
    }

    /// No updates at all; the filter output reduces to mechanization.
    pub fn unaided() -> Self {
        RunOptions { zero_updates: ZeroUpdatePolicy::Off, lateral_constraint: false }
    }
}

impl Default for RunOptions {
    fn default() -> Self {
        RunOptions::aided()
    }
}

/// Counts of what the filter actually did.
#[derive(Clone, Copy, Debug, Default, Serialize, Deserialize)]
pub struct RunStats {
    /// IMU epochs processed (excluding the leading state).
    pub imu_epochs: u64,
    /// Wheel epochs consumed.
    pub wheel_epochs: u64,
    /// Zero-velocity updates applied / gate-rejected.
    pub zero_velocity_applied: u64,
    pub zero_velocity_rejected: u64,
    /// Zero-angular-rate updates applied / gate-rejected.
    pub zero_rate_applied: u64,
    pub zero_rate_rejected: u64,
    /// Vehicle-constraint updates applied / gate-rejected / suspended.
    pub lateral_applied: u64,
    pub lateral_rejected: u64,
    pub lateral_suspended: u64,
    /// Wall-clock run time (s).
    pub wall_time_s: f64,
}

/// Numerical-health tallies gathered once per epoch on top of the hard
/// checks inside the filter math (which abort the run on failure).
#[derive(Clone, Copy, Debug, Default, Serialize, Deserialize)]
pub struct HealthReport {
    /// Covariance checks performed / failed.
    pub covariance_checks: u64,
    pub covariance_violations: u64,
    /// Attitude orthonormality checks performed / failed.
    pub attitude_checks: u64,
    pub attitude_violations: u64,
    /// Worst attitude orthonormality error seen.
    pub max_attitude_error: f64,
    /// Worst covariance asymmetry seen.
    pub max_covariance_asymmetry: f64,
}

impl HealthReport {
    /// True when no check failed over the whole run.
    pub fn is_clean(&self) -> bool {
        self.covariance_violations == 0 && self.attitude_violations == 0
    }

    fn check_epoch(
        &mut self,
        nav: &NavState,
        efs: &ErrorFilterState,
        t: f64,
    ) -> Result<(), NavError> {
        self.attitude_checks += 1;
        let ortho = nav.attitude.orthonormality_error();
        self.max_attitude_error = self.max_attitude_error.max(ortho);
        if ortho > DCM_ORTHONORMALITY_LIMIT {
            self.attitude_violations += 1;
        }
        self.covariance_checks += 1;
        let p = &efs.covariance;
        let mut asym = 0.0f64;
        for i in 0..15 {
            for j in (i + 1)..15 {
                asym = asym.max((p[(i, j)] - p[(j, i)]).abs());
            }
        }
        self.max_covariance_asymmetry = self.max_covariance_asymmetry.max(asym);
        if let Err(e) = eskf::check_covariance(p, t) {
            self.covariance_violations += 1;
            return Err(e);
        }
        Ok(())
    }
}

/// Everything a filter run produces.
#[derive(Clone, Debug)]
pub struct FilterRun {
    /// Navigation solution: the leading state followed by one state per IMU
    /// epoch, corrections folded in.
    pub trajectory: Vec<NavState>,
    /// One record per wheel epoch; truth columns are left empty here and
    /// joined against a reference log by the evaluation layer.
    pub slip: Vec<SlipRecord>,
    /// Final IMU bias estimates (accelerometer, gyroscope).
    pub accel_bias: Vector3<f64>,
    pub gyro_bias: Vector3<f64>,
    /// Health tallies.
    pub health: HealthReport,
    /// Update counters and timing.
    pub stats: RunStats,
}

/// The dead-reckoning baselines.
#[derive(Clone, Debug)]
pub struct ComparatorRuns {
    /// Mechanization of the raw IMU, no corrections of any kind.
    pub direct_integration: Vec<NavState>,
    /// Differential-drive dead reckoning from the encoders alone.
    pub wheel_odometry: Vec<NavState>,
}

/// Epoch the navigation state starts at, one nominal interval before the
/// first IMU sample (timestamps mark the end of their integration
/// interval).
pub fn leading_epoch(imu: &[ImuSample]) -> Result<f64, NavError> {
    if imu.len() < 2 {
        return Err(NavError::EmptyStream { context: "imu" });
    }
    Ok(2.0 * imu[0].t - imu[1].t)
}

/// Runs the aided filter over in-memory sensor streams.
///
/// The wheel stream may be empty (scripted benchmark runs have no
/// encoders); wheel samples after the last IMU epoch are ignored.
pub fn run_filter(
    config: &PipelineConfig,
    imu: &[ImuSample],
    wheels: &[WheelSample],
    options: &RunOptions,
) -> Result<FilterRun, NavError> {
    let start = std::time::Instant::now();
    let model = config.ellipsoid.to_model();
    let t0 = leading_epoch(imu)?;
    let mut nav = config.initial_pose.to_state(t0);
    let mut efs = ErrorFilterState::new(&config.initial_uncertainty, &nav, &model);
    let mut detector = StationarityDetector::new(config.detector, &config.geometry);

    let gate3 = Some(chi_square_gate_999(3));
    let gate2 = Some(chi_square_gate_999(2));
    let r_zupt = SMatrix::<f64, 3, 3>::identity() * config.noise.r_zupt;
    let r_zaru = SMatrix::<f64, 3, 3>::identity() * config.noise.r_zaru;
    let r_nhc = SMatrix::<f64, 2, 2>::identity() * config.noise.r_nhc;

    let mut trajectory = Vec::with_capacity(imu.len() + 1);
    trajectory.push(nav);
    let mut slip = Vec::new();
    let mut stats = RunStats::default();
    let mut health = HealthReport::default();
    let mut wheel_cursor = 0usize;
    let mut current_class = SlipClass::NoSlip;

    for sample in imu {
        let prev = nav;
        let compensated = ImuSample {
            t: sample.t,
            specific_force: sample.specific_force - efs.accel_bias,
            angular_rate: sample.angular_rate - efs.gyro_bias,
        };

        // Strapdown step (validates the timestamp), then matched
        // propagation of the error state over the same interval.
        nav = mechanize_step(&prev, &compensated, &model, config.imu.max_gap_s)?;
        let tau = sample.t - prev.t;
        let f = system_matrix(&prev, &compensated.specific_force, &model)?;
        let phi = discretize(&f, tau);
        let q = process_noise(&prev, &config.noise, &f, tau);
        eskf::propagate(&mut efs, &phi, &q, sample.t)?;

        // Stationarity evidence and verdict at this epoch.
        detector.push_imu(sample);
        let verdict = detector.assess(sample.t);
        let (want_zupt, want_zaru) = match &options.zero_updates {
            ZeroUpdatePolicy::Off => (false, false),
            ZeroUpdatePolicy::Detected => (verdict.is_zero_velocity, verdict.is_zero_angular_rate),
            ZeroUpdatePolicy::Scripted(schedule) => {
                let on = schedule.is_active(sample.t);
                (on, on)
            }
        };

        let mut corrected = false;
        if want_zupt {
            let (dz, h) = zupt_measurement(&nav);
            match eskf::update(&mut efs, &h, &r_zupt, &dz, gate3, sample.t)? {
                UpdateOutcome::Applied { .. } => {
                    stats.zero_velocity_applied += 1;
                    corrected = true;
                }
                UpdateOutcome::Rejected { .. } => stats.zero_velocity_rejected += 1,
            }
        }
        if want_zaru {
            let (dz, h) = zaru_measurement(sample, &efs);
            match eskf::update(&mut efs, &h, &r_zaru, &dz, gate3, sample.t)? {
                UpdateOutcome::Applied { .. } => {
                    stats.zero_rate_applied += 1;
                    corrected = true;
                }
                UpdateOutcome::Rejected { .. } => stats.zero_rate_rejected += 1,
            }
        }
        if options.lateral_constraint {
            let yaw_rate = compensated.angular_rate[2].abs();
            if yaw_rate > config.nhc.yaw_rate_max
                || current_class.index() >= config.nhc.suspend_at_class_index
            {
                stats.lateral_suspended += 1;
            } else {
                let (dz, h) = nhc_measurement(&nav, &compensated, &config.geometry);
                match eskf::update(&mut efs, &h, &r_nhc, &dz, gate2, sample.t)? {
                    UpdateOutcome::Applied { .. } => {
                        stats.lateral_applied += 1;
                        corrected = true;
                    }
                    UpdateOutcome::Rejected { .. } => stats.lateral_rejected += 1,
                }
            }
        }
        if corrected {
            nav = correct_state(&nav, &mut efs)?;
        }

        health.check_epoch(&nav, &efs, sample.t)?;
        trajectory.push(nav);
        stats.imu_epochs += 1;

        // Wheel epochs up to the current time, each scored with the most
        // recent state at or before its timestamp.
        while wheel_cursor < wheels.len() && wheels[wheel_cursor].t <= sample.t {
            let w = &wheels[wheel_cursor];
            wheel_cursor += 1;
            detector.push_wheels(w);
            let state = if w.t >= sample.t { &nav } else { &prev };
            let v_x = (state.attitude.transposed() * state.velocity)[0];
            let ws = wheel_speed(w, config.geometry.wheel_radius);
            let ratio = slip_ratio(v_x, ws);
            let class = classify_with_no_slip_band(ratio, config.slip.no_slip_band);
            slip.push(SlipRecord {
                t: w.t,
                ratio,
                class,
                v_x,
                wheel_speed: ws,
                truth_ratio: None,
                truth_class: None,
            });
            current_class = class;
            stats.wheel_epochs += 1;
        }
    }

    stats.wall_time_s = start.elapsed().as_secs_f64();
    Ok(FilterRun {
        trajectory,
        slip,
        accel_bias: efs.accel_bias,
        gyro_bias: efs.gyro_bias,
        health,
        stats,
    })
}

/// Direct-integration baseline: mechanize the raw IMU from the configured
/// initial pose with no corrections.
pub fn run_direct_integration(
    config: &PipelineConfig,
    imu: &[ImuSample],
) -> Result<Vec<NavState>, NavError> {
    let model = config.ellipsoid.to_model();
    let t0 = leading_epoch(imu)?;
    let mut nav = config.initial_pose.to_state(t0);
    let mut trajectory = Vec::with_capacity(imu.len() + 1);
    trajectory.push(nav);
    for sample in imu {
        nav = mechanize_step(&nav, sample, &model, config.imu.max_gap_s)?;
        trajectory.push(nav);
    }
    Ok(trajectory)
}

/// Wheel-odometry baseline: differential-drive dead reckoning. Heading
/// integrates the left/right wheel-speed difference over the track width;
/// position integrates mean wheel speed along that heading on the
/// ellipsoid. Flat attitude (roll = pitch = 0) throughout.
///
/// Each sample's speed and yaw rate are held constant until the next sample
/// (zero-order hold looking forward). `t0` anchors the initial pose; pass
/// the leading epoch of the IMU stream so all three estimators share a time
/// base. Samples at or before `t0` contribute motion to hold but no state
/// of their own.
pub fn run_wheel_odometry(
    config: &PipelineConfig,
    wheels: &[WheelSample],
    t0: f64,
) -> Result<Vec<NavState>, NavError> {
    let model = config.ellipsoid.to_model();
    let initial = config.initial_pose.to_state(t0);
    let mut yaw = config.initial_pose.yaw_deg.to_radians();
    let mut position = initial.position;
    let mut t = t0;
    let mut held: Option<(f64, f64)> = None;
    let mut last_seen = f64::NEG_INFINITY;
    let mut trajectory = Vec::with_capacity(wheels.len() + 1);
    trajectory.push(initial);
    for w in wheels {
        if w.t <= last_seen {
            return Err(NavError::NonMonotonicTime { state_t: last_seen, t: w.t });
        }
        last_seen = w.t;
        let current = (
            wheel_speed(w, config.geometry.wheel_radius),
            odometry_yaw_rate(w, config.geometry.wheel_radius, config.geometry.track),
        );
        if w.t <= t0 {
            held = Some(current);
            continue;
        }
        // No sample at or before the anchor: fall back to the current one.
        let (speed, rate) = held.unwrap_or(current);
        let dt = w.t - t;
        let yaw_new = yaw + rate * dt;
        let v_start = Vector3::new(speed * yaw.cos(), speed * yaw.sin(), 0.0);
        let v_end = Vector3::new(speed * yaw_new.cos(), speed * yaw_new.sin(), 0.0);
        position = position_update(&position, &v_start, &v_end, dt, &model);
        yaw = yaw_new;
        t = w.t;
        held = Some(current);
        trajectory.push(NavState::new(
            t,
            euler_to_dcm(&Euler::new(0.0, 0.0, yaw)),
            v_end,
            position,
        ));
    }
    Ok(trajectory)
}

/// Both dead-reckoning baselines over the same streams the filter sees.
pub fn run_comparators(
    config: &PipelineConfig,
    imu: &[ImuSample],
    wheels: &[WheelSample],
) -> Result<ComparatorRuns, NavError> {
    let direct_integration = run_direct_integration(config, imu)?;
    let t0 = leading_epoch(imu)?;
    let wheel_odometry = run_wheel_odometry(config, wheels, t0)?;
    Ok(ComparatorRuns { direct_integration, wheel_odometry })
}
