//! Ground-truth scenario simulator.
//!
//! Builds kinematically exact truth trajectories from motion segments, then
//! works the strapdown equations backwards to produce the IMU stream that
//! reproduces the truth when mechanized forward — the module's defining
//! round-trip property. Wheel-encoder streams come from the same truth with
//! slip injected by inverting the slip-ratio definition, so the detector's
//! input carries a recoverable label at every epoch.
//!
//! Segment transitions are deliberately sharp (one-sample velocity steps):
//! the synthesized specific force simply carries the spike, which stays
//! well inside sensor range at rover speeds and exercises the filter's
//! transition handling.

use nalgebra::Vector3;
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::earth::{
    earth_rate_nav, euler_to_dcm, gravity_nav, skew, transport_rate, EllipsoidModel, Euler,
    GeoPosition,
};
use crate::eskf::NoiseConfig;
use crate::mech::{position_update, ImuSample, NavState};
use crate::pseudo::VehicleGeometry;
use crate::slip::WheelSample;

/// Hard ceiling on commanded segment speed (m/s): generous headroom over a
/// skid-steer rover's 0.8 m/s maximum.
pub const MAX_SEGMENT_SPEED: f64 = 2.0;

/// Motion primitive of one scenario segment.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SegmentKind {
    /// Parked: zero velocity and angular rate.
    Stop,
    /// Constant speed along the current heading.
    Straight,
    /// Constant speed and constant yaw rate.
    Arc,
}

/// One piece of the commanded trajectory. Speeds are body-forward m/s, yaw
/// rate rad/s (positive turning right), slip the injected ratio held
/// constant over the segment.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Segment {
    pub kind: SegmentKind,
    /// Seconds; rounded to whole IMU intervals.
    pub duration: f64,
    #[serde(default)]
    pub speed: f64,
    #[serde(default)]
    pub yaw_rate: f64,
    #[serde(default)]
    pub slip: f64,
}

impl Segment {
    pub fn stop(duration: f64) -> Self {
        Segment { kind: SegmentKind::Stop, duration, speed: 0.0, yaw_rate: 0.0, slip: 0.0 }
    }

    pub fn straight(duration: f64, speed: f64, slip: f64) -> Self {
        Segment { kind: SegmentKind::Straight, duration, speed, yaw_rate: 0.0, slip }
    }

    pub fn arc(duration: f64, speed: f64, yaw_rate: f64, slip: f64) -> Self {
        Segment { kind: SegmentKind::Arc, duration, speed, yaw_rate, slip }
    }
}

/// Complete description of a simulated run: platform start pose, sensor
/// rates, IMU error model, and the commanded segment list.
///
/// The `noise` field reuses the filter's density configuration; only the
/// PSD entries matter here (the measurement variances are filter-side).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ScenarioSpec {
    pub imu_rate_hz: f64,
    pub wheel_rate_hz: f64,
    pub latitude_deg: f64,
    pub longitude_deg: f64,
    pub height_m: f64,
    pub initial_yaw_deg: f64,
    /// Constant accelerometer bias (m/s^2, body axes).
    pub accel_bias: [f64; 3],
    /// Constant gyro bias (rad/s, body axes).
    pub gyro_bias: [f64; 3],
    /// Let the injected biases random-walk with the configured bias PSDs
    /// instead of staying constant.
    pub bias_random_walk: bool,
    pub noise: NoiseConfig,
    pub seed: u64,
    pub segments: Vec<Segment>,
}

impl Default for ScenarioSpec {
    fn default() -> Self {
        ScenarioSpec {
            imu_rate_hz: 50.0,
            wheel_rate_hz: 10.0,
            latitude_deg: 39.9,
            longitude_deg: -105.1,
            height_m: 1655.0,
            initial_yaw_deg: 0.0,
            accel_bias: [0.0; 3],
            gyro_bias: [0.0; 3],
            bias_random_walk: false,
            noise: NoiseConfig::default(),
            seed: 0,
            segments: Vec::new(),
        }
    }
}

impl ScenarioSpec {
    pub fn duration(&self) -> f64 {
        self.segments.iter().map(|s| s.duration).sum()
    }

    pub fn start_position(&self) -> GeoPosition {
        GeoPosition::new(
            self.latitude_deg.to_radians(),
            self.longitude_deg.to_radians(),
            self.height_m,
        )
    }

    pub fn validate(&self) -> Result<(), NavError> {
        if !(self.imu_rate_hz > 0.0) || !(self.wheel_rate_hz > 0.0) {
            return Err(invalid("sensor rates must be positive"));
        }
        let ratio = self.imu_rate_hz / self.wheel_rate_hz;
        if (ratio - ratio.round()).abs() > 1e-9 || ratio < 1.0 {
            return Err(invalid(
                "imu rate must be an integer multiple of the wheel rate",
            ));
        }
        if self.segments.is_empty() {
            return Err(invalid("scenario needs at least one segment"));
        }
        for (i, seg) in self.segments.iter().enumerate() {
            if !(seg.duration > 0.0) {
                return Err(invalid(&format!("segment {i}: duration must be positive")));
            }
            if seg.speed < 0.0 || seg.speed > MAX_SEGMENT_SPEED {
                return Err(invalid(&format!(
                    "segment {i}: speed {} outside [0, {MAX_SEGMENT_SPEED}] m/s",
                    seg.speed
                )));
            }
            if seg.slip.abs() >= 1.0 {
                return Err(invalid(&format!(
                    "segment {i}: injected slip must satisfy |s| < 1"
                )));
            }
            if seg.kind == SegmentKind::Stop && (seg.speed != 0.0 || seg.yaw_rate != 0.0) {
                return Err(invalid(&format!(
                    "segment {i}: stop segments take no speed or yaw rate"
                )));
            }
        }
        Ok(())
    }
}

use crate::NavError;

fn invalid(reason: &str) -> NavError {
    NavError::InvalidScenario { reason: reason.to_string() }
}

/// Truth at one wheel-encoder epoch.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct WheelTruth {
    pub t: f64,
    /// True longitudinal body velocity (m/s).
    pub v_x: f64,
    /// Mean circumferential wheel speed after slip injection (m/s).
    pub r_omega: f64,
    /// Injected slip ratio.
    pub slip: f64,
    /// True yaw rate (rad/s).
    pub yaw_rate: f64,
}

/// Ground truth of one scenario: navigation states at every IMU epoch and
/// slip-labeled kinematics at every wheel epoch.
#[derive(Clone, Debug)]
pub struct TruthLog {
    /// Epochs 0..=N at the IMU rate; `states[k].t == k / imu_rate`.
    pub states: Vec<NavState>,
    pub wheel_truth: Vec<WheelTruth>,
    pub imu_rate_hz: f64,
}

/// Per-epoch command derived from the segment list.
#[derive(Clone, Copy, Debug)]
struct EpochCommand {
    speed: f64,
    yaw_rate: f64,
    slip: f64,
}

fn epoch_commands(spec: &ScenarioSpec) -> Vec<EpochCommand> {
    let rate = spec.imu_rate_hz;
    let mut per_epoch = Vec::new();
    for seg in &spec.segments {
        let n = (seg.duration * rate).round().max(1.0) as usize;
        let cmd = EpochCommand { speed: seg.speed, yaw_rate: seg.yaw_rate, slip: seg.slip };
        per_epoch.extend(std::iter::repeat(cmd).take(n));
    }
    // Command for the final fencepost epoch: hold the last segment.
    let last = *per_epoch.last().expect("validated: at least one segment");
    per_epoch.push(last);
    per_epoch
}

/// Integrate the commanded segments into an exact truth trajectory.
///
/// Attitude stays flat (zero roll/pitch); yaw integrates the commanded
/// rate. Velocity is the commanded speed along the instantaneous heading.
/// Positions are advanced with the same trapezoidal curvilinear rule the
/// mechanization uses, which is what makes the synthesis round-trip exact.
pub fn generate_truth(spec: &ScenarioSpec, model: &EllipsoidModel) -> Result<TruthLog, NavError> {
    spec.validate()?;
    let rate = spec.imu_rate_hz;
    let tau = 1.0 / rate;
    let commands = epoch_commands(spec);
    let n_epochs = commands.len();

    let mut states = Vec::with_capacity(n_epochs);
    let mut yaw = spec.initial_yaw_deg.to_radians();
    let mut position = spec.start_position();
    let mut prev_velocity = Vector3::zeros();
    for (k, cmd) in commands.iter().enumerate() {
        let t = k as f64 / rate;
        let (sin_y, cos_y) = yaw.sin_cos();
        let velocity = Vector3::new(cmd.speed * cos_y, cmd.speed * sin_y, 0.0);
        if k > 0 {
            position = position_update(&position, &prev_velocity, &velocity, tau, model);
        }
        let attitude = euler_to_dcm(&Euler::new(0.0, 0.0, yaw));
        states.push(NavState::new(t, attitude, velocity, position));
        // Advance heading for the next epoch using this interval's command.
        yaw += cmd.yaw_rate * tau;
        prev_velocity = velocity;
    }

    let step = (rate / spec.wheel_rate_hz).round() as usize;
    let mut wheel_truth = Vec::new();
    let mut k = 0;
    while k < n_epochs {
        let cmd = commands[k];
        let v_x = cmd.speed;
        let r_omega = injected_wheel_speed(v_x, cmd.slip);
        wheel_truth.push(WheelTruth {
            t: k as f64 / rate,
            v_x,
            r_omega,
            slip: if v_x == 0.0 { 0.0 } else { cmd.slip },
            yaw_rate: cmd.yaw_rate,
        });
        k += step;
    }
    Ok(TruthLog { states, wheel_truth, imu_rate_hz: rate })
}

/// Circumferential wheel speed that realizes slip `s` at body speed `v`:
/// the slip-ratio definition solved for the wheel side.
fn injected_wheel_speed(v: f64, s: f64) -> f64 {
    if s > 0.0 {
        v / (1.0 - s)
    } else {
        v * (1.0 + s)
    }
}

/// Recover the body rate and specific force that drive one truth interval,
/// by inverting the discrete attitude and velocity updates.
fn invert_interval(
    a: &NavState,
    b: &NavState,
    tau: f64,
    model: &EllipsoidModel,
) -> Result<(Vector3<f64>, Vector3<f64>), NavError> {
    let earth = earth_rate_nav(a.position.latitude, model);
    let transport = transport_rate(&a.position, &a.velocity, model)?;
    let omega_nav = skew(&(earth)) + skew(&transport);
    let c = a.attitude.matrix();
    // Attitude: C+ = C (I + [w x] tau) - Omega C tau, solved for [w x];
    // the skew part discards the symmetric residue of renormalization.
    let m = (c.transpose() * (b.attitude.matrix() + omega_nav * c * tau)
        - nalgebra::Matrix3::identity())
        / tau;
    let w = Vector3::new(
        0.5 * (m[(2, 1)] - m[(1, 2)]),
        0.5 * (m[(0, 2)] - m[(2, 0)]),
        0.5 * (m[(1, 0)] - m[(0, 1)]),
    );
    // Velocity: v+ = v + (C f + g - (w_en + 2 w_ie) x v) tau, solved for f.
    let g = gravity_nav(&a.position, model);
    let coriolis = (transport + earth * 2.0).cross(&a.velocity);
    let f_nav = (b.velocity - a.velocity) / tau - g + coriolis;
    let f = c.transpose() * f_nav;
    Ok((w, f))
}

/// Synthesize the IMU stream for a truth log: ideal inversion of the
/// mechanization per interval, then constant (or random-walking) bias plus
/// seeded white noise with per-sample standard deviation `sqrt(PSD / tau)`.
///
/// Sample `k` carries timestamp `states[k+1].t` — it describes the interval
/// that ends there, matching how the mechanization consumes it.
pub fn synthesize_imu(
    truth: &TruthLog,
    spec: &ScenarioSpec,
    model: &EllipsoidModel,
) -> Result<Vec<ImuSample>, NavError> {
    let tau = 1.0 / truth.imu_rate_hz;
    let sigma_f = (spec.noise.accel_noise_psd / tau).sqrt();
    let sigma_w = (spec.noise.gyro_noise_psd / tau).sqrt();
    let walk_f = (spec.noise.accel_bias_psd * tau).sqrt();
    let walk_w = (spec.noise.gyro_bias_psd * tau).sqrt();
    let mut rng = ChaCha12Rng::seed_from_u64(spec.seed);
    let mut bias_f = Vector3::new(spec.accel_bias[0], spec.accel_bias[1], spec.accel_bias[2]);
    let mut bias_w = Vector3::new(spec.gyro_bias[0], spec.gyro_bias[1], spec.gyro_bias[2]);

    let mut samples = Vec::with_capacity(truth.states.len().saturating_sub(1));
    for pair in truth.states.windows(2) {
        let (w_ideal, f_ideal) = invert_interval(&pair[0], &pair[1], tau, model)?;
        let mut draw = |sigma: f64| -> f64 {
            let z: f64 = StandardNormal.sample(&mut rng);
            z * sigma
        };
        let f_noise = Vector3::new(draw(sigma_f), draw(sigma_f), draw(sigma_f));
        let w_noise = Vector3::new(draw(sigma_w), draw(sigma_w), draw(sigma_w));
        samples.push(ImuSample {
            t: pair[1].t,
            specific_force: f_ideal + bias_f + f_noise,
            angular_rate: w_ideal + bias_w + w_noise,
        });
        if spec.bias_random_walk {
            bias_f += Vector3::new(draw(walk_f), draw(walk_f), draw(walk_f));
            bias_w += Vector3::new(draw(walk_w), draw(walk_w), draw(walk_w));
        }
    }
    Ok(samples)
}

/// Synthesize noise-free encoder readings with the injected slip.
///
/// Wheel speeds are differential across the track for arcs; each side's
/// circumferential speed realizes the segment slip, so the mean recovers
/// the injected ratio exactly and the odometry yaw rate is inflated by
/// 1/(1-s) during positive slip — the classic skid-steer heading error.
pub fn synthesize_wheels(
    truth: &TruthLog,
    geom: &VehicleGeometry,
) -> Vec<WheelSample> {
    truth
        .wheel_truth
        .iter()
        .map(|wt| {
            let half_track = 0.5 * geom.track;
            let v_left = wt.v_x + wt.yaw_rate * half_track;
            let v_right = wt.v_x - wt.yaw_rate * half_track;
            let s = wt.slip;
            let rate_left = injected_wheel_speed(v_left, s) / geom.wheel_radius;
            let rate_right = injected_wheel_speed(v_right, s) / geom.wheel_radius;
            WheelSample::new(wt.t, [rate_left, rate_right, rate_left, rate_right])
        })
        .collect()
}

/// Half-open time windows `[start, end)` during which zero updates are
/// commanded regardless of the stationarity detector.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct UpdateSchedule {
    pub windows: Vec<(f64, f64)>,
}

impl UpdateSchedule {
    pub fn is_active(&self, t: f64) -> bool {
        self.windows.iter().any(|&(a, b)| t >= a && t < b)
    }
}

/// The static benchmark protocol: a parked rover observed for 300 s with
/// zero updates enabled for exactly one 0.02 s filter step at t = 40, 80,
/// 120 and 160 s, then held active from t = 200 s to the end.
///
/// The injected biases are turn-on-sized (milli-g accelerometer,
/// hundredths-of-deg/s gyro) so the free INS drift dwarfs what the sparse
/// updates can remove; the seed only varies the noise.
pub fn static_toy_scenario(seed: u64) -> (ScenarioSpec, UpdateSchedule) {
    let spec = ScenarioSpec {
        accel_bias: [8.0e-3, -6.0e-3, 1.0e-2],
        gyro_bias: [3.0e-4, -2.5e-4, 3.5e-4],
        seed,
        segments: vec![Segment::stop(300.0)],
        ..ScenarioSpec::default()
    };
    let tau = 1.0 / spec.imu_rate_hz;
    let schedule = UpdateSchedule {
        windows: vec![
            (40.0, 40.0 + tau),
            (80.0, 80.0 + tau),
            (120.0, 120.0 + tau),
            (160.0, 160.0 + tau),
            (200.0, f64::INFINITY),
        ],
    };
    (spec, schedule)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::earth::radii_of_curvature;
    use crate::mech::mechanize_step;
    use crate::slip::slip_ratio;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    const WGS84: EllipsoidModel = EllipsoidModel::wgs84();

    fn quiet_spec(segments: Vec<Segment>) -> ScenarioSpec {
        ScenarioSpec {
            noise: NoiseConfig {
                accel_noise_psd: 0.0,
                gyro_noise_psd: 0.0,
                accel_bias_psd: 0.0,
                gyro_bias_psd: 0.0,
                ..NoiseConfig::default()
            },
            segments,
            ..ScenarioSpec::default()
        }
    }

    #[test]
    fn validation_rejects_out_of_bounds_specs() {
        let fast = quiet_spec(vec![Segment::straight(5.0, 2.5, 0.0)]);
        assert!(matches!(fast.validate(), Err(NavError::InvalidScenario { .. })));
        let slippery = quiet_spec(vec![Segment::straight(5.0, 0.5, 1.0)]);
        assert!(slippery.validate().is_err());
        let instant = quiet_spec(vec![Segment::stop(0.0)]);
        assert!(instant.validate().is_err());
        let empty = quiet_spec(vec![]);
        assert!(empty.validate().is_err());
        let mut misrated = quiet_spec(vec![Segment::stop(1.0)]);
        misrated.wheel_rate_hz = 7.0;
        assert!(misrated.validate().is_err());
        assert!(quiet_spec(vec![Segment::stop(1.0)]).validate().is_ok());
    }

    #[test]
    fn stop_segment_truth_is_motionless() {
        let spec = quiet_spec(vec![Segment::stop(5.0)]);
        let truth = generate_truth(&spec, &WGS84).unwrap();
        assert_eq!(truth.states.len(), 251);
        let first = &truth.states[0];
        for s in &truth.states {
            assert_eq!(s.velocity, Vector3::zeros());
            assert_eq!(s.position, first.position);
            assert_eq!(s.attitude.matrix(), first.attitude.matrix());
        }
        for wt in &truth.wheel_truth {
            assert_eq!(wt.r_omega, 0.0);
            assert_eq!(wt.slip, 0.0);
        }
    }

    #[test]
    fn straight_segment_displaces_along_heading() {
        let mut spec = quiet_spec(vec![Segment::straight(10.0, 1.0, 0.0)]);
        spec.initial_yaw_deg = 30.0;
        let truth = generate_truth(&spec, &WGS84).unwrap();
        let start = &truth.states[0];
        let end = truth.states.last().unwrap();
        let (r_n, r_e) = radii_of_curvature(start.position.latitude, &WGS84);
        let north = (end.position.latitude - start.position.latitude)
            * (r_n + start.position.height);
        let east = (end.position.longitude - start.position.longitude)
            * (r_e + start.position.height)
            * start.position.latitude.cos();
        let yaw = 30.0f64.to_radians();
        assert_relative_eq!(north, 10.0 * yaw.cos(), epsilon = 1e-3);
        assert_relative_eq!(east, 10.0 * yaw.sin(), epsilon = 1e-3);
        assert_relative_eq!(north.hypot(east), 10.0, epsilon = 1e-3);
    }

    #[test]
    fn arc_segment_integrates_heading_exactly() {
        let spec = quiet_spec(vec![Segment::arc(12.0, 0.5, 0.25, 0.0)]);
        let truth = generate_truth(&spec, &WGS84).unwrap();
        let final_yaw = crate::earth::dcm_to_euler(&truth.states.last().unwrap().attitude)
            .unwrap()
            .yaw;
        assert_relative_eq!(final_yaw, 0.25 * 12.0, epsilon = 1e-9);
    }

    #[test]
    fn stationary_synthesis_round_trips_through_mechanization() {
        let spec = quiet_spec(vec![Segment::stop(20.0)]);
        let truth = generate_truth(&spec, &WGS84).unwrap();
        let imu = synthesize_imu(&truth, &spec, &WGS84).unwrap();
        assert_eq!(imu.len(), 1000);
        // The ideal stationary readings: gravity reaction and earth rate.
        let g = gravity_nav(&truth.states[0].position, &WGS84);
        let c_t = truth.states[0].attitude.transposed();
        assert_relative_eq!(imu[0].specific_force, -(c_t * g), epsilon = 1e-9);
        let w_expected = c_t * earth_rate_nav(truth.states[0].position.latitude, &WGS84);
        assert_relative_eq!(imu[0].angular_rate, w_expected, epsilon = 1e-12);

        let mut nav = truth.states[0].clone();
        for s in &imu {
            nav = mechanize_step(&nav, s, &WGS84, 0.1).unwrap();
        }
        let last = truth.states.last().unwrap();
        assert!(nav.velocity.norm() < 1e-10);
        assert!((nav.position.latitude - last.position.latitude).abs() < 1e-12);
        assert!((nav.position.longitude - last.position.longitude).abs() < 1e-12);
        assert!((nav.position.height - last.position.height).abs() < 1e-8);
    }

    #[test]
    fn moving_synthesis_round_trips_within_centimeter() {
        // Mixed 60 s course: stop, accelerate, arc, straight, stop.
        let spec = quiet_spec(vec![
            Segment::stop(5.0),
            Segment::straight(15.0, 0.8, 0.0),
            Segment::arc(20.0, 0.5, 0.15, 0.0),
            Segment::straight(15.0, 0.8, 0.0),
            Segment::stop(5.0),
        ]);
        let truth = generate_truth(&spec, &WGS84).unwrap();
        let imu = synthesize_imu(&truth, &spec, &WGS84).unwrap();
        let mut nav = truth.states[0].clone();
        for s in &imu {
            nav = mechanize_step(&nav, s, &WGS84, 0.1).unwrap();
        }
        let last = truth.states.last().unwrap();
        let (r_n, r_e) = radii_of_curvature(last.position.latitude, &WGS84);
        let dn = (nav.position.latitude - last.position.latitude) * (r_n + last.position.height);
        let de = (nav.position.longitude - last.position.longitude)
            * (r_e + last.position.height)
            * last.position.latitude.cos();
        let dh = nav.position.height - last.position.height;
        let err = (dn * dn + de * de + dh * dh).sqrt();
        assert!(err < 0.01, "round-trip position error {err} m");
        assert!((nav.velocity - last.velocity).norm() < 1e-3);
    }

    #[test]
    fn noise_only_velocity_error_follows_random_walk_statistics() {
        // Accel white noise only: after T seconds the ensemble std of each
        // horizontal velocity component approaches sqrt(S_ra * T).
        let horizon = 10.0;
        let mut errs = Vec::new();
        for seed in 0..100u64 {
            let mut spec = quiet_spec(vec![Segment::stop(horizon)]);
            spec.noise.accel_noise_psd = NoiseConfig::default().accel_noise_psd;
            spec.seed = seed;
            let truth = generate_truth(&spec, &WGS84).unwrap();
            let imu = synthesize_imu(&truth, &spec, &WGS84).unwrap();
            let mut nav = truth.states[0].clone();
            for s in &imu {
                nav = mechanize_step(&nav, s, &WGS84, 0.1).unwrap();
            }
            errs.push(nav.velocity[0]);
        }
        let n = errs.len() as f64;
        let mean = errs.iter().sum::<f64>() / n;
        let std =
            (errs.iter().map(|e| (e - mean) * (e - mean)).sum::<f64>() / (n - 1.0)).sqrt();
        let expected = (NoiseConfig::default().accel_noise_psd * horizon).sqrt();
        assert!(
            (std - expected).abs() < 0.2 * expected,
            "ensemble std {std:.3e} vs expected {expected:.3e}"
        );
    }

    #[test]
    fn wheel_synthesis_inverts_slip_definition() {
        let spec = quiet_spec(vec![
            Segment::stop(2.0),
            Segment::straight(5.0, 0.4, 0.5),
            Segment::straight(5.0, 0.8, -0.3),
            Segment::arc(5.0, 0.5, 0.2, 0.1),
        ]);
        let truth = generate_truth(&spec, &WGS84).unwrap();
        let geom = VehicleGeometry::default();
        let wheels = synthesize_wheels(&truth, &geom);
        assert_eq!(wheels.len(), truth.wheel_truth.len());
        for (ws, wt) in wheels.iter().zip(&truth.wheel_truth) {
            let r_omega = crate::slip::wheel_speed(ws, geom.wheel_radius);
            assert_relative_eq!(r_omega, wt.r_omega, epsilon = 1e-12);
            let recovered = slip_ratio(wt.v_x, r_omega);
            assert!(
                (recovered - wt.slip).abs() < 1e-9,
                "t={} recovered {recovered} vs injected {}",
                wt.t,
                wt.slip
            );
        }
        // Spot values: s=0.5 at 0.4 m/s demands 0.8 m/s of wheel speed.
        let in_high_slip = truth
            .wheel_truth
            .iter()
            .find(|wt| wt.slip == 0.5)
            .expect("has a 0.5-slip epoch");
        assert_relative_eq!(in_high_slip.r_omega, 0.8, epsilon = 1e-12);
    }

    #[test]
    fn arc_wheels_are_differential_and_inflate_odometry_yaw() {
        let spec = quiet_spec(vec![Segment::arc(5.0, 0.5, 0.2, 0.0)]);
        let truth = generate_truth(&spec, &WGS84).unwrap();
        let geom = VehicleGeometry::default();
        let wheels = synthesize_wheels(&truth, &geom);
        let w = &wheels[2];
        assert!(w.rates[0] > w.rates[1]); // left faster in a right turn
        assert_relative_eq!(
            crate::slip::odometry_yaw_rate(w, geom.wheel_radius, geom.track),
            0.2,
            epsilon = 1e-12
        );
        // With traction slip the odometry yaw rate reads high by 1/(1-s).
        let spec_slip = quiet_spec(vec![Segment::arc(5.0, 0.5, 0.2, 0.25)]);
        let truth_slip = generate_truth(&spec_slip, &WGS84).unwrap();
        let wheels_slip = synthesize_wheels(&truth_slip, &geom);
        assert_relative_eq!(
            crate::slip::odometry_yaw_rate(&wheels_slip[2], geom.wheel_radius, geom.track),
            0.2 / 0.75,
            epsilon = 1e-12
        );
    }

    #[test]
    fn synthesis_is_seed_deterministic() {
        let mut spec = quiet_spec(vec![Segment::stop(2.0), Segment::straight(3.0, 0.5, 0.0)]);
        spec.noise = NoiseConfig::default();
        spec.seed = 42;
        let truth = generate_truth(&spec, &WGS84).unwrap();
        let a = synthesize_imu(&truth, &spec, &WGS84).unwrap();
        let b = synthesize_imu(&truth, &spec, &WGS84).unwrap();
        assert_eq!(a.len(), b.len());
        for (x, y) in a.iter().zip(&b) {
            assert_eq!(x.t.to_bits(), y.t.to_bits());
            for i in 0..3 {
                assert_eq!(x.specific_force[i].to_bits(), y.specific_force[i].to_bits());
                assert_eq!(x.angular_rate[i].to_bits(), y.angular_rate[i].to_bits());
            }
        }
        let mut other = spec.clone();
        other.seed = 43;
        let c = synthesize_imu(&truth, &other, &WGS84).unwrap();
        assert!(a
            .iter()
            .zip(&c)
            .any(|(x, y)| x.specific_force != y.specific_force));
    }

    #[test]
    fn toy_scenario_schedule_matches_protocol() {
        let (spec, schedule) = static_toy_scenario(1);
        assert_eq!(spec.imu_rate_hz, 50.0);
        assert_relative_eq!(spec.duration(), 300.0, epsilon = 1e-12);
        assert_eq!(spec.segments.len(), 1);
        assert_eq!(spec.segments[0].kind, SegmentKind::Stop);

        for start in [40.0, 80.0, 120.0, 160.0] {
            assert!(schedule.is_active(start));
            // Exactly one sample epoch inside each pulse.
            let next_epoch = ((start * 50.0) as u64 + 1) as f64 / 50.0;
            assert!(!schedule.is_active(next_epoch), "pulse at {start} spans one step");
            assert!(!schedule.is_active(start - 0.02));
        }
        assert!(schedule.is_active(200.0));
        assert!(schedule.is_active(262.74));
        assert!(schedule.is_active(300.0));
        assert!(!schedule.is_active(199.98));
        assert!(!schedule.is_active(39.0));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(48))]
        #[test]
        fn truth_log_invariants_hold_for_random_segments(
            parts in proptest::collection::vec(
                (0u8..3, 0.4f64..1.5, 0.1f64..0.8, -0.2f64..0.2, -0.6f64..0.6),
                1..4,
            ),
        ) {
            let segments: Vec<Segment> = parts
                .iter()
                .map(|&(kind, dur, speed, yaw, slip)| match kind {
                    0 => Segment::stop(dur),
                    1 => Segment::straight(dur, speed, slip),
                    _ => Segment::arc(dur, speed, yaw, slip),
                })
                .collect();
            let spec = quiet_spec(segments);
            let truth = generate_truth(&spec, &WGS84).unwrap();
            // Monotone time at the IMU rate.
            for pair in truth.states.windows(2) {
                prop_assert!(pair[1].t > pair[0].t);
            }
            // Wheel-truth inversion identity at every epoch.
            let geom = VehicleGeometry::default();
            let wheels = synthesize_wheels(&truth, &geom);
            for (ws, wt) in wheels.iter().zip(&truth.wheel_truth) {
                let r_omega = crate::slip::wheel_speed(ws, geom.wheel_radius);
                let recovered = slip_ratio(wt.v_x, r_omega);
                prop_assert!((recovered - wt.slip).abs() < 1e-9);
            }
        }
    }
}
