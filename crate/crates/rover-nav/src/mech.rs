//! Strapdown inertial mechanization in the local NED frame.
//!
//! One IMU sample advances the navigation state through three first-order
//! stages: attitude (rate integration with Earth-rate and transport-rate
//! compensation, then one re-orthonormalization step), velocity (specific
//! force rotated into NED plus gravity minus the Coriolis and transport
//! terms), and curvilinear position (trapezoidal, height before latitude
//! before longitude so each stage sees the freshest companion values).

use nalgebra::{Matrix3, Vector3};

use crate::earth::{
    earth_rate_nav, euler_to_dcm, gravity_nav, radii_of_curvature, skew, transport_rate, Dcm,
    EllipsoidModel, Euler, GeoPosition,
};
use crate::NavError;

/// One inertial sample: timestamp (s), specific force in the body frame
/// (m/s^2), angular rate of body with respect to inertial, body axes
/// (rad/s).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ImuSample {
    pub t: f64,
    pub specific_force: Vector3<f64>,
    pub angular_rate: Vector3<f64>,
}

/// Full navigation state at an instant: body-to-nav attitude, NED velocity
/// (m/s), curvilinear position, timestamp (s).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct NavState {
    pub t: f64,
    pub attitude: Dcm,
    pub velocity: Vector3<f64>,
    pub position: GeoPosition,
}

impl NavState {
    pub fn new(t: f64, attitude: Dcm, velocity: Vector3<f64>, position: GeoPosition) -> Self {
        NavState { t, attitude, velocity, position }
    }

    /// State at rest with a given attitude and position.
    pub fn stationary(t: f64, euler: &Euler, position: GeoPosition) -> Self {
        NavState { t, attitude: euler_to_dcm(euler), velocity: Vector3::zeros(), position }
    }
}

/// First-order attitude integration:
/// `C+ = C (I + [w x] tau) - ([w_ie x] + [w_en x]) C tau`,
/// followed by one symmetric re-orthonormalization step.
pub fn attitude_update(
    c: &Dcm,
    angular_rate: &Vector3<f64>,
    earth_rate: &Vector3<f64>,
    transport: &Vector3<f64>,
    tau: f64,
) -> Dcm {
    let m = c.matrix();
    let body_term = m * (Matrix3::identity() + skew(angular_rate) * tau);
    let frame_term = (skew(earth_rate) + skew(transport)) * m * tau;
    Dcm::from_matrix(body_term - frame_term).renormalized()
}

/// Velocity integration:
/// `v+ = v + (C f + g(L, h) - ([w_en x] + 2 [w_ie x]) v) tau`,
/// with the attitude, gravity, and rate vectors taken at the start of the
/// interval.
pub fn velocity_update(
    velocity: &Vector3<f64>,
    specific_force: &Vector3<f64>,
    c: &Dcm,
    position: &GeoPosition,
    earth_rate: &Vector3<f64>,
    transport: &Vector3<f64>,
    tau: f64,
    model: &EllipsoidModel,
) -> Vector3<f64> {
    let f_nav = c.rotate(specific_force);
    let g = gravity_nav(position, model);
    let coriolis = (skew(transport) + skew(earth_rate) * 2.0) * velocity;
    velocity + (f_nav + g - coriolis) * tau
}

/// Trapezoidal curvilinear position integration, height first, then
/// latitude, then longitude:
///
/// `h+ = h - (v_D- + v_D+) tau / 2`
/// `L+ = L + tau/2 [ v_N-/(R_N(L-)+h-) + v_N+/(R_N(L-)+h+) ]`
/// `lon+ = lon + tau/2 [ v_E-/((R_E(L-)+h-) cos L-) + v_E+/((R_E(L-)+h+) cos L+) ]`
///
/// Radii are evaluated at the starting latitude; the second trapezoid leg
/// uses the just-updated height and latitude.
pub fn position_update(
    position: &GeoPosition,
    velocity_minus: &Vector3<f64>,
    velocity_plus: &Vector3<f64>,
    tau: f64,
    model: &EllipsoidModel,
) -> GeoPosition {
    let (r_north, r_east) = radii_of_curvature(position.latitude, model);
    let h_minus = position.height;
    let h_plus = h_minus - (velocity_minus[2] + velocity_plus[2]) * tau / 2.0;
    let lat_minus = position.latitude;
    let lat_plus = lat_minus
        + tau / 2.0
            * (velocity_minus[0] / (r_north + h_minus) + velocity_plus[0] / (r_north + h_plus));
    let lon_plus = position.longitude
        + tau / 2.0
            * (velocity_minus[1] / ((r_east + h_minus) * lat_minus.cos())
                + velocity_plus[1] / ((r_east + h_plus) * lat_plus.cos()));
    GeoPosition { latitude: lat_plus, longitude: lon_plus, height: h_plus }
}

/// Advances the navigation state by one IMU sample (already bias
/// compensated). The step length is taken from the timestamps and must be
/// positive and no longer than `max_step`.
pub fn mechanize_step(
    state: &NavState,
    imu: &ImuSample,
    model: &EllipsoidModel,
    max_step: f64,
) -> Result<NavState, NavError> {
    let tau = imu.t - state.t;
    if tau <= 0.0 {
        return Err(NavError::NonMonotonicTime { state_t: state.t, t: imu.t });
    }
    if tau > max_step {
        return Err(NavError::SampleGap { t: imu.t, gap: tau, max: max_step });
    }
    let earth_rate = earth_rate_nav(state.position.latitude, model);
    let transport = transport_rate(&state.position, &state.velocity, model)?;

    let attitude =
        attitude_update(&state.attitude, &imu.angular_rate, &earth_rate, &transport, tau);
    let velocity = velocity_update(
        &state.velocity,
        &imu.specific_force,
        &state.attitude,
        &state.position,
        &earth_rate,
        &transport,
        tau,
        model,
    );
    let position = position_update(&state.position, &state.velocity, &velocity, tau, model);
    Ok(NavState { t: imu.t, attitude, velocity, position })
}
