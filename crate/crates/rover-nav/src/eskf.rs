//! 15-state error-state Kalman filter around the strapdown solution.
//!
//! The error vector stacks attitude error (rad, NED axes), velocity error
//! (m/s, NED), curvilinear position error (rad, rad, m), accelerometer bias
//! (m/s^2), and gyro bias (rad/s), in that order. Between updates the error
//! estimate is zero (closed loop) and only the covariance carries
//! information; updates estimate a fresh error which `correct_state` folds
//! into the navigation state and the persistent bias estimates before
//! zeroing the vector again.
//!
//! The linearized dynamics are the standard curvilinear local-nav-frame
//! Jacobians; the transition matrix is the first-order discretization
//! `Phi = I + F tau`, and the process noise couples the white-noise and
//! bias-variation densities through the same blocks (`tau`, `tau^2/2`,
//! `tau^3/3`, ... factors).

use nalgebra::{Matrix3, SMatrix, SVector, Vector3};
use serde::{Deserialize, Serialize};

use crate::earth::{
    earth_rate_nav, radii_of_curvature, skew, surface_gravity, surface_radius, transport_rate,
    Dcm, EllipsoidModel,
};
use crate::mech::NavState;
use crate::NavError;

/// 15-element error vector.
pub type ErrorVector = SVector<f64, 15>;
/// 15 x 15 covariance / system matrix.
pub type StateMatrix = SMatrix<f64, 15, 15>;

/// Index of the first attitude-error component.
pub const ATT: usize = 0;
/// Index of the first velocity-error component.
pub const VEL: usize = 3;
/// Index of the first position-error component.
pub const POS: usize = 6;
/// Index of the first accelerometer-bias component.
pub const BA: usize = 9;
/// Index of the first gyro-bias component.
pub const BG: usize = 12;

/// Noise densities and measurement variances.
///
/// Power spectral densities are continuous-time: accel noise in
/// (m/s^2)^2 s, gyro noise in (rad/s)^2 s, bias-variation densities one
/// factor of s^2 further down. The defaults are derived from a
/// tactical-grade MEMS IMU datasheet:
///
/// * angular random walk 0.1 deg/sqrt(hr) -> (0.1 * pi/180 / 60)^2
/// * velocity random walk 0.008 m/s/sqrt(hr) -> (0.008 / 60)^2
/// * gyro in-run bias 1.6 deg/hr and accel in-run bias 3.2e-6 g, each
///   converted to SI and spread over a one-hour correlation time.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct NoiseConfig {
    /// Accelerometer white-noise PSD (m/s^2)^2 s.
    pub accel_noise_psd: f64,
    /// Gyro white-noise PSD (rad/s)^2 s.
    pub gyro_noise_psd: f64,
    /// Accelerometer bias-variation PSD (m/s^2)^2/s.
    pub accel_bias_psd: f64,
    /// Gyro bias-variation PSD (rad/s)^2/s.
    pub gyro_bias_psd: f64,
    /// Zero-velocity measurement variance per axis (m/s)^2.
    pub r_zupt: f64,
    /// Zero-angular-rate measurement variance per axis (rad/s)^2.
    pub r_zaru: f64,
    /// Non-holonomic-constraint measurement variance per axis (m/s)^2.
    pub r_nhc: f64,
}

impl Default for NoiseConfig {
    fn default() -> Self {
        NoiseConfig {
            accel_noise_psd: 1.7777777777777778e-8,
            gyro_noise_psd: 8.46159499407524e-10,
            accel_bias_psd: 2.735513151217777e-13,
            gyro_bias_psd: 1.6714261716691835e-14,
            r_zupt: 1e-4,   // (0.01 m/s)^2
            r_zaru: 4e-6,   // (0.002 rad/s)^2
            r_nhc: 2.5e-3,  // (0.05 m/s)^2
        }
    }
}

/// One-sigma initial uncertainties used to seed the covariance.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct InitialUncertainty {
    /// Attitude (rad), each axis.
    pub attitude_std: f64,
    /// Velocity (m/s), each axis.
    pub velocity_std: f64,
    /// Horizontal position (m), converted to angular variance at the
    /// initial position.
    pub horizontal_position_std: f64,
    /// Height (m).
    pub vertical_position_std: f64,
    /// Accelerometer bias (m/s^2).
    pub accel_bias_std: f64,
    /// Gyro bias (rad/s).
    pub gyro_bias_std: f64,
}

impl Default for InitialUncertainty {
    fn default() -> Self {
        InitialUncertainty {
            attitude_std: 1e-4,
            velocity_std: 0.01,
            horizontal_position_std: 1.0,
            vertical_position_std: 1.0,
            accel_bias_std: 3.1381279999999996e-5, // 3.2e-6 g
            gyro_bias_std: 7.757018897752577e-6,   // 1.6 deg/hr
        }
    }
}

/// Outcome of a measurement update.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum UpdateOutcome {
    /// Update folded into the error estimate.
    Applied { mahalanobis_sq: f64 },
    /// Innovation failed the chi-square gate; state untouched.
    Rejected { mahalanobis_sq: f64, threshold: f64 },
}

/// Error estimate, covariance, and the persistent IMU bias estimates.
#[derive(Clone, Debug, PartialEq)]
pub struct ErrorFilterState {
    /// Current error estimate; zero between updates.
    pub delta: ErrorVector,
    /// Error covariance.
    pub covariance: StateMatrix,
    /// Accumulated accelerometer bias estimate (m/s^2), subtracted from raw
    /// specific force before mechanization.
    pub accel_bias: Vector3<f64>,
    /// Accumulated gyro bias estimate (rad/s).
    pub gyro_bias: Vector3<f64>,
}

impl ErrorFilterState {
    /// Diagonal initial covariance at the given starting state. Horizontal
    /// position sigmas in meters are converted to latitude/longitude
    /// variances with the local curvature radii.
    pub fn new(initial: &InitialUncertainty, nav: &NavState, model: &EllipsoidModel) -> Self {
        let (r_north, r_east) = radii_of_curvature(nav.position.latitude, model);
        let lat_std = initial.horizontal_position_std / (r_north + nav.position.height);
        let lon_std = initial.horizontal_position_std
            / ((r_east + nav.position.height) * nav.position.latitude.cos());
        let mut p = StateMatrix::zeros();
        for i in 0..3 {
            p[(ATT + i, ATT + i)] = initial.attitude_std * initial.attitude_std;
            p[(VEL + i, VEL + i)] = initial.velocity_std * initial.velocity_std;
            p[(BA + i, BA + i)] = initial.accel_bias_std * initial.accel_bias_std;
            p[(BG + i, BG + i)] = initial.gyro_bias_std * initial.gyro_bias_std;
        }
        p[(POS, POS)] = lat_std * lat_std;
        p[(POS + 1, POS + 1)] = lon_std * lon_std;
        p[(POS + 2, POS + 2)] = initial.vertical_position_std * initial.vertical_position_std;
        ErrorFilterState {
            delta: ErrorVector::zeros(),
            covariance: p,
            accel_bias: Vector3::zeros(),
            gyro_bias: Vector3::zeros(),
        }
    }
}

/// Chi-square 99.9% quantile for small degree counts (the gate applied to
/// pseudo-measurement innovations).
pub fn chi_square_gate_999(dof: usize) -> f64 {
    match dof {
        1 => 10.827566170662733,
        2 => 13.815510557964274,
        3 => 16.26623619623813,
        // Wilson-Hilferty approximation for anything larger.
        n => {
            let k = n as f64;
            let z = 3.090232306167813; // standard normal 99.9% quantile
            let t = 1.0 - 2.0 / (9.0 * k) + z * (2.0 / (9.0 * k)).sqrt();
            k * t * t * t
        }
    }
}

fn set_block(m: &mut StateMatrix, row: usize, col: usize, b: &Matrix3<f64>) {
    for i in 0..3 {
        for j in 0..3 {
            m[(row + i, col + j)] = b[(i, j)];
        }
    }
}

fn get_block(m: &StateMatrix, row: usize, col: usize) -> Matrix3<f64> {
    let mut b = Matrix3::zeros();
    for i in 0..3 {
        for j in 0..3 {
            b[(i, j)] = m[(row + i, col + j)];
        }
    }
    b
}

/// Continuous-time error dynamics matrix F at the current state.
///
/// `specific_force` is the bias-compensated body-frame measurement for the
/// interval. Rows: attitude, velocity, position; bias rows are zero (random
/// walks driven purely by process noise).
pub fn system_matrix(
    nav: &NavState,
    specific_force: &Vector3<f64>,
    model: &EllipsoidModel,
) -> Result<StateMatrix, NavError> {
    let lat = nav.position.latitude;
    let h = nav.position.height;
    let v = nav.velocity;
    let (r_north, r_east) = radii_of_curvature(lat, model);
    let rn_h = r_north + h;
    let re_h = r_east + h;
    let (sin_l, cos_l) = lat.sin_cos();
    if lat.abs() > crate::earth::POLAR_LATITUDE_LIMIT {
        return Err(NavError::PolarRegion { latitude_deg: lat.to_degrees() });
    }
    let tan_l = sin_l / cos_l;
    let sec2_l = 1.0 / (cos_l * cos_l);
    let w_ie = model.rotation_rate;
    let earth = earth_rate_nav(lat, model);
    let transport = transport_rate(&nav.position, &v, model)?;
    let c = *nav.attitude.matrix();

    let f11 = -skew(&(earth + transport));
    let f12 = Matrix3::new(
        0.0, -1.0 / re_h, 0.0,
        1.0 / rn_h, 0.0, 0.0,
        0.0, tan_l / re_h, 0.0,
    );
    let f13 = Matrix3::new(
        w_ie * sin_l, 0.0, v[1] / (re_h * re_h),
        0.0, 0.0, -v[0] / (rn_h * rn_h),
        w_ie * cos_l + v[1] * sec2_l / re_h, 0.0, -v[1] * tan_l / (re_h * re_h),
    );
    let f21 = -skew(&(c * specific_force));
    let f22 = Matrix3::new(
        v[2] / rn_h, -2.0 * v[1] * tan_l / re_h - 2.0 * w_ie * sin_l, v[0] / rn_h,
        v[1] * tan_l / re_h + 2.0 * w_ie * sin_l, (v[0] * tan_l + v[2]) / re_h, v[1] / re_h + 2.0 * w_ie * cos_l,
        -2.0 * v[0] / rn_h, -2.0 * v[1] / re_h - 2.0 * w_ie * cos_l, 0.0,
    );
    let g0 = surface_gravity(lat, model);
    let r_s = surface_radius(lat, model);
    let f23 = Matrix3::new(
        -v[1] * v[1] * sec2_l / re_h - 2.0 * v[1] * w_ie * cos_l, 0.0,
        v[1] * v[1] * tan_l / (re_h * re_h) - v[0] * v[2] / (rn_h * rn_h),
        v[0] * v[1] * sec2_l / re_h + 2.0 * v[0] * w_ie * cos_l - 2.0 * v[2] * w_ie * sin_l, 0.0,
        -(v[0] * v[1] * tan_l + v[1] * v[2]) / (re_h * re_h),
        2.0 * v[1] * w_ie * sin_l, 0.0,
        v[1] * v[1] / (re_h * re_h) + v[0] * v[0] / (rn_h * rn_h) - 2.0 * g0 / r_s,
    );
    let f32 = Matrix3::new(
        1.0 / rn_h, 0.0, 0.0,
        0.0, 1.0 / (re_h * cos_l), 0.0,
        0.0, 0.0, -1.0,
    );
    let f33 = Matrix3::new(
        0.0, 0.0, -v[0] / (rn_h * rn_h),
        v[1] * sin_l / (re_h * cos_l * cos_l), 0.0, -v[1] / (re_h * re_h * cos_l),
        0.0, 0.0, 0.0,
    );

    let mut f = StateMatrix::zeros();
    set_block(&mut f, ATT, ATT, &f11);
    set_block(&mut f, ATT, VEL, &f12);
    set_block(&mut f, ATT, POS, &f13);
    set_block(&mut f, ATT, BG, &c);
    set_block(&mut f, VEL, ATT, &f21);
    set_block(&mut f, VEL, VEL, &f22);
    set_block(&mut f, VEL, POS, &f23);
    set_block(&mut f, VEL, BA, &c);
    set_block(&mut f, POS, VEL, &f32);
    set_block(&mut f, POS, POS, &f33);
    Ok(f)
}

/// First-order transition matrix `Phi = I + F tau`.
pub fn discretize(f: &StateMatrix, tau: f64) -> StateMatrix {
    StateMatrix::identity() + f * tau
}

/// Process-noise covariance over one step.
///
/// The white-noise densities enter the attitude/velocity/position rows
/// through the dynamics blocks of `f` (velocity picks up gyro noise through
/// the specific-force coupling, position through another integration), and
/// the bias-variation densities build the bias diagonals plus their cross
/// couplings. Symmetric by construction.
pub fn process_noise(
    nav: &NavState,
    noise: &NoiseConfig,
    f: &StateMatrix,
    tau: f64,
) -> StateMatrix {
    let c = *nav.attitude.matrix();
    let f21 = get_block(f, VEL, ATT);
    let t_rp = get_block(f, POS, VEL);
    let s_rg = noise.gyro_noise_psd;
    let s_ra = noise.accel_noise_psd;
    let s_bad = noise.accel_bias_psd;
    let s_bgd = noise.gyro_bias_psd;
    let i3 = Matrix3::identity();

    let t2 = tau * tau;
    let t3 = t2 * tau;
    let t4 = t3 * tau;
    let t5 = t4 * tau;

    let q11 = i3 * (s_rg * tau);
    let q21 = f21 * (0.5 * s_rg * t2);
    let q22 = i3 * (s_ra * tau) + f21 * f21.transpose() * (s_rg * t3 / 3.0);
    let q31 = t_rp * f21 * (s_rg * t3 / 3.0);
    let q32 = t_rp * (0.5 * s_ra * t2) + t_rp * f21 * f21.transpose() * (0.25 * s_rg * t4);
    let q33 = t_rp * t_rp.transpose() * (s_ra * t3 / 3.0)
        + t_rp * f21 * f21.transpose() * t_rp.transpose() * (s_rg * t5 / 5.0);
    let q15 = c * (0.5 * s_bgd * t2);
    let q24 = c * (0.5 * s_bad * t2);
    let q25 = f21 * c * (s_bgd * t3 / 3.0);
    let q34 = t_rp * c * (s_bad * t3 / 3.0);
    let q35 = t_rp * f21 * c * (0.25 * s_bgd * t4);
    let q44 = i3 * (s_bad * tau);
    let q55 = i3 * (s_bgd * tau);

    let mut q = StateMatrix::zeros();
    set_block(&mut q, ATT, ATT, &q11);
    set_block(&mut q, VEL, ATT, &q21);
    set_block(&mut q, ATT, VEL, &q21.transpose());
    set_block(&mut q, VEL, VEL, &q22);
    set_block(&mut q, POS, ATT, &q31);
    set_block(&mut q, ATT, POS, &q31.transpose());
    set_block(&mut q, POS, VEL, &q32);
    set_block(&mut q, VEL, POS, &q32.transpose());
    set_block(&mut q, POS, POS, &q33);
    set_block(&mut q, ATT, BG, &q15);
    set_block(&mut q, BG, ATT, &q15.transpose());
    set_block(&mut q, VEL, BA, &q24);
    set_block(&mut q, BA, VEL, &q24.transpose());
    set_block(&mut q, VEL, BG, &q25);
    set_block(&mut q, BG, VEL, &q25.transpose());
    set_block(&mut q, POS, BA, &q34);
    set_block(&mut q, BA, POS, &q34.transpose());
    set_block(&mut q, POS, BG, &q35);
    set_block(&mut q, BG, POS, &q35.transpose());
    set_block(&mut q, BA, BA, &q44);
    set_block(&mut q, BG, BG, &q55);
    symmetrized(&q)
}

fn symmetrized(m: &StateMatrix) -> StateMatrix {
    (m + m.transpose()) * 0.5
}

/// Symmetry, finiteness, and positive-semidefiniteness check.
///
/// Tolerances: max asymmetry 1e-12 (relative to nothing; the filter keeps
/// covariances exactly symmetric), minimum eigenvalue down to
/// `-1e-9 * trace`.
pub fn check_covariance(p: &StateMatrix, t: f64) -> Result<(), NavError> {
    if p.iter().any(|x| !x.is_finite()) {
        return Err(NavError::NonFinite { context: "covariance" });
    }
    let mut asym = 0.0f64;
    for i in 0..15 {
        for j in (i + 1)..15 {
            asym = asym.max((p[(i, j)] - p[(j, i)]).abs());
        }
    }
    let trace = p.trace();
    if asym > 1e-12 {
        return Err(NavError::CovarianceNotPsd { min_eigenvalue: -asym, trace, t });
    }
    let shift = 1e-9 * trace.abs();
    let shifted = p + StateMatrix::identity() * shift;
    if shifted.cholesky().is_some() {
        return Ok(());
    }
    // Borderline: decide with an exact symmetric eigendecomposition.
    let min_eig = p
        .symmetric_eigenvalues()
        .iter()
        .fold(f64::INFINITY, |a, &b| a.min(b));
    if min_eig < -1e-9 * trace.abs() {
        return Err(NavError::CovarianceNotPsd { min_eigenvalue: min_eig, trace, t });
    }
    Ok(())
}

/// Time propagation: `delta <- Phi delta`, `P <- Phi P Phi^T + Q`, then
/// symmetrization and a health check.
pub fn propagate(
    efs: &mut ErrorFilterState,
    phi: &StateMatrix,
    q: &StateMatrix,
    t: f64,
) -> Result<(), NavError> {
    efs.delta = phi * efs.delta;
    efs.covariance = symmetrized(&(phi * efs.covariance * phi.transpose() + q));
    check_covariance(&efs.covariance, t)
}

/// Measurement update with an optional chi-square gate.
///
/// `dz` is the innovation as built by the measurement constructors, `h` the
/// corresponding Jacobian, `r` the measurement covariance. When the
/// normalized innovation squared exceeds `gate`, the update is rejected and
/// the filter state is left untouched.
pub fn update<const K: usize>(
    efs: &mut ErrorFilterState,
    h: &SMatrix<f64, K, 15>,
    r: &SMatrix<f64, K, K>,
    dz: &SVector<f64, K>,
    gate: Option<f64>,
    t: f64,
) -> Result<UpdateOutcome, NavError> {
    let p = efs.covariance;
    let s = h * p * h.transpose() + r;
    let chol = s.cholesky().ok_or(NavError::SingularUpdate)?;
    let innovation = dz - h * efs.delta;
    let mahalanobis_sq = (innovation.transpose() * chol.solve(&innovation))[(0, 0)];
    if let Some(threshold) = gate {
        if mahalanobis_sq > threshold {
            return Ok(UpdateOutcome::Rejected { mahalanobis_sq, threshold });
        }
    }
    // K = P H^T S^-1, via S^-1 (H P) = K^T.
    let k_t = chol.solve(&(h * p));
    let k = k_t.transpose();
    efs.delta += k * innovation;
    efs.covariance = symmetrized(&((StateMatrix::identity() - k * h) * p));
    check_covariance(&efs.covariance, t)?;
    Ok(UpdateOutcome::Applied { mahalanobis_sq })
}

/// Closed-loop correction: folds the current error estimate into the
/// navigation state, accumulates the bias components into the persistent
/// bias estimates, and zeroes the error vector.
///
/// Attitude is corrected by `(I - [dpsi x])`, velocity and position by
/// removing the estimated errors. Reports gimbal lock if the corrected
/// attitude pitch lands on +/-90 deg.
pub fn correct_state(nav: &NavState, efs: &mut ErrorFilterState) -> Result<NavState, NavError> {
    let dpsi = Vector3::new(efs.delta[ATT], efs.delta[ATT + 1], efs.delta[ATT + 2]);
    let dv = Vector3::new(efs.delta[VEL], efs.delta[VEL + 1], efs.delta[VEL + 2]);
    let dp = Vector3::new(efs.delta[POS], efs.delta[POS + 1], efs.delta[POS + 2]);
    let dba = Vector3::new(efs.delta[BA], efs.delta[BA + 1], efs.delta[BA + 2]);
    let dbg = Vector3::new(efs.delta[BG], efs.delta[BG + 1], efs.delta[BG + 2]);

    let corrected = (Matrix3::identity() - skew(&dpsi)) * nav.attitude.matrix();
    let attitude = Dcm::from_matrix(corrected).renormalized();
    if attitude.matrix()[(2, 0)].abs() > 1.0 - 1e-12 {
        return Err(NavError::GimbalLock);
    }
    let velocity = nav.velocity - dv;
    let position = crate::earth::GeoPosition {
        latitude: nav.position.latitude - dp[0],
        longitude: nav.position.longitude - dp[1],
        height: nav.position.height - dp[2],
    };
    efs.accel_bias += dba;
    efs.gyro_bias += dbg;
    efs.delta = ErrorVector::zeros();
    Ok(NavState { t: nav.t, attitude, velocity, position })
}
