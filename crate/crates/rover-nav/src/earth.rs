//! Ellipsoid geometry, gravity, and frame bookkeeping.
//!
//! Everything downstream (mechanization, error filter, simulator) works in a
//! local-level NED navigation frame over a rotating ellipsoid. This module
//! owns the ellipsoid constants, the meridian/transverse radii of curvature,
//! the normal-gravity model, the Earth-rate and transport-rate vectors, and
//! the direction-cosine-matrix plumbing (Euler conversions, skew operators,
//! re-orthonormalization).
//!
//! Angles are radians and lengths are meters unless a name says otherwise.

use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use crate::NavError;

/// Latitude magnitude (rad) beyond which the curvilinear equations are
/// refused: `tan(L)` and `sec(L)` terms blow up approaching the poles.
pub const POLAR_LATITUDE_LIMIT: f64 = 89.9 * std::f64::consts::PI / 180.0;

/// Maximum allowed departure of `C^T C` from identity for a matrix that
/// claims to be a direction cosine matrix.
pub const DCM_ORTHONORMALITY_TOL: f64 = 1e-9;

/// Reference ellipsoid plus normal-gravity constants.
///
/// The defaults describe WGS-84; every field is plain data so a different
/// body (or a simplified spherical model for desk checks) can be swapped in
/// through configuration.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EllipsoidModel {
    /// Semi-major axis (m).
    pub semi_major_axis: f64,
    /// First eccentricity squared (dimensionless).
    pub eccentricity_squared: f64,
    /// Body rotation rate (rad/s).
    pub rotation_rate: f64,
    /// Normal gravity at the equator on the surface (m/s^2).
    pub equatorial_gravity: f64,
    /// Somigliana constant `k` in `g0 = ge (1 + k sin^2 L)/sqrt(1 - e^2 sin^2 L)`.
    pub somigliana_constant: f64,
}

impl EllipsoidModel {
    /// WGS-84, the default Earth model.
    pub const fn wgs84() -> Self {
        EllipsoidModel {
            semi_major_axis: 6378137.0,
            eccentricity_squared: 0.00669437999014,
            rotation_rate: 7.292115e-5,
            equatorial_gravity: 9.7803253359,
            somigliana_constant: 1.931852646396755e-3,
        }
    }
}

impl Default for EllipsoidModel {
    fn default() -> Self {
        Self::wgs84()
    }
}

/// Curvilinear position: geodetic latitude (rad), longitude (rad), and
/// height above the ellipsoid (m).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GeoPosition {
    pub latitude: f64,
    pub longitude: f64,
    pub height: f64,
}

impl GeoPosition {
    pub fn new(latitude: f64, longitude: f64, height: f64) -> Self {
        GeoPosition { latitude, longitude, height }
    }
}

/// Roll, pitch, yaw (rad) of the body frame with respect to NED, applied in
/// yaw-pitch-roll order when building a body-to-nav DCM.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Euler {
    pub roll: f64,
    pub pitch: f64,
    pub yaw: f64,
}

impl Euler {
    pub fn new(roll: f64, pitch: f64, yaw: f64) -> Self {
        Euler { roll, pitch, yaw }
    }
}

/// Body-to-nav direction cosine matrix.
///
/// The wrapped matrix rotates body-frame vectors into NED. Constructors
/// guarantee orthonormality to well under [`DCM_ORTHONORMALITY_TOL`];
/// [`Dcm::renormalized`] applies the single symmetric correction step used
/// after every attitude integration.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Dcm(Matrix3<f64>);

impl Dcm {
    pub fn identity() -> Self {
        Dcm(Matrix3::identity())
    }

    /// Wraps a matrix that is already close to a rotation, polishing it with
    /// symmetric correction steps until the orthonormality residual is at
    /// floating-point noise level.
    pub fn from_matrix(m: Matrix3<f64>) -> Self {
        let mut c = Dcm(m);
        for _ in 0..8 {
            if c.orthonormality_error() < 1e-13 {
                break;
            }
            c = c.renormalized();
        }
        c
    }

    /// The raw body-to-nav matrix.
    pub fn matrix(&self) -> &Matrix3<f64> {
        &self.0
    }

    /// Nav-to-body matrix (the transpose).
    pub fn transposed(&self) -> Matrix3<f64> {
        self.0.transpose()
    }

    /// Rotates a body-frame vector into the nav frame.
    pub fn rotate(&self, v: &Vector3<f64>) -> Vector3<f64> {
        self.0 * v
    }

    /// Rotates a nav-frame vector into the body frame.
    pub fn rotate_back(&self, v: &Vector3<f64>) -> Vector3<f64> {
        self.0.transpose() * v
    }

    /// One symmetric correction step, `C <- C (3I - C^T C) / 2`. Applied
    /// after every attitude update; drives the orthonormality error of a
    /// near-rotation down quadratically.
    pub fn renormalized(&self) -> Dcm {
        let correction = (Matrix3::identity() * 3.0 - self.0.transpose() * self.0) * 0.5;
        Dcm(self.0 * correction)
    }

    /// Max-abs element of `C^T C - I`.
    pub fn orthonormality_error(&self) -> f64 {
        let e = self.0.transpose() * self.0 - Matrix3::identity();
        e.iter().fold(0.0f64, |acc, x| acc.max(x.abs()))
    }
}

/// Skew-symmetric cross-product matrix: `skew(a) * b == a.cross(&b)`.
pub fn skew(v: &Vector3<f64>) -> Matrix3<f64> {
    let mut m = Matrix3::zeros();
    m[(0, 1)] = -v[2];
    m[(0, 2)] = v[1];
    m[(1, 0)] = v[2];
    m[(1, 2)] = -v[0];
    m[(2, 0)] = -v[1];
    m[(2, 1)] = v[0];
    m
}

/// Meridian and transverse radii of curvature `(r_north, r_east)` at
/// geodetic latitude `lat`.
///
/// `r_north` governs north motion to latitude rate, `r_east` east motion to
/// longitude rate (after the `cos L` factor) and is also the radius used for
/// the prime-vertical direction.
pub fn radii_of_curvature(lat: f64, model: &EllipsoidModel) -> (f64, f64) {
    let s2 = lat.sin() * lat.sin();
    let den = 1.0 - model.eccentricity_squared * s2;
    let r_north = model.semi_major_axis * (1.0 - model.eccentricity_squared) / den.powf(1.5);
    let r_east = model.semi_major_axis / den.sqrt();
    (r_north, r_east)
}

/// Geocentric-ish surface radius used for the vertical gravity gradient term
/// of the error dynamics.
pub fn surface_radius(lat: f64, model: &EllipsoidModel) -> f64 {
    let (_, r_east) = radii_of_curvature(lat, model);
    let (s, c) = lat.sin_cos();
    let ome2 = 1.0 - model.eccentricity_squared;
    r_east * (c * c + ome2 * ome2 * s * s).sqrt()
}

/// Somigliana normal gravity at latitude `lat` on the surface (m/s^2, down).
pub fn surface_gravity(lat: f64, model: &EllipsoidModel) -> f64 {
    let s2 = lat.sin() * lat.sin();
    model.equatorial_gravity * (1.0 + model.somigliana_constant * s2)
        / (1.0 - model.eccentricity_squared * s2).sqrt()
}

/// Plumb-line gravity in NED at a curvilinear position: `(0, 0, g)` with the
/// surface value scaled by the first-order free-air height factor
/// `1 - 2h/a`, so gravity decreases with height.
pub fn gravity_nav(pos: &GeoPosition, model: &EllipsoidModel) -> Vector3<f64> {
    let g0 = surface_gravity(pos.latitude, model);
    let g = g0 * (1.0 - 2.0 * pos.height / model.semi_major_axis);
    Vector3::new(0.0, 0.0, g)
}

/// Earth rotation rate resolved in NED: `omega_ie (cos L, 0, -sin L)`.
pub fn earth_rate_nav(lat: f64, model: &EllipsoidModel) -> Vector3<f64> {
    let (s, c) = lat.sin_cos();
    Vector3::new(model.rotation_rate * c, 0.0, -model.rotation_rate * s)
}

/// Transport rate: rotation of the NED frame with respect to the
/// Earth-fixed frame caused by moving over the curved surface,
/// `(v_E/(R_E+h), -v_N/(R_N+h), -v_E tan L/(R_E+h))`.
///
/// Refused beyond [`POLAR_LATITUDE_LIMIT`] where the `tan L` term degrades.
pub fn transport_rate(
    pos: &GeoPosition,
    vel_ned: &Vector3<f64>,
    model: &EllipsoidModel,
) -> Result<Vector3<f64>, NavError> {
    if pos.latitude.abs() > POLAR_LATITUDE_LIMIT {
        return Err(NavError::PolarRegion { latitude_deg: pos.latitude.to_degrees() });
    }
    let (r_north, r_east) = radii_of_curvature(pos.latitude, model);
    Ok(Vector3::new(
        vel_ned[1] / (r_east + pos.height),
        -vel_ned[0] / (r_north + pos.height),
        -vel_ned[1] * pos.latitude.tan() / (r_east + pos.height),
    ))
}

/// Builds the body-to-nav DCM from roll, pitch, yaw (yaw about down, then
/// pitch, then roll).
pub fn euler_to_dcm(e: &Euler) -> Dcm {
    let (sr, cr) = e.roll.sin_cos();
    let (sp, cp) = e.pitch.sin_cos();
    let (sy, cy) = e.yaw.sin_cos();
    let mut m = Matrix3::zeros();
    m[(0, 0)] = cy * cp;
    m[(0, 1)] = cy * sp * sr - sy * cr;
    m[(0, 2)] = cy * sp * cr + sy * sr;
    m[(1, 0)] = sy * cp;
    m[(1, 1)] = sy * sp * sr + cy * cr;
    m[(1, 2)] = sy * sp * cr - cy * sr;
    m[(2, 0)] = -sp;
    m[(2, 1)] = cp * sr;
    m[(2, 2)] = cp * cr;
    Dcm(m)
}

/// Recovers roll, pitch, yaw from a body-to-nav DCM with the
/// `atan2`/`asin` element pattern:
/// `roll = atan2(C32, C33)`, `pitch = asin(-C31)`, `yaw = atan2(C21, C11)`.
///
/// Fails within ~1e-6 rad of pitch = +/-90 deg where roll and yaw become
/// indistinct.
pub fn dcm_to_euler(c: &Dcm) -> Result<Euler, NavError> {
    let m = c.matrix();
    let s_pitch = -m[(2, 0)];
    if s_pitch.abs() > 1.0 - 1e-12 {
        return Err(NavError::GimbalLock);
    }
    Ok(Euler {
        roll: m[(2, 1)].atan2(m[(2, 2)]),
        pitch: s_pitch.asin(),
        yaw: m[(1, 0)].atan2(m[(0, 0)]),
    })
}
