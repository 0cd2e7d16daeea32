//! Coordinate frames and topocentric geometry.
//!
//! TEME -> ECEF uses the GMST rotation only (no polar motion, no nutation):
//! the residual error is far below the resolution of a 123-pixel sky map.

use chrono::{DateTime, TimeZone, Utc};
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const EARTH_RADIUS_KM: f64 = 6378.137;
const WGS84_F: f64 = 1.0 / 298.257223563;

pub type Vec3 = [f64; 3];

pub fn dot(a: &Vec3, b: &Vec3) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

pub fn norm(a: &Vec3) -> f64 {
    dot(a, a).sqrt()
}

pub fn sub(a: &Vec3, b: &Vec3) -> Vec3 {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

pub fn scale(a: &Vec3, s: f64) -> Vec3 {
    [a[0] * s, a[1] * s, a[2] * s]
}

/// Ground point on the WGS-84 ellipsoid.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ObserverLocation {
    /// Degrees, [-90, 90].
    pub latitude: f64,
    /// Degrees, [-180, 180].
    pub longitude: f64,
    /// Meters above the ellipsoid.
    pub altitude_m: f64,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeometryError {
    #[error("latitude {0} out of [-90, 90]")]
    Latitude(f64),
    #[error("longitude {0} out of [-180, 180]")]
    Longitude(f64),
}

impl ObserverLocation {
    pub fn new(latitude: f64, longitude: f64, altitude_m: f64) -> Result<Self, GeometryError> {
        if !(-90.0..=90.0).contains(&latitude) {
            return Err(GeometryError::Latitude(latitude));
        }
        if !(-180.0..=180.0).contains(&longitude) {
            return Err(GeometryError::Longitude(longitude));
        }
        Ok(Self {
            latitude,
            longitude,
            altitude_m,
        })
    }

    /// Position in the Earth-fixed frame, km.
    pub fn ecef(&self) -> Vec3 {
        let lat = self.latitude.to_radians();
        let lon = self.longitude.to_radians();
        let e2 = WGS84_F * (2.0 - WGS84_F);
        let n = EARTH_RADIUS_KM / (1.0 - e2 * lat.sin().powi(2)).sqrt();
        let h = self.altitude_m / 1000.0;
        [
            (n + h) * lat.cos() * lon.cos(),
            (n + h) * lat.cos() * lon.sin(),
            (n * (1.0 - e2) + h) * lat.sin(),
        ]
    }

    /// Local east, north, up unit vectors in ECEF.
    pub fn enu_basis(&self) -> (Vec3, Vec3, Vec3) {
        let lat = self.latitude.to_radians();
        let lon = self.longitude.to_radians();
        let east = [-lon.sin(), lon.cos(), 0.0];
        let north = [-lat.sin() * lon.cos(), -lat.sin() * lon.sin(), lat.cos()];
        let up = [lat.cos() * lon.cos(), lat.cos() * lon.sin(), lat.sin()];
        (east, north, up)
    }
}

/// Elevation/azimuth/range as seen from a ground point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Topocentric {
    /// Degrees above the horizon, [-90, 90].
    pub elevation: f64,
    /// Degrees clockwise from true north, [0, 360).
    pub azimuth: f64,
    /// Kilometers.
    pub range_km: f64,
}

/// Days since the J2000.0 epoch (2000-01-01 12:00 UTC).
pub fn days_since_j2000(t: DateTime<Utc>) -> f64 {
    let j2000 = Utc.with_ymd_and_hms(2000, 1, 1, 12, 0, 0).unwrap();
    (t - j2000).num_milliseconds() as f64 / 86_400_000.0
}

/// Greenwich mean sidereal time, radians in [0, 2pi).
pub fn gmst(t: DateTime<Utc>) -> f64 {
    let d = days_since_j2000(t);
    let tc = d / 36525.0;
    let deg = 280.460_618_37 + 360.985_647_366_29 * d + 0.000_387_933 * tc * tc
        - tc * tc * tc / 38_710_000.0;
    deg.rem_euclid(360.0).to_radians()
}

/// Rotate a TEME position into the Earth-fixed frame.
pub fn teme_to_ecef(position_teme: &Vec3, t: DateTime<Utc>) -> Vec3 {
    let theta = gmst(t);
    let (s, c) = theta.sin_cos();
    [
        c * position_teme[0] + s * position_teme[1],
        -s * position_teme[0] + c * position_teme[1],
        position_teme[2],
    ]
}

/// Inverse of [`teme_to_ecef`] at the same instant.
pub fn ecef_to_teme(position_ecef: &Vec3, t: DateTime<Utc>) -> Vec3 {
    let theta = gmst(t);
    let (s, c) = theta.sin_cos();
    [
        c * position_ecef[0] - s * position_ecef[1],
        s * position_ecef[0] + c * position_ecef[1],
        position_ecef[2],
    ]
}

pub fn normalize_azimuth(deg: f64) -> f64 {
    let a = deg.rem_euclid(360.0);
    if a >= 360.0 {
        0.0
    } else {
        a
    }
}

/// Look angles from an observer to an ECEF position.
pub fn look_angles_ecef(position_ecef: &Vec3, obs: &ObserverLocation) -> Topocentric {
    let site = obs.ecef();
    let rho = sub(position_ecef, &site);
    let (east, north, up) = obs.enu_basis();
    let e = dot(&rho, &east);
    let n = dot(&rho, &north);
    let u = dot(&rho, &up);
    let range_km = norm(&rho);
    let elevation = (u / range_km).asin().to_degrees();
    let azimuth = normalize_azimuth(e.atan2(n).to_degrees());
    Topocentric {
        elevation,
        azimuth,
        range_km,
    }
}

/// ECEF position a given look angle and range away from the observer.
/// Exact inverse of [`look_angles_ecef`].
pub fn position_from_look_angles(topo: &Topocentric, obs: &ObserverLocation) -> Vec3 {
    let site = obs.ecef();
    let (east, north, up) = obs.enu_basis();
    let el = topo.elevation.to_radians();
    let az = topo.azimuth.to_radians();
    let e = topo.range_km * el.cos() * az.sin();
    let n = topo.range_km * el.cos() * az.cos();
    let u = topo.range_km * el.sin();
    [
        site[0] + e * east[0] + n * north[0] + u * up[0],
        site[1] + e * east[1] + n * north[1] + u * up[1],
        site[2] + e * east[2] + n * north[2] + u * up[2],
    ]
}

/// Geodetic altitude above the WGS-84 ellipsoid, km (iterative, mm-level).
pub fn geodetic_altitude_km(position_ecef: &Vec3) -> f64 {
    let e2 = WGS84_F * (2.0 - WGS84_F);
    let p = (position_ecef[0].powi(2) + position_ecef[1].powi(2)).sqrt();
    let mut lat = position_ecef[2].atan2(p * (1.0 - e2));
    let mut h = 0.0;
    for _ in 0..6 {
        let n = EARTH_RADIUS_KM / (1.0 - e2 * lat.sin().powi(2)).sqrt();
        h = p / lat.cos() - n;
        lat = position_ecef[2].atan2(p * (1.0 - e2 * n / (n + h)));
    }
    h
}
