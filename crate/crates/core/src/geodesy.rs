//! WGS-84 frames and the single-layer ionospheric mapping factor.

use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const WGS84_A: f64 = 6_378_137.0;
pub const WGS84_F: f64 = 1.0 / 298.257_223_563;
pub const WGS84_E2: f64 = WGS84_F * (2.0 - WGS84_F);

/// Mean Earth radius of the ionospheric shell model, meters.
pub const IONO_EARTH_RADIUS: f64 = 6_371_000.0;
/// Height of the single ionospheric layer, meters.
pub const IONO_SHELL_HEIGHT: f64 = 450_000.0;

/// Positions closer than this to the geocenter are rejected.
const MIN_RADIUS: f64 = 6_300_000.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GeodeticPosition {
    /// Radians.
    pub latitude: f64,
    /// Radians.
    pub longitude: f64,
    /// Meters above the ellipsoid.
    pub height: f64,
}

impl GeodeticPosition {
    pub fn new(latitude: f64, longitude: f64, height: f64) -> Self {
        Self {
            latitude,
            longitude,
            height,
        }
    }

    pub fn from_degrees(lat_deg: f64, lon_deg: f64, height: f64) -> Self {
        Self::new(lat_deg.to_radians(), lon_deg.to_radians(), height)
    }

    pub fn to_ecef(&self) -> Vector3<f64> {
        geodetic_to_ecef(self)
    }
}

pub fn geodetic_to_ecef(g: &GeodeticPosition) -> Vector3<f64> {
    let (sl, cl) = g.latitude.sin_cos();
    let (so, co) = g.longitude.sin_cos();
    let n = WGS84_A / (1.0 - WGS84_E2 * sl * sl).sqrt();
    Vector3::new(
        (n + g.height) * cl * co,
        (n + g.height) * cl * so,
        (n * (1.0 - WGS84_E2) + g.height) * sl,
    )
}

/// ECEF to geodetic by fixed-point iteration on latitude.
pub fn ecef_to_geodetic(p: &Vector3<f64>) -> Result<GeodeticPosition> {
    let norm = p.norm();
    if !(norm > MIN_RADIUS) {
        return Err(Error::DegeneratePosition { norm });
    }
    let rho = p.x.hypot(p.y);
    let longitude = p.y.atan2(p.x);
    // Bowring's initial guess is within a few micro-radians; the loop polishes it.
    let b = WGS84_A * (1.0 - WGS84_F);
    let ep2 = WGS84_E2 / (1.0 - WGS84_E2);
    let beta = (WGS84_A * p.z).atan2(b * rho);
    let (sb, cb) = beta.sin_cos();
    let mut lat = (p.z + ep2 * b * sb.powi(3)).atan2(rho - WGS84_E2 * WGS84_A * cb.powi(3));
    let mut height = 0.0;
    for _ in 0..10 {
        let (sl, cl) = lat.sin_cos();
        let n = WGS84_A / (1.0 - WGS84_E2 * sl * sl).sqrt();
        height = if cl.abs() > 1e-10 {
            rho / cl - n
        } else {
            p.z.abs() - n * (1.0 - WGS84_E2)
        };
        let next = p.z.atan2(rho * (1.0 - WGS84_E2 * n / (n + height)));
        let done = (next - lat).abs() < 1e-15;
        lat = next;
        if done {
            break;
        }
    }
    Ok(GeodeticPosition::new(lat, longitude, height))
}

/// Rotation taking ECEF vectors into the local North-East-Down frame.
pub fn ned_rotation(g: &GeodeticPosition) -> Matrix3<f64> {
    let (sl, cl) = g.latitude.sin_cos();
    let (so, co) = g.longitude.sin_cos();
    Matrix3::new(
        -sl * co,
        -sl * so,
        cl, //
        -so,
        co,
        0.0, //
        -cl * co,
        -cl * so,
        -sl,
    )
}

/// Single-layer ionospheric mapping factor `1 / sqrt(1 - (Re cos(el) / (Re + h))^2)`.
pub fn iono_mapping_factor(elevation: f64) -> f64 {
    let ratio = IONO_EARTH_RADIUS * elevation.cos() / (IONO_EARTH_RADIUS + IONO_SHELL_HEIGHT);
    1.0 / (1.0 - ratio * ratio).sqrt()
}

/// Elevation of `target` seen from `observer`, both ECEF.
pub fn elevation_angle(observer: &Vector3<f64>, target: &Vector3<f64>) -> Result<f64> {
    let g = ecef_to_geodetic(observer)?;
    let d = ned_rotation(&g) * (target - observer);
    let range = d.norm();
    if range == 0.0 {
        return Err(Error::ZeroRange);
    }
    Ok((-d.z / range).asin())
}
