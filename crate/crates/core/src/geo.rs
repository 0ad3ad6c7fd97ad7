//! Great-circle geometry on a spherical Earth.
//!
//! Distances use the haversine formula on a sphere of mean radius
//! [`EARTH_RADIUS_KM`]. "Balls" are spherical caps of geodesic radius `R`.

use std::f64::consts::PI;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// IUGG mean Earth radius.
pub const EARTH_RADIUS_KM: f64 = 6371.0088;

/// A point on the globe in degrees.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GeoPoint {
    lat: f64,
    lon: f64,
}

impl GeoPoint {
    /// Builds a point, normalizing longitude into (-180, 180].
    pub fn new(lat: f64, lon: f64) -> Result<Self> {
        if !lat.is_finite() || !lon.is_finite() {
            return Err(Error::Validation(format!(
                "non-finite coordinate ({lat}, {lon})"
            )));
        }
        if !(-90.0..=90.0).contains(&lat) {
            return Err(Error::Validation(format!(
                "latitude {lat} outside [-90, 90]"
            )));
        }
        if !(-180.0..=180.0).contains(&lon) {
            return Err(Error::Validation(format!(
                "longitude {lon} outside [-180, 180]"
            )));
        }
        Ok(Self {
            lat,
            lon: wrap_lon(lon),
        })
    }

    /// Builds a point from any finite longitude, wrapping it into range.
    /// Latitude must still be valid.
    pub fn wrapped(lat: f64, lon: f64) -> Result<Self> {
        if !lon.is_finite() {
            return Err(Error::Validation(format!("non-finite longitude {lon}")));
        }
        Self::new(lat, wrap_lon(lon))
    }

    pub fn lat(&self) -> f64 {
        self.lat
    }

    pub fn lon(&self) -> f64 {
        self.lon
    }

    fn unit_vector(&self) -> [f64; 3] {
        let (phi, lambda) = (self.lat.to_radians(), self.lon.to_radians());
        [
            phi.cos() * lambda.cos(),
            phi.cos() * lambda.sin(),
            phi.sin(),
        ]
    }

    fn from_unit_vector(v: [f64; 3]) -> Self {
        let norm = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
        let z = (v[2] / norm).clamp(-1.0, 1.0);
        let lat = z.asin().to_degrees();
        let lon = if v[0] == 0.0 && v[1] == 0.0 {
            0.0
        } else {
            wrap_lon(v[1].atan2(v[0]).to_degrees())
        };
        Self { lat, lon }
    }
}

/// Wraps a longitude into (-180, 180].
pub fn wrap_lon(lon: f64) -> f64 {
    let mut l = (lon + 180.0).rem_euclid(360.0) - 180.0;
    if l <= -180.0 {
        l += 360.0;
    }
    l
}

/// Haversine great-circle distance in kilometres.
pub fn geodesic_km(a: GeoPoint, b: GeoPoint) -> f64 {
    let (p1, p2) = (a.lat.to_radians(), b.lat.to_radians());
    let dphi = p2 - p1;
    let dlambda = (b.lon - a.lon).to_radians();
    let h = (dphi / 2.0).sin().powi(2) + p1.cos() * p2.cos() * (dlambda / 2.0).sin().powi(2);
    2.0 * EARTH_RADIUS_KM * h.sqrt().min(1.0).asin()
}

/// Inclusive cap membership: `geodesic_km(p, center) <= radius_km`.
pub fn within_ball(p: GeoPoint, center: GeoPoint, radius_km: f64) -> Result<bool> {
    check_radius(radius_km)?;
    Ok(geodesic_km(p, center) <= radius_km)
}

pub(crate) fn check_radius(radius_km: f64) -> Result<()> {
    if radius_km > 0.0 && radius_km.is_finite() {
        Ok(())
    } else {
        Err(Error::Argument(format!(
            "radius must be positive, got {radius_km}"
        )))
    }
}

/// Surface area of a spherical cap of geodesic radius `radius_km`.
pub fn cap_area_km2(radius_km: f64) -> f64 {
    let theta = (radius_km / EARTH_RADIUS_KM).min(PI);
    2.0 * PI * EARTH_RADIUS_KM * EARTH_RADIUS_KM * (1.0 - theta.cos())
}

pub fn globe_area_km2() -> f64 {
    4.0 * PI * EARTH_RADIUS_KM * EARTH_RADIUS_KM
}

/// Draws a point uniformly (by surface area) from the cap of geodesic
/// radius `radius_km` around `center`.
pub fn sample_uniform_ball<R: Rng + ?Sized>(
    center: GeoPoint,
    radius_km: f64,
    rng: &mut R,
) -> Result<GeoPoint> {
    check_radius(radius_km)?;
    let theta_max = (radius_km / EARTH_RADIUS_KM).min(PI);
    // cos(theta) is uniform on [cos(theta_max), 1] for area-uniform caps.
    let cos_max = theta_max.cos();
    let u: f64 = rng.random();
    let cos_t = 1.0 - u * (1.0 - cos_max);
    let theta = cos_t.clamp(-1.0, 1.0).acos();
    let azimuth = rng.random::<f64>() * 2.0 * PI;
    let p = destination(center, theta, azimuth);
    // Floating error can place a boundary draw a hair outside the cap.
    if geodesic_km(p, center) > radius_km {
        return Ok(destination(center, theta * (1.0 - 1e-12), azimuth));
    }
    Ok(p)
}

/// Draws a point uniformly over the whole globe.
pub fn sample_uniform_globe<R: Rng + ?Sized>(rng: &mut R) -> GeoPoint {
    let z: f64 = 2.0 * rng.random::<f64>() - 1.0;
    let lon = rng.random::<f64>() * 360.0 - 180.0;
    GeoPoint {
        lat: z.asin().to_degrees(),
        lon: wrap_lon(lon),
    }
}

/// Point at angular distance `theta` (radians) along bearing `azimuth`.
fn destination(center: GeoPoint, theta: f64, azimuth: f64) -> GeoPoint {
    let c = center.unit_vector();
    // Local east/north basis at the center.
    let (phi, lambda) = (center.lat.to_radians(), center.lon.to_radians());
    let east = [-lambda.sin(), lambda.cos(), 0.0];
    let north = [
        -phi.sin() * lambda.cos(),
        -phi.sin() * lambda.sin(),
        phi.cos(),
    ];
    let (s, co) = theta.sin_cos();
    let (sa, ca) = azimuth.sin_cos();
    let v = [
        co * c[0] + s * (ca * north[0] + sa * east[0]),
        co * c[1] + s * (ca * north[1] + sa * east[1]),
        co * c[2] + s * (ca * north[2] + sa * east[2]),
    ];
    GeoPoint::from_unit_vector(v)
}
