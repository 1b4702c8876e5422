//! Spherical geodesy on a sphere of radius [`EARTH_RADIUS_M`].
//!
//! Everything downstream measures distance through [`haversine_m`], so trip
//! lengths, stop radii and inferred distances all share one earth model.

use chrono::{DateTime, Utc};
use thiserror::Error;

/// Mean earth radius used for every distance in the crate.
pub const EARTH_RADIUS_M: f64 = 6_371_000.0;

#[derive(Debug, Clone, Copy, PartialEq, Error)]
pub enum CoordinateError {
    #[error("latitude {0} outside [-90, 90]")]
    Latitude(f64),
    #[error("longitude {0} outside [-180, 180]")]
    Longitude(f64),
}

/// A WGS84 location without a timestamp.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LatLon {
    lat: f64,
    lon: f64,
}

impl LatLon {
    pub fn new(lat: f64, lon: f64) -> Result<Self, CoordinateError> {
        if !(-90.0..=90.0).contains(&lat) {
            return Err(CoordinateError::Latitude(lat));
        }
        if !(-180.0..=180.0).contains(&lon) {
            return Err(CoordinateError::Longitude(lon));
        }
        Ok(LatLon { lat, lon })
    }

    pub fn lat(&self) -> f64 {
        self.lat
    }

    pub fn lon(&self) -> f64 {
        self.lon
    }

    /// Point reached by travelling `distance_m` along the great circle that
    /// leaves `self` at `bearing_deg` (clockwise from north).
    pub fn destination(&self, bearing_deg: f64, distance_m: f64) -> LatLon {
        let delta = distance_m / EARTH_RADIUS_M;
        let theta = bearing_deg.to_radians();
        let (phi1, lambda1) = (self.lat.to_radians(), self.lon.to_radians());
        let phi2 = (phi1.sin() * delta.cos() + phi1.cos() * delta.sin() * theta.cos()).asin();
        let lambda2 = lambda1
            + (theta.sin() * delta.sin() * phi1.cos()).atan2(delta.cos() - phi1.sin() * phi2.sin());
        from_radians(phi2, lambda2)
    }

    /// Shift by a small planar displacement in the local east/north tangent
    /// frame. Adequate for offsets of a few hundred meters.
    pub fn offset_m(&self, east_m: f64, north_m: f64) -> LatLon {
        let dlat = north_m / EARTH_RADIUS_M;
        let dlon = east_m / (EARTH_RADIUS_M * self.lat.to_radians().cos());
        from_radians(self.lat.to_radians() + dlat, self.lon.to_radians() + dlon)
    }
}

fn from_radians(phi: f64, lambda: f64) -> LatLon {
    let lat = phi.to_degrees().clamp(-90.0, 90.0);
    let mut lon = lambda.to_degrees();
    if lon > 180.0 {
        lon -= 360.0;
    } else if lon < -180.0 {
        lon += 360.0;
    }
    LatLon { lat, lon }
}

/// A timestamped location fix.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GeoPoint {
    pos: LatLon,
    pub t: DateTime<Utc>,
}

impl GeoPoint {
    pub fn new(lat: f64, lon: f64, t: DateTime<Utc>) -> Result<Self, CoordinateError> {
        Ok(GeoPoint {
            pos: LatLon::new(lat, lon)?,
            t,
        })
    }

    pub fn at(pos: LatLon, t: DateTime<Utc>) -> Self {
        GeoPoint { pos, t }
    }

    pub fn lat(&self) -> f64 {
        self.pos.lat
    }

    pub fn lon(&self) -> f64 {
        self.pos.lon
    }

    pub fn location(&self) -> LatLon {
        self.pos
    }
}

/// Anything with a position on the sphere.
pub trait Position {
    fn lat_lon(&self) -> LatLon;
}

impl Position for LatLon {
    fn lat_lon(&self) -> LatLon {
        *self
    }
}

impl Position for GeoPoint {
    fn lat_lon(&self) -> LatLon {
        self.pos
    }
}

impl<P: Position> Position for &P {
    fn lat_lon(&self) -> LatLon {
        (*self).lat_lon()
    }
}

/// Great-circle distance in meters (haversine form).
pub fn haversine_m<A: Position, B: Position>(a: A, b: B) -> f64 {
    let (a, b) = (a.lat_lon(), b.lat_lon());
    let phi1 = a.lat.to_radians();
    let phi2 = b.lat.to_radians();
    let dphi = phi2 - phi1;
    let dlambda = (b.lon - a.lon).to_radians();
    let h = (dphi / 2.0).sin().powi(2) + phi1.cos() * phi2.cos() * (dlambda / 2.0).sin().powi(2);
    2.0 * EARTH_RADIUS_M * h.sqrt().min(1.0).asin()
}

/// Sum of great-circle distances over consecutive pairs.
pub fn track_length_m<P: Position>(points: &[P]) -> f64 {
    points
        .windows(2)
        .map(|w| haversine_m(&w[0], &w[1]))
        .sum()
}

/// Point at `fraction` of the way along the great circle from `a` to `b`.
pub fn intermediate(a: LatLon, b: LatLon, fraction: f64) -> LatLon {
    let delta = haversine_m(a, b) / EARTH_RADIUS_M;
    if delta < 1e-15 {
        return a;
    }
    let (phi1, lambda1) = (a.lat.to_radians(), a.lon.to_radians());
    let (phi2, lambda2) = (b.lat.to_radians(), b.lon.to_radians());
    let wa = ((1.0 - fraction) * delta).sin() / delta.sin();
    let wb = (fraction * delta).sin() / delta.sin();
    let x = wa * phi1.cos() * lambda1.cos() + wb * phi2.cos() * lambda2.cos();
    let y = wa * phi1.cos() * lambda1.sin() + wb * phi2.cos() * lambda2.sin();
    let z = wa * phi1.sin() + wb * phi2.sin();
    from_radians(z.atan2((x * x + y * y).sqrt()), y.atan2(x))
}

/// Arithmetic mean of latitudes and longitudes. Only meaningful for clusters
/// that do not straddle the antimeridian.
pub fn mean_location<P: Position>(points: &[P]) -> Option<LatLon> {
    if points.is_empty() {
        return None;
    }
    let n = points.len() as f64;
    let (lat, lon) = points.iter().fold((0.0, 0.0), |(la, lo), p| {
        let ll = p.lat_lon();
        (la + ll.lat, lo + ll.lon)
    });
    Some(LatLon {
        lat: lat / n,
        lon: lon / n,
    })
}
