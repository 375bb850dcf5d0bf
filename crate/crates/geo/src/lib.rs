//! Geodesy and georeferencing primitives shared by the graph and raster halves
//! of the toolkit.
//!
//! Everything here is a pure function on plain coordinate data: great-circle
//! distances on the mean-radius sphere, local planar bearings, and the affine
//! mapping between pixel indices and geographic coordinates. All angles going
//! in are degrees (the native unit of lon/lat data); bearings coming out are
//! radians because they feed directly into trigonometric kernels downstream.

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Mean Earth radius in meters, used for all great-circle arithmetic.
pub const EARTH_RADIUS_M: f64 = 6_371_000.0;

#[derive(Debug, Error, PartialEq)]
pub enum GeoError {
    /// Latitude outside [-90, 90] degrees.
    #[error("latitude {0} out of range [-90, 90]")]
    InvalidLatitude(f64),
    /// A bearing was requested between two coincident points.
    #[error("degenerate edge: points coincide, bearing undefined")]
    DegenerateEdge,
    /// Coordinate is not a finite number.
    #[error("non-finite coordinate {0}")]
    NonFinite(f64),
}

/// A point on the globe in degrees. Longitude is kept normalized to
/// [-180, 180); latitude must lie in [-90, 90].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GeoPoint {
    pub lon: f64,
    pub lat: f64,
}

impl GeoPoint {
    /// Build a point, normalizing longitude into [-180, 180) and validating
    /// latitude.
    pub fn new(lon: f64, lat: f64) -> Result<Self, GeoError> {
        if !lon.is_finite() {
            return Err(GeoError::NonFinite(lon));
        }
        if !lat.is_finite() {
            return Err(GeoError::NonFinite(lat));
        }
        if !(-90.0..=90.0).contains(&lat) {
            return Err(GeoError::InvalidLatitude(lat));
        }
        Ok(GeoPoint {
            lon: normalize_lon(lon),
            lat,
        })
    }
}

/// Wrap a longitude into [-180, 180).
fn normalize_lon(lon: f64) -> f64 {
    let mut l = (lon + 180.0) % 360.0;
    if l < 0.0 {
        l += 360.0;
    }
    l - 180.0
}

/// Great-circle distance between two points in meters (haversine formula on
/// the mean-radius sphere).
///
/// Symmetric and non-negative; zero exactly when the points coincide.
pub fn haversine_distance(a: GeoPoint, b: GeoPoint) -> f64 {
    let lat_a = a.lat.to_radians();
    let lat_b = b.lat.to_radians();
    let dlat = (b.lat - a.lat).to_radians();
    let dlon = (b.lon - a.lon).to_radians();

    let s = (dlat / 2.0).sin().powi(2)
        + lat_a.cos() * lat_b.cos() * (dlon / 2.0).sin().powi(2);
    // Clamp guards against s marginally exceeding 1 from rounding on
    // antipodal inputs.
    2.0 * EARTH_RADIUS_M * s.sqrt().min(1.0).asin()
}

/// Bearing of the edge from `a` to `b` in radians, in (-pi, pi].
///
/// Computed as `atan2(dy, dx)` in a local equirectangular plane: `dx` scales
/// the longitude difference by the cosine of the mean latitude of the two
/// endpoints, `dy` is the latitude difference. Zero means due east, pi/2 due
/// north. The planar approximation is accurate at the short (sub-10 km) edge
/// lengths of nearest-neighbor graphs, which is the only place bearings are
/// consumed.
pub fn bearing(a: GeoPoint, b: GeoPoint) -> Result<f64, GeoError> {
    if a == b {
        return Err(GeoError::DegenerateEdge);
    }
    let mean_lat = 0.5 * (a.lat + b.lat);
    let dx = (b.lon - a.lon).to_radians() * mean_lat.to_radians().cos();
    let dy = (b.lat - a.lat).to_radians();
    let theta = dy.atan2(dx);
    // atan2 returns [-pi, pi]; fold -pi onto +pi so the range is (-pi, pi].
    if theta == -std::f64::consts::PI {
        Ok(std::f64::consts::PI)
    } else {
        Ok(theta)
    }
}

/// Affine mapping from pixel indices to geographic coordinates.
///
/// `origin_lon`/`origin_lat` are the coordinates of the *center* of pixel
/// (0, 0); integer pixel indices refer to pixel centers throughout the
/// toolkit. `pixel_height` is negative for the usual north-up rasters where
/// row indices grow southward.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GeoTransform {
    pub origin_lon: f64,
    pub origin_lat: f64,
    pub pixel_width: f64,
    pub pixel_height: f64,
}

impl GeoTransform {
    pub fn new(
        origin_lon: f64,
        origin_lat: f64,
        pixel_width: f64,
        pixel_height: f64,
    ) -> Result<Self, GeoError> {
        for v in [origin_lon, origin_lat, pixel_width, pixel_height] {
            if !v.is_finite() {
                return Err(GeoError::NonFinite(v));
            }
        }
        if pixel_width <= 0.0 {
            return Err(GeoError::NonFinite(pixel_width));
        }
        if pixel_height == 0.0 {
            return Err(GeoError::NonFinite(pixel_height));
        }
        Ok(GeoTransform {
            origin_lon,
            origin_lat,
            pixel_width,
            pixel_height,
        })
    }

    /// Geographic coordinates of the center of pixel (col, row).
    pub fn pixel_to_geo(&self, col: i64, row: i64) -> (f64, f64) {
        self.pixel_to_geo_f(col as f64, row as f64)
    }

    /// Continuous variant: fractional pixel coordinates map to interpolated
    /// geographic positions. Half-integer inputs land on pixel edges, which
    /// is what polygon tracing uses.
    pub fn pixel_to_geo_f(&self, col: f64, row: f64) -> (f64, f64) {
        (
            self.origin_lon + col * self.pixel_width,
            self.origin_lat + row * self.pixel_height,
        )
    }

    /// Inverse of [`pixel_to_geo`](Self::pixel_to_geo): nearest pixel index
    /// for a geographic coordinate. Exact round-trip on integer indices.
    pub fn geo_to_pixel(&self, lon: f64, lat: f64) -> (i64, i64) {
        let (c, r) = self.geo_to_pixel_f(lon, lat);
        (c.round() as i64, r.round() as i64)
    }

    /// Continuous inverse mapping.
    pub fn geo_to_pixel_f(&self, lon: f64, lat: f64) -> (f64, f64) {
        (
            (lon - self.origin_lon) / self.pixel_width,
            (lat - self.origin_lat) / self.pixel_height,
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use std::f64::consts::{FRAC_PI_2, PI};

    #[test]
    fn distance_identity_is_zero() {
        let p = GeoPoint::new(74.3, 31.5).unwrap();
        assert_eq!(haversine_distance(p, p), 0.0);
    }

    #[test]
    fn distance_quarter_circumference_on_equator() {
        let a = GeoPoint::new(0.0, 0.0).unwrap();
        let b = GeoPoint::new(90.0, 0.0).unwrap();
        assert_relative_eq!(
            haversine_distance(a, b),
            FRAC_PI_2 * EARTH_RADIUS_M,
            max_relative = 1e-12
        );
    }

    #[test]
    fn distance_to_pole_matches_equator_arc() {
        let a = GeoPoint::new(0.0, 0.0).unwrap();
        let equator = GeoPoint::new(90.0, 0.0).unwrap();
        let pole = GeoPoint::new(0.0, 90.0).unwrap();
        assert_relative_eq!(
            haversine_distance(a, pole),
            haversine_distance(a, equator),
            max_relative = 1e-12
        );
    }

    #[test]
    fn bearing_due_east_is_zero() {
        let a = GeoPoint::new(74.0, 31.0).unwrap();
        let b = GeoPoint::new(74.2, 31.0).unwrap();
        assert_relative_eq!(bearing(a, b).unwrap(), 0.0, epsilon = 1e-15);
    }

    #[test]
    fn bearing_due_north_is_half_pi() {
        let a = GeoPoint::new(74.0, 31.0).unwrap();
        let b = GeoPoint::new(74.0, 31.2).unwrap();
        assert_relative_eq!(bearing(a, b).unwrap(), FRAC_PI_2, epsilon = 1e-15);
    }

    #[test]
    fn bearing_hand_example_northeast() {
        // atan2(0.1, 0.1 * cos(31.05 deg)) with both offsets in degrees.
        let a = GeoPoint::new(74.0, 31.0).unwrap();
        let b = GeoPoint::new(74.1, 31.1).unwrap();
        let expected = 0.1f64.atan2(0.1 * 31.05f64.to_radians().cos());
        let got = bearing(a, b).unwrap();
        assert_relative_eq!(got, expected, epsilon = 1e-12);
        assert_relative_eq!(got, 0.8623, epsilon = 2e-4);
    }

    #[test]
    fn bearing_of_coincident_points_is_degenerate() {
        let p = GeoPoint::new(10.0, 10.0).unwrap();
        assert_eq!(bearing(p, p), Err(GeoError::DegenerateEdge));
    }

    #[test]
    fn lon_normalization_wraps() {
        assert_eq!(GeoPoint::new(190.0, 0.0).unwrap().lon, -170.0);
        assert_eq!(GeoPoint::new(-180.0, 0.0).unwrap().lon, -180.0);
        assert_eq!(GeoPoint::new(180.0, 0.0).unwrap().lon, -180.0);
        assert_eq!(GeoPoint::new(360.0, 0.0).unwrap().lon, 0.0);
    }

    #[test]
    fn latitude_out_of_range_rejected() {
        assert_eq!(
            GeoPoint::new(0.0, 90.5),
            Err(GeoError::InvalidLatitude(90.5))
        );
    }

    #[test]
    fn pixel_zero_maps_to_origin() {
        let gt = GeoTransform::new(74.0, 31.5, 0.001, -0.001).unwrap();
        assert_eq!(gt.pixel_to_geo(0, 0), (74.0, 31.5));
    }

    #[test]
    fn pixel_to_geo_hand_example() {
        let gt = GeoTransform::new(74.0, 31.5, 0.001, -0.001).unwrap();
        let (lon, lat) = gt.pixel_to_geo(10, 20);
        assert_relative_eq!(lon, 74.010, epsilon = 1e-12);
        assert_relative_eq!(lat, 31.480, epsilon = 1e-12);
    }

    #[test]
    fn geo_pixel_round_trip_exact_on_integers() {
        let gt = GeoTransform::new(74.0, 31.5, 0.001, -0.001).unwrap();
        for &(c, r) in &[(0i64, 0i64), (10, 20), (255, 255), (511, 1), (3, 499)] {
            let (lon, lat) = gt.pixel_to_geo(c, r);
            assert_eq!(gt.geo_to_pixel(lon, lat), (c, r));
        }
    }

    #[test]
    fn bearing_range_excludes_negative_pi() {
        // Due west lands exactly on the atan2 branch cut; the fold keeps the
        // result inside (-pi, pi].
        let a = GeoPoint::new(74.2, 31.0).unwrap();
        let b = GeoPoint::new(74.0, 31.0).unwrap();
        assert_eq!(bearing(a, b).unwrap(), PI);
    }

    mod properties {
        use super::*;
        use proptest::prelude::*;

        fn arb_point() -> impl Strategy<Value = GeoPoint> {
            // Stay away from the poles, where bearings and the planar
            // approximation degenerate by construction.
            (-179.0f64..179.0, -80.0f64..80.0)
                .prop_map(|(lon, lat)| GeoPoint::new(lon, lat).unwrap())
        }

        proptest! {
            #[test]
            fn distance_symmetric(a in arb_point(), b in arb_point()) {
                prop_assert_eq!(haversine_distance(a, b), haversine_distance(b, a));
            }

            #[test]
            fn distance_non_negative(a in arb_point(), b in arb_point()) {
                prop_assert!(haversine_distance(a, b) >= 0.0);
            }

            #[test]
            fn triangle_inequality(
                a in arb_point(),
                b in arb_point(),
                c in arb_point()
            ) {
                let ab = haversine_distance(a, b);
                let bc = haversine_distance(b, c);
                let ac = haversine_distance(a, c);
                prop_assert!(ac <= (ab + bc) * (1.0 + 1e-6));
            }

            #[test]
            fn bearing_antisymmetric_for_nearby_points(
                lon in -170.0f64..170.0,
                lat in -60.0f64..60.0,
                dlon in -0.5f64..0.5,
                dlat in -0.5f64..0.5
            ) {
                prop_assume!(dlon.abs() > 1e-9 || dlat.abs() > 1e-9);
                let a = GeoPoint::new(lon, lat).unwrap();
                let b = GeoPoint::new(lon + dlon, lat + dlat).unwrap();
                let fwd = bearing(a, b).unwrap();
                let back = bearing(b, a).unwrap();
                // Difference must be pi modulo 2*pi.
                let diff = (fwd - back).rem_euclid(2.0 * std::f64::consts::PI);
                prop_assert!((diff - std::f64::consts::PI).abs() < 1e-9);
            }

            #[test]
            fn round_trip_identity(
                col in 0i64..10_000,
                row in 0i64..10_000,
                ow in 1e-5f64..0.01,
                oh in 1e-5f64..0.01
            ) {
                let gt = GeoTransform::new(74.0, 31.5, ow, -oh).unwrap();
                let (lon, lat) = gt.pixel_to_geo(col, row);
                prop_assert_eq!(gt.geo_to_pixel(lon, lat), (col, row));
            }
        }
    }
}
