//! Low-precision solar ephemeris and the cylindrical Earth-shadow test.

use chrono::{DateTime, Utc};

use super::frames::{days_since_j2000, dot, norm, scale, sub, Vec3, EARTH_RADIUS_KM};

const AU_KM: f64 = 149_597_870.7;

/// Geocentric sun position in the equatorial inertial frame (km).
///
/// Truncated series (Astronomical Almanac low-precision formulae), good to
/// about 0.01 degrees -- far tighter than the 0.1 degrees the shadow test
/// needs. TEME vs mean-equinox differences are below that level too.
pub fn sun_position_eci(t: DateTime<Utc>) -> Vec3 {
    let n = days_since_j2000(t);
    let mean_lon = (280.460 + 0.985_647_4 * n).rem_euclid(360.0);
    let mean_anom = ((357.528 + 0.985_600_3 * n).rem_euclid(360.0)).to_radians();
    let ecliptic_lon = (mean_lon + 1.915 * mean_anom.sin() + 0.020 * (2.0 * mean_anom).sin())
        .to_radians();
    let obliquity = (23.439 - 0.000_000_4 * n).to_radians();
    let r_au = 1.000_14 - 0.016_71 * mean_anom.cos() - 0.000_14 * (2.0 * mean_anom).cos();
    let r = r_au * AU_KM;
    [
        r * ecliptic_lon.cos(),
        r * obliquity.cos() * ecliptic_lon.sin(),
        r * obliquity.sin() * ecliptic_lon.sin(),
    ]
}

/// Cylindrical umbra test: a satellite is dark only when it sits behind the
/// Earth (component along the anti-sun direction positive) and within one
/// Earth radius of the shadow axis. No penumbra.
pub fn is_sunlit_at(position_eci: &Vec3, t: DateTime<Utc>) -> bool {
    let sun = sun_position_eci(t);
    is_sunlit_for_sun(position_eci, &sun)
}

pub(crate) fn is_sunlit_for_sun(position: &Vec3, sun: &Vec3) -> bool {
    let sun_hat = scale(sun, 1.0 / norm(sun));
    let along_sun = dot(position, &sun_hat);
    if along_sun >= 0.0 {
        return true;
    }
    let axial = scale(&sun_hat, along_sun);
    let perp = norm(&sub(position, &axial));
    perp >= EARTH_RADIUS_KM
}

#[cfg(test)]
mod tests {
    use super::*;
    use chrono::TimeZone;

    fn unit(v: &Vec3) -> Vec3 {
        scale(v, 1.0 / norm(v))
    }

    #[test]
    fn sun_side_is_sunlit() {
        let t = Utc.with_ymd_and_hms(2023, 3, 21, 0, 0, 0).unwrap();
        let sun = sun_position_eci(t);
        let pos = scale(&unit(&sun), 6928.0);
        assert!(is_sunlit_at(&pos, t));
    }

    #[test]
    fn anti_sun_at_550km_is_dark() {
        let t = Utc.with_ymd_and_hms(2023, 3, 21, 0, 0, 0).unwrap();
        let sun = sun_position_eci(t);
        let pos = scale(&unit(&sun), -(EARTH_RADIUS_KM + 550.0));
        assert!(!is_sunlit_at(&pos, t));
    }

    #[test]
    fn anti_sun_but_offset_past_earth_radius_is_sunlit() {
        let t = Utc.with_ymd_and_hms(2023, 3, 21, 0, 0, 0).unwrap();
        let sun = sun_position_eci(t);
        let s = unit(&sun);
        // any unit vector perpendicular to the sun direction
        let mut perp = [-s[1], s[0], 0.0];
        perp = scale(&perp, 1.0 / norm(&perp));
        let pos = [
            -7000.0 * s[0] + 7000.0 * perp[0],
            -7000.0 * s[1] + 7000.0 * perp[1],
            -7000.0 * s[2] + 7000.0 * perp[2],
        ];
        assert!(is_sunlit_at(&pos, t));
    }

    #[test]
    fn march_equinox_sun_near_vernal_point() {
        // near the equinox the sun sits close to +x, declination ~ 0
        let t = Utc.with_ymd_and_hms(2023, 3, 20, 21, 24, 0).unwrap();
        let sun = sun_position_eci(t);
        let s = unit(&sun);
        let dec = s[2].asin().to_degrees();
        assert!(dec.abs() < 0.2, "declination {dec}");
        assert!(s[0] > 0.99, "x component {}", s[0]);
    }
}
