//! Orbit propagation and terminal-relative satellite geometry.
//!
//! TLE parsing lives in [`tle`], frame math in [`frames`], the solar
//! ephemeris and shadow test in [`sun`]. Propagation is backed by the
//! `sgp4` crate in AFSPC-compatibility mode (WGS72 constants, the
//! semantics the published verification vectors are generated with).

pub mod frames;
pub mod sun;
pub mod tle;

use std::collections::HashMap;
use std::path::Path;

use chrono::{DateTime, Datelike, NaiveDate, Utc};
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use frames::{
    look_angles_ecef, position_from_look_angles, teme_to_ecef, ObserverLocation, Topocentric,
    Vec3, EARTH_RADIUS_KM,
};
pub use sun::{is_sunlit_at, sun_position_eci};
pub use tle::{format_tle, parse_tle_catalog, ParsedCatalog, TleError, TleRecord};

/// Epoch-age guard: TLEs older than this (relative to the requested time)
/// are refused unless the caller overrides the limit.
pub const DEFAULT_EPOCH_GUARD_DAYS: f64 = 7.0;

/// Default minimum serviceable elevation, degrees.
pub const DEFAULT_MIN_ELEVATION_DEG: f64 = 25.0;

/// Propagated position/velocity in the TEME frame.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct SatelliteState {
    pub norad_id: u32,
    pub t: DateTime<Utc>,
    /// km, TEME.
    pub position: Vec3,
    /// km/s, TEME.
    pub velocity: Vec3,
}

/// Everything the scheduler analysis needs to know about one visible
/// satellite at one instant.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SatelliteSnapshot {
    pub norad_id: u32,
    pub t: DateTime<Utc>,
    pub topo: Topocentric,
    /// Days since launch.
    pub age_days: f64,
    pub sunlit: bool,
}

#[derive(Debug, Error)]
pub enum OrbitalError {
    #[error("satellite {norad_id}: TLE rejected by propagator: {message}")]
    BadElements { norad_id: u32, message: String },
    #[error(
        "satellite {norad_id}: requested time is {age_days:.1} days from the TLE epoch (guard {max_days})"
    )]
    EpochGuard {
        norad_id: u32,
        age_days: f64,
        max_days: f64,
    },
    #[error("satellite {norad_id}: propagation diverged: {message}")]
    Diverged { norad_id: u32, message: String },
    #[error("satellite {norad_id}: no launch date in catalog and designator {designator:?} unparsable")]
    UnknownLaunch { norad_id: u32, designator: String },
}

/// A TLE compiled into SGP4 constants, ready for repeated propagation.
pub struct Propagator {
    norad_id: u32,
    epoch: DateTime<Utc>,
    constants: sgp4::Constants,
}

impl Propagator {
    pub fn from_record(rec: &TleRecord) -> Result<Self, OrbitalError> {
        let elements =
            sgp4::Elements::from_tle(None, rec.line1.as_bytes(), rec.line2.as_bytes()).map_err(
                |e| OrbitalError::BadElements {
                    norad_id: rec.norad_id,
                    message: e.to_string(),
                },
            )?;
        let constants = sgp4::Constants::from_elements_afspc_compatibility_mode(&elements)
            .map_err(|e| OrbitalError::BadElements {
                norad_id: rec.norad_id,
                message: e.to_string(),
            })?;
        Ok(Self {
            norad_id: rec.norad_id,
            epoch: rec.epoch,
            constants,
        })
    }

    pub fn norad_id(&self) -> u32 {
        self.norad_id
    }

    pub fn state_at(
        &self,
        t: DateTime<Utc>,
        guard_days: f64,
    ) -> Result<SatelliteState, OrbitalError> {
        let minutes = (t - self.epoch).num_milliseconds() as f64 / 60_000.0;
        let age_days = minutes.abs() / 1440.0;
        if age_days > guard_days {
            return Err(OrbitalError::EpochGuard {
                norad_id: self.norad_id,
                age_days,
                max_days: guard_days,
            });
        }
        let prediction = self
            .constants
            .propagate_afspc_compatibility_mode(sgp4::MinutesSinceEpoch(minutes))
            .map_err(|e| OrbitalError::Diverged {
                norad_id: self.norad_id,
                message: e.to_string(),
            })?;
        Ok(SatelliteState {
            norad_id: self.norad_id,
            t,
            position: prediction.position,
            velocity: prediction.velocity,
        })
    }
}

/// Propagate a record to a time within the default epoch guard.
pub fn propagate(rec: &TleRecord, t: DateTime<Utc>) -> Result<SatelliteState, OrbitalError> {
    propagate_guarded(rec, t, DEFAULT_EPOCH_GUARD_DAYS)
}

pub fn propagate_guarded(
    rec: &TleRecord,
    t: DateTime<Utc>,
    guard_days: f64,
) -> Result<SatelliteState, OrbitalError> {
    Propagator::from_record(rec)?.state_at(t, guard_days)
}

/// Topocentric look angles for a propagated state.
pub fn look_angles(state: &SatelliteState, obs: &ObserverLocation) -> Topocentric {
    let ecef = teme_to_ecef(&state.position, state.t);
    look_angles_ecef(&ecef, obs)
}

/// Whether the satellite is outside Earth's cylindrical umbra.
pub fn is_sunlit(state: &SatelliteState) -> bool {
    is_sunlit_at(&state.position, state.t)
}

/// Launch dates per NORAD id, loaded from a `norad_id,launch_date` CSV.
/// Falls back to the launch year in the TLE international designator.
#[derive(Debug, Clone, Default)]
pub struct LaunchCatalog {
    dates: HashMap<u32, NaiveDate>,
}

/// Calendar launch bin. `low_precision` marks designator-year fallbacks,
/// which carry no month information (month pinned to 1).
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct LaunchBin {
    pub year: i32,
    pub month: u32,
    pub low_precision: bool,
}

impl LaunchCatalog {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, norad_id: u32, date: NaiveDate) {
        self.dates.insert(norad_id, date);
    }

    pub fn get(&self, norad_id: u32) -> Option<NaiveDate> {
        self.dates.get(&norad_id).copied()
    }

    pub fn len(&self) -> usize {
        self.dates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.dates.is_empty()
    }

    pub fn from_csv_path(path: &Path) -> anyhow::Result<Self> {
        let mut reader = csv::Reader::from_path(path)?;
        let mut cat = Self::new();
        for row in reader.deserialize::<LaunchRow>() {
            let row = row?;
            let date = NaiveDate::parse_from_str(&row.launch_date, "%Y-%m-%d")?;
            cat.insert(row.norad_id, date);
        }
        Ok(cat)
    }

    pub fn to_csv_path(&self, path: &Path) -> anyhow::Result<()> {
        let mut writer = csv::Writer::from_path(path)?;
        let mut rows: Vec<(&u32, &NaiveDate)> = self.dates.iter().collect();
        rows.sort();
        for (id, date) in rows {
            writer.serialize(LaunchRow {
                norad_id: *id,
                launch_date: date.format("%Y-%m-%d").to_string(),
            })?;
        }
        writer.flush()?;
        Ok(())
    }

    fn launch_date_or_fallback(
        &self,
        norad_id: u32,
        designator: &str,
    ) -> Result<(NaiveDate, bool), OrbitalError> {
        if let Some(date) = self.get(norad_id) {
            return Ok((date, false));
        }
        match tle::designator_launch_year(designator) {
            Some(year) => Ok((
                NaiveDate::from_ymd_opt(year, 1, 1).expect("valid fallback date"),
                true,
            )),
            None => Err(OrbitalError::UnknownLaunch {
                norad_id,
                designator: designator.to_string(),
            }),
        }
    }

    /// Fractional days since launch (launch taken at 00:00 UTC).
    pub fn satellite_age(
        &self,
        norad_id: u32,
        designator: &str,
        t: DateTime<Utc>,
    ) -> Result<f64, OrbitalError> {
        let (date, _) = self.launch_date_or_fallback(norad_id, designator)?;
        let launch = date.and_hms_opt(0, 0, 0).expect("midnight").and_utc();
        Ok((t - launch).num_milliseconds() as f64 / 86_400_000.0)
    }

    /// Calendar (year, month) launch bin.
    pub fn launch_bin(&self, norad_id: u32, designator: &str) -> Result<LaunchBin, OrbitalError> {
        let (date, low_precision) = self.launch_date_or_fallback(norad_id, designator)?;
        Ok(LaunchBin {
            year: date.year(),
            month: date.month(),
            low_precision,
        })
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct LaunchRow {
    norad_id: u32,
    launch_date: String,
}

/// A catalog prepared for repeated visibility queries: SGP4 constants and
/// launch dates resolved once per record.
pub struct SkyCatalog {
    entries: Vec<SkyEntry>,
    /// Records the propagator refused at load time.
    pub rejected: Vec<OrbitalError>,
    guard_days: f64,
}

struct SkyEntry {
    record: TleRecord,
    propagator: Propagator,
    launch: Option<NaiveDate>,
}

impl SkyCatalog {
    pub fn build(records: &[TleRecord], launches: &LaunchCatalog) -> Self {
        let mut entries = Vec::with_capacity(records.len());
        let mut rejected = Vec::new();
        for rec in records {
            match Propagator::from_record(rec) {
                Ok(propagator) => {
                    let launch = launches
                        .launch_date_or_fallback(rec.norad_id, &rec.intl_designator)
                        .ok()
                        .map(|(d, _)| d);
                    entries.push(SkyEntry {
                        record: rec.clone(),
                        propagator,
                        launch,
                    });
                }
                Err(e) => rejected.push(e),
            }
        }
        Self {
            entries,
            rejected,
            guard_days: DEFAULT_EPOCH_GUARD_DAYS,
        }
    }

    pub fn with_guard_days(mut self, guard_days: f64) -> Self {
        self.guard_days = guard_days;
        self
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn records(&self) -> impl Iterator<Item = &TleRecord> {
        self.entries.iter().map(|e| &e.record)
    }

    pub fn propagator(&self, norad_id: u32) -> Option<&Propagator> {
        self.entries
            .iter()
            .find(|e| e.record.norad_id == norad_id)
            .map(|e| &e.propagator)
    }

    /// Snapshots of every satellite at or above `min_elevation_deg`.
    /// Per-satellite propagation failures are counted, not fatal.
    pub fn visible_at(
        &self,
        obs: &ObserverLocation,
        t: DateTime<Utc>,
        min_elevation_deg: f64,
    ) -> VisibleSky {
        let mut snapshots = Vec::new();
        let mut skipped = 0usize;
        for entry in &self.entries {
            let state = match entry.propagator.state_at(t, self.guard_days) {
                Ok(s) => s,
                Err(_) => {
                    skipped += 1;
                    continue;
                }
            };
            let topo = look_angles(&state, obs);
            if topo.elevation < min_elevation_deg {
                continue;
            }
            let age_days = match entry.launch {
                Some(date) => {
                    let launch = date.and_hms_opt(0, 0, 0).expect("midnight").and_utc();
                    (t - launch).num_milliseconds() as f64 / 86_400_000.0
                }
                None => {
                    skipped += 1;
                    continue;
                }
            };
            snapshots.push(SatelliteSnapshot {
                norad_id: entry.record.norad_id,
                t,
                topo,
                age_days,
                sunlit: is_sunlit(&state),
            });
        }
        VisibleSky { snapshots, skipped }
    }
}

/// Result of a visibility query.
pub struct VisibleSky {
    pub snapshots: Vec<SatelliteSnapshot>,
    /// Satellites skipped due to propagation or launch-date failures.
    pub skipped: usize,
}

/// One-shot visibility query over raw records.
pub fn visible_satellites(
    catalog: &[TleRecord],
    launches: &LaunchCatalog,
    obs: &ObserverLocation,
    t: DateTime<Utc>,
    min_elevation_deg: f64,
) -> VisibleSky {
    SkyCatalog::build(catalog, launches).visible_at(obs, t, min_elevation_deg)
}

#[cfg(test)]
mod tests {
    use super::*;
    use chrono::TimeZone;

    const ISS1: &str = "1 25544U 98067A   08264.51782528 -.00002182  00000-0 -11606-4 0  2927";
    const ISS2: &str = "2 25544  51.6416 247.4627 0006703 130.5360 325.0288 15.72125391563537";

    fn iss() -> TleRecord {
        parse_tle_catalog(&format!("{ISS1}\n{ISS2}\n")).records.remove(0)
    }

    #[test]
    fn propagation_at_epoch_matches_kepler_altitude() {
        let rec = iss();
        let state = propagate(&rec, rec.epoch).unwrap();
        let ecef = teme_to_ecef(&state.position, state.t);
        let altitude = frames::geodetic_altitude_km(&ecef);
        // Kepler's third law oracle: a = (mu / n^2)^(1/3)
        let mu = 398_600.4418;
        let n_rad_s = rec.mean_motion * 2.0 * std::f64::consts::PI / 86_400.0;
        let a = (mu / (n_rad_s * n_rad_s)).cbrt();
        let implied_altitude = a - EARTH_RADIUS_KM;
        assert!(
            (altitude - implied_altitude).abs() < 25.0,
            "altitude {altitude}, implied {implied_altitude}"
        );
    }

    #[test]
    fn propagation_velocity_consistent_with_finite_difference() {
        let rec = iss();
        let t0 = rec.epoch;
        let dt = chrono::Duration::milliseconds(500);
        let s0 = propagate(&rec, t0).unwrap();
        let s1 = propagate(&rec, t0 + dt).unwrap();
        for i in 0..3 {
            let fd = (s1.position[i] - s0.position[i]) / 0.5;
            let v = s0.velocity[i];
            assert!(
                (fd - v).abs() <= 0.01 * frames::norm(&s0.velocity),
                "component {i}: fd {fd} vs v {v}"
            );
        }
    }

    #[test]
    fn epoch_guard_refuses_stale_tle() {
        let rec = iss();
        let t = rec.epoch + chrono::Duration::days(30);
        assert!(matches!(
            propagate(&rec, t),
            Err(OrbitalError::EpochGuard { .. })
        ));
        assert!(propagate_guarded(&rec, t, 60.0).is_ok());
    }

    #[test]
    fn empty_catalog_sees_nothing() {
        let obs = ObserverLocation::new(41.66, -91.53, 200.0).unwrap();
        let t = Utc.with_ymd_and_hms(2008, 9, 20, 12, 0, 0).unwrap();
        let sky = visible_satellites(&[], &LaunchCatalog::new(), &obs, t, 25.0);
        assert!(sky.snapshots.is_empty());
        assert_eq!(sky.skipped, 0);
    }

    #[test]
    fn zenith_threshold_is_almost_always_empty() {
        let obs = ObserverLocation::new(41.66, -91.53, 200.0).unwrap();
        let rec = iss();
        let mut launches = LaunchCatalog::new();
        launches.insert(25544, NaiveDate::from_ymd_opt(1998, 11, 20).unwrap());
        let sky = visible_satellites(&[rec.clone()], &launches, &obs, rec.epoch, 90.0);
        for snap in &sky.snapshots {
            assert!(snap.topo.elevation >= 89.5);
        }
    }

    #[test]
    fn age_and_bins() {
        let mut launches = LaunchCatalog::new();
        launches.insert(40000, NaiveDate::from_ymd_opt(2020, 3, 18).unwrap());
        let t = Utc.with_ymd_and_hms(2020, 3, 28, 0, 0, 0).unwrap();
        let age = launches.satellite_age(40000, "20019A", t).unwrap();
        assert!((age - 10.0).abs() < 1e-9);
        let bin = launches.launch_bin(40000, "20019A").unwrap();
        assert_eq!((bin.year, bin.month, bin.low_precision), (2020, 3, false));

        // designator fallback
        let bin = launches.launch_bin(99999, "20019BD").unwrap();
        assert_eq!((bin.year, bin.month, bin.low_precision), (2020, 1, true));
        assert_eq!(
            launches.satellite_age(40000, "20019A", t).unwrap().floor(),
            10.0
        );

        assert!(matches!(
            launches.launch_bin(88888, "??bad"),
            Err(OrbitalError::UnknownLaunch { .. })
        ));
    }

    #[test]
    fn launch_date_equal_to_t_gives_zero_age() {
        let mut launches = LaunchCatalog::new();
        launches.insert(1, NaiveDate::from_ymd_opt(2021, 6, 1).unwrap());
        let t = Utc.with_ymd_and_hms(2021, 6, 1, 0, 0, 0).unwrap();
        assert_eq!(launches.satellite_age(1, "21050A", t).unwrap(), 0.0);
    }
}
