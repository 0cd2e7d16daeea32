//! Synthetic Walker-delta constellations, a configurable-preference slot
//! scheduler, and a ground-truth obstruction-map renderer. Together they
//! provide a desk-scale oracle: campaigns emit SlotRecords plus the PGM
//! maps the identification pipeline consumes, with the true selection
//! known for every slot.

use chrono::{DateTime, Duration, Months, NaiveDate, Utc};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::analytics::SlotRecord;
use crate::obstruction::{
    polar_to_pixel, MapGeometry, ObstructionMap, MAP_SIZE,
};
use crate::orbital::{
    format_tle, look_angles, parse_tle_catalog, LaunchCatalog, ObserverLocation, Propagator,
    SatelliteSnapshot, SkyCatalog, TleRecord, EARTH_RADIUS_KM,
};

/// Standard gravitational parameter of Earth, km^3/s^2.
pub const MU_EARTH: f64 = 398_600.4418;

pub const SLOT_LEN_S: u32 = 15;

/// First NORAD id assigned to synthetic satellites.
pub const SYNTHETIC_NORAD_BASE: u32 = 70_000;

#[derive(Debug, Error)]
pub enum SimError {
    #[error("shell {index}: {message}")]
    BadShell { index: usize, message: String },
    #[error("synthesized TLE failed to re-parse: {0}")]
    BadTle(String),
    #[error("satellite {norad_id} never rises above the elevation mask during the slot")]
    NotVisible { norad_id: u32 },
    #[error("campaign: {0}")]
    BadConfig(String),
}

/// One Walker-delta shell: `count` satellites over `planes` equally spaced
/// planes, with inter-plane phasing parameter F (mean-anomaly stagger of
/// F*360/count degrees between adjacent planes).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ShellSpec {
    pub count: u32,
    pub planes: u32,
    pub inclination_deg: f64,
    pub altitude_km: f64,
    pub phasing: u32,
}

/// Circular-orbit mean motion in revolutions per day at a given altitude.
pub fn mean_motion_rev_per_day(altitude_km: f64) -> f64 {
    let a = EARTH_RADIUS_KM + altitude_km;
    let n_rad_s = (MU_EARTH / (a * a * a)).sqrt();
    n_rad_s * 86_400.0 / (2.0 * std::f64::consts::PI)
}

/// Synthesize TLEs for a set of Walker-delta shells. The seed only jitters
/// mean anomalies slightly (up to 0.1 deg) to break the lattice's exact
/// symmetries.
pub fn generate_constellation(
    shells: &[ShellSpec],
    epoch: DateTime<Utc>,
    seed: u64,
) -> Result<Vec<TleRecord>, SimError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut text = String::new();
    let mut norad = SYNTHETIC_NORAD_BASE;
    for (index, shell) in shells.iter().enumerate() {
        let err = |message: String| SimError::BadShell { index, message };
        if shell.planes == 0 || shell.count == 0 {
            return Err(err("count and planes must be positive".into()));
        }
        if shell.count % shell.planes != 0 {
            return Err(err(format!(
                "count {} not divisible by planes {}",
                shell.count, shell.planes
            )));
        }
        if !(0.0..=180.0).contains(&shell.inclination_deg) {
            return Err(err(format!("inclination {} out of range", shell.inclination_deg)));
        }
        if shell.altitude_km <= 0.0 {
            return Err(err(format!("altitude {} must be positive", shell.altitude_km)));
        }
        let per_plane = shell.count / shell.planes;
        let mean_motion = mean_motion_rev_per_day(shell.altitude_km);
        for plane in 0..shell.planes {
            let raan = 360.0 * f64::from(plane) / f64::from(shell.planes);
            for s in 0..per_plane {
                let ma = (360.0 * f64::from(s) / f64::from(per_plane)
                    + f64::from(shell.phasing) * 360.0 * f64::from(plane) / f64::from(shell.count)
                    + rng.gen_range(0.0..0.1))
                .rem_euclid(360.0);
                let rec = TleRecord {
                    norad_id: norad,
                    intl_designator: format!("{:02}{:03}A", epoch.format("%y"), (index + 1) * 100 + plane as usize % 100),
                    epoch,
                    mean_motion,
                    eccentricity: 0.0001,
                    inclination: shell.inclination_deg,
                    raan,
                    arg_perigee: 0.0,
                    mean_anomaly: ma,
                    bstar: 0.0,
                    line1: String::new(),
                    line2: String::new(),
                };
                let (l1, l2) = format_tle(&rec);
                text.push_str(&l1);
                text.push('\n');
                text.push_str(&l2);
                text.push('\n');
                norad += 1;
            }
        }
    }
    let parsed = parse_tle_catalog(&text);
    if let Some(e) = parsed.errors.first() {
        return Err(SimError::BadTle(e.to_string()));
    }
    Ok(parsed.records)
}

/// Launch dates for a synthetic constellation: satellites are grouped into
/// `batch_size` launches, one per month, counting back from `epoch` so the
/// newest batch is about a month old.
pub fn synthetic_launch_catalog(
    records: &[TleRecord],
    epoch: DateTime<Utc>,
    batch_size: usize,
) -> LaunchCatalog {
    assert!(batch_size >= 1);
    let n_batches = records.len().div_ceil(batch_size);
    let month_start =
        NaiveDate::from_ymd_opt(chrono::Datelike::year(&epoch), chrono::Datelike::month(&epoch), 1)
            .expect("valid month start");
    let mut catalog = LaunchCatalog::new();
    for (i, rec) in records.iter().enumerate() {
        let batch = i / batch_size;
        let months_back = (n_batches - batch) as u32;
        let date = month_start - Months::new(months_back);
        catalog.insert(rec.norad_id, date);
    }
    catalog
}

/// Forbidden sky wedge (e.g. a GEO-protection arc). Azimuth range may wrap
/// through north.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct Wedge {
    pub az_min_deg: f64,
    pub az_max_deg: f64,
    pub el_min_deg: f64,
    pub el_max_deg: f64,
}

impl Wedge {
    pub fn contains(&self, azimuth: f64, elevation: f64) -> bool {
        if !(self.el_min_deg..=self.el_max_deg).contains(&elevation) {
            return false;
        }
        let az = azimuth.rem_euclid(360.0);
        if self.az_min_deg <= self.az_max_deg {
            (self.az_min_deg..=self.az_max_deg).contains(&az)
        } else {
            az >= self.az_min_deg || az <= self.az_max_deg
        }
    }
}

/// Scheduler preference weights and noise. Score of a candidate:
/// w_elevation*norm(el) + w_north*cos(az) + w_age*(1 - norm(age)) +
/// w_sunlit*sunlit, with min-max norms over the slot's cohort.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SchedulerConfig {
    pub w_elevation: f64,
    pub w_north: f64,
    pub w_age: f64,
    pub w_sunlit: f64,
    /// Slot boundary offset within the minute, [0, 15).
    pub epoch_offset_s: u32,
    pub min_elevation_deg: f64,
    pub geo_exclusion: Option<Wedge>,
    /// 0 = deterministic argmax; > 0 = softmax sampling at this temperature.
    pub noise_temperature: f64,
    pub seed: u64,
}

impl Default for SchedulerConfig {
    fn default() -> Self {
        Self {
            w_elevation: 1.0,
            w_north: 0.0,
            w_age: 0.0,
            w_sunlit: 0.0,
            epoch_offset_s: 12,
            min_elevation_deg: crate::orbital::DEFAULT_MIN_ELEVATION_DEG,
            geo_exclusion: None,
            noise_temperature: 0.0,
            seed: 0,
        }
    }
}

impl SchedulerConfig {
    /// All weights zero, temperature 1: uniform-random selection. The null
    /// model for calibrating the analytics estimators.
    pub fn uniform_random(seed: u64) -> Self {
        Self {
            w_elevation: 0.0,
            noise_temperature: 1.0,
            seed,
            ..Self::default()
        }
    }

    /// Weights tuned so mid-latitude overnight campaigns land near
    /// field-observed preference statistics (elevation gap ~23 deg,
    /// high-band pick share ~80%, north share ~82%, sunlit rate ~72%).
    /// Calibrated against the built-in 1584-sat shell starting 01:00
    /// local; at that hour sunlit satellites cluster to the north, so a
    /// small explicit north weight suffices.
    pub fn field_mimic(seed: u64) -> Self {
        Self {
            w_elevation: 1.0,
            w_north: 0.1,
            w_age: 0.0,
            w_sunlit: 0.45,
            noise_temperature: 0.2,
            seed,
            ..Self::default()
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct ScheduleOutcome {
    pub norad_id: u32,
    /// True when every candidate sat inside the exclusion wedge and the
    /// scheduler fell back to the unfiltered cohort.
    pub wedge_fallback: bool,
}

fn min_max_norm(values: &[f64]) -> Vec<f64> {
    let min = values.iter().copied().fold(f64::INFINITY, f64::min);
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max - min <= 0.0 {
        return vec![0.0; values.len()];
    }
    values.iter().map(|v| (v - min) / (max - min)).collect()
}

fn cohort_scores(cohort: &[&SatelliteSnapshot], cfg: &SchedulerConfig) -> Vec<f64> {
    let elevations: Vec<f64> = cohort.iter().map(|s| s.topo.elevation).collect();
    let ages: Vec<f64> = cohort.iter().map(|s| s.age_days).collect();
    let el_norm = min_max_norm(&elevations);
    let age_norm = min_max_norm(&ages);
    cohort
        .iter()
        .enumerate()
        .map(|(i, s)| {
            cfg.w_elevation * el_norm[i]
                + cfg.w_north * s.topo.azimuth.to_radians().cos()
                + cfg.w_age * (1.0 - age_norm[i])
                + cfg.w_sunlit * f64::from(u8::from(s.sunlit))
        })
        .collect()
}

/// Pick one satellite from the slot's availability. Deterministic given the
/// rng state; argmax ties go to the lowest NORAD id.
pub fn schedule_slot(
    available: &[SatelliteSnapshot],
    cfg: &SchedulerConfig,
    rng: &mut ChaCha8Rng,
) -> ScheduleOutcome {
    assert!(!available.is_empty());
    let filtered: Vec<&SatelliteSnapshot> = available
        .iter()
        .filter(|s| {
            cfg.geo_exclusion
                .is_none_or(|w| !w.contains(s.topo.azimuth, s.topo.elevation))
        })
        .collect();
    let (cohort, wedge_fallback) = if filtered.is_empty() {
        (available.iter().collect::<Vec<_>>(), true)
    } else {
        (filtered, false)
    };
    let scores = cohort_scores(&cohort, cfg);

    let pick = if cfg.noise_temperature > 0.0 && !wedge_fallback {
        let max = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let weights: Vec<f64> = scores
            .iter()
            .map(|s| ((s - max) / cfg.noise_temperature).exp())
            .collect();
        let total: f64 = weights.iter().sum();
        let mut u = rng.gen::<f64>() * total;
        let mut chosen = cohort.len() - 1;
        for (i, w) in weights.iter().enumerate() {
            if u < *w {
                chosen = i;
                break;
            }
            u -= w;
        }
        chosen
    } else {
        (0..cohort.len())
            .max_by(|&a, &b| {
                scores[a]
                    .total_cmp(&scores[b])
                    .then(cohort[b].norad_id.cmp(&cohort[a].norad_id))
            })
            .expect("non-empty cohort")
    };
    ScheduleOutcome {
        norad_id: cohort[pick].norad_id,
        wedge_fallback,
    }
}

/// 8-connected Bresenham segment, endpoints included.
fn draw_line(map: &mut ObstructionMap, from: (usize, usize), to: (usize, usize)) {
    let (mut x0, mut y0) = (from.0 as i64, from.1 as i64);
    let (x1, y1) = (to.0 as i64, to.1 as i64);
    let dx = (x1 - x0).abs();
    let dy = -(y1 - y0).abs();
    let sx = if x0 < x1 { 1 } else { -1 };
    let sy = if y0 < y1 { 1 } else { -1 };
    let mut err = dx + dy;
    loop {
        if (0..MAP_SIZE as i64).contains(&x0) && (0..MAP_SIZE as i64).contains(&y0) {
            map.set(x0 as usize, y0 as usize, true);
        }
        if x0 == x1 && y0 == y1 {
            break;
        }
        let e2 = 2 * err;
        if e2 >= dy {
            err += dy;
            x0 += sx;
        }
        if e2 <= dx {
            err += dx;
            y0 += sy;
        }
    }
}

/// Draw a sampled topocentric trail onto a copy of `prior`. Samples whose
/// elevation falls outside the disk are skipped and break the connecting
/// line. The returned map carries the given slot index and capture time.
pub fn render_track(
    samples: &[crate::orbital::Topocentric],
    geom: &MapGeometry,
    prior: &ObstructionMap,
    slot_index: u32,
    captured_at: DateTime<Utc>,
) -> Option<ObstructionMap> {
    let mut map = ObstructionMap::from_pixels(prior.pixels().to_vec(), captured_at, slot_index)
        .expect("prior has map dimensions");
    let mut prev: Option<(usize, usize)> = None;
    let mut drew = false;
    for topo in samples {
        match polar_to_pixel(topo.elevation, topo.azimuth, geom) {
            Ok(px) => {
                match prev {
                    Some(p) => draw_line(&mut map, p, px),
                    None => map.set(px.0, px.1, true),
                }
                prev = Some(px);
                drew = true;
            }
            Err(_) => prev = None,
        }
    }
    drew.then_some(map)
}

/// Render the selected satellite's trail over one slot at 1-s cadence,
/// cumulatively on top of `prior` (the live map only resets every few
/// minutes, not per slot).
pub fn render_slot(
    propagator: &Propagator,
    slot_start: DateTime<Utc>,
    obs: &ObserverLocation,
    geom: &MapGeometry,
    prior: &ObstructionMap,
    slot_index: u32,
) -> Result<ObstructionMap, SimError> {
    let mut samples = Vec::with_capacity(SLOT_LEN_S as usize);
    for k in 0..SLOT_LEN_S {
        let t = slot_start + Duration::seconds(i64::from(k));
        if let Ok(state) = propagator.state_at(t, f64::INFINITY) {
            samples.push(look_angles(&state, obs));
        }
    }
    render_track(&samples, geom, prior, slot_index, slot_start)
        .ok_or(SimError::NotVisible {
            norad_id: propagator.norad_id(),
        })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TerminalSpec {
    pub id: String,
    pub latitude: f64,
    pub longitude: f64,
    pub altitude_m: f64,
}

impl TerminalSpec {
    pub fn observer(&self) -> ObserverLocation {
        ObserverLocation {
            latitude: self.latitude,
            longitude: self.longitude,
            altitude_m: self.altitude_m,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CampaignConfig {
    pub shells: Vec<ShellSpec>,
    pub start: DateTime<Utc>,
    pub duration_s: u64,
    pub terminals: Vec<TerminalSpec>,
    pub scheduler: SchedulerConfig,
    /// Satellites per synthetic monthly launch.
    pub launch_batch_size: usize,
    /// Slots between map resets (40 = the terminal's 10-minute reset).
    pub map_reset_slots: u32,
    pub seed: u64,
}

impl CampaignConfig {
    /// One mid-latitude terminal under a Starlink-like 1584-satellite
    /// shell, overnight so slots mix sunlit and eclipsed satellites.
    pub fn preset(name: &str, seed: u64) -> Option<Self> {
        let base = Self {
            shells: vec![ShellSpec {
                count: 1584,
                planes: 22,
                inclination_deg: 53.0,
                altitude_km: 550.0,
                phasing: 17,
            }],
            start: DateTime::parse_from_rfc3339("2023-06-01T06:00:00Z")
                .expect("valid preset start")
                .with_timezone(&Utc),
            duration_s: 3600,
            terminals: vec![TerminalSpec {
                id: "term0".into(),
                latitude: 41.66,
                longitude: -91.53,
                altitude_m: 200.0,
            }],
            scheduler: SchedulerConfig::default(),
            launch_batch_size: 66,
            map_reset_slots: 40,
            seed,
        };
        match name {
            "max-elevation" => Some(base),
            "uniform-random" => Some(Self {
                scheduler: SchedulerConfig::uniform_random(seed),
                ..base
            }),
            "field-mimic" => Some(Self {
                scheduler: SchedulerConfig::field_mimic(seed),
                ..base
            }),
            _ => None,
        }
    }
}

/// One simulated slot: the record the scheduler produced plus the map the
/// terminal would expose at the end of the slot.
#[derive(Debug, Clone)]
pub struct GroundTruthSlot {
    pub record: SlotRecord,
    pub map: ObstructionMap,
    pub wedge_fallback: bool,
}

#[derive(Debug)]
pub struct Campaign {
    pub constellation: Vec<TleRecord>,
    pub launches: LaunchCatalog,
    pub slots: Vec<GroundTruthSlot>,
    /// Slots with zero visible satellites (emitted with null selection).
    pub empty_slots: usize,
    /// Slots where rendering failed and the map was carried unchanged.
    pub render_failures: usize,
}

/// Run the scheduler over every terminal and slot. Deterministic: the same
/// config always produces the same slots.
pub fn run_campaign(cfg: &CampaignConfig) -> Result<Campaign, SimError> {
    if cfg.terminals.is_empty() {
        return Err(SimError::BadConfig("no terminals".into()));
    }
    if cfg.map_reset_slots == 0 {
        return Err(SimError::BadConfig("map_reset_slots must be positive".into()));
    }
    if cfg.scheduler.epoch_offset_s >= SLOT_LEN_S {
        return Err(SimError::BadConfig(format!(
            "epoch_offset_s {} out of [0, {SLOT_LEN_S})",
            cfg.scheduler.epoch_offset_s
        )));
    }
    let constellation = generate_constellation(&cfg.shells, cfg.start, cfg.seed)?;
    let launches = synthetic_launch_catalog(&constellation, cfg.start, cfg.launch_batch_size);
    let sky = SkyCatalog::build(&constellation, &launches).with_guard_days(f64::INFINITY);
    let geom = MapGeometry::default();
    let n_slots = cfg.duration_s / u64::from(SLOT_LEN_S);

    let mut slots = Vec::new();
    let mut empty_slots = 0usize;
    let mut render_failures = 0usize;
    for (ti, terminal) in cfg.terminals.iter().enumerate() {
        let obs = terminal.observer();
        let mut rng = ChaCha8Rng::seed_from_u64(
            cfg.scheduler
                .seed
                .wrapping_add((ti as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15)),
        );
        let mut prior = ObstructionMap::blank(cfg.start, 0);
        for k in 0..n_slots {
            let slot_start = cfg.start
                + Duration::seconds(
                    i64::from(cfg.scheduler.epoch_offset_s) + k as i64 * i64::from(SLOT_LEN_S),
                );
            let cycle = (k % u64::from(cfg.map_reset_slots)) as u32;
            if cycle == 0 {
                prior = ObstructionMap::blank(slot_start, 0);
            }
            let visible = sky.visible_at(&obs, slot_start, cfg.scheduler.min_elevation_deg);
            let (selected, wedge_fallback, map) = if visible.snapshots.is_empty() {
                empty_slots += 1;
                let map = ObstructionMap::from_pixels(prior.pixels().to_vec(), slot_start, cycle)
                    .expect("prior has map dimensions");
                (None, false, map)
            } else {
                let outcome = schedule_slot(&visible.snapshots, &cfg.scheduler, &mut rng);
                let propagator = sky
                    .propagator(outcome.norad_id)
                    .expect("selected satellite is in the catalog");
                let map = match render_slot(propagator, slot_start, &obs, &geom, &prior, cycle) {
                    Ok(map) => map,
                    Err(_) => {
                        render_failures += 1;
                        ObstructionMap::from_pixels(prior.pixels().to_vec(), slot_start, cycle)
                            .expect("prior has map dimensions")
                    }
                };
                (Some(outcome.norad_id), outcome.wedge_fallback, map)
            };
            prior = map.clone();
            slots.push(GroundTruthSlot {
                record: SlotRecord {
                    terminal_id: terminal.id.clone(),
                    slot_start,
                    available: visible.snapshots,
                    selected,
                },
                map,
                wedge_fallback,
            });
        }
    }
    Ok(Campaign {
        constellation,
        launches,
        slots,
        empty_slots,
        render_failures,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::obstruction::{xor_maps, MAP_CENTER};
    use crate::orbital::Topocentric;
    use chrono::TimeZone;

    fn epoch() -> DateTime<Utc> {
        Utc.with_ymd_and_hms(2023, 6, 1, 0, 0, 0).unwrap()
    }

    fn small_shell() -> ShellSpec {
        ShellSpec {
            count: 360,
            planes: 12,
            inclination_deg: 53.0,
            altitude_km: 550.0,
            phasing: 5,
        }
    }

    #[test]
    fn mean_motion_at_550_km() {
        let n = mean_motion_rev_per_day(550.0);
        assert!((n - 15.05).abs() < 0.1, "n = {n}");
    }

    #[test]
    fn walker_lattice_structure() {
        let shells = [ShellSpec {
            count: 1584,
            planes: 22,
            inclination_deg: 53.0,
            altitude_km: 550.0,
            phasing: 17,
        }];
        let records = generate_constellation(&shells, epoch(), 1).unwrap();
        assert_eq!(records.len(), 1584);
        // 72 satellites per plane, RAAN spacing 360/22
        let mut raans: Vec<f64> = records.iter().map(|r| r.raan).collect();
        raans.dedup();
        assert_eq!(raans.len(), 22);
        // RAAN survives a round trip through the 4-decimal TLE field
        assert!((raans[1] - raans[0] - 360.0 / 22.0).abs() < 1e-3);
        for rec in &records {
            assert!((rec.inclination - 53.0).abs() < 1e-6);
            assert!((rec.mean_motion - 15.05).abs() < 0.1);
        }
    }

    #[test]
    fn generated_records_reparse_cleanly() {
        let records = generate_constellation(&[small_shell()], epoch(), 2).unwrap();
        let text: String = records
            .iter()
            .flat_map(|r| [r.line1.as_str(), "\n", r.line2.as_str(), "\n"])
            .collect();
        let parsed = parse_tle_catalog(&text);
        assert!(parsed.errors.is_empty(), "{:?}", parsed.errors);
        assert_eq!(parsed.records.len(), records.len());
    }

    #[test]
    fn invalid_shells_rejected() {
        let mut bad = small_shell();
        bad.count = 10;
        bad.planes = 3;
        assert!(generate_constellation(&[bad], epoch(), 0).is_err());
        let mut bad = small_shell();
        bad.altitude_km = -5.0;
        assert!(generate_constellation(&[bad], epoch(), 0).is_err());
    }

    #[test]
    fn launch_catalog_covers_all_in_monthly_batches() {
        let records = generate_constellation(&[small_shell()], epoch(), 3).unwrap();
        let cat = synthetic_launch_catalog(&records, epoch(), 60);
        assert_eq!(cat.len(), records.len());
        let dates: std::collections::BTreeSet<_> =
            records.iter().map(|r| cat.get(r.norad_id).unwrap()).collect();
        assert_eq!(dates.len(), 6); // 360/60 batches
        assert!(dates.iter().all(|d| *d < epoch().date_naive()));
    }

    fn snap(norad_id: u32, elevation: f64, azimuth: f64, age_days: f64, sunlit: bool) -> SatelliteSnapshot {
        SatelliteSnapshot {
            norad_id,
            t: epoch(),
            topo: Topocentric { elevation, azimuth, range_km: 700.0 },
            age_days,
            sunlit,
        }
    }

    #[test]
    fn elevation_weight_picks_highest() {
        let cohort = vec![
            snap(1, 40.0, 10.0, 5.0, false),
            snap(2, 75.0, 200.0, 500.0, false),
            snap(3, 60.0, 350.0, 50.0, true),
        ];
        let cfg = SchedulerConfig::default(); // weights (1,0,0,0), T=0
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert_eq!(schedule_slot(&cohort, &cfg, &mut rng).norad_id, 2);
    }

    #[test]
    fn sunlit_weight_picks_sunlit() {
        let cohort = vec![
            snap(1, 80.0, 10.0, 5.0, false),
            snap(2, 30.0, 200.0, 500.0, true),
        ];
        let cfg = SchedulerConfig {
            w_elevation: 0.0,
            w_sunlit: 1.0,
            ..SchedulerConfig::default()
        };
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert_eq!(schedule_slot(&cohort, &cfg, &mut rng).norad_id, 2);
    }

    #[test]
    fn argmax_ties_go_to_lowest_norad() {
        let cohort = vec![snap(9, 50.0, 0.0, 1.0, true), snap(4, 50.0, 0.0, 1.0, true)];
        let cfg = SchedulerConfig::default();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert_eq!(schedule_slot(&cohort, &cfg, &mut rng).norad_id, 4);
    }

    #[test]
    fn uniform_mode_is_uniform() {
        let cohort: Vec<SatelliteSnapshot> = (0..5)
            .map(|i| snap(i, 30.0 + f64::from(i) * 10.0, f64::from(i) * 70.0, f64::from(i), i % 2 == 0))
            .collect();
        let cfg = SchedulerConfig::uniform_random(7);
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let mut counts = [0usize; 5];
        let draws = 10_000;
        for _ in 0..draws {
            let id = schedule_slot(&cohort, &cfg, &mut rng).norad_id;
            counts[id as usize] += 1;
        }
        // each count ~ Binomial(10k, 0.2): sigma = sqrt(10k*0.2*0.8) = 40
        let expected = draws as f64 / 5.0;
        for (i, &c) in counts.iter().enumerate() {
            assert!(
                (c as f64 - expected).abs() < 3.0 * 40.0,
                "satellite {i} picked {c} times"
            );
        }
    }

    #[test]
    fn wedge_excludes_and_falls_back() {
        let wedge = Wedge {
            az_min_deg: 150.0,
            az_max_deg: 210.0,
            el_min_deg: 0.0,
            el_max_deg: 90.0,
        };
        let cfg = SchedulerConfig {
            geo_exclusion: Some(wedge),
            ..SchedulerConfig::default()
        };
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        // highest-elevation satellite is inside the wedge: must be skipped
        let cohort = vec![snap(1, 80.0, 180.0, 1.0, true), snap(2, 40.0, 20.0, 1.0, true)];
        let outcome = schedule_slot(&cohort, &cfg, &mut rng);
        assert_eq!(outcome.norad_id, 2);
        assert!(!outcome.wedge_fallback);
        // every candidate inside: fall back, flagged
        let cohort = vec![snap(1, 80.0, 180.0, 1.0, true), snap(2, 40.0, 160.0, 1.0, true)];
        let outcome = schedule_slot(&cohort, &cfg, &mut rng);
        assert_eq!(outcome.norad_id, 1);
        assert!(outcome.wedge_fallback);
    }

    #[test]
    fn wedge_wraps_through_north() {
        let wedge = Wedge {
            az_min_deg: 350.0,
            az_max_deg: 10.0,
            el_min_deg: 0.0,
            el_max_deg: 90.0,
        };
        assert!(wedge.contains(355.0, 45.0));
        assert!(wedge.contains(5.0, 45.0));
        assert!(!wedge.contains(180.0, 45.0));
    }

    #[test]
    fn raising_elevation_weight_never_lowers_mean_selected_elevation() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let cohorts: Vec<Vec<SatelliteSnapshot>> = (0..200)
            .map(|_| {
                (0..8)
                    .map(|i| {
                        snap(
                            i,
                            rng.gen_range(25.0..90.0),
                            rng.gen_range(0.0..360.0),
                            rng.gen_range(1.0..1000.0),
                            rng.gen_bool(0.5),
                        )
                    })
                    .collect()
            })
            .collect();
        let mean_sel = |w: f64| {
            let cfg = SchedulerConfig {
                w_elevation: w,
                w_north: 0.4,
                w_age: 0.3,
                w_sunlit: 0.2,
                ..SchedulerConfig::default()
            };
            let mut rng = ChaCha8Rng::seed_from_u64(0);
            let total: f64 = cohorts
                .iter()
                .map(|c| {
                    let id = schedule_slot(c, &cfg, &mut rng).norad_id;
                    c.iter().find(|s| s.norad_id == id).unwrap().topo.elevation
                })
                .sum();
            total / cohorts.len() as f64
        };
        let mut prev = mean_sel(0.0);
        for w in [0.5, 1.0, 2.0, 5.0] {
            let next = mean_sel(w);
            assert!(next >= prev - 1e-9, "w {w}: {next} < {prev}");
            prev = next;
        }
    }

    #[test]
    fn zenith_sample_renders_center_pixel() {
        let geom = MapGeometry::default();
        let prior = ObstructionMap::blank(epoch(), 0);
        let samples = vec![Topocentric { elevation: 90.0, azimuth: 0.0, range_km: 550.0 }];
        let map = render_track(&samples, &geom, &prior, 1, epoch()).unwrap();
        assert_eq!(map.lit_count(), 1);
        assert!(map.get(MAP_CENTER.0, MAP_CENTER.1));
    }

    #[test]
    fn xor_of_disjoint_renders_recovers_new_trail() {
        let geom = MapGeometry::default();
        let blank = ObstructionMap::blank(epoch(), 0);
        let trail_a: Vec<Topocentric> = (0..10)
            .map(|i| Topocentric { elevation: 40.0, azimuth: 10.0 + f64::from(i), range_km: 700.0 })
            .collect();
        let trail_b: Vec<Topocentric> = (0..10)
            .map(|i| Topocentric { elevation: 70.0, azimuth: 200.0 + f64::from(i), range_km: 700.0 })
            .collect();
        let map_a = render_track(&trail_a, &geom, &blank, 0, epoch()).unwrap();
        let map_b = render_track(&trail_b, &geom, &map_a, 1, epoch()).unwrap();
        let diff = xor_maps(&map_a, &map_b).unwrap();
        let only_b = render_track(&trail_b, &geom, &blank, 0, epoch()).unwrap();
        assert_eq!(diff.pixels(), only_b.pixels());
        assert!(map_b.within_disk());
    }

    fn tiny_campaign(duration_s: u64, seed: u64) -> CampaignConfig {
        CampaignConfig {
            shells: vec![small_shell()],
            start: epoch(),
            duration_s,
            terminals: vec![TerminalSpec {
                id: "t0".into(),
                latitude: 41.66,
                longitude: -91.53,
                altitude_m: 200.0,
            }],
            scheduler: SchedulerConfig::default(),
            launch_batch_size: 60,
            map_reset_slots: 40,
            seed,
        }
    }

    #[test]
    fn one_hour_campaign_emits_240_slots() {
        let campaign = run_campaign(&tiny_campaign(3600, 4)).unwrap();
        assert_eq!(campaign.slots.len(), 240);
        for slot in &campaign.slots {
            slot.record.validate().unwrap();
            assert!(slot.map.within_disk());
        }
        // slot indices cycle 0..40
        assert_eq!(campaign.slots[0].map.slot_index, 0);
        assert_eq!(campaign.slots[39].map.slot_index, 39);
        assert_eq!(campaign.slots[40].map.slot_index, 0);
        // a 360-satellite shell leaves some slots empty at mid-latitude;
        // either way the ledger adds up
        let with_selection = campaign
            .slots
            .iter()
            .filter(|s| s.record.selected.is_some())
            .count();
        assert_eq!(with_selection + campaign.empty_slots, 240);
    }

    #[test]
    fn campaign_is_deterministic() {
        let a = run_campaign(&tiny_campaign(600, 5)).unwrap();
        let b = run_campaign(&tiny_campaign(600, 5)).unwrap();
        assert_eq!(a.slots.len(), b.slots.len());
        for (sa, sb) in a.slots.iter().zip(&b.slots) {
            assert_eq!(sa.record.selected, sb.record.selected);
            assert_eq!(sa.map, sb.map);
        }
    }

    #[test]
    fn campaign_slot_timing_honors_offset() {
        let mut cfg = tiny_campaign(600, 6);
        cfg.scheduler.epoch_offset_s = 12;
        let campaign = run_campaign(&cfg).unwrap();
        for (k, slot) in campaign.slots.iter().enumerate() {
            let expected = cfg.start + Duration::seconds(12 + k as i64 * 15);
            assert_eq!(slot.record.slot_start, expected);
        }
    }

    #[test]
    fn presets_exist() {
        for name in ["max-elevation", "uniform-random", "field-mimic"] {
            let cfg = CampaignConfig::preset(name, 1).unwrap();
            assert_eq!(cfg.shells[0].count, 1584);
        }
        assert!(CampaignConfig::preset("nope", 1).is_none());
    }
}
