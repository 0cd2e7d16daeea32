//! Obstruction-map decoding: pixel/polar geometry, XOR slot differencing
//! and ordered trajectory extraction.
//!
//! Maps are 123x123 bitmaps holding a polar sky plot centered at pixel
//! (62, 62) with a 45-pixel radius. Radius encodes elevation (90 degrees at
//! the center, 25 at the rim), angle encodes azimuth with 0 at image-up.

pub mod pgm;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const MAP_SIZE: usize = 123;
pub const MAP_CENTER: (usize, usize) = (62, 62);
pub const MAP_RADIUS_PX: f64 = 45.0;
pub const ELEVATION_AT_RIM: f64 = 25.0;
pub const ELEVATION_AT_CENTER: f64 = 90.0;
const ELEVATION_SPAN: f64 = ELEVATION_AT_CENTER - ELEVATION_AT_RIM;
/// Rendering rounds rim points up to half a pixel past the 45-px radius;
/// decoding accepts the same slack (about 0.72 degrees below the rim).
const RIM_SLACK_DEG: f64 = 0.5 / MAP_RADIUS_PX * ELEVATION_SPAN;

/// Direction in which azimuth grows around image-up. Upstream map imagery
/// does not pin the chirality; clockwise is the default and the single
/// flip point.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
pub enum AzimuthSense {
    #[default]
    Clockwise,
    CounterClockwise,
}

/// Polar plot geometry. Constants are fixed by the map format; only the
/// azimuth sense is configurable.
#[derive(Debug, Clone, Copy, Default)]
pub struct MapGeometry {
    pub azimuth_sense: AzimuthSense,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ObstructionError {
    #[error("pixel ({col}, {row}) lies outside the {MAP_RADIUS_PX}-px polar disk")]
    PixelOutsideDisk { col: usize, row: usize },
    #[error("elevation {0} out of [{ELEVATION_AT_RIM}, {ELEVATION_AT_CENTER}]")]
    ElevationOutOfRange(f64),
    #[error("maps are not consecutive slots ({a} then {b})")]
    NonConsecutiveSlots { a: u32, b: u32 },
    #[error("diff contains no lit pixels")]
    EmptyDiff,
    #[error("ambiguous diff: {0}")]
    AmbiguousDiff(String),
}

/// One 123x123 sky bitmap. `slot_index` counts 15-second slots since the
/// terminal's last reset.
#[derive(Debug, Clone, PartialEq)]
pub struct ObstructionMap {
    pixels: Vec<bool>,
    pub captured_at: DateTime<Utc>,
    pub slot_index: u32,
}

impl ObstructionMap {
    pub fn blank(captured_at: DateTime<Utc>, slot_index: u32) -> Self {
        Self {
            pixels: vec![false; MAP_SIZE * MAP_SIZE],
            captured_at,
            slot_index,
        }
    }

    pub fn from_pixels(
        pixels: Vec<bool>,
        captured_at: DateTime<Utc>,
        slot_index: u32,
    ) -> Option<Self> {
        (pixels.len() == MAP_SIZE * MAP_SIZE).then_some(Self {
            pixels,
            captured_at,
            slot_index,
        })
    }

    pub fn get(&self, col: usize, row: usize) -> bool {
        self.pixels[row * MAP_SIZE + col]
    }

    pub fn set(&mut self, col: usize, row: usize, lit: bool) {
        self.pixels[row * MAP_SIZE + col] = lit;
    }

    pub fn lit_pixels(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        (0..MAP_SIZE * MAP_SIZE)
            .filter(|i| self.pixels[*i])
            .map(|i| (i % MAP_SIZE, i / MAP_SIZE))
    }

    pub fn lit_count(&self) -> usize {
        self.pixels.iter().filter(|p| **p).count()
    }

    pub fn pixels(&self) -> &[bool] {
        &self.pixels
    }

    /// All lit pixels inside the polar disk (with half-pixel slack)?
    pub fn within_disk(&self) -> bool {
        self.lit_pixels().all(|(c, r)| {
            let dx = c as f64 - MAP_CENTER.0 as f64;
            let dy = r as f64 - MAP_CENTER.1 as f64;
            (dx * dx + dy * dy).sqrt() <= MAP_RADIUS_PX + 0.5
        })
    }
}

/// Decode a pixel into (elevation, azimuth) degrees.
pub fn pixel_to_polar(
    px: (usize, usize),
    geom: &MapGeometry,
) -> Result<(f64, f64), ObstructionError> {
    let (col, row) = px;
    let dx = col as f64 - MAP_CENTER.0 as f64;
    let dy = row as f64 - MAP_CENTER.1 as f64;
    let r = (dx * dx + dy * dy).sqrt();
    if r > MAP_RADIUS_PX + 0.5 {
        return Err(ObstructionError::PixelOutsideDisk { col, row });
    }
    let elevation = ELEVATION_AT_CENTER - (r / MAP_RADIUS_PX) * ELEVATION_SPAN;
    // image-up is azimuth 0; row grows downward
    let azimuth = if r == 0.0 {
        0.0
    } else {
        let raw = match geom.azimuth_sense {
            AzimuthSense::Clockwise => dx.atan2(-dy),
            AzimuthSense::CounterClockwise => (-dx).atan2(-dy),
        };
        crate::orbital::frames::normalize_azimuth(raw.to_degrees())
    };
    Ok((elevation, azimuth))
}

/// Nearest-pixel inverse of [`pixel_to_polar`], rounding half away from zero.
pub fn polar_to_pixel(
    elevation: f64,
    azimuth: f64,
    geom: &MapGeometry,
) -> Result<(usize, usize), ObstructionError> {
    if !((ELEVATION_AT_RIM - RIM_SLACK_DEG)..=ELEVATION_AT_CENTER).contains(&elevation) {
        return Err(ObstructionError::ElevationOutOfRange(elevation));
    }
    let r = (ELEVATION_AT_CENTER - elevation) / ELEVATION_SPAN * MAP_RADIUS_PX;
    let az = azimuth.to_radians();
    let (dx, dy) = match geom.azimuth_sense {
        AzimuthSense::Clockwise => (r * az.sin(), -r * az.cos()),
        AzimuthSense::CounterClockwise => (-r * az.sin(), -r * az.cos()),
    };
    let col = MAP_CENTER.0 as f64 + dx;
    let row = MAP_CENTER.1 as f64 + dy;
    Ok((col.round() as usize, row.round() as usize))
}

/// Pixel-wise XOR of two consecutive slot maps. Metadata comes from the
/// later map.
pub fn xor_maps(
    a: &ObstructionMap,
    b: &ObstructionMap,
) -> Result<ObstructionMap, ObstructionError> {
    if b.slot_index != a.slot_index + 1 {
        return Err(ObstructionError::NonConsecutiveSlots {
            a: a.slot_index,
            b: b.slot_index,
        });
    }
    let pixels = a
        .pixels
        .iter()
        .zip(&b.pixels)
        .map(|(x, y)| x ^ y)
        .collect();
    Ok(ObstructionMap {
        pixels,
        captured_at: b.captured_at,
        slot_index: b.slot_index,
    })
}

/// Decoded sky trajectory from one slot diff. Direction is ambiguous until
/// the matcher tries both orientations.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PolarTrack {
    /// (elevation, azimuth) degrees, ordered along the trail.
    pub points: Vec<(f64, f64)>,
    pub slot_index: u32,
    pub terminal_id: String,
}

const NOISE_COMPONENT_MAX_PX: usize = 2;

fn neighbors(col: usize, row: usize) -> impl Iterator<Item = (usize, usize)> {
    (-1i32..=1)
        .flat_map(move |dr| (-1i32..=1).map(move |dc| (dc, dr)))
        .filter(|&(dc, dr)| dc != 0 || dr != 0)
        .filter_map(move |(dc, dr)| {
            let c = col as i32 + dc;
            let r = row as i32 + dr;
            (c >= 0 && r >= 0 && c < MAP_SIZE as i32 && r < MAP_SIZE as i32)
                .then_some((c as usize, r as usize))
        })
}

fn connected_components(map: &ObstructionMap) -> Vec<Vec<(usize, usize)>> {
    let mut seen = vec![false; MAP_SIZE * MAP_SIZE];
    let mut components = Vec::new();
    for (col, row) in map.lit_pixels() {
        if seen[row * MAP_SIZE + col] {
            continue;
        }
        let mut component = Vec::new();
        let mut stack = vec![(col, row)];
        seen[row * MAP_SIZE + col] = true;
        while let Some((c, r)) = stack.pop() {
            component.push((c, r));
            for (nc, nr) in neighbors(c, r) {
                if map.get(nc, nr) && !seen[nr * MAP_SIZE + nc] {
                    seen[nr * MAP_SIZE + nc] = true;
                    stack.push((nc, nr));
                }
            }
        }
        components.push(component);
    }
    components
}

/// Farthest lit pixel from `from` by 8-connected hops (ties to the
/// smallest coordinate, for determinism).
fn bfs_farthest(map: &ObstructionMap, from: (usize, usize)) -> (usize, usize) {
    let degree = |c: usize, r: usize| neighbors(c, r).filter(|&(nc, nr)| map.get(nc, nr)).count();
    let mut dist = vec![usize::MAX; MAP_SIZE * MAP_SIZE];
    dist[from.1 * MAP_SIZE + from.0] = 0;
    let mut queue = std::collections::VecDeque::from([from]);
    // ties at maximal distance go to the thinnest pixel (the actual tip of
    // a two-pixel-wide staircase end), then to the smallest coordinate
    let mut best = (0usize, degree(from.0, from.1), from);
    while let Some((c, r)) = queue.pop_front() {
        let d = dist[r * MAP_SIZE + c];
        let key = (d, degree(c, r), (c, r));
        if key.0 > best.0 || (key.0 == best.0 && (key.1, key.2) < (best.1, best.2)) {
            best = key;
        }
        for (nc, nr) in neighbors(c, r) {
            if map.get(nc, nr) && dist[nr * MAP_SIZE + nc] == usize::MAX {
                dist[nr * MAP_SIZE + nc] = d + 1;
                queue.push_back((nc, nr));
            }
        }
    }
    best.2
}

/// Group the diff's lit pixels into 8-connected components, chain the single
/// real trail into an ordered pixel path and decode it to polar points.
/// Components of <= 2 pixels are treated as capture noise and ignored.
pub fn extract_track(
    diff: &ObstructionMap,
    geom: &MapGeometry,
    terminal_id: &str,
) -> Result<PolarTrack, ObstructionError> {
    if diff.lit_count() == 0 {
        return Err(ObstructionError::EmptyDiff);
    }
    let mut components: Vec<_> = connected_components(diff)
        .into_iter()
        .filter(|c| c.len() > NOISE_COMPONENT_MAX_PX)
        .collect();
    match components.len() {
        0 => return Err(ObstructionError::EmptyDiff),
        1 => {}
        n => {
            return Err(ObstructionError::AmbiguousDiff(format!(
                "{n} trail components of 3+ pixels (overlap erasure or multi-trail slot)"
            )))
        }
    }
    let mut component = components.pop().expect("one component");
    component.sort(); // deterministic start selection

    let degree = |&(c, r): &(usize, usize)| {
        neighbors(c, r)
            .filter(|&(nc, nr)| diff.get(nc, nr))
            .count()
    };
    // Preferred start: a degree-1 endpoint. Quantized trails are often
    // 4-connected staircases whose tips have two lit neighbors, so when no
    // degree-1 pixel exists fall back to the farthest pixel from an
    // arbitrary one (double-BFS diameter endpoint). Genuine rings are
    // caught below when greedy chaining strands pixels.
    let endpoint = component.iter().copied().find(|p| degree(p) == 1);
    let start = endpoint.unwrap_or_else(|| bfs_farthest(diff, component[0]));

    // greedy nearest-neighbor chaining from the endpoint
    let mut remaining: Vec<(usize, usize)> = component;
    let mut path = Vec::with_capacity(remaining.len());
    let mut current = start;
    remaining.retain(|p| *p != start);
    path.push(start);
    while !remaining.is_empty() {
        // nearest unvisited pixel; among equally near candidates take the
        // one with fewest unvisited neighbors so dead-end tips of
        // two-pixel-wide staircase bends are consumed before walking past
        // them would strand them
        let (idx, _) = remaining
            .iter()
            .enumerate()
            .map(|(i, &(c, r))| {
                let dc = c as i64 - current.0 as i64;
                let dr = r as i64 - current.1 as i64;
                let unvisited_nbrs = remaining
                    .iter()
                    .filter(|&&(nc, nr)| {
                        (nc, nr) != (c, r) && nc.abs_diff(c) <= 1 && nr.abs_diff(r) <= 1
                    })
                    .count();
                (i, (dc * dc + dr * dr, unvisited_nbrs, (c, r)))
            })
            .min_by(|a, b| a.1.cmp(&b.1))
            .expect("non-empty");
        let next = remaining.swap_remove(idx);
        // chaining property: consecutive path pixels must stay 8-adjacent
        let adjacent = next.0.abs_diff(current.0) <= 1 && next.1.abs_diff(current.1) <= 1;
        if !adjacent {
            return Err(ObstructionError::AmbiguousDiff(format!(
                "trail is not a chain: ({}, {}) -> ({}, {})",
                current.0, current.1, next.0, next.1
            )));
        }
        path.push(next);
        current = next;
    }
    // a chain that had no endpoint and closes back onto its start is a
    // ring, not a trail; short closed blobs stay below this length
    if endpoint.is_none() && path.len() >= 8 {
        let first = path[0];
        let last = *path.last().expect("non-empty path");
        if last.0.abs_diff(first.0) <= 1 && last.1.abs_diff(first.1) <= 1 {
            return Err(ObstructionError::AmbiguousDiff(
                "trail has no endpoint (closed loop)".into(),
            ));
        }
    }

    let points = path
        .into_iter()
        .map(|px| pixel_to_polar(px, geom))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(PolarTrack {
        points,
        slot_index: diff.slot_index,
        terminal_id: terminal_id.to_string(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use chrono::TimeZone;

    fn t0() -> DateTime<Utc> {
        Utc.with_ymd_and_hms(2023, 6, 1, 0, 0, 0).unwrap()
    }

    #[test]
    fn center_pixel_is_zenith() {
        let geom = MapGeometry::default();
        let (el, az) = pixel_to_polar((62, 62), &geom).unwrap();
        assert_eq!((el, az), (90.0, 0.0));
    }

    #[test]
    fn rim_pixel_straight_up_is_north_at_25_degrees() {
        let geom = MapGeometry::default();
        let (el, az) = pixel_to_polar((62, 17), &geom).unwrap();
        assert!((el - 25.0).abs() < 1e-12, "el {el}");
        assert!(az.abs() < 1e-12, "az {az}");
    }

    #[test]
    fn rim_pixel_to_the_right_is_east_under_clockwise_sense() {
        let geom = MapGeometry::default();
        let (el, az) = pixel_to_polar((107, 62), &geom).unwrap();
        assert!((el - 25.0).abs() < 1e-12);
        assert!((az - 90.0).abs() < 1e-12, "az {az}");

        let ccw = MapGeometry {
            azimuth_sense: AzimuthSense::CounterClockwise,
        };
        let (_, az) = pixel_to_polar((107, 62), &ccw).unwrap();
        assert!((az - 270.0).abs() < 1e-12, "az {az}");
    }

    #[test]
    fn polar_to_pixel_inverts_examples() {
        let geom = MapGeometry::default();
        assert_eq!(polar_to_pixel(90.0, 123.0, &geom).unwrap(), (62, 62));
        assert_eq!(polar_to_pixel(25.0, 0.0, &geom).unwrap(), (62, 17));
        assert!(matches!(
            polar_to_pixel(24.0, 0.0, &geom),
            Err(ObstructionError::ElevationOutOfRange(_))
        ));
    }

    #[test]
    fn pixel_outside_disk_rejected() {
        let geom = MapGeometry::default();
        assert!(matches!(
            pixel_to_polar((0, 0), &geom),
            Err(ObstructionError::PixelOutsideDisk { .. })
        ));
    }

    #[test]
    fn round_trip_identity_over_every_disk_pixel() {
        for geom in [
            MapGeometry::default(),
            MapGeometry {
                azimuth_sense: AzimuthSense::CounterClockwise,
            },
        ] {
            for row in 0..MAP_SIZE {
                for col in 0..MAP_SIZE {
                    if let Ok((el, az)) = pixel_to_polar((col, row), &geom) {
                        let back = polar_to_pixel(el, az, &geom).unwrap();
                        assert_eq!(back, (col, row));
                    }
                }
            }
        }
    }

    #[test]
    fn xor_identical_maps_is_blank() {
        let mut a = ObstructionMap::blank(t0(), 3);
        a.set(62, 30, true);
        a.set(63, 31, true);
        let mut b = a.clone();
        b.slot_index = 4;
        let diff = xor_maps(&a, &b).unwrap();
        assert_eq!(diff.lit_count(), 0);
        assert_eq!(diff.slot_index, 4);
    }

    #[test]
    fn xor_against_blank_is_identity() {
        let a = ObstructionMap::blank(t0(), 0);
        let mut b = ObstructionMap::blank(t0(), 1);
        b.set(40, 40, true);
        b.set(41, 41, true);
        let diff = xor_maps(&a, &b).unwrap();
        assert_eq!(diff.pixels, b.pixels);
    }

    #[test]
    fn xor_disjoint_trails_recovers_new_trail() {
        // set-algebra oracle on random disjoint trails
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        for _ in 0..20 {
            let mut a = ObstructionMap::blank(t0(), 0);
            let mut expected_new: Vec<(usize, usize)> = Vec::new();
            for _ in 0..5 {
                a.set(rng.gen_range(30..60), rng.gen_range(30..60), true);
            }
            let mut b = a.clone();
            b.slot_index = 1;
            for _ in 0..5 {
                let px = (rng.gen_range(70..100), rng.gen_range(70..100));
                if !b.get(px.0, px.1) {
                    b.set(px.0, px.1, true);
                    expected_new.push(px);
                }
            }
            let diff = xor_maps(&a, &b).unwrap();
            let mut got: Vec<_> = diff.lit_pixels().collect();
            got.sort();
            expected_new.sort();
            assert_eq!(got, expected_new);
        }
    }

    #[test]
    fn xor_requires_consecutive_slots() {
        let a = ObstructionMap::blank(t0(), 0);
        let b = ObstructionMap::blank(t0(), 2);
        assert!(matches!(
            xor_maps(&a, &b),
            Err(ObstructionError::NonConsecutiveSlots { a: 0, b: 2 })
        ));
    }

    #[test]
    fn extract_horizontal_run() {
        let geom = MapGeometry::default();
        let mut diff = ObstructionMap::blank(t0(), 1);
        for col in 62..=66 {
            diff.set(col, 17, true);
        }
        let track = extract_track(&diff, &geom, "term0").unwrap();
        assert_eq!(track.points.len(), 5);
        for (el, _) in &track.points {
            assert!((24.5..=26.5).contains(el), "el {el}");
        }
        // azimuths monotone along the run
        let azs: Vec<f64> = track.points.iter().map(|p| p.1).collect();
        let increasing = azs.windows(2).all(|w| w[1] >= w[0]);
        let decreasing = azs.windows(2).all(|w| w[1] <= w[0]);
        assert!(increasing || decreasing, "azimuths {azs:?}");
    }

    #[test]
    fn empty_diff_errors() {
        let diff = ObstructionMap::blank(t0(), 1);
        assert!(matches!(
            extract_track(&diff, &MapGeometry::default(), "t"),
            Err(ObstructionError::EmptyDiff)
        ));
    }

    #[test]
    fn two_far_apart_runs_are_ambiguous() {
        let mut diff = ObstructionMap::blank(t0(), 1);
        for col in 40..45 {
            diff.set(col, 50, true);
        }
        for col in 70..75 {
            diff.set(col, 80, true);
        }
        assert!(matches!(
            extract_track(&diff, &MapGeometry::default(), "t"),
            Err(ObstructionError::AmbiguousDiff(_))
        ));
    }

    #[test]
    fn loop_is_ambiguous() {
        let mut diff = ObstructionMap::blank(t0(), 1);
        // a 3x3 ring of pixels, every pixel has 2 neighbors
        for (c, r) in [
            (50, 50),
            (51, 50),
            (52, 50),
            (52, 51),
            (52, 52),
            (51, 52),
            (50, 52),
            (50, 51),
        ] {
            diff.set(c, r, true);
        }
        assert!(matches!(
            extract_track(&diff, &MapGeometry::default(), "t"),
            Err(ObstructionError::AmbiguousDiff(_))
        ));
    }

    #[test]
    fn noise_specks_are_ignored() {
        let geom = MapGeometry::default();
        let mut diff = ObstructionMap::blank(t0(), 1);
        for col in 60..=66 {
            diff.set(col, 40, true);
        }
        diff.set(80, 80, true); // 1-px speck
        let track = extract_track(&diff, &geom, "t").unwrap();
        assert_eq!(track.points.len(), 7);
    }

    #[test]
    fn track_points_round_trip_into_lit_pixels() {
        let geom = MapGeometry::default();
        let mut diff = ObstructionMap::blank(t0(), 1);
        for i in 0..6 {
            diff.set(50 + i, 40 + i, true);
        }
        let track = extract_track(&diff, &geom, "t").unwrap();
        for &(el, az) in &track.points {
            let (c, r) = polar_to_pixel(el, az, &geom).unwrap();
            assert!(diff.get(c, r));
        }
    }
}
