//! Serving-satellite identification: DTW between the decoded sky track and
//! candidate trajectories propagated for the slot.

use chrono::{DateTime, Duration, Utc};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::obstruction::PolarTrack;
use crate::orbital::{look_angles, ObserverLocation, SkyCatalog};

/// Track projected onto the polar plane: r = 90 - elevation,
/// x = r sin(azimuth), y = r cos(azimuth).
#[derive(Debug, Clone, PartialEq)]
pub struct CartesianTrack {
    pub points: Vec<(f64, f64)>,
    /// NORAD id for propagated candidates, `None` for observed tracks.
    pub source: Option<u32>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Orientation {
    Forward,
    Reversed,
}

/// Best candidate for one slot, with the margin to the runner-up.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MatchResult {
    pub slot_index: u32,
    pub best: u32,
    pub best_distance: f64,
    /// `f64::INFINITY` when only one candidate was considered.
    pub runner_up_distance: f64,
    pub margin: f64,
    pub candidates_considered: usize,
    pub orientation: Orientation,
    pub low_confidence: bool,
}

#[derive(Debug, Error)]
pub enum MatchError {
    #[error("no candidate satellites visible during the slot")]
    NoCandidates,
    #[error("observed track has fewer than 2 points")]
    DegenerateTrack,
}

#[derive(Debug, Clone)]
pub struct MatchConfig {
    /// Candidate sampling cadence within the slot, seconds.
    pub sample_cadence_s: u32,
    pub slot_len_s: u32,
    pub min_elevation_deg: f64,
    /// Results with margin below this are flagged low-confidence (default 0:
    /// never flag).
    pub min_margin: f64,
}

impl Default for MatchConfig {
    fn default() -> Self {
        Self {
            sample_cadence_s: 1,
            slot_len_s: 15,
            min_elevation_deg: crate::orbital::DEFAULT_MIN_ELEVATION_DEG,
            min_margin: 0.0,
        }
    }
}

/// Project a polar track onto the plane.
pub fn to_cartesian(track: &PolarTrack) -> CartesianTrack {
    CartesianTrack {
        points: track
            .points
            .iter()
            .map(|&(el, az)| project(el, az))
            .collect(),
        source: None,
    }
}

pub fn project(elevation: f64, azimuth: f64) -> (f64, f64) {
    let r = 90.0 - elevation;
    let az = azimuth.to_radians();
    (r * az.sin(), r * az.cos())
}

fn euclid(a: (f64, f64), b: (f64, f64)) -> f64 {
    ((a.0 - b.0).powi(2) + (a.1 - b.1).powi(2)).sqrt()
}

/// Classic boundary-anchored DTW with symmetric steps and pointwise
/// Euclidean cost, no warping window.
pub fn dtw_distance(a: &CartesianTrack, b: &CartesianTrack) -> f64 {
    let n = a.points.len();
    let m = b.points.len();
    assert!(n >= 1 && m >= 1, "dtw over empty track");
    let mut prev = vec![f64::INFINITY; m + 1];
    let mut curr = vec![f64::INFINITY; m + 1];
    prev[0] = 0.0;
    for i in 1..=n {
        curr[0] = f64::INFINITY;
        for j in 1..=m {
            let cost = euclid(a.points[i - 1], b.points[j - 1]);
            curr[j] = cost + prev[j - 1].min(prev[j]).min(curr[j - 1]);
        }
        std::mem::swap(&mut prev, &mut curr);
    }
    prev[m]
}

/// Resample a polyline to `n` points spaced evenly by arc length.
pub fn resample_by_arc_length(points: &[(f64, f64)], n: usize) -> Vec<(f64, f64)> {
    assert!(n >= 2 && !points.is_empty());
    if points.len() == 1 {
        return vec![points[0]; n];
    }
    let mut cumulative = Vec::with_capacity(points.len());
    cumulative.push(0.0);
    for w in points.windows(2) {
        let last = *cumulative.last().unwrap();
        cumulative.push(last + euclid(w[0], w[1]));
    }
    let total = *cumulative.last().unwrap();
    if total == 0.0 {
        return vec![points[0]; n];
    }
    (0..n)
        .map(|k| {
            let target = total * k as f64 / (n - 1) as f64;
            let seg = cumulative.partition_point(|&c| c < target).max(1) - 1;
            let seg = seg.min(points.len() - 2);
            let seg_len = cumulative[seg + 1] - cumulative[seg];
            let t = if seg_len == 0.0 {
                0.0
            } else {
                ((target - cumulative[seg]) / seg_len).clamp(0.0, 1.0)
            };
            let (x0, y0) = points[seg];
            let (x1, y1) = points[seg + 1];
            (x0 + t * (x1 - x0), y0 + t * (y1 - y0))
        })
        .collect()
}

/// Candidate trajectory: one satellite sampled across the slot window.
pub struct CandidateTrack {
    pub norad_id: u32,
    pub track: CartesianTrack,
}

/// Propagate every satellite visible at the slot midpoint across the full
/// window at the configured cadence. Satellites dipping below the mask at
/// the window edges are still sampled for the whole window.
pub fn candidate_tracks(
    catalog: &SkyCatalog,
    obs: &ObserverLocation,
    slot_start: DateTime<Utc>,
    config: &MatchConfig,
) -> Vec<CandidateTrack> {
    let midpoint = slot_start + Duration::milliseconds(i64::from(config.slot_len_s) * 500);
    let visible = catalog.visible_at(obs, midpoint, config.min_elevation_deg);
    let n_samples = (config.slot_len_s / config.sample_cadence_s).max(2);
    let mut out = Vec::with_capacity(visible.snapshots.len());
    for snap in &visible.snapshots {
        let Some(propagator) = catalog.propagator(snap.norad_id) else {
            continue;
        };
        let mut points = Vec::with_capacity(n_samples as usize);
        for k in 0..n_samples {
            let t = slot_start + Duration::seconds(i64::from(k * config.sample_cadence_s));
            let Ok(state) = propagator.state_at(t, f64::INFINITY) else {
                break;
            };
            let topo = look_angles(&state, obs);
            points.push(project(topo.elevation, topo.azimuth));
        }
        if points.len() == n_samples as usize {
            out.push(CandidateTrack {
                norad_id: snap.norad_id,
                track: CartesianTrack {
                    points,
                    source: Some(snap.norad_id),
                },
            });
        }
    }
    out
}

/// Match an observed track against pre-computed candidates. The observed
/// track is resampled to the candidate point count and tried in both
/// orientations (trail direction is unrecoverable from a single diff).
pub fn match_track(
    track: &PolarTrack,
    candidates: &[CandidateTrack],
    config: &MatchConfig,
) -> Result<MatchResult, MatchError> {
    if track.points.len() < 2 {
        return Err(MatchError::DegenerateTrack);
    }
    if candidates.is_empty() {
        return Err(MatchError::NoCandidates);
    }
    let n_samples = candidates[0].track.points.len();
    let observed = to_cartesian(track);
    let forward = CartesianTrack {
        points: resample_by_arc_length(&observed.points, n_samples),
        source: None,
    };
    let mut reversed_points = forward.points.clone();
    reversed_points.reverse();
    let reversed = CartesianTrack {
        points: reversed_points,
        source: None,
    };

    let mut scored: Vec<(u32, f64, Orientation)> = candidates
        .iter()
        .map(|cand| {
            let df = dtw_distance(&forward, &cand.track);
            let dr = dtw_distance(&reversed, &cand.track);
            if df <= dr {
                (cand.norad_id, df, Orientation::Forward)
            } else {
                (cand.norad_id, dr, Orientation::Reversed)
            }
        })
        .collect();
    scored.sort_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)));

    let (best, best_distance, orientation) = scored[0];
    let runner_up_distance = scored.get(1).map_or(f64::INFINITY, |s| s.1);
    let margin = runner_up_distance - best_distance;
    Ok(MatchResult {
        slot_index: track.slot_index,
        best,
        best_distance,
        runner_up_distance,
        margin,
        candidates_considered: scored.len(),
        orientation,
        low_confidence: margin < config.min_margin,
    })
}

/// Full identification for one slot: build candidates, then match.
pub fn identify_satellite(
    track: &PolarTrack,
    catalog: &SkyCatalog,
    obs: &ObserverLocation,
    slot_start: DateTime<Utc>,
    config: &MatchConfig,
) -> Result<MatchResult, MatchError> {
    let candidates = candidate_tracks(catalog, obs, slot_start, config);
    match_track(track, &candidates, config)
}
