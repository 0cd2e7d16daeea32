//! Scheduler-preference statistics over (availability, selection) records.
//!
//! Every report treats "available" as available-and-not-selected so the
//! selected satellite never contaminates its own comparison distribution.
//! Reports are deterministic functions of the record set and independent
//! of record order.

use std::collections::BTreeMap;
use std::io::{BufRead, Write};

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::orbital::{LaunchBin, LaunchCatalog, SatelliteSnapshot};

/// One scheduling slot: who was visible, who got picked. `selected` is
/// `None` for slots where nothing was serviceable.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SlotRecord {
    pub terminal_id: String,
    pub slot_start: DateTime<Utc>,
    pub available: Vec<SatelliteSnapshot>,
    pub selected: Option<u32>,
}

impl SlotRecord {
    /// The snapshot of the selected satellite, if any.
    pub fn selected_snapshot(&self) -> Option<&SatelliteSnapshot> {
        let id = self.selected?;
        self.available.iter().find(|s| s.norad_id == id)
    }

    pub fn validate(&self) -> Result<(), AnalyticsError> {
        if self.available.is_empty() && self.selected.is_some() {
            return Err(AnalyticsError::BadRecord {
                terminal_id: self.terminal_id.clone(),
                slot_start: self.slot_start,
                message: "selection without availability".into(),
            });
        }
        if let Some(id) = self.selected {
            if !self.available.iter().any(|s| s.norad_id == id) {
                return Err(AnalyticsError::BadRecord {
                    terminal_id: self.terminal_id.clone(),
                    slot_start: self.slot_start,
                    message: format!("selected {id} not among available"),
                });
            }
        }
        Ok(())
    }
}

#[derive(Debug, Error)]
pub enum AnalyticsError {
    #[error("no records with a selection")]
    NoRecords,
    #[error("no mixed slots (need at least one slot with both sunlit and dark satellites)")]
    NoMixedSlots,
    #[error("record {terminal_id}@{slot_start}: {message}")]
    BadRecord {
        terminal_id: String,
        slot_start: DateTime<Utc>,
        message: String,
    },
    #[error("jsonl line {line}: {message}")]
    Jsonl { line: usize, message: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Read SlotRecord JSON-lines; blank lines are skipped.
pub fn read_records_jsonl<R: BufRead>(reader: R) -> Result<Vec<SlotRecord>, AnalyticsError> {
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: SlotRecord =
            serde_json::from_str(&line).map_err(|e| AnalyticsError::Jsonl {
                line: i + 1,
                message: e.to_string(),
            })?;
        rec.validate()?;
        out.push(rec);
    }
    Ok(out)
}

pub fn write_records_jsonl<W: Write>(
    writer: &mut W,
    records: &[SlotRecord],
) -> Result<(), AnalyticsError> {
    for rec in records {
        serde_json::to_writer(&mut *writer, rec)
            .map_err(|e| AnalyticsError::Jsonl { line: 0, message: e.to_string() })?;
        writer.write_all(b"\n")?;
    }
    Ok(())
}

fn median(sorted: &[f64]) -> f64 {
    let n = sorted.len();
    assert!(n > 0);
    if n % 2 == 1 {
        sorted[n / 2]
    } else {
        (sorted[n / 2 - 1] + sorted[n / 2]) / 2.0
    }
}

/// Empirical CDF support: the sorted sample itself (step function at each
/// value with height i/n).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ElevationReport {
    pub cdf_selected: Vec<f64>,
    pub cdf_available: Vec<f64>,
    /// median(selected elevation) - median(available-not-selected elevation).
    pub median_gap_deg: f64,
    /// Share of available-not-selected elevations in [45, 90].
    pub high_band_available_share: f64,
    /// Share of selected elevations in [45, 90].
    pub high_band_selected_share: f64,
}

fn high_band_share(sorted: &[f64]) -> f64 {
    if sorted.is_empty() {
        return 0.0;
    }
    sorted.iter().filter(|&&e| (45.0..=90.0).contains(&e)).count() as f64 / sorted.len() as f64
}

pub fn elevation_report(records: &[SlotRecord]) -> Result<ElevationReport, AnalyticsError> {
    let mut selected = Vec::new();
    let mut available = Vec::new();
    for rec in records {
        let Some(id) = rec.selected else { continue };
        for snap in &rec.available {
            if snap.norad_id == id {
                selected.push(snap.topo.elevation);
            } else {
                available.push(snap.topo.elevation);
            }
        }
    }
    if selected.is_empty() {
        return Err(AnalyticsError::NoRecords);
    }
    selected.sort_by(f64::total_cmp);
    available.sort_by(f64::total_cmp);
    let median_gap_deg = if available.is_empty() {
        f64::NAN
    } else {
        median(&selected) - median(&available)
    };
    Ok(ElevationReport {
        median_gap_deg,
        high_band_available_share: high_band_share(&available),
        high_band_selected_share: high_band_share(&selected),
        cdf_selected: selected,
        cdf_available: available,
    })
}

pub const QUADRANT_NAMES: [&str; 4] = ["NE", "SE", "SW", "NW"];

/// Half-open quadrants starting at north: NE [0,90), SE [90,180),
/// SW [180,270), NW [270,360).
pub fn quadrant_of(azimuth_deg: f64) -> usize {
    let az = azimuth_deg.rem_euclid(360.0);
    (az / 90.0).floor() as usize % 4
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AzimuthReport {
    /// Indexed as QUADRANT_NAMES: NE, SE, SW, NW.
    pub available_shares: [f64; 4],
    pub selected_shares: [f64; 4],
    /// NE + NW.
    pub north_available_share: f64,
    pub north_selected_share: f64,
}

pub fn azimuth_report(records: &[SlotRecord]) -> Result<AzimuthReport, AnalyticsError> {
    let mut avail = [0usize; 4];
    let mut sel = [0usize; 4];
    for rec in records {
        let Some(id) = rec.selected else { continue };
        for snap in &rec.available {
            let q = quadrant_of(snap.topo.azimuth);
            if snap.norad_id == id {
                sel[q] += 1;
            } else {
                avail[q] += 1;
            }
        }
    }
    let n_sel: usize = sel.iter().sum();
    if n_sel == 0 {
        return Err(AnalyticsError::NoRecords);
    }
    let n_avail: usize = avail.iter().sum();
    let shares = |counts: [usize; 4], total: usize| {
        if total == 0 {
            [0.0; 4]
        } else {
            counts.map(|c| c as f64 / total as f64)
        }
    };
    let available_shares = shares(avail, n_avail);
    let selected_shares = shares(sel, n_sel);
    Ok(AzimuthReport {
        north_available_share: available_shares[0] + available_shares[3],
        north_selected_share: selected_shares[0] + selected_shares[3],
        available_shares,
        selected_shares,
    })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LaunchBinRow {
    pub bin: LaunchBin,
    /// Slots where the selected satellite belongs to this bin.
    pub picked_slots: usize,
    /// Slots where at least one satellite of this bin was available.
    pub available_slots: usize,
    pub pick_probability: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LaunchBinReport {
    /// Chronological by bin.
    pub rows: Vec<LaunchBinRow>,
    /// Spearman rank correlation between bin date and pick probability.
    pub spearman: f64,
    /// NORAD ids with no launch date in the catalog (their slots are
    /// excluded from both counts).
    pub unresolved: Vec<u32>,
}

fn bin_of(catalog: &LaunchCatalog, norad_id: u32) -> Option<LaunchBin> {
    use chrono::Datelike;
    catalog.get(norad_id).map(|d| LaunchBin {
        year: d.year(),
        month: d.month(),
        low_precision: false,
    })
}

/// Midrank-based Spearman correlation of paired observations.
pub fn spearman(xs: &[f64], ys: &[f64]) -> f64 {
    assert_eq!(xs.len(), ys.len());
    let n = xs.len();
    if n < 2 {
        return 0.0;
    }
    let ranks = |vals: &[f64]| -> Vec<f64> {
        let mut order: Vec<usize> = (0..vals.len()).collect();
        order.sort_by(|&a, &b| vals[a].total_cmp(&vals[b]));
        let mut ranks = vec![0.0; vals.len()];
        let mut i = 0;
        while i < order.len() {
            let mut j = i + 1;
            while j < order.len() && vals[order[j]] == vals[order[i]] {
                j += 1;
            }
            let midrank = (i + j + 1) as f64 / 2.0;
            for &k in &order[i..j] {
                ranks[k] = midrank;
            }
            i = j;
        }
        ranks
    };
    let rx = ranks(xs);
    let ry = ranks(ys);
    let mean = (n as f64 + 1.0) / 2.0;
    let mut sxy = 0.0;
    let mut sxx = 0.0;
    let mut syy = 0.0;
    for k in 0..n {
        let dx = rx[k] - mean;
        let dy = ry[k] - mean;
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx == 0.0 || syy == 0.0 {
        return 0.0;
    }
    sxy / (sxx * syy).sqrt()
}

pub fn launch_bin_report(
    records: &[SlotRecord],
    catalog: &LaunchCatalog,
) -> Result<LaunchBinReport, AnalyticsError> {
    let mut picked: BTreeMap<LaunchBin, usize> = BTreeMap::new();
    let mut available: BTreeMap<LaunchBin, usize> = BTreeMap::new();
    let mut unresolved = std::collections::BTreeSet::new();
    let mut any = false;
    for rec in records {
        let Some(id) = rec.selected else { continue };
        // A slot whose selection can't be binned tells us nothing about
        // relative preference; drop the whole slot.
        let Some(sel_bin) = bin_of(catalog, id) else {
            unresolved.insert(id);
            continue;
        };
        any = true;
        let mut bins_here = std::collections::BTreeSet::new();
        for snap in &rec.available {
            match bin_of(catalog, snap.norad_id) {
                Some(bin) => {
                    bins_here.insert(bin);
                }
                None => {
                    unresolved.insert(snap.norad_id);
                }
            }
        }
        for bin in bins_here {
            *available.entry(bin).or_default() += 1;
        }
        *picked.entry(sel_bin).or_default() += 1;
    }
    if !any {
        return Err(AnalyticsError::NoRecords);
    }
    let rows: Vec<LaunchBinRow> = available
        .iter()
        .map(|(&bin, &avail)| {
            let p = picked.get(&bin).copied().unwrap_or(0);
            LaunchBinRow {
                bin,
                picked_slots: p,
                available_slots: avail,
                pick_probability: p as f64 / avail as f64,
            }
        })
        .collect();
    let dates: Vec<f64> = rows
        .iter()
        .map(|r| f64::from(r.bin.year) * 12.0 + f64::from(r.bin.month))
        .collect();
    let probs: Vec<f64> = rows.iter().map(|r| r.pick_probability).collect();
    Ok(LaunchBinReport {
        spearman: spearman(&dates, &probs),
        rows,
        unresolved: unresolved.into_iter().collect(),
    })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SunlitReport {
    /// Slots with at least one sunlit and one dark satellite available.
    pub mixed_slots: usize,
    /// Over mixed slots: fraction of selections that were sunlit.
    pub sunlit_pick_rate: f64,
    /// Minimum dark/available ratio among mixed slots where a dark
    /// satellite was picked. None if darkness was never picked.
    pub min_dark_share_on_dark_pick: Option<f64>,
    /// Mean elevation of picked dark satellites minus mean elevation of
    /// sunlit-available satellites in those same slots.
    pub dark_pick_elevation_gap_deg: Option<f64>,
}

pub fn sunlit_report(records: &[SlotRecord]) -> Result<SunlitReport, AnalyticsError> {
    let mut mixed = 0usize;
    let mut sunlit_picks = 0usize;
    let mut min_dark_share: Option<f64> = None;
    let mut dark_pick_elevations = Vec::new();
    let mut sunlit_avail_elevations = Vec::new();
    for rec in records {
        let Some(sel) = rec.selected_snapshot() else { continue };
        let sunlit = rec.available.iter().filter(|s| s.sunlit).count();
        let dark = rec.available.len() - sunlit;
        if sunlit == 0 || dark == 0 {
            continue;
        }
        mixed += 1;
        if sel.sunlit {
            sunlit_picks += 1;
        } else {
            let share = dark as f64 / rec.available.len() as f64;
            min_dark_share = Some(min_dark_share.map_or(share, |m: f64| m.min(share)));
            dark_pick_elevations.push(sel.topo.elevation);
            sunlit_avail_elevations
                .extend(rec.available.iter().filter(|s| s.sunlit).map(|s| s.topo.elevation));
        }
    }
    if mixed == 0 {
        return Err(AnalyticsError::NoMixedSlots);
    }
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    let dark_pick_elevation_gap_deg = if dark_pick_elevations.is_empty() {
        None
    } else {
        Some(mean(&dark_pick_elevations) - mean(&sunlit_avail_elevations))
    };
    Ok(SunlitReport {
        mixed_slots: mixed,
        sunlit_pick_rate: sunlit_picks as f64 / mixed as f64,
        min_dark_share_on_dark_pick: min_dark_share,
        dark_pick_elevation_gap_deg,
    })
}
