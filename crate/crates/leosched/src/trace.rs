//! RTT trace analysis: 15-second slot segmentation, Mann-Whitney U tests
//! between adjacent slots, reallocation-epoch offset detection and
//! intra-slot latency band detection.

use std::path::Path;

use chrono::{DateTime, TimeZone, Utc};
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const SLOT_LEN_S: i64 = 15;
pub const DEFAULT_BAND_GAP_MS: f64 = 2.0;
const BAND_MIN_FRACTION: f64 = 0.10;
const SIGNIFICANCE: f64 = 0.05;
/// A max offset score below this is indistinguishable from the null rate.
pub const CONCLUSIVE_SCORE: f64 = 0.25;

/// One RTT probe.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LatencySample {
    pub t: DateTime<Utc>,
    /// Milliseconds; meaningless when `lost`.
    pub rtt_ms: f64,
    pub lost: bool,
}

/// A parallel latency band within a slot.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Band {
    pub center_ms: f64,
    pub width_ms: f64,
    pub fraction: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SlotStats {
    pub slot_start: DateTime<Utc>,
    pub n: usize,
    pub median_ms: f64,
    pub p5_ms: f64,
    pub p95_ms: f64,
    pub loss_rate: f64,
    pub bands: Vec<Band>,
}

#[derive(Debug, Error)]
pub enum TraceError {
    #[error("empty trace")]
    Empty,
    #[error("trace spans {slots} slots, need at least {required}")]
    InsufficientSpan { slots: i64, required: i64 },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct OffsetDetection {
    pub offset_s: u32,
    /// Fraction of adjacent slot pairs with p < 0.05, per offset 0..14.
    pub scores: [f64; 15],
    pub conclusive: bool,
}

/// Linear-interpolation percentile of a sorted slice, q in [0, 100].
fn percentile_sorted(sorted: &[f64], q: f64) -> f64 {
    if sorted.is_empty() {
        return f64::NAN;
    }
    let pos = q / 100.0 * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    if lo == hi {
        sorted[lo]
    } else {
        sorted[lo] + (pos - lo as f64) * (sorted[hi] - sorted[lo])
    }
}

fn slot_id(t: DateTime<Utc>, offset_s: u32) -> i64 {
    // boundaries sit at offset_s + 15k seconds past each minute; samples on
    // a boundary belong to the later slot (half-open windows)
    let ms = t.timestamp_millis() - i64::from(offset_s) * 1000;
    ms.div_euclid(SLOT_LEN_S * 1000)
}

fn slot_start(id: i64, offset_s: u32) -> DateTime<Utc> {
    Utc.timestamp_millis_opt(id * SLOT_LEN_S * 1000 + i64::from(offset_s) * 1000)
        .single()
        .expect("valid slot start")
}

/// Partition a time-ordered trace into 15-second slots on the grid anchored
/// `offset_s` seconds past the minute.
pub fn slice_slots(trace: &[LatencySample], offset_s: u32) -> Result<Vec<SlotStats>, TraceError> {
    assert!(offset_s < 15, "offset must be in [0, 15)");
    if trace.is_empty() {
        return Err(TraceError::Empty);
    }
    let mut slots: Vec<(i64, Vec<&LatencySample>)> = Vec::new();
    for sample in trace {
        let id = slot_id(sample.t, offset_s);
        match slots.last_mut() {
            Some((last_id, bucket)) if *last_id == id => bucket.push(sample),
            _ => slots.push((id, vec![sample])),
        }
    }
    Ok(slots
        .into_iter()
        .map(|(id, samples)| {
            let mut rtts: Vec<f64> = samples
                .iter()
                .filter(|s| !s.lost)
                .map(|s| s.rtt_ms)
                .collect();
            rtts.sort_by(f64::total_cmp);
            let n = samples.len();
            let lost = n - rtts.len();
            let bands = if rtts.len() >= 50 {
                detect_bands(&rtts, DEFAULT_BAND_GAP_MS)
            } else {
                Vec::new()
            };
            SlotStats {
                slot_start: slot_start(id, offset_s),
                n,
                median_ms: percentile_sorted(&rtts, 50.0),
                p5_ms: percentile_sorted(&rtts, 5.0),
                p95_ms: percentile_sorted(&rtts, 95.0),
                loss_rate: lost as f64 / n as f64,
                bands,
            }
        })
        .collect())
}

fn standard_normal_cdf(z: f64) -> f64 {
    // Abramowitz & Stegun 7.1.26, |error| < 1.5e-7
    let x = z / std::f64::consts::SQRT_2;
    let t = 1.0 / (1.0 + 0.3275911 * x.abs());
    let poly = t
        * (0.254829592
            + t * (-0.284496736 + t * (1.421413741 + t * (-1.453152027 + t * 1.061405429))));
    let erf = 1.0 - poly * (-x * x).exp();
    let erf = if x >= 0.0 { erf } else { -erf };
    0.5 * (1.0 + erf)
}

/// Mann-Whitney U for `x` (midrank ties) with a two-sided p-value from the
/// normal approximation with tie and continuity corrections.
pub fn mann_whitney_u(x: &[f64], y: &[f64]) -> (f64, f64) {
    let (u, _, p) = mann_whitney_u_z(x, y);
    (u, p)
}

/// Like [`mann_whitney_u`] but also exposes the z statistic; at slot-sized
/// samples p-values underflow long before z saturates.
pub fn mann_whitney_u_z(x: &[f64], y: &[f64]) -> (f64, f64, f64) {
    assert!(x.len() >= 3 && y.len() >= 3, "samples too small for U test");
    let nx = x.len() as f64;
    let ny = y.len() as f64;
    let n = nx + ny;

    let mut pooled: Vec<(f64, bool)> = x
        .iter()
        .map(|&v| (v, true))
        .chain(y.iter().map(|&v| (v, false)))
        .collect();
    pooled.sort_by(|a, b| a.0.total_cmp(&b.0));

    let mut rank_sum_x = 0.0;
    let mut tie_term = 0.0;
    let mut i = 0;
    while i < pooled.len() {
        let mut j = i + 1;
        while j < pooled.len() && pooled[j].0 == pooled[i].0 {
            j += 1;
        }
        let midrank = (i + j + 1) as f64 / 2.0;
        let ties = (j - i) as f64;
        tie_term += ties * ties * ties - ties;
        for item in &pooled[i..j] {
            if item.1 {
                rank_sum_x += midrank;
            }
        }
        i = j;
    }

    let u = rank_sum_x - nx * (nx + 1.0) / 2.0;
    let mean = nx * ny / 2.0;
    let variance = nx * ny / 12.0 * ((n + 1.0) - tie_term / (n * (n - 1.0)));
    if variance <= 0.0 {
        return (u, 0.0, 1.0); // every value identical
    }
    let delta = u - mean;
    let continuity = if delta == 0.0 { 0.0 } else { 0.5 * delta.signum() };
    let z = (delta - continuity) / variance.sqrt();
    let p = 2.0 * (1.0 - standard_normal_cdf(z.abs()));
    (u, z, p.min(1.0))
}

/// Score every candidate offset by the fraction of adjacent slot pairs whose
/// RTT distributions differ significantly; return the argmax.
pub fn detect_offset(trace: &[LatencySample]) -> Result<OffsetDetection, TraceError> {
    if trace.is_empty() {
        return Err(TraceError::Empty);
    }
    let span_slots = (slot_id(trace[trace.len() - 1].t, 0) - slot_id(trace[0].t, 0)).abs();
    if span_slots < 10 {
        return Err(TraceError::InsufficientSpan {
            slots: span_slots,
            required: 10,
        });
    }

    let mut scores = [0.0f64; 15];
    let mut effect = [0.0f64; 15];
    for (offset, score) in scores.iter_mut().enumerate() {
        let slots = slice_slots(trace, offset as u32)?;
        let rtts_per_slot: Vec<Vec<f64>> = slots
            .iter()
            .map(|_| Vec::new())
            .collect::<Vec<_>>();
        let mut rtts_per_slot = rtts_per_slot;
        {
            // recollect raw rtts per slot (SlotStats keeps only summaries)
            let mut idx = 0usize;
            for sample in trace {
                while idx + 1 < slots.len() && sample.t >= slots[idx + 1].slot_start {
                    idx += 1;
                }
                if !sample.lost {
                    rtts_per_slot[idx].push(sample.rtt_ms);
                }
            }
        }
        let mut pairs = 0usize;
        let mut significant = 0usize;
        let mut z_sum = 0.0;
        for w in rtts_per_slot.windows(2) {
            if w[0].len() >= 3 && w[1].len() >= 3 {
                pairs += 1;
                let (_, z, p) = mann_whitney_u_z(&w[0], &w[1]);
                z_sum += z.abs();
                if p < SIGNIFICANCE {
                    significant += 1;
                }
            }
        }
        if pairs > 0 {
            *score = significant as f64 / pairs as f64;
            effect[offset] = z_sum / pairs as f64;
        }
    }

    // Dense traces saturate the significance fraction at every offset (a
    // boundary-straddling mixture still differs from its neighbor), and a
    // single pair of near-equal adjacent levels can drop the true offset
    // below a saturated wrong one. The mean |z| across pairs is monotone
    // toward the true boundary -- mixtures dilute the rank separation -- so
    // it drives the argmax; the fraction only gates conclusiveness.
    let (offset_s, best) = (0..15)
        .max_by(|&a, &b| {
            effect[a]
                .total_cmp(&effect[b])
                .then(scores[a].total_cmp(&scores[b]))
                .then(b.cmp(&a))
        })
        .map(|i| (i as u32, scores[i]))
        .expect("15 offsets");
    Ok(OffsetDetection {
        offset_s,
        scores,
        conclusive: best >= CONCLUSIVE_SCORE,
    })
}

/// 1-D gap clustering over sorted RTTs: split where consecutive values gap
/// by more than `gap_ms`; clusters holding at least 10% of samples become
/// bands.
pub fn detect_bands(sorted_rtts: &[f64], gap_ms: f64) -> Vec<Band> {
    if sorted_rtts.is_empty() {
        return Vec::new();
    }
    let total = sorted_rtts.len() as f64;
    let mut bands = Vec::new();
    let mut start = 0usize;
    for i in 1..=sorted_rtts.len() {
        let split = i == sorted_rtts.len() || sorted_rtts[i] - sorted_rtts[i - 1] > gap_ms;
        if split {
            let cluster = &sorted_rtts[start..i];
            let fraction = cluster.len() as f64 / total;
            if fraction >= BAND_MIN_FRACTION {
                bands.push(Band {
                    center_ms: percentile_sorted(cluster, 50.0),
                    width_ms: percentile_sorted(cluster, 95.0) - percentile_sorted(cluster, 5.0),
                    fraction,
                });
            }
            start = i;
        }
    }
    bands
}

/// Trace CSV format: `unix_ms,rtt_ms,lost`, rtt empty when lost.
#[derive(Debug, Deserialize, Serialize)]
struct TraceRow {
    unix_ms: i64,
    rtt_ms: Option<f64>,
    lost: u8,
}

pub fn read_trace_csv(path: &Path) -> anyhow::Result<Vec<LatencySample>> {
    let mut reader = csv::Reader::from_path(path)?;
    let mut out = Vec::new();
    for row in reader.deserialize::<TraceRow>() {
        let row = row?;
        let lost = row.lost != 0;
        out.push(LatencySample {
            t: Utc
                .timestamp_millis_opt(row.unix_ms)
                .single()
                .ok_or_else(|| anyhow::anyhow!("bad unix_ms {}", row.unix_ms))?,
            rtt_ms: row.rtt_ms.unwrap_or(f64::NAN),
            lost,
        });
    }
    Ok(out)
}

pub fn write_trace_csv(path: &Path, trace: &[LatencySample]) -> anyhow::Result<()> {
    let mut writer = csv::Writer::from_path(path)?;
    for s in trace {
        writer.serialize(TraceRow {
            unix_ms: s.t.timestamp_millis(),
            rtt_ms: (!s.lost).then_some(s.rtt_ms),
            lost: u8::from(s.lost),
        })?;
    }
    writer.flush()?;
    Ok(())
}

/// Synthetic trace with a mean level shift at every slot boundary on the
/// given offset grid: the oracle for offset detection.
pub fn synthetic_shift_trace(
    seed: u64,
    offset_s: u32,
    start: DateTime<Utc>,
    duration_s: u32,
    cadence_ms: u32,
    noise_sigma_ms: f64,
    shift_amplitude_ms: f64,
) -> Vec<LatencySample> {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let n = duration_s * 1000 / cadence_ms;
    let mut level_by_slot: std::collections::HashMap<i64, f64> = std::collections::HashMap::new();
    (0..n)
        .map(|k| {
            let t = start + chrono::Duration::milliseconds(i64::from(k * cadence_ms));
            let id = slot_id(t, offset_s);
            let level = *level_by_slot
                .entry(id)
                .or_insert_with(|| 40.0 + rng.gen::<f64>() * shift_amplitude_ms);
            // Box-Muller
            let u1: f64 = rng.gen::<f64>().max(1e-12);
            let u2: f64 = rng.gen();
            let gauss = (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos();
            LatencySample {
                t,
                rtt_ms: level + noise_sigma_ms * gauss,
                lost: false,
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};

    fn t(unix_ms: i64) -> DateTime<Utc> {
        Utc.timestamp_millis_opt(unix_ms).single().unwrap()
    }

    fn sample(unix_ms: i64, rtt: f64) -> LatencySample {
        LatencySample {
            t: t(unix_ms),
            rtt_ms: rtt,
            lost: false,
        }
    }

    #[test]
    fn offset_12_boundaries() {
        // minute starting at a multiple of 60: slots begin at :12, :27, :42, :57
        let base = 1_700_000_040_000; // multiple of 60 s
        let s = sample(base + 12_000, 40.0);
        let id = slot_id(s.t, 12);
        assert_eq!(slot_start(id, 12).timestamp_millis(), base + 12_000);
        let s2 = sample(base + 26_999, 40.0);
        assert_eq!(slot_id(s2.t, 12), id);
        let s3 = sample(base + 27_000, 40.0);
        assert_eq!(slot_id(s3.t, 12), id + 1);
    }

    #[test]
    fn thirty_seconds_at_20ms_makes_two_full_slots() {
        let base = 1_700_000_100_000; // multiple of 15 s
        let trace: Vec<LatencySample> = (0..1500)
            .map(|k| sample(base + k * 20, 40.0))
            .collect();
        let slots = slice_slots(&trace, 0).unwrap();
        assert_eq!(slots.len(), 2);
        assert_eq!(slots[0].n, 750);
        assert_eq!(slots[1].n, 750);
    }

    #[test]
    fn boundary_sample_goes_to_later_slot() {
        let base = 1_700_000_100_000;
        let trace = vec![sample(base - 1, 40.0), sample(base, 41.0)];
        let slots = slice_slots(&trace, 0).unwrap();
        assert_eq!(slots.len(), 2);
        assert_eq!(slots[0].n, 1);
        assert_eq!(slots[1].n, 1);
    }

    #[test]
    fn empty_trace_errors() {
        assert!(matches!(slice_slots(&[], 0), Err(TraceError::Empty)));
    }

    #[test]
    fn partition_is_exact() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        let base = 1_700_000_000_123;
        let trace: Vec<LatencySample> = (0..2000)
            .map(|k| sample(base + k * 37, 40.0 + rng.gen::<f64>()))
            .collect();
        for offset in [0u32, 7, 12] {
            let slots = slice_slots(&trace, offset).unwrap();
            let total: usize = slots.iter().map(|s| s.n).sum();
            assert_eq!(total, trace.len());
        }
    }

    #[test]
    fn mwu_identical_samples() {
        let x = [1.0, 2.0, 3.0, 4.0];
        let (u, p) = mann_whitney_u(&x, &x);
        assert_eq!(u, 8.0); // nm/2
        assert!(p > 0.9);
    }

    #[test]
    fn mwu_fully_separated() {
        let x = [1.0, 2.0, 3.0];
        let y = [10.0, 11.0, 12.0];
        let (u, _) = mann_whitney_u(&x, &y);
        assert_eq!(u, 0.0);
    }

    #[test]
    fn mwu_all_values_identical_gives_p_one() {
        let x = [5.0, 5.0, 5.0];
        let (_, p) = mann_whitney_u(&x, &x);
        assert_eq!(p, 1.0);
    }

    #[test]
    fn mwu_matches_brute_force_pair_count() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        for _ in 0..100 {
            let nx = rng.gen_range(3..20);
            let ny = rng.gen_range(3..20);
            // integer values force ties
            let x: Vec<f64> = (0..nx).map(|_| rng.gen_range(0..10) as f64).collect();
            let y: Vec<f64> = (0..ny).map(|_| rng.gen_range(0..10) as f64).collect();
            let (u, _) = mann_whitney_u(&x, &y);
            let mut brute = 0.0;
            for &a in &x {
                for &b in &y {
                    if a > b {
                        brute += 1.0;
                    } else if a == b {
                        brute += 0.5;
                    }
                }
            }
            assert!((u - brute).abs() < 1e-9, "u {u} brute {brute}");
            // complement identity
            let (uy, _) = mann_whitney_u(&y, &x);
            assert!((u + uy - (nx * ny) as f64).abs() < 1e-9);
        }
    }

    #[test]
    fn detects_offset_12_shifts() {
        let start = t(1_700_000_000_000);
        let trace = synthetic_shift_trace(3, 12, start, 600, 20, 1.0, 10.0);
        let det = detect_offset(&trace).unwrap();
        assert_eq!(det.offset_s, 12);
        assert!(det.conclusive);
        assert!(det.scores[12] > 0.9, "score {}", det.scores[12]);
    }

    #[test]
    fn stationary_noise_is_inconclusive() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(9);
        let base = 1_700_000_000_000i64;
        let trace: Vec<LatencySample> = (0..30_000)
            .map(|k| {
                let u1: f64 = rng.gen::<f64>().max(1e-12);
                let u2: f64 = rng.gen();
                let g = (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos();
                sample(base + k * 20, 40.0 + g)
            })
            .collect();
        let det = detect_offset(&trace).unwrap();
        assert!(!det.conclusive, "scores {:?}", det.scores);
    }

    #[test]
    fn offset_detection_is_shift_equivariant() {
        let start = t(1_700_000_000_000);
        let trace = synthetic_shift_trace(3, 12, start, 600, 20, 1.0, 10.0);
        for d in [1i64, 7, 14] {
            let shifted: Vec<LatencySample> = trace
                .iter()
                .map(|s| LatencySample {
                    t: s.t + chrono::Duration::seconds(d),
                    ..*s
                })
                .collect();
            let det = detect_offset(&shifted).unwrap();
            assert_eq!(i64::from(det.offset_s), (12 + d) % 15);
        }
    }

    #[test]
    fn insufficient_span_errors() {
        let base = 1_700_000_000_000;
        let trace: Vec<LatencySample> = (0..100).map(|k| sample(base + k * 20, 40.0)).collect();
        assert!(matches!(
            detect_offset(&trace),
            Err(TraceError::InsufficientSpan { .. })
        ));
    }

    #[test]
    fn two_gaussian_bands_detected() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(17);
        let mut rtts: Vec<f64> = (0..400)
            .map(|i| {
                let u1: f64 = rng.gen::<f64>().max(1e-12);
                let u2: f64 = rng.gen();
                let g = (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos();
                if i % 2 == 0 {
                    40.0 + 0.3 * g
                } else {
                    48.0 + 0.3 * g
                }
            })
            .collect();
        rtts.sort_by(f64::total_cmp);
        let bands = detect_bands(&rtts, DEFAULT_BAND_GAP_MS);
        assert_eq!(bands.len(), 2, "{bands:?}");
        assert!((bands[0].center_ms - 40.0).abs() < 0.5);
        assert!((bands[1].center_ms - 48.0).abs() < 0.5);
    }

    #[test]
    fn constant_samples_are_one_zero_width_band() {
        let rtts = vec![40.0; 100];
        let bands = detect_bands(&rtts, DEFAULT_BAND_GAP_MS);
        assert_eq!(bands.len(), 1);
        assert_eq!(bands[0].width_ms, 0.0);
        assert_eq!(bands[0].fraction, 1.0);
    }

    #[test]
    fn dense_uniform_noise_is_one_band() {
        // order-statistics check: the max gap of n uniform samples over a
        // 30 ms span concentrates near (30/n) ln n, so at n = 300 it stays
        // below 2 ms with overwhelming probability
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(23);
        for _ in 0..20 {
            let mut rtts: Vec<f64> = (0..300).map(|_| 30.0 + rng.gen::<f64>() * 30.0).collect();
            rtts.sort_by(f64::total_cmp);
            let bands = detect_bands(&rtts, DEFAULT_BAND_GAP_MS);
            assert_eq!(bands.len(), 1, "{bands:?}");
        }
    }

    #[test]
    fn band_count_non_increasing_in_gap() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(31);
        let mut rtts: Vec<f64> = (0..300)
            .map(|_| {
                let which = rng.gen_range(0..3);
                35.0 + 6.0 * which as f64 + rng.gen::<f64>()
            })
            .collect();
        rtts.sort_by(f64::total_cmp);
        let mut last = usize::MAX;
        for gap in [0.5, 1.0, 2.0, 4.0, 8.0] {
            let n = detect_bands(&rtts, gap).len().max(1);
            assert!(n <= last);
            last = n;
        }
    }
}
