//! Offline approximation of the scheduler: satellites are bucketed into
//! cohort-relative z-score clusters, each slot becomes (local time,
//! cluster-count vector), and a random forest predicts the cluster of the
//! satellite that gets picked. Includes the availability-count baseline
//! and top-k evaluation.

pub mod forest;

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use chrono::Timelike;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::analytics::SlotRecord;
use crate::orbital::SatelliteSnapshot;
use forest::{train_forest, Forest, ForestParams};

pub const MODEL_FILE_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("cohort has {0} satellites; need at least 2 for z-scores")]
    CohortTooSmall(usize),
    #[error("record has no selection")]
    NoSelection,
    #[error("need at least {required} labeled slots, got {got}")]
    TooFewSlots { got: usize, required: usize },
    #[error("dataset is degenerate: every slot has label {0}")]
    SingleLabel(ClusterKey),
    #[error("empty evaluation dataset")]
    EmptyDataset,
    #[error("model file: {0}")]
    File(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Quantized cohort-relative position: z-scores of azimuth, elevation and
/// age truncated toward zero and clamped to [-3, 3], plus the sunlit bit.
/// Ordering is lexicographic over (z_theta, z_phi, z_age, sunlit).
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ClusterKey {
    pub z_theta: i8,
    pub z_phi: i8,
    pub z_age: i8,
    pub sunlit: u8,
}

impl fmt::Display for ClusterKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{},{},{},{}", self.z_theta, self.z_phi, self.z_age, self.sunlit)
    }
}

impl FromStr for ClusterKey {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let parts: Vec<&str> = s.split(',').collect();
        if parts.len() != 4 {
            return Err(format!("cluster key {s:?}: expected 4 components"));
        }
        let num = |p: &str| p.trim().parse::<i8>().map_err(|e| format!("cluster key {s:?}: {e}"));
        Ok(ClusterKey {
            z_theta: num(parts[0])?,
            z_phi: num(parts[1])?,
            z_age: num(parts[2])?,
            sunlit: num(parts[3])? as u8,
        })
    }
}

// String form so keys work as JSON map keys.
impl Serialize for ClusterKey {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for ClusterKey {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Truncate toward zero, clamp to [-3, 3].
pub fn quantize_z(z: f64) -> i8 {
    (z.trunc() as i64).clamp(-3, 3) as i8
}

fn wrap_pm180(deg: f64) -> f64 {
    (deg + 180.0).rem_euclid(360.0) - 180.0
}

/// Cohort azimuths unwrapped around the circular mean so the 0/360 seam
/// doesn't tear the distribution apart.
fn unwrapped_azimuths(cohort: &[SatelliteSnapshot]) -> Vec<f64> {
    let (mut s, mut c) = (0.0, 0.0);
    for snap in cohort {
        let rad = snap.topo.azimuth.to_radians();
        s += rad.sin();
        c += rad.cos();
    }
    let mu = s.atan2(c).to_degrees();
    cohort
        .iter()
        .map(|snap| mu + wrap_pm180(snap.topo.azimuth - mu))
        .collect()
}

fn mean_stddev(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    // cohorts are complete populations, so population stddev
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    (mean, var.sqrt())
}

fn z_component(value: f64, mean: f64, stddev: f64) -> i8 {
    if stddev == 0.0 {
        0
    } else {
        quantize_z((value - mean) / stddev)
    }
}

/// Cluster key of one cohort member. The cohort is the full visible set of
/// the slot; z-scores are relative to it.
pub fn cluster_assign(
    snapshot: &SatelliteSnapshot,
    cohort: &[SatelliteSnapshot],
) -> Result<ClusterKey, ModelError> {
    if cohort.len() < 2 {
        return Err(ModelError::CohortTooSmall(cohort.len()));
    }
    let azimuths = unwrapped_azimuths(cohort);
    let (az_mean, az_sd) = mean_stddev(&azimuths);
    let elevations: Vec<f64> = cohort.iter().map(|s| s.topo.elevation).collect();
    let (el_mean, el_sd) = mean_stddev(&elevations);
    let ages: Vec<f64> = cohort.iter().map(|s| s.age_days).collect();
    let (age_mean, age_sd) = mean_stddev(&ages);

    let mu = {
        // reuse the same unwrap center the cohort used
        let (mut s, mut c) = (0.0, 0.0);
        for snap in cohort {
            let rad = snap.topo.azimuth.to_radians();
            s += rad.sin();
            c += rad.cos();
        }
        s.atan2(c).to_degrees()
    };
    let az = mu + wrap_pm180(snapshot.topo.azimuth - mu);
    Ok(ClusterKey {
        z_theta: z_component(az, az_mean, az_sd),
        z_phi: z_component(snapshot.topo.elevation, el_mean, el_sd),
        z_age: z_component(snapshot.age_days, age_mean, age_sd),
        sunlit: u8::from(snapshot.sunlit),
    })
}

/// Model input for one slot: local time plus per-cluster availability
/// counts.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeatureVector {
    /// Minutes since local midnight, [0, 1439].
    pub t_local: u16,
    pub counts: BTreeMap<ClusterKey, u32>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LabeledSlot {
    pub features: FeatureVector,
    pub label: ClusterKey,
}

/// Featurize one record: cluster every available satellite, count per key,
/// label with the selected satellite's key.
pub fn featurize(record: &SlotRecord, tz_offset_minutes: i32) -> Result<LabeledSlot, ModelError> {
    let selected = record.selected_snapshot().ok_or(ModelError::NoSelection)?;
    let cohort = &record.available;
    let mut counts: BTreeMap<ClusterKey, u32> = BTreeMap::new();
    for snap in cohort {
        *counts.entry(cluster_assign(snap, cohort)?).or_default() += 1;
    }
    let label = cluster_assign(selected, cohort)?;
    let utc_minutes = i64::from(record.slot_start.hour() * 60 + record.slot_start.minute());
    let t_local = (utc_minutes + i64::from(tz_offset_minutes)).rem_euclid(1440) as u16;
    Ok(LabeledSlot {
        features: FeatureVector { t_local, counts },
        label,
    })
}

/// Most-populated-cluster baseline: keys by descending count,
/// lexicographic tie-break.
pub fn baseline_topk(features: &FeatureVector, k: usize) -> Vec<ClusterKey> {
    assert!(k >= 1);
    let mut keys: Vec<(&ClusterKey, &u32)> = features.counts.iter().collect();
    keys.sort_by(|a, b| b.1.cmp(a.1).then(a.0.cmp(b.0)));
    keys.into_iter().take(k).map(|(key, _)| *key).collect()
}

/// Hyperparameter grid and split policy for training.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainConfig {
    pub trees_grid: Vec<usize>,
    /// None = unbounded depth.
    pub depth_grid: Vec<Option<usize>>,
    pub min_split_grid: Vec<usize>,
    pub cv_folds: usize,
    pub holdout_fraction: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            trees_grid: vec![50, 100, 200],
            depth_grid: vec![Some(4), Some(8), Some(16), None],
            min_split_grid: vec![2, 5],
            cv_folds: 5,
            holdout_fraction: 0.2,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CvResult {
    pub params: ForestParams,
    pub mean_cv_top1: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EvalRow {
    pub k: usize,
    pub model_accuracy: f64,
    pub baseline_accuracy: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SchedulerModel {
    pub version: u32,
    /// Fixed feature order: t_local, then one count per key.
    pub encoding: Vec<ClusterKey>,
    /// Output classes, lexicographically sorted.
    pub classes: Vec<ClusterKey>,
    pub forest: Forest,
    pub seed: u64,
    pub cv_results: Vec<CvResult>,
    /// Top-k accuracy on the held-out 20%, k = 1, 3, 5.
    pub holdout: Vec<EvalRow>,
    pub holdout_size: usize,
}

impl SchedulerModel {
    /// Dense feature vector; returns the number of keys present in the
    /// input but unknown to the encoding (dropped).
    pub fn encode(&self, features: &FeatureVector) -> (Vec<f64>, usize) {
        let mut x = Vec::with_capacity(1 + self.encoding.len());
        x.push(f64::from(features.t_local));
        for key in &self.encoding {
            x.push(f64::from(features.counts.get(key).copied().unwrap_or(0)));
        }
        let dropped = features
            .counts
            .keys()
            .filter(|k| self.encoding.binary_search(k).is_err())
            .count();
        (x, dropped)
    }

    pub fn save(&self, path: &Path) -> Result<(), ModelError> {
        let json = serde_json::to_string(self).map_err(|e| ModelError::File(e.to_string()))?;
        crate::manifest::write_atomic(path, json.as_bytes())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, ModelError> {
        let data = std::fs::read_to_string(path)?;
        let model: SchedulerModel =
            serde_json::from_str(&data).map_err(|e| ModelError::File(e.to_string()))?;
        if model.version != MODEL_FILE_VERSION {
            return Err(ModelError::File(format!(
                "unsupported model version {} (expected {MODEL_FILE_VERSION})",
                model.version
            )));
        }
        Ok(model)
    }
}

/// Classes ranked by averaged forest probability; ties fall back to
/// lexicographic key order (classes are stored sorted, and the forest
/// breaks probability ties toward the lower class index).
pub fn predict_topk(model: &SchedulerModel, features: &FeatureVector, k: usize) -> Vec<ClusterKey> {
    assert!(k >= 1);
    let (x, _) = model.encode(features);
    model
        .forest
        .ranked_classes(&x)
        .into_iter()
        .take(k)
        .map(|idx| model.classes[idx])
        .collect()
}

/// Deterministic shuffle-free stratified assignment: members of each label
/// group are dealt round-robin after a seeded shuffle.
fn stratified_groups(
    labels: &[usize],
    n_classes: usize,
    rng: &mut rand_chacha::ChaCha8Rng,
) -> Vec<Vec<usize>> {
    use rand::seq::SliceRandom;
    let mut groups: Vec<Vec<usize>> = vec![Vec::new(); n_classes];
    for (i, &label) in labels.iter().enumerate() {
        groups[label].push(i);
    }
    for group in &mut groups {
        group.shuffle(rng);
    }
    groups
}

fn top1_accuracy(forest: &Forest, x: &[Vec<f64>], y: &[usize]) -> f64 {
    let correct = x
        .iter()
        .zip(y)
        .filter(|(xi, &yi)| forest.ranked_classes(xi)[0] == yi)
        .count();
    correct as f64 / x.len() as f64
}

/// Grid search + k-fold CV on an 80/20 stratified split, winner retrained
/// on the full training side, holdout metrics recorded.
pub fn train(
    dataset: &[LabeledSlot],
    config: &TrainConfig,
    seed: u64,
) -> Result<SchedulerModel, ModelError> {
    use rand::{Rng, SeedableRng};
    if dataset.len() < 100 {
        return Err(ModelError::TooFewSlots {
            got: dataset.len(),
            required: 100,
        });
    }
    let mut label_set: Vec<ClusterKey> = dataset.iter().map(|s| s.label).collect();
    label_set.sort();
    label_set.dedup();
    if label_set.len() < 2 {
        return Err(ModelError::SingleLabel(label_set[0]));
    }

    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);

    // 80/20 stratified split: the tail of each shuffled label group goes
    // to the holdout; groups too small to donate keep everything in train.
    let labels: Vec<usize> = dataset
        .iter()
        .map(|s| label_set.binary_search(&s.label).expect("label present"))
        .collect();
    let groups = stratified_groups(&labels, label_set.len(), &mut rng);
    let mut train_idx = Vec::new();
    let mut holdout_idx = Vec::new();
    for group in &groups {
        let take = ((group.len() as f64) * config.holdout_fraction).round() as usize;
        let take = take.min(group.len().saturating_sub(1));
        let split = group.len() - take;
        train_idx.extend_from_slice(&group[..split]);
        holdout_idx.extend_from_slice(&group[split..]);
    }
    train_idx.sort_unstable();
    holdout_idx.sort_unstable();

    // encoding and classes come from the training side only
    let mut encoding: Vec<ClusterKey> = train_idx
        .iter()
        .flat_map(|&i| dataset[i].features.counts.keys().copied())
        .collect();
    encoding.sort();
    encoding.dedup();
    let mut classes: Vec<ClusterKey> = train_idx.iter().map(|&i| dataset[i].label).collect();
    classes.sort();
    classes.dedup();

    let encode = |slot: &LabeledSlot| -> Vec<f64> {
        let mut x = Vec::with_capacity(1 + encoding.len());
        x.push(f64::from(slot.features.t_local));
        for key in &encoding {
            x.push(f64::from(slot.features.counts.get(key).copied().unwrap_or(0)));
        }
        x
    };
    let train_x: Vec<Vec<f64>> = train_idx.iter().map(|&i| encode(&dataset[i])).collect();
    let train_y: Vec<usize> = train_idx
        .iter()
        .map(|&i| classes.binary_search(&dataset[i].label).expect("train label"))
        .collect();

    // k-fold assignment, stratified round-robin per label group
    let fold_of: Vec<usize> = {
        let groups = stratified_groups(&train_y, classes.len(), &mut rng);
        let mut fold_of = vec![0usize; train_y.len()];
        for group in &groups {
            for (j, &i) in group.iter().enumerate() {
                fold_of[i] = j % config.cv_folds;
            }
        }
        fold_of
    };

    let mut grid = Vec::new();
    for &n_trees in &config.trees_grid {
        for &max_depth in &config.depth_grid {
            for &min_samples_split in &config.min_split_grid {
                grid.push(ForestParams {
                    n_trees,
                    max_depth,
                    min_samples_split,
                });
            }
        }
    }
    let cv_seeds: Vec<Vec<u64>> = grid
        .iter()
        .map(|_| (0..config.cv_folds).map(|_| rng.gen()).collect())
        .collect();
    let final_seed: u64 = rng.gen();

    let mut cv_results = Vec::with_capacity(grid.len());
    for (params, seeds) in grid.iter().zip(&cv_seeds) {
        let mut total = 0.0;
        let mut folds_used = 0;
        for fold in 0..config.cv_folds {
            let (mut fx, mut fy, mut vx, mut vy) = (Vec::new(), Vec::new(), Vec::new(), Vec::new());
            for i in 0..train_x.len() {
                if fold_of[i] == fold {
                    vx.push(train_x[i].clone());
                    vy.push(train_y[i]);
                } else {
                    fx.push(train_x[i].clone());
                    fy.push(train_y[i]);
                }
            }
            if vx.is_empty() || fx.is_empty() {
                continue;
            }
            let forest = train_forest(&fx, &fy, classes.len(), *params, seeds[fold]);
            total += top1_accuracy(&forest, &vx, &vy);
            folds_used += 1;
        }
        cv_results.push(CvResult {
            params: *params,
            mean_cv_top1: if folds_used > 0 { total / f64::from(folds_used) } else { 0.0 },
        });
    }
    let best = cv_results
        .iter()
        .enumerate()
        .max_by(|(ia, a), (ib, b)| {
            a.mean_cv_top1
                .total_cmp(&b.mean_cv_top1)
                .then(ib.cmp(ia)) // ties to the earlier grid entry
        })
        .map(|(_, r)| r.params)
        .expect("non-empty grid");

    let forest = train_forest(&train_x, &train_y, classes.len(), best, final_seed);

    let mut model = SchedulerModel {
        version: MODEL_FILE_VERSION,
        encoding,
        classes,
        forest,
        seed,
        cv_results,
        holdout: Vec::new(),
        holdout_size: holdout_idx.len(),
    };
    let holdout_slots: Vec<&LabeledSlot> = holdout_idx.iter().map(|&i| &dataset[i]).collect();
    if !holdout_slots.is_empty() {
        model.holdout = [1usize, 3, 5]
            .iter()
            .map(|&k| eval_row(&model, holdout_slots.iter().copied(), k))
            .collect();
    }
    Ok(model)
}

fn eval_row<'a>(
    model: &SchedulerModel,
    slots: impl Iterator<Item = &'a LabeledSlot> + Clone,
    k: usize,
) -> EvalRow {
    let mut n = 0usize;
    let mut model_hits = 0usize;
    let mut baseline_hits = 0usize;
    for slot in slots {
        n += 1;
        if predict_topk(model, &slot.features, k).contains(&slot.label) {
            model_hits += 1;
        }
        if baseline_topk(&slot.features, k).contains(&slot.label) {
            baseline_hits += 1;
        }
    }
    EvalRow {
        k,
        model_accuracy: model_hits as f64 / n as f64,
        baseline_accuracy: baseline_hits as f64 / n as f64,
    }
}

/// Top-k accuracy of model and baseline over a dataset disjoint from
/// training.
pub fn evaluate_topk(
    model: &SchedulerModel,
    dataset: &[LabeledSlot],
    k_values: &[usize],
) -> Result<Vec<EvalRow>, ModelError> {
    if dataset.is_empty() {
        return Err(ModelError::EmptyDataset);
    }
    Ok(k_values
        .iter()
        .map(|&k| eval_row(model, dataset.iter(), k))
        .collect())
}
