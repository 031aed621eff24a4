//! Post-training evaluation: variance-normalised losses, ROC-AUC from
//! reconstruction error, KNN-DAT domain mixing and descent-peak detection.

use std::cmp::Ordering;
use std::collections::BTreeMap;

use ndarray::{ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use crate::datagen::SampleFlag;
use crate::error::{Error, Result};
use crate::neuralnet::{self, AutoencoderModel};

/// `(1/M) sum (y - mean)^2` over every entry of a reference dataset.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossNormalizer {
    pub mean: f64,
    pub denominator: f64,
}

impl LossNormalizer {
    pub fn from_data(data: ArrayView2<'_, f64>) -> Result<Self> {
        if data.is_empty() {
            return Err(Error::UndefinedNormalization);
        }
        let m = data.len() as f64;
        let mean = data.iter().sum::<f64>() / m;
        let denominator = data.iter().map(|y| (y - mean) * (y - mean)).sum::<f64>() / m;
        if !(denominator > 0.0) || !denominator.is_finite() {
            return Err(Error::UndefinedNormalization);
        }
        Ok(LossNormalizer { mean, denominator })
    }

    pub fn normalize(&self, raw_mse: f64) -> f64 {
        raw_mse / self.denominator
    }
}

/// `raw_mse / denominator`.
pub fn normalized_loss(raw_mse: f64, normalizer: &LossNormalizer) -> Result<f64> {
    if !(normalizer.denominator > 0.0) {
        return Err(Error::UndefinedNormalization);
    }
    Ok(normalizer.normalize(raw_mse))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Label {
    Clean,
    Anomaly,
}

impl From<SampleFlag> for Label {
    fn from(flag: SampleFlag) -> Self {
        match flag {
            SampleFlag::Anomaly => Label::Anomaly,
            SampleFlag::Clean | SampleFlag::Noisy => Label::Clean,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScoredSample {
    pub score: f64,
    pub label: Label,
}

/// Per-row mean squared reconstruction error.
pub fn reconstruction_scores(
    model: &AutoencoderModel,
    data: ArrayView2<'_, f64>,
    labels: &[Label],
) -> Result<Vec<ScoredSample>> {
    if labels.len() != data.nrows() {
        return Err(Error::shape(format!("{} labels", data.nrows()), format!("{} labels", labels.len())));
    }
    let rec = neuralnet::reconstruct(model, data)?;
    let n = data.ncols() as f64;
    Ok(rec
        .axis_iter(Axis(0))
        .zip(data.axis_iter(Axis(0)))
        .zip(labels)
        .map(|((r, x), &label)| ScoredSample {
            score: r.iter().zip(x.iter()).map(|(a, b)| (a - b) * (a - b)).sum::<f64>() / n,
            label,
        })
        .collect())
}

/// Probability that a random anomaly outscores a random clean sample, ties
/// counting one half. Computed from mid-ranks (Mann-Whitney U).
pub fn roc_auc(scored: &[ScoredSample]) -> Result<f64> {
    let n_pos = scored.iter().filter(|s| s.label == Label::Anomaly).count();
    let n_neg = scored.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(Error::UndefinedMetric(format!(
            "ROC-AUC needs both classes (anomalies: {n_pos}, clean: {n_neg})"
        )));
    }
    if scored.iter().any(|s| s.score.is_nan()) {
        return Err(Error::UndefinedMetric("NaN score".into()));
    }
    let mut order: Vec<usize> = (0..scored.len()).collect();
    order.sort_by(|&a, &b| scored[a].score.total_cmp(&scored[b].score));

    // Sum of mid-ranks of the positives, doubled to stay in integers.
    let mut twice_rank_sum: u64 = 0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i + 1;
        while j < order.len() && scored[order[j]].score == scored[order[i]].score {
            j += 1;
        }
        // Ranks i+1..=j share the mid-rank (i + 1 + j) / 2.
        let twice_mid = (i + 1 + j) as u64;
        let pos_in_group = order[i..j]
            .iter()
            .filter(|&&k| scored[k].label == Label::Anomaly)
            .count() as u64;
        twice_rank_sum += twice_mid * pos_in_group;
        i = j;
    }
    let n_pos = n_pos as u64;
    // 2U = 2R - n_pos (n_pos + 1)
    let twice_u = twice_rank_sum - n_pos * (n_pos + 1);
    Ok(twice_u as f64 / 2.0 / (n_pos as f64 * n_neg as f64))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct KnnDatConfig {
    pub k: usize,
}

impl Default for KnnDatConfig {
    fn default() -> Self {
        KnnDatConfig { k: 10 }
    }
}

fn squared_distance(a: ndarray::ArrayView1<'_, f64>, b: ndarray::ArrayView1<'_, f64>) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Mean over points of the fraction of their `k` nearest neighbours (self
/// excluded, Euclidean, ties to the lower index) that share their batch.
/// 1 means fully separated batches.
pub fn knn_dat(embeddings: ArrayView2<'_, f64>, batch_labels: &[u32], cfg: &KnnDatConfig) -> Result<f64> {
    let m = embeddings.nrows();
    if batch_labels.len() != m {
        return Err(Error::shape(format!("{m} batch labels"), format!("{}", batch_labels.len())));
    }
    if cfg.k == 0 || cfg.k >= m {
        return Err(Error::invalid(format!("k must be in 1..{m}, got {}", cfg.k)));
    }
    let k = cfg.k;
    let mut candidates: Vec<(f64, usize)> = Vec::with_capacity(m - 1);
    let mut total = 0.0;
    for i in 0..m {
        candidates.clear();
        let xi = embeddings.row(i);
        for j in (0..m).filter(|&j| j != i) {
            candidates.push((squared_distance(xi, embeddings.row(j)), j));
        }
        let by_distance = |a: &(f64, usize), b: &(f64, usize)| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1));
        candidates.select_nth_unstable_by(k - 1, by_distance);
        let same = candidates[..k]
            .iter()
            .filter(|&&(_, j)| batch_labels[j] == batch_labels[i])
            .count();
        total += same as f64 / k as f64;
    }
    Ok(total / m as f64)
}

/// KNN-DAT pooled over all batches and, for each target batch, over the
/// source plus that target alone.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KnnDatReport {
    pub pooled: f64,
    pub per_target: BTreeMap<u32, f64>,
    pub per_target_mean: f64,
}

pub fn knn_dat_report(
    embeddings: ArrayView2<'_, f64>,
    batch_labels: &[u32],
    source_batch: u32,
    cfg: &KnnDatConfig,
) -> Result<KnnDatReport> {
    if !batch_labels.contains(&source_batch) {
        return Err(Error::invalid(format!("source batch {source_batch} not present")));
    }
    let pooled = knn_dat(embeddings, batch_labels, cfg)?;
    let targets: std::collections::BTreeSet<u32> =
        batch_labels.iter().copied().filter(|&b| b != source_batch).collect();
    let mut per_target = BTreeMap::new();
    for t in targets {
        let rows: Vec<usize> = (0..batch_labels.len())
            .filter(|&i| batch_labels[i] == source_batch || batch_labels[i] == t)
            .collect();
        let sub = embeddings.select(Axis(0), &rows);
        let labels: Vec<u32> = rows.iter().map(|&i| batch_labels[i]).collect();
        per_target.insert(t, knn_dat(sub.view(), &labels, cfg)?);
    }
    let per_target_mean = if per_target.is_empty() {
        pooled
    } else {
        per_target.values().sum::<f64>() / per_target.len() as f64
    };
    Ok(KnnDatReport {
        pooled,
        per_target,
        per_target_mean,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExtremumKind {
    Min,
    Max,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Extremum {
    pub index: usize,
    pub x: f64,
    pub value: f64,
    pub kind: ExtremumKind,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PeakConfig {
    /// Centered moving-average window; 1 disables smoothing.
    pub smoothing_window: usize,
    /// A reversal must exceed this absolute amount to count.
    pub tolerance: f64,
}

impl Default for PeakConfig {
    fn default() -> Self {
        PeakConfig {
            smoothing_window: 3,
            tolerance: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PeakProfile {
    pub smoothed: Vec<f64>,
    /// Alternating interior turning points in x order.
    pub extrema: Vec<Extremum>,
    /// Lowest point before `peak`.
    pub first_min: Option<Extremum>,
    /// Interior maximum with the largest rise above the lowest earlier point.
    pub peak: Option<Extremum>,
    /// Lowest point after `peak`.
    pub second_min: Option<Extremum>,
    /// Number of descending segments: 1 monotone descent, 2 double descent,
    /// 3 triple descent.
    pub descent_count: usize,
}

impl PeakProfile {
    /// `peak / first_min`, when both exist.
    pub fn peak_ratio(&self) -> Option<f64> {
        Some(self.peak?.value / self.first_min?.value)
    }
}

/// Centered moving average. Points without a full window on both sides
/// keep their raw value.
pub fn smooth(values: &[f64], window: usize) -> Vec<f64> {
    let half = window.max(1) / 2;
    (0..values.len())
        .map(|i| {
            if i < half || i + half >= values.len() {
                values[i]
            } else {
                values[i - half..=i + half].iter().sum::<f64>() / (2 * half + 1) as f64
            }
        })
        .collect()
}

/// Turning points and descent segments of a loss curve.
pub fn peak_profile(x: &[f64], y: &[f64], cfg: &PeakConfig) -> Result<PeakProfile> {
    if x.len() != y.len() {
        return Err(Error::shape(format!("{} y values", x.len()), format!("{}", y.len())));
    }
    if x.len() < 5 {
        return Err(Error::invalid(format!("peak detection needs at least 5 points, got {}", x.len())));
    }
    if x.windows(2).any(|w| !(w[0] < w[1])) {
        return Err(Error::invalid("x values must be strictly increasing"));
    }
    if y.iter().any(|v| !v.is_finite()) {
        return Err(Error::invalid("curve contains non-finite values"));
    }
    let s = smooth(y, cfg.smoothing_window);
    let tol = cfg.tolerance;

    #[derive(Clone, Copy, PartialEq)]
    enum Dir {
        Up,
        Down,
    }
    let mut dir: Option<Dir> = None;
    let mut first_dir: Option<Dir> = None;
    let mut cand = 0usize;
    let mut extrema = Vec::new();
    let push = |extrema: &mut Vec<Extremum>, i: usize, kind| {
        extrema.push(Extremum {
            index: i,
            x: x[i],
            value: s[i],
            kind,
        })
    };
    for i in 1..s.len() {
        match dir {
            None => {
                if s[i] > s[0] + tol {
                    dir = Some(Dir::Up);
                } else if s[i] < s[0] - tol {
                    dir = Some(Dir::Down);
                }
                first_dir = dir;
                cand = i;
            }
            Some(Dir::Up) => {
                if s[i] > s[cand] {
                    cand = i;
                } else if s[cand] - s[i] > tol && s[i] < s[cand] {
                    push(&mut extrema, cand, ExtremumKind::Max);
                    dir = Some(Dir::Down);
                    cand = i;
                }
            }
            Some(Dir::Down) => {
                if s[i] < s[cand] {
                    cand = i;
                } else if s[i] - s[cand] > tol && s[i] > s[cand] {
                    push(&mut extrema, cand, ExtremumKind::Min);
                    dir = Some(Dir::Up);
                    cand = i;
                }
            }
        }
    }

    let descent_count = match first_dir {
        None => 0,
        Some(first) => {
            let segments = extrema.len() + 1;
            (0..segments)
                .filter(|k| (first == Dir::Down) == (k % 2 == 0))
                .count()
        }
    };

    let point = |i: usize, kind| Extremum {
        index: i,
        x: x[i],
        value: s[i],
        kind,
    };
    let argmin = |lo: usize, hi: usize| -> usize {
        (lo..hi)
            .min_by(|&a, &b| s[a].partial_cmp(&s[b]).unwrap_or(Ordering::Equal))
            .expect("non-empty range")
    };
    let peak = extrema
        .iter()
        .filter(|e| e.kind == ExtremumKind::Max)
        .map(|e| (e, e.value - s[argmin(0, e.index)]))
        .max_by(|a, b| a.1.partial_cmp(&b.1).unwrap_or(Ordering::Equal))
        .map(|(e, _)| *e);
    let (first_min, second_min) = match peak {
        Some(p) => (
            Some(point(argmin(0, p.index), ExtremumKind::Min)),
            Some(point(argmin(p.index + 1, s.len()), ExtremumKind::Min)),
        ),
        None => (None, None),
    };

    Ok(PeakProfile {
        smoothed: s.clone(),
        extrema,
        first_min,
        peak,
        second_min,
        descent_count,
    })
}
