//! Combines predictions across the original and augmented clouds.
//!
//! Classification averages the global features of all clouds (pairwise
//! summation in index order, so the result is bit-deterministic) and applies
//! the classifier head once. Segmentation collects, for every point of the
//! original cloud, its own logit row plus the rows of its nearest neighbors
//! in each augmented cloud — matched in a coordinate or coordinate+logit
//! feature space — and reduces them with max or mean.

use std::time::Instant;

use crate::augment::{make_augmentations, AugmentPlan, AugmentationSet};
use crate::error::{Error, Result};
use crate::geometry::PointCloud;
use crate::kdtree::SpatialIndex;
use crate::par;
use crate::predict::{argmax, Classifier, LogitMatrix, PointwisePredictor};

/// Correspondence feature space (the `get_feat` choice): plain coordinates
/// or coordinates concatenated with the scaled logit row.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeatureMode {
    XyzOnly,
    XyzPlusLogit,
}

/// Reduction applied to the collected logit rows.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AggMode {
    Max,
    Avg,
}

/// Full test-time-augmentation configuration.
#[derive(Debug, Clone)]
pub struct TtaConfig {
    pub plan: AugmentPlan,
    pub feature_mode: FeatureMode,
    pub agg_mode: AggMode,
    /// Neighbors taken per augmented cloud (clamped to the cloud size).
    pub neighbor_k: usize,
    /// Scale applied to the logit block of correspondence features.
    pub logit_weight: f64,
    /// Average softmax probabilities instead of raw logits (Avg mode only).
    pub softmax_before_avg: bool,
}

impl TtaConfig {
    pub fn new(plan: AugmentPlan) -> Self {
        Self {
            plan,
            feature_mode: FeatureMode::XyzOnly,
            agg_mode: AggMode::Max,
            neighbor_k: 1,
            logit_weight: 1.0,
            softmax_before_avg: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.plan.method.validate()?;
        if self.neighbor_k < 1 {
            return Err(Error::InvalidParameter("neighbor_k must be >= 1".into()));
        }
        if self.logit_weight < 0.0 || !self.logit_weight.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "logit_weight must be >= 0, got {}",
                self.logit_weight
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClassificationResult {
    /// Argmax of the final logits, lowest class index on ties.
    pub label: usize,
    pub final_logits: Vec<f64>,
    /// Per-cloud logits (head applied to each cloud's own feature), for
    /// diagnostics; entry 0 is the original cloud.
    pub per_cloud_logits: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SegmentationResult {
    /// Row-wise argmax of the aggregated logits.
    pub labels: Vec<usize>,
    pub logits: LogitMatrix,
    /// Logit rows that contributed to each point (own row plus matched
    /// neighbors); always >= 1.
    pub counts: Vec<usize>,
}

/// Wall-clock seconds spent per pipeline stage.
#[derive(Debug, Clone, Copy, Default, serde::Serialize)]
pub struct StageTimings {
    pub augment_secs: f64,
    pub inference_secs: f64,
    pub aggregation_secs: f64,
    pub other_secs: f64,
}

impl StageTimings {
    pub fn add(&mut self, other: &StageTimings) {
        self.augment_secs += other.augment_secs;
        self.inference_secs += other.inference_secs;
        self.aggregation_secs += other.aggregation_secs;
        self.other_secs += other.other_secs;
    }
}

/// Sums vectors pairwise over index order; fixed reduction tree, so the
/// result does not depend on thread count or cloud ordering happenstance.
fn pairwise_sum(vectors: &[Vec<f64>]) -> Vec<f64> {
    match vectors.len() {
        0 => Vec::new(),
        1 => vectors[0].clone(),
        n => {
            let (a, b) = vectors.split_at(n / 2);
            let mut left = pairwise_sum(a);
            let right = pairwise_sum(b);
            for (l, r) in left.iter_mut().zip(&right) {
                *l += r;
            }
            left
        }
    }
}

/// Classification by feature averaging: global features of x_0..x_M are
/// averaged and passed through the classifier head once.
pub fn classify_tta<C: Classifier>(
    model: &C,
    set: &AugmentationSet,
) -> Result<ClassificationResult> {
    classify_tta_timed(model, set, &mut StageTimings::default())
}

pub fn classify_tta_timed<C: Classifier>(
    model: &C,
    set: &AugmentationSet,
    timings: &mut StageTimings,
) -> Result<ClassificationResult> {
    let clouds: Vec<&PointCloud> = set.clouds().collect();
    if clouds.iter().any(|c| c.is_empty()) {
        return Err(Error::EmptyCloud);
    }
    let t0 = Instant::now();
    let features: Vec<Vec<f64>> = par::map_slice(&clouds, |c| model.global_feature(c))
        .into_iter()
        .collect::<Result<_>>()?;
    timings.inference_secs += t0.elapsed().as_secs_f64();

    let t1 = Instant::now();
    let mut mean = pairwise_sum(&features);
    let count = features.len() as f64;
    for v in &mut mean {
        *v /= count;
    }
    let final_logits = model.logits_from_feature(&mean)?;
    let per_cloud_logits: Vec<Vec<f64>> = features
        .iter()
        .map(|f| model.logits_from_feature(f))
        .collect::<Result<_>>()?;
    timings.aggregation_secs += t1.elapsed().as_secs_f64();

    Ok(ClassificationResult {
        label: argmax(&final_logits),
        final_logits,
        per_cloud_logits,
    })
}

/// Generates the augmentation set and classifies in one call.
pub fn classify_with_tta<C: Classifier>(
    model: &C,
    cloud: &PointCloud,
    config: &TtaConfig,
    timings: &mut StageTimings,
) -> Result<ClassificationResult> {
    config.validate()?;
    let t0 = Instant::now();
    let set = make_augmentations(cloud, &config.plan)?;
    timings.augment_secs += t0.elapsed().as_secs_f64();
    classify_tta_timed(model, &set, timings)
}

/// Correspondence features for one cloud: n x 3 coordinates, or
/// n x (3 + C) with the logit block scaled by `logit_weight`. Returned flat
/// (row-major) together with the row width.
pub fn build_correspondence_features(
    cloud: &PointCloud,
    logits: &LogitMatrix,
    config: &TtaConfig,
) -> Result<(Vec<f64>, usize)> {
    if logits.rows() != cloud.len() {
        return Err(Error::DimensionMismatch {
            context: "correspondence logits".into(),
            expected: cloud.len(),
            got: logits.rows(),
        });
    }
    let dim = match config.feature_mode {
        FeatureMode::XyzOnly => 3,
        FeatureMode::XyzPlusLogit => 3 + logits.cols(),
    };
    let mut flat = Vec::with_capacity(cloud.len() * dim);
    for (p, row) in cloud.points().iter().zip(logits.iter_rows()) {
        flat.extend_from_slice(&[p.x, p.y, p.z]);
        if let FeatureMode::XyzPlusLogit = config.feature_mode {
            flat.extend(row.iter().map(|v| v * config.logit_weight));
        }
    }
    Ok((flat, dim))
}

/// Elementwise max or arithmetic mean over equal-length rows.
pub fn aggregate_logits(rows: &[&[f64]], mode: AggMode) -> Result<Vec<f64>> {
    let first = rows.first().ok_or(Error::EmptyInput)?;
    let c = first.len();
    for row in rows {
        if row.len() != c {
            return Err(Error::DimensionMismatch {
                context: "aggregated logit rows".into(),
                expected: c,
                got: row.len(),
            });
        }
    }
    let mut out = rows[0].to_vec();
    match mode {
        AggMode::Max => {
            for row in &rows[1..] {
                for (o, v) in out.iter_mut().zip(*row) {
                    *o = o.max(*v);
                }
            }
        }
        AggMode::Avg => {
            for row in &rows[1..] {
                for (o, v) in out.iter_mut().zip(*row) {
                    *o += v;
                }
            }
            let n = rows.len() as f64;
            for o in &mut out {
                *o /= n;
            }
        }
    }
    Ok(out)
}

fn softmax(row: &[f64]) -> Vec<f64> {
    let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = row.iter().map(|v| (v - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

/// Per-point TTA for segmentation: each point of x_0 collects its own logit
/// row plus the rows of its `neighbor_k` nearest points in every augmented
/// cloud (searched in the configured feature space), and the collected rows
/// are reduced with the configured mode. The own row is counted exactly once
/// in Avg mode.
pub fn segment_tta<P: PointwisePredictor>(
    model: &P,
    set: &AugmentationSet,
    config: &TtaConfig,
) -> Result<SegmentationResult> {
    segment_tta_timed(model, set, config, &mut StageTimings::default())
}

pub fn segment_tta_timed<P: PointwisePredictor>(
    model: &P,
    set: &AugmentationSet,
    config: &TtaConfig,
    timings: &mut StageTimings,
) -> Result<SegmentationResult> {
    config.validate()?;
    if set.clouds().any(|c| c.is_empty()) {
        return Err(Error::EmptyCloud);
    }

    let t0 = Instant::now();
    let base_logits = model.per_point_logits(&set.original)?;
    let aug_logits: Vec<LogitMatrix> =
        par::map_slice(&set.augmented, |c| model.per_point_logits(c))
            .into_iter()
            .collect::<Result<_>>()?;
    timings.inference_secs += t0.elapsed().as_secs_f64();

    let t1 = Instant::now();
    let indices: Vec<SpatialIndex> = set
        .augmented
        .iter()
        .zip(&aug_logits)
        .map(|(c, l)| {
            let (flat, dim) = build_correspondence_features(c, l, config)?;
            SpatialIndex::from_flat(flat, dim)
        })
        .collect::<Result<_>>()?;
    let (queries, dim) = build_correspondence_features(&set.original, &base_logits, config)?;

    let n = set.original.len();
    let c = base_logits.cols();
    let softmax_avg = config.softmax_before_avg && config.agg_mode == AggMode::Avg;
    let per_point: Vec<(Vec<f64>, usize)> = par::map_range(n, |i| {
        let query = &queries[i * dim..(i + 1) * dim];
        let mut rows: Vec<&[f64]> = Vec::with_capacity(1 + indices.len() * config.neighbor_k);
        rows.push(base_logits.row(i));
        for (index, logits) in indices.iter().zip(&aug_logits) {
            let nn = index.knn(query, config.neighbor_k).expect("dims match");
            for (j, _) in nn {
                rows.push(logits.row(j));
            }
        }
        let count = rows.len();
        let agg = if softmax_avg {
            let probs: Vec<Vec<f64>> = rows.iter().map(|r| softmax(r)).collect();
            let views: Vec<&[f64]> = probs.iter().map(Vec::as_slice).collect();
            aggregate_logits(&views, AggMode::Avg).expect("non-empty")
        } else {
            aggregate_logits(&rows, config.agg_mode).expect("non-empty")
        };
        (agg, count)
    });

    let mut data = Vec::with_capacity(n * c);
    let mut labels = Vec::with_capacity(n);
    let mut counts = Vec::with_capacity(n);
    for (row, count) in per_point {
        labels.push(argmax(&row));
        counts.push(count);
        data.extend_from_slice(&row);
    }
    timings.aggregation_secs += t1.elapsed().as_secs_f64();

    Ok(SegmentationResult {
        labels,
        logits: LogitMatrix::from_flat(data, n, c),
        counts,
    })
}

/// Generates the augmentation set and segments in one call.
pub fn segment_with_tta<P: PointwisePredictor>(
    model: &P,
    cloud: &PointCloud,
    config: &TtaConfig,
    timings: &mut StageTimings,
) -> Result<SegmentationResult> {
    config.validate()?;
    let t0 = Instant::now();
    let set = make_augmentations(cloud, &config.plan)?;
    timings.augment_secs += t0.elapsed().as_secs_f64();
    segment_tta_timed(model, &set, config, timings)
}
