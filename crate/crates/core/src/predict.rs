//! Pluggable inference: a PointNet-shaped MLP predictor (per-point encoder,
//! max-pool global feature, classification and segmentation heads) and a
//! training-free centroid classifier over radial-distance histograms.
//!
//! # Weights file format
//!
//! Little-endian binary, magic `PCTTAW1`, then three `u32` section sizes:
//! the number of point layers, classification-head layers (always 1), and
//! segmentation-head layers. Each layer follows in that order as `u32 rows`,
//! `u32 cols`, `rows*cols` `f32` weights (row-major), then `rows` `f32`
//! biases. Weights are stored as `f32` and widened to `f64` in memory, so a
//! loaded model saves back bit-identically.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};

use crate::error::{Error, Result};
use crate::geometry::{normalize_unit_sphere, PointCloud};
use crate::par;

const MAGIC: &[u8; 7] = b"PCTTAW1";
const MAX_DIM: u32 = 1 << 20;
const MAX_LAYERS: u32 = 1024;

/// Row-major matrix of per-point logits (or a single row of global logits).
#[derive(Debug, Clone, PartialEq)]
pub struct LogitMatrix {
    data: Vec<f64>,
    rows: usize,
    cols: usize,
}

impl LogitMatrix {
    pub fn from_rows(rows: Vec<Vec<f64>>) -> Result<Self> {
        let r = rows.len();
        let c = rows.first().map_or(0, Vec::len);
        let mut data = Vec::with_capacity(r * c);
        for (i, row) in rows.iter().enumerate() {
            if row.len() != c {
                return Err(Error::DimensionMismatch {
                    context: format!("logit row {i}"),
                    expected: c,
                    got: row.len(),
                });
            }
            data.extend_from_slice(row);
        }
        Ok(Self {
            data,
            rows: r,
            cols: c,
        })
    }

    pub(crate) fn from_flat(data: Vec<f64>, rows: usize, cols: usize) -> Self {
        debug_assert_eq!(data.len(), rows * cols);
        Self { data, rows, cols }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn iter_rows(&self) -> impl Iterator<Item = &[f64]> {
        self.data.chunks_exact(self.cols.max(1))
    }
}

/// Index of the largest value, lowest index on ties.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
        }
    }
    best
}

/// Dense affine layer, `y = W x + b`, row-major weights.
#[derive(Debug, Clone, PartialEq)]
pub struct Affine {
    weight: Vec<f64>,
    bias: Vec<f64>,
    rows: usize,
    cols: usize,
}

impl Affine {
    pub fn new(weight: Vec<f64>, bias: Vec<f64>, rows: usize, cols: usize) -> Result<Self> {
        if weight.len() != rows * cols || bias.len() != rows {
            return Err(Error::DimensionMismatch {
                context: "affine layer storage".into(),
                expected: rows * cols,
                got: weight.len(),
            });
        }
        Ok(Self {
            weight,
            bias,
            rows,
            cols,
        })
    }

    fn apply(&self, x: &[f64], out: &mut Vec<f64>) {
        out.clear();
        for r in 0..self.rows {
            let row = &self.weight[r * self.cols..(r + 1) * self.cols];
            let mut acc = self.bias[r];
            for (w, v) in row.iter().zip(x) {
                acc += w * v;
            }
            out.push(acc);
        }
    }
}

fn relu(values: &mut [f64]) {
    for v in values {
        if *v < 0.0 {
            *v = 0.0;
        }
    }
}

/// Layered affine predictor: point layers with ReLU between them (none after
/// the last), coordinate-wise max-pool to a global feature, a linear
/// classification head, and a segmentation head over the concatenation of
/// the per-point local feature (input to the last point layer) with the
/// global feature.
#[derive(Debug, Clone, PartialEq)]
pub struct MlpPredictor {
    point_layers: Vec<Affine>,
    cls_head: Affine,
    seg_head: Vec<Affine>,
}

impl MlpPredictor {
    pub fn new(point_layers: Vec<Affine>, cls_head: Affine, seg_head: Vec<Affine>) -> Result<Self> {
        let model = Self {
            point_layers,
            cls_head,
            seg_head,
        };
        model.validate()?;
        Ok(model)
    }

    pub fn class_count(&self) -> usize {
        self.cls_head.rows
    }

    pub fn global_dim(&self) -> usize {
        self.point_layers.last().map_or(0, |l| l.rows)
    }

    /// Dimension of the per-point feature fed to the segmentation head: the
    /// (post-ReLU) input of the last point layer, or the raw coordinates for
    /// a single-layer encoder.
    pub fn local_dim(&self) -> usize {
        if self.point_layers.len() >= 2 {
            self.point_layers[self.point_layers.len() - 2].rows
        } else {
            3
        }
    }

    pub fn has_seg_head(&self) -> bool {
        !self.seg_head.is_empty()
    }

    fn validate(&self) -> Result<()> {
        let mismatch = |context: &str, expected: usize, got: usize| Error::DimensionMismatch {
            context: context.to_string(),
            expected,
            got,
        };
        if self.point_layers.is_empty() {
            return Err(Error::InvalidParameter(
                "model needs at least one point layer".into(),
            ));
        }
        let mut prev = 3usize;
        for (i, l) in self.point_layers.iter().enumerate() {
            if l.cols != prev {
                return Err(mismatch(&format!("point_layers[{i}]"), prev, l.cols));
            }
            prev = l.rows;
        }
        if self.cls_head.cols != self.global_dim() {
            return Err(mismatch("cls_head", self.global_dim(), self.cls_head.cols));
        }
        if !self.seg_head.is_empty() {
            let mut prev = self.local_dim() + self.global_dim();
            for (i, l) in self.seg_head.iter().enumerate() {
                if l.cols != prev {
                    return Err(mismatch(&format!("seg_head[{i}]"), prev, l.cols));
                }
                prev = l.rows;
            }
            if prev != self.class_count() {
                return Err(mismatch("seg_head output", self.class_count(), prev));
            }
        }
        for layer in self
            .point_layers
            .iter()
            .chain(std::iter::once(&self.cls_head))
            .chain(self.seg_head.iter())
        {
            if layer
                .weight
                .iter()
                .chain(layer.bias.iter())
                .any(|w| !w.is_finite())
            {
                return Err(Error::InvalidParameter("non-finite weight".into()));
            }
        }
        Ok(())
    }

    /// Runs the point encoder; returns (local feature, final feature).
    fn encode_point(&self, p: &[f64; 3]) -> (Vec<f64>, Vec<f64>) {
        let mut x = p.to_vec();
        let mut next = Vec::new();
        let last = self.point_layers.len() - 1;
        for (i, layer) in self.point_layers.iter().enumerate() {
            layer.apply(&x, &mut next);
            if i < last {
                relu(&mut next);
            }
            std::mem::swap(&mut x, &mut next);
        }
        // `x` is the final feature; after the last swap `next` holds the
        // input the last layer saw, which is the local feature.
        let local = if self.point_layers.len() >= 2 {
            next
        } else {
            p.to_vec()
        };
        (local, x)
    }

    /// Permutation-invariant global feature: coordinate-wise max over the
    /// per-point encoder outputs.
    pub fn extract_global_feature(&self, cloud: &PointCloud) -> Result<Vec<f64>> {
        if cloud.is_empty() {
            return Err(Error::EmptyCloud);
        }
        let finals = par::map_slice(cloud.points(), |p| self.encode_point(&[p.x, p.y, p.z]).1);
        let mut global = vec![f64::NEG_INFINITY; self.global_dim()];
        for f in &finals {
            for (g, v) in global.iter_mut().zip(f) {
                *g = g.max(*v);
            }
        }
        Ok(global)
    }

    /// Classification head over a global feature.
    pub fn classify_logits(&self, feature: &[f64]) -> Result<Vec<f64>> {
        if feature.len() != self.cls_head.cols {
            return Err(Error::DimensionMismatch {
                context: "cls_head input".into(),
                expected: self.cls_head.cols,
                got: feature.len(),
            });
        }
        let mut out = Vec::new();
        self.cls_head.apply(feature, &mut out);
        Ok(out)
    }

    /// Per-point class logits: the segmentation head applied to each point's
    /// `[local feature, global feature]`. Row order matches point order.
    pub fn per_point_logits(&self, cloud: &PointCloud) -> Result<LogitMatrix> {
        if cloud.is_empty() {
            return Err(Error::EmptyCloud);
        }
        if self.seg_head.is_empty() {
            return Err(Error::InvalidParameter(
                "model has no segmentation head".into(),
            ));
        }
        let encoded = par::map_slice(cloud.points(), |p| self.encode_point(&[p.x, p.y, p.z]));
        let mut global = vec![f64::NEG_INFINITY; self.global_dim()];
        for (_, f) in &encoded {
            for (g, v) in global.iter_mut().zip(f) {
                *g = g.max(*v);
            }
        }
        let c = self.class_count();
        let rows = par::map_slice(&encoded, |(local, _)| {
            let mut x = Vec::with_capacity(local.len() + global.len());
            x.extend_from_slice(local);
            x.extend_from_slice(&global);
            let mut next = Vec::new();
            let last = self.seg_head.len() - 1;
            for (i, layer) in self.seg_head.iter().enumerate() {
                layer.apply(&x, &mut next);
                if i < last {
                    relu(&mut next);
                }
                std::mem::swap(&mut x, &mut next);
            }
            x
        });
        let mut data = Vec::with_capacity(cloud.len() * c);
        for r in rows {
            data.extend_from_slice(&r);
        }
        Ok(LogitMatrix::from_flat(data, cloud.len(), c))
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut w = BufWriter::new(File::create(path.as_ref())?);
        w.write_all(MAGIC)?;
        w.write_u32::<LittleEndian>(self.point_layers.len() as u32)?;
        w.write_u32::<LittleEndian>(1)?;
        w.write_u32::<LittleEndian>(self.seg_head.len() as u32)?;
        for layer in self
            .point_layers
            .iter()
            .chain(std::iter::once(&self.cls_head))
            .chain(self.seg_head.iter())
        {
            w.write_u32::<LittleEndian>(layer.rows as u32)?;
            w.write_u32::<LittleEndian>(layer.cols as u32)?;
            for v in &layer.weight {
                w.write_f32::<LittleEndian>(*v as f32)?;
            }
            for v in &layer.bias {
                w.write_f32::<LittleEndian>(*v as f32)?;
            }
        }
        w.flush()?;
        Ok(())
    }

    /// Seeded uniform [-0.1, 0.1] weights; values are f32-representable so a
    /// save/load round trip is exact. Intended for tests and demos.
    pub fn seeded_random(
        point_dims: &[usize],
        seg_hidden: &[usize],
        class_count: usize,
        seed: u64,
    ) -> Self {
        let mut state = seed;
        let mut next_weight = move || {
            state = state.wrapping_add(0x9E37_79B9_7F4A_7C15);
            let mut z = state;
            z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
            z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
            z ^= z >> 31;
            let unit = (z >> 40) as f32 / (1u64 << 24) as f32;
            (unit * 0.2 - 0.1) as f64
        };
        let mut layer = |rows: usize, cols: usize| {
            let weight = (0..rows * cols).map(|_| next_weight()).collect();
            let bias = (0..rows).map(|_| next_weight()).collect();
            Affine::new(weight, bias, rows, cols).expect("consistent dims")
        };
        let mut point_layers = Vec::new();
        let mut prev = 3usize;
        for &d in point_dims {
            point_layers.push(layer(d, prev));
            prev = d;
        }
        let global = prev;
        let local = if point_dims.len() >= 2 {
            point_dims[point_dims.len() - 2]
        } else {
            3
        };
        let cls_head = layer(class_count, global);
        let mut seg_head = Vec::new();
        let mut prev = local + global;
        for &d in seg_hidden {
            seg_head.push(layer(d, prev));
            prev = d;
        }
        seg_head.push(layer(class_count, prev));
        Self::new(point_layers, cls_head, seg_head).expect("valid by construction")
    }

    /// The reference architecture: 3 -> 64 -> 128 -> 256 point layers,
    /// classification head 256 -> C, segmentation head (128+256) -> 128 -> C.
    pub fn reference(class_count: usize, seed: u64) -> Self {
        Self::seeded_random(&[64, 128, 256], &[128], class_count, seed)
    }
}

/// Loads a predictor, validating the magic, layer chain, and finiteness.
pub fn load_predictor(path: impl AsRef<Path>) -> Result<MlpPredictor> {
    let path = path.as_ref();
    if !path.exists() {
        return Err(Error::MissingFile(vec![path.display().to_string()]));
    }
    let loc = path.display().to_string();
    let mut r = BufReader::new(File::open(path)?);
    let parse_err = |message: &str| Error::parse(loc.clone(), message);

    let mut magic = [0u8; 7];
    r.read_exact(&mut magic)
        .map_err(|_| parse_err("file too short for magic"))?;
    if &magic != MAGIC {
        return Err(parse_err("bad magic (expected PCTTAW1)"));
    }
    let n_point = r
        .read_u32::<LittleEndian>()
        .map_err(|_| parse_err("truncated header"))?;
    let n_cls = r
        .read_u32::<LittleEndian>()
        .map_err(|_| parse_err("truncated header"))?;
    let n_seg = r
        .read_u32::<LittleEndian>()
        .map_err(|_| parse_err("truncated header"))?;
    if n_cls != 1 {
        return Err(parse_err("expected exactly one classification head layer"));
    }
    if n_point == 0 || n_point > MAX_LAYERS || n_seg > MAX_LAYERS {
        return Err(parse_err("implausible layer count"));
    }
    let read_layer = |r: &mut BufReader<File>| -> Result<Affine> {
        let rows = r
            .read_u32::<LittleEndian>()
            .map_err(|_| parse_err("truncated layer header"))?;
        let cols = r
            .read_u32::<LittleEndian>()
            .map_err(|_| parse_err("truncated layer header"))?;
        if rows == 0 || cols == 0 || rows > MAX_DIM || cols > MAX_DIM {
            return Err(parse_err("implausible layer dimensions"));
        }
        let count = rows as usize * cols as usize;
        let mut weight = Vec::with_capacity(count);
        for _ in 0..count {
            weight.push(
                r.read_f32::<LittleEndian>()
                    .map_err(|_| parse_err("truncated weights"))? as f64,
            );
        }
        let mut bias = Vec::with_capacity(rows as usize);
        for _ in 0..rows {
            bias.push(
                r.read_f32::<LittleEndian>()
                    .map_err(|_| parse_err("truncated biases"))? as f64,
            );
        }
        Affine::new(weight, bias, rows as usize, cols as usize)
    };
    let mut point_layers = Vec::with_capacity(n_point as usize);
    for _ in 0..n_point {
        point_layers.push(read_layer(&mut r)?);
    }
    let cls_head = read_layer(&mut r)?;
    let mut seg_head = Vec::with_capacity(n_seg as usize);
    for _ in 0..n_seg {
        seg_head.push(read_layer(&mut r)?);
    }
    let mut trailing = [0u8; 1];
    if r.read(&mut trailing)? != 0 {
        return Err(parse_err("trailing bytes after last layer"));
    }
    MlpPredictor::new(point_layers, cls_head, seg_head)
}

/// Training-free classifier: per-class mean of radial-distance histograms.
#[derive(Debug, Clone, PartialEq)]
pub struct CentroidClassifier {
    centroids: Vec<Vec<f64>>,
    bins: usize,
}

/// Histogram of point radii after unit-sphere normalization; `bins` equal
/// slices of [0, 1], normalized to sum 1. Rotation-invariant by construction.
pub fn radial_histogram(cloud: &PointCloud, bins: usize) -> Result<Vec<f64>> {
    if cloud.is_empty() {
        return Err(Error::EmptyCloud);
    }
    if bins == 0 {
        return Err(Error::InvalidParameter("bins must be >= 1".into()));
    }
    let (normalized, _) = normalize_unit_sphere(cloud)?;
    let mut hist = vec![0.0f64; bins];
    for p in normalized.points() {
        let r = p.norm().clamp(0.0, 1.0);
        let b = ((r * bins as f64) as usize).min(bins - 1);
        hist[b] += 1.0;
    }
    let n = cloud.len() as f64;
    for h in &mut hist {
        *h /= n;
    }
    Ok(hist)
}

/// Fits per-class centroid descriptors. Every class in `0..=max_label` must
/// have at least one example.
pub fn fit_centroid_classifier(
    dataset: &[(PointCloud, usize)],
    bins: usize,
) -> Result<CentroidClassifier> {
    if dataset.is_empty() {
        return Err(Error::EmptyInput);
    }
    let classes = dataset.iter().map(|(_, c)| *c).max().unwrap() + 1;
    let mut sums = vec![vec![0.0f64; bins]; classes];
    let mut counts = vec![0usize; classes];
    for (cloud, label) in dataset {
        let hist = radial_histogram(cloud, bins)?;
        for (s, h) in sums[*label].iter_mut().zip(&hist) {
            *s += h;
        }
        counts[*label] += 1;
    }
    for (c, &count) in counts.iter().enumerate() {
        if count == 0 {
            return Err(Error::MissingClass(c));
        }
        for s in &mut sums[c] {
            *s /= count as f64;
        }
    }
    Ok(CentroidClassifier {
        centroids: sums,
        bins,
    })
}

impl CentroidClassifier {
    pub fn class_count(&self) -> usize {
        self.centroids.len()
    }

    pub fn bins(&self) -> usize {
        self.bins
    }

    pub fn centroid(&self, class: usize) -> &[f64] {
        &self.centroids[class]
    }

    /// Logits are negative L2 distances from the cloud's histogram to each
    /// class centroid, so the nearest centroid wins the argmax.
    pub fn logits_from_feature(&self, feature: &[f64]) -> Result<Vec<f64>> {
        if feature.len() != self.bins {
            return Err(Error::DimensionMismatch {
                context: "centroid classifier feature".into(),
                expected: self.bins,
                got: feature.len(),
            });
        }
        Ok(self
            .centroids
            .iter()
            .map(|c| {
                let d2: f64 = c.iter().zip(feature).map(|(a, b)| (a - b) * (a - b)).sum();
                -d2.sqrt()
            })
            .collect())
    }
}

/// Global-feature classification interface: the feature extractor and the
/// head that maps an (averaged) feature to class logits.
pub trait Classifier: Sync {
    fn class_count(&self) -> usize;
    fn global_feature(&self, cloud: &PointCloud) -> Result<Vec<f64>>;
    fn logits_from_feature(&self, feature: &[f64]) -> Result<Vec<f64>>;

    fn classify_logits(&self, cloud: &PointCloud) -> Result<Vec<f64>> {
        let f = self.global_feature(cloud)?;
        self.logits_from_feature(&f)
    }
}

impl Classifier for MlpPredictor {
    fn class_count(&self) -> usize {
        MlpPredictor::class_count(self)
    }

    fn global_feature(&self, cloud: &PointCloud) -> Result<Vec<f64>> {
        self.extract_global_feature(cloud)
    }

    fn logits_from_feature(&self, feature: &[f64]) -> Result<Vec<f64>> {
        MlpPredictor::classify_logits(self, feature)
    }
}

impl Classifier for CentroidClassifier {
    fn class_count(&self) -> usize {
        CentroidClassifier::class_count(self)
    }

    fn global_feature(&self, cloud: &PointCloud) -> Result<Vec<f64>> {
        radial_histogram(cloud, self.bins)
    }

    fn logits_from_feature(&self, feature: &[f64]) -> Result<Vec<f64>> {
        CentroidClassifier::logits_from_feature(self, feature)
    }
}

/// Per-point prediction interface for segmentation.
pub trait PointwisePredictor: Sync {
    fn class_count(&self) -> usize;
    fn per_point_logits(&self, cloud: &PointCloud) -> Result<LogitMatrix>;
}

impl PointwisePredictor for MlpPredictor {
    fn class_count(&self) -> usize {
        MlpPredictor::class_count(self)
    }

    fn per_point_logits(&self, cloud: &PointCloud) -> Result<LogitMatrix> {
        MlpPredictor::per_point_logits(self, cloud)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Vec3;

    fn cloud(points: &[[f64; 3]]) -> PointCloud {
        PointCloud::from_points(points.iter().map(|p| Vec3::from(*p)).collect()).unwrap()
    }

    fn identity_model() -> MlpPredictor {
        // Single 3x3 identity point layer, cls head = identity, seg head maps
        // [local(3) | global(3)] -> 3 by summing the two blocks.
        let eye = Affine::new(
            vec![1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0],
            vec![0.0; 3],
            3,
            3,
        )
        .unwrap();
        let seg = Affine::new(
            vec![
                1.0, 0.0, 0.0, 1.0, 0.0, 0.0, //
                0.0, 1.0, 0.0, 0.0, 1.0, 0.0, //
                0.0, 0.0, 1.0, 0.0, 0.0, 1.0,
            ],
            vec![0.0; 3],
            3,
            6,
        )
        .unwrap();
        MlpPredictor::new(vec![eye.clone()], eye, vec![seg]).unwrap()
    }

    #[test]
    fn max_pool_identity_model() {
        let model = identity_model();
        let c = cloud(&[[1.0, 0.0, 0.0], [0.0, 2.0, 0.0]]);
        assert_eq!(
            model.extract_global_feature(&c).unwrap(),
            vec![1.0, 2.0, 0.0]
        );
    }

    #[test]
    fn global_feature_permutation_and_duplication_invariant() {
        let model = MlpPredictor::reference(4, 3);
        let c = cloud(&[[0.1, 0.2, 0.3], [-0.5, 0.4, 0.0], [0.9, -0.1, 0.2]]);
        let permuted = c.select(&[2, 0, 1]).unwrap();
        let duplicated = c.select(&[0, 0, 1, 1, 2, 2]).unwrap();
        let f = model.extract_global_feature(&c).unwrap();
        assert_eq!(f, model.extract_global_feature(&permuted).unwrap());
        assert_eq!(f, model.extract_global_feature(&duplicated).unwrap());
    }

    #[test]
    fn classify_zero_feature_zero_bias() {
        let head = Affine::new(vec![0.5, -0.5, 0.25, 0.0, 1.0, 2.0], vec![0.0, 0.0], 2, 3).unwrap();
        let eye = Affine::new(
            vec![1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0],
            vec![0.0; 3],
            3,
            3,
        )
        .unwrap();
        let model = MlpPredictor::new(vec![eye], head, vec![]).unwrap();
        assert_eq!(
            model.classify_logits(&[0.0, 0.0, 0.0]).unwrap(),
            vec![0.0, 0.0]
        );
    }

    #[test]
    fn argmax_shift_invariant_and_tie_rule() {
        let logits = vec![0.3, -0.2, 0.9, 0.1];
        let shifted: Vec<f64> = logits.iter().map(|v| v + 5.75).collect();
        assert_eq!(argmax(&logits), argmax(&shifted));
        assert_eq!(argmax(&[1.0, 1.0, 0.0]), 0);
    }

    #[test]
    fn per_point_logits_shape_and_equivariance() {
        let model = MlpPredictor::reference(5, 9);
        let single = cloud(&[[0.4, 0.1, -0.2]]);
        let m = model.per_point_logits(&single).unwrap();
        assert_eq!((m.rows(), m.cols()), (1, 5));

        let c = cloud(&[
            [0.1, 0.2, 0.3],
            [-0.5, 0.4, 0.0],
            [0.9, -0.1, 0.2],
            [0.0, 0.0, 1.0],
        ]);
        let perm = [3usize, 1, 0, 2];
        let permuted = c.select(&perm).unwrap();
        let base = model.per_point_logits(&c).unwrap();
        let moved = model.per_point_logits(&permuted).unwrap();
        for (new_row, &old_idx) in perm.iter().enumerate() {
            assert_eq!(moved.row(new_row), base.row(old_idx));
        }
    }

    #[test]
    fn per_point_logits_match_hand_computation() {
        let model = identity_model();
        let c = cloud(&[[1.0, 2.0, 3.0], [-1.0, 0.5, 0.0]]);
        let m = model.per_point_logits(&c).unwrap();
        // Global = max per coordinate = (1, 2, 3); each row = local + global.
        assert_eq!(m.row(0), &[2.0, 4.0, 6.0]);
        assert_eq!(m.row(1), &[0.0, 2.5, 3.0]);
    }

    #[test]
    fn inference_is_pure() {
        let model = MlpPredictor::reference(3, 21);
        let c = cloud(&[[0.3, -0.3, 0.1], [0.2, 0.9, -0.7]]);
        assert_eq!(
            model.per_point_logits(&c).unwrap(),
            model.per_point_logits(&c).unwrap()
        );
        assert_eq!(
            model.extract_global_feature(&c).unwrap(),
            model.extract_global_feature(&c).unwrap()
        );
    }

    #[test]
    fn save_load_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.bin");
        let model = MlpPredictor::reference(4, 17);
        model.save(&path).unwrap();
        let loaded = load_predictor(&path).unwrap();
        assert_eq!(model, loaded);
    }

    #[test]
    fn truncated_file_is_parse_error() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.bin");
        let model = MlpPredictor::reference(2, 5);
        model.save(&path).unwrap();
        let bytes = std::fs::read(&path).unwrap();
        std::fs::write(&path, &bytes[..bytes.len() / 2]).unwrap();
        assert!(matches!(load_predictor(&path), Err(Error::Parse { .. })));
    }

    #[test]
    fn bad_magic_is_parse_error() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.bin");
        std::fs::write(&path, b"NOTMAGIC-and-more-bytes").unwrap();
        assert!(matches!(load_predictor(&path), Err(Error::Parse { .. })));
    }

    #[test]
    fn missing_model_file() {
        assert!(matches!(
            load_predictor("/nonexistent/model.bin"),
            Err(Error::MissingFile(_))
        ));
    }

    #[test]
    fn mismatched_dims_name_the_layer() {
        let l0 = Affine::new(vec![0.0; 12], vec![0.0; 4], 4, 3).unwrap();
        let bad = Affine::new(vec![0.0; 10], vec![0.0; 2], 2, 5).unwrap();
        let head = Affine::new(vec![0.0; 2], vec![0.0; 1], 1, 2).unwrap();
        let err = MlpPredictor::new(vec![l0, bad], head, vec![]).unwrap_err();
        match err {
            Error::DimensionMismatch {
                context,
                expected,
                got,
            } => {
                assert_eq!(context, "point_layers[1]");
                assert_eq!((expected, got), (4, 5));
            }
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn histogram_is_rotation_invariant() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha12Rng::seed_from_u64(5);
        let pts: Vec<Vec3> = (0..400)
            .map(|_| {
                Vec3::new(
                    rng.random::<f64>() - 0.5,
                    rng.random::<f64>() - 0.5,
                    rng.random::<f64>() - 0.5,
                )
            })
            .collect();
        let c = PointCloud::from_points(pts.clone()).unwrap();
        let angle = 0.7f64;
        let rotated: Vec<Vec3> = pts
            .iter()
            .map(|p| {
                Vec3::new(
                    p.x * angle.cos() - p.y * angle.sin(),
                    p.x * angle.sin() + p.y * angle.cos(),
                    p.z,
                )
            })
            .collect();
        let cr = PointCloud::from_points(rotated).unwrap();
        let a = radial_histogram(&c, 16).unwrap();
        let b = radial_histogram(&cr, 16).unwrap();
        let diff: f64 = a.iter().zip(&b).map(|(x, y)| (x - y).abs()).sum();
        assert!(diff < 1e-9, "descriptor moved by {diff}");
    }

    #[test]
    fn histogram_sums_to_one() {
        let c = cloud(&[[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [0.0, 0.5, 0.0]]);
        let h = radial_histogram(&c, 8).unwrap();
        assert!((h.iter().sum::<f64>() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn centroid_single_example_equals_histogram() {
        let c = cloud(&[[1.0, 0.0, 0.0], [-1.0, 0.0, 0.0], [0.1, 0.2, 0.0]]);
        let clf = fit_centroid_classifier(&[(c.clone(), 0)], 16).unwrap();
        assert_eq!(clf.centroid(0), &radial_histogram(&c, 16).unwrap()[..]);
    }

    #[test]
    fn centroid_duplicated_dataset_identical() {
        let a = cloud(&[[1.0, 0.0, 0.0], [-1.0, 0.0, 0.0]]);
        let b = cloud(&[[0.2, 0.0, 0.0], [0.0, 0.7, 0.0], [0.0, 0.0, -0.9]]);
        let once = fit_centroid_classifier(&[(a.clone(), 0), (b.clone(), 1)], 8).unwrap();
        let twice =
            fit_centroid_classifier(&[(a.clone(), 0), (b.clone(), 1), (a, 0), (b, 1)], 8).unwrap();
        assert_eq!(once, twice);
    }

    #[test]
    fn centroid_missing_class_errors() {
        let c = cloud(&[[1.0, 0.0, 0.0]]);
        assert!(matches!(
            fit_centroid_classifier(&[(c, 1)], 8),
            Err(Error::MissingClass(0))
        ));
    }

    #[test]
    fn centroid_self_match_wins() {
        let sphere = {
            let phi = std::f64::consts::PI * (3.0 - 5.0f64.sqrt());
            let pts: Vec<Vec3> = (0..200)
                .map(|i| {
                    let y = 1.0 - 2.0 * (i as f64 + 0.5) / 200.0;
                    let r = (1.0 - y * y).sqrt();
                    let t = phi * i as f64;
                    Vec3::new(r * t.cos(), y, r * t.sin())
                })
                .collect();
            PointCloud::from_points(pts).unwrap()
        };
        let ball = {
            let pts: Vec<Vec3> = (0..200)
                .map(|i| {
                    let t = i as f64 * 0.618;
                    let r = (i as f64 + 0.5) / 200.0;
                    Vec3::new(r * t.cos(), r * t.sin(), r * (t * 1.3).sin() * 0.5)
                })
                .collect();
            PointCloud::from_points(pts).unwrap()
        };
        let clf = fit_centroid_classifier(&[(sphere.clone(), 0), (ball.clone(), 1)], 16).unwrap();
        assert_eq!(argmax(&clf.classify_logits(&sphere).unwrap()), 0);
        assert_eq!(argmax(&clf.classify_logits(&ball).unwrap()), 1);
    }
}
