//! Evaluation metrics: overall/mean accuracy, mean IoU, and part-wise
//! instance/category IoU.

use std::collections::BTreeMap;

use crate::error::{Error, Result};

/// Square count matrix, rows = ground truth, columns = prediction.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfusionMatrix {
    counts: Vec<u64>,
    classes: usize,
}

impl ConfusionMatrix {
    pub fn new(classes: usize) -> Self {
        Self {
            counts: vec![0; classes * classes],
            classes,
        }
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn record(&mut self, truth: usize, pred: usize) -> Result<()> {
        if truth >= self.classes || pred >= self.classes {
            return Err(Error::IndexOutOfRange {
                index: truth.max(pred),
                len: self.classes,
            });
        }
        self.counts[truth * self.classes + pred] += 1;
        Ok(())
    }

    pub fn get(&self, truth: usize, pred: usize) -> u64 {
        self.counts[truth * self.classes + pred]
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    /// Merges another matrix into this one; addition is associative, so
    /// partial matrices can be accumulated in any grouping.
    pub fn merge(&mut self, other: &ConfusionMatrix) -> Result<()> {
        if other.classes != self.classes {
            return Err(Error::DimensionMismatch {
                context: "confusion matrix merge".into(),
                expected: self.classes,
                got: other.classes,
            });
        }
        for (a, b) in self.counts.iter_mut().zip(&other.counts) {
            *a += b;
        }
        Ok(())
    }

    pub fn from_counts(rows: &[&[u64]]) -> Result<Self> {
        let classes = rows.len();
        let mut cm = Self::new(classes);
        for (i, row) in rows.iter().enumerate() {
            if row.len() != classes {
                return Err(Error::DimensionMismatch {
                    context: format!("confusion row {i}"),
                    expected: classes,
                    got: row.len(),
                });
            }
            for (j, &v) in row.iter().enumerate() {
                cm.counts[i * classes + j] = v;
            }
        }
        Ok(cm)
    }
}

/// Fraction of samples on the diagonal.
pub fn overall_accuracy(cm: &ConfusionMatrix) -> Result<f64> {
    let total = cm.total();
    if total == 0 {
        return Err(Error::EmptyMatrix);
    }
    let trace: u64 = (0..cm.classes).map(|i| cm.get(i, i)).sum();
    Ok(trace as f64 / total as f64)
}

/// Mean over classes of per-class recall; classes with no ground-truth
/// samples are excluded from the mean.
pub fn mean_class_accuracy(cm: &ConfusionMatrix) -> Result<f64> {
    if cm.total() == 0 {
        return Err(Error::EmptyMatrix);
    }
    let mut sum = 0.0;
    let mut seen = 0usize;
    for i in 0..cm.classes {
        let row: u64 = (0..cm.classes).map(|j| cm.get(i, j)).sum();
        if row > 0 {
            sum += cm.get(i, i) as f64 / row as f64;
            seen += 1;
        }
    }
    if seen == 0 {
        return Err(Error::EmptyMatrix);
    }
    Ok(sum / seen as f64)
}

/// Mean over classes of `tp / (tp + fp + fn)`; classes absent from both the
/// ground truth and the predictions are excluded.
pub fn mean_iou(cm: &ConfusionMatrix) -> Result<f64> {
    if cm.total() == 0 {
        return Err(Error::EmptyMatrix);
    }
    let mut sum = 0.0;
    let mut seen = 0usize;
    for c in 0..cm.classes {
        let tp = cm.get(c, c);
        let row: u64 = (0..cm.classes).map(|j| cm.get(c, j)).sum();
        let col: u64 = (0..cm.classes).map(|i| cm.get(i, c)).sum();
        let union = row + col - tp;
        if union > 0 {
            sum += tp as f64 / union as f64;
            seen += 1;
        }
    }
    if seen == 0 {
        return Err(Error::EmptyMatrix);
    }
    Ok(sum / seen as f64)
}

/// One part-segmented shape: per-point ground-truth and predicted part
/// labels, its category, and the category's valid part set.
#[derive(Debug, Clone)]
pub struct PartInstance {
    pub truth: Vec<usize>,
    pub pred: Vec<usize>,
    pub category: usize,
    pub parts: Vec<usize>,
}

impl PartInstance {
    fn validate(&self, index: usize) -> Result<()> {
        if self.truth.len() != self.pred.len() {
            return Err(Error::DimensionMismatch {
                context: format!("part instance {index} labels"),
                expected: self.truth.len(),
                got: self.pred.len(),
            });
        }
        if self.parts.is_empty() {
            return Err(Error::InvalidParameter(format!(
                "part instance {index} has an empty part set"
            )));
        }
        for l in self.truth.iter().chain(self.pred.iter()) {
            if !self.parts.contains(l) {
                return Err(Error::InvalidParameter(format!(
                    "part instance {index}: label {l} outside the category part set"
                )));
            }
        }
        Ok(())
    }

    /// Mean over the category's parts of `tp / (tp + fp + fn)`; a part
    /// absent from both the ground truth and the prediction scores 1.
    pub fn iou(&self) -> f64 {
        let mut sum = 0.0;
        for &part in &self.parts {
            let mut tp = 0u64;
            let mut fp = 0u64;
            let mut fn_ = 0u64;
            for (&t, &p) in self.truth.iter().zip(&self.pred) {
                match (t == part, p == part) {
                    (true, true) => tp += 1,
                    (false, true) => fp += 1,
                    (true, false) => fn_ += 1,
                    (false, false) => {}
                }
            }
            let union = tp + fp + fn_;
            sum += if union == 0 {
                1.0
            } else {
                tp as f64 / union as f64
            };
        }
        sum / self.parts.len() as f64
    }
}

/// Returns `(mInsIoU, mCatIoU)`: instance IoU averaged over all instances,
/// and the per-category means averaged over categories.
pub fn part_iou(instances: &[PartInstance]) -> Result<(f64, f64)> {
    if instances.is_empty() {
        return Err(Error::EmptyInput);
    }
    let mut per_category: BTreeMap<usize, Vec<f64>> = BTreeMap::new();
    let mut sum = 0.0;
    for (i, instance) in instances.iter().enumerate() {
        instance.validate(i)?;
        let iou = instance.iou();
        sum += iou;
        per_category.entry(instance.category).or_default().push(iou);
    }
    let mins = sum / instances.len() as f64;
    let mcat = per_category
        .values()
        .map(|v| v.iter().sum::<f64>() / v.len() as f64)
        .sum::<f64>()
        / per_category.len() as f64;
    Ok((mins, mcat))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fixture() -> ConfusionMatrix {
        ConfusionMatrix::from_counts(&[&[3, 1], &[2, 4]]).unwrap()
    }

    #[test]
    fn overall_accuracy_fixture() {
        assert!((overall_accuracy(&fixture()).unwrap() - 0.7).abs() < 1e-12);
    }

    #[test]
    fn overall_accuracy_extremes() {
        let perfect = ConfusionMatrix::from_counts(&[&[5, 0], &[0, 3]]).unwrap();
        assert_eq!(overall_accuracy(&perfect).unwrap(), 1.0);
        let wrong = ConfusionMatrix::from_counts(&[&[0, 5], &[3, 0]]).unwrap();
        assert_eq!(overall_accuracy(&wrong).unwrap(), 0.0);
    }

    #[test]
    fn mean_class_accuracy_fixture() {
        let want = (0.75 + 4.0 / 6.0) / 2.0;
        assert!((mean_class_accuracy(&fixture()).unwrap() - want).abs() < 1e-9);
    }

    #[test]
    fn mean_class_accuracy_skips_empty_rows() {
        let cm = ConfusionMatrix::from_counts(&[&[3, 1, 0], &[2, 4, 0], &[0, 0, 0]]).unwrap();
        let want = (0.75 + 4.0 / 6.0) / 2.0;
        assert!((mean_class_accuracy(&cm).unwrap() - want).abs() < 1e-9);
    }

    #[test]
    fn mean_iou_fixture() {
        let want = (3.0 / 6.0 + 4.0 / 7.0) / 2.0;
        assert!((mean_iou(&fixture()).unwrap() - want).abs() < 1e-9);
    }

    #[test]
    fn mean_iou_skips_absent_classes() {
        let cm = ConfusionMatrix::from_counts(&[&[3, 1, 0], &[2, 4, 0], &[0, 0, 0]]).unwrap();
        let want = (3.0 / 6.0 + 4.0 / 7.0) / 2.0;
        assert!((mean_iou(&cm).unwrap() - want).abs() < 1e-9);
    }

    #[test]
    fn empty_matrix_errors() {
        let cm = ConfusionMatrix::new(3);
        assert!(matches!(overall_accuracy(&cm), Err(Error::EmptyMatrix)));
        assert!(matches!(mean_class_accuracy(&cm), Err(Error::EmptyMatrix)));
        assert!(matches!(mean_iou(&cm), Err(Error::EmptyMatrix)));
    }

    #[test]
    fn merge_adds_counts() {
        let mut a = fixture();
        a.merge(&fixture()).unwrap();
        assert_eq!(a.get(0, 0), 6);
        assert_eq!(a.total(), 20);
        let mut b = ConfusionMatrix::new(3);
        assert!(a.merge(&b).is_err());
        assert!(b.record(5, 0).is_err());
    }

    #[test]
    fn relabeling_permutation_preserves_metrics() {
        // Swap classes 0 and 1 consistently in truth and prediction.
        let cm = fixture();
        let swapped = ConfusionMatrix::from_counts(&[&[4, 2], &[1, 3]]).unwrap();
        assert_eq!(
            overall_accuracy(&cm).unwrap(),
            overall_accuracy(&swapped).unwrap()
        );
        assert!(
            (mean_class_accuracy(&cm).unwrap() - mean_class_accuracy(&swapped).unwrap()).abs()
                < 1e-12
        );
        assert!((mean_iou(&cm).unwrap() - mean_iou(&swapped).unwrap()).abs() < 1e-12);
    }

    #[test]
    fn part_iou_single_instance() {
        let inst = PartInstance {
            truth: vec![0, 0, 1],
            pred: vec![0, 1, 1],
            category: 0,
            parts: vec![0, 1],
        };
        // part 0: tp=1 fp=0 fn=1 -> 1/2; part 1: tp=1 fp=1 fn=0 -> 1/2.
        assert!((inst.iou() - 0.5).abs() < 1e-12);
        let (mins, mcat) = part_iou(&[inst]).unwrap();
        assert!((mins - 0.5).abs() < 1e-12);
        assert!((mcat - 0.5).abs() < 1e-12);
    }

    #[test]
    fn part_iou_two_category_fixture() {
        // Category A: instance IoUs 0.5 and 1.0; category B: 0.8.
        let a1 = PartInstance {
            truth: vec![0, 0, 1],
            pred: vec![0, 1, 1],
            category: 0,
            parts: vec![0, 1],
        };
        let a2 = PartInstance {
            truth: vec![0, 1],
            pred: vec![0, 1],
            category: 0,
            parts: vec![0, 1],
        };
        let b1 = PartInstance {
            truth: vec![2, 2, 2, 2, 3, 3, 3, 3, 3],
            pred: vec![2, 2, 2, 2, 2, 3, 3, 3, 3],
            category: 1,
            parts: vec![2, 3],
        };
        assert!((a1.iou() - 0.5).abs() < 1e-12);
        assert!((a2.iou() - 1.0).abs() < 1e-12);
        assert!((b1.iou() - 0.8).abs() < 1e-12);
        let (mins, mcat) = part_iou(&[a1, a2, b1]).unwrap();
        assert!((mins - (0.5 + 1.0 + 0.8) / 3.0).abs() < 1e-9);
        assert!((mcat - (0.75 + 0.8) / 2.0).abs() < 1e-9);
    }

    #[test]
    fn part_absent_from_both_scores_one() {
        let inst = PartInstance {
            truth: vec![0, 0],
            pred: vec![0, 0],
            category: 0,
            parts: vec![0, 1],
        };
        assert!((inst.iou() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn part_iou_perfect_everything() {
        let instances: Vec<PartInstance> = (0..3)
            .map(|c| PartInstance {
                truth: vec![2 * c, 2 * c + 1],
                pred: vec![2 * c, 2 * c + 1],
                category: c,
                parts: vec![2 * c, 2 * c + 1],
            })
            .collect();
        let (mins, mcat) = part_iou(&instances).unwrap();
        assert_eq!((mins, mcat), (1.0, 1.0));
    }

    #[test]
    fn part_iou_rejects_bad_labels() {
        let inst = PartInstance {
            truth: vec![0, 7],
            pred: vec![0, 1],
            category: 0,
            parts: vec![0, 1],
        };
        assert!(part_iou(&[inst]).is_err());
        assert!(matches!(part_iou(&[]), Err(Error::EmptyInput)));
    }
}
