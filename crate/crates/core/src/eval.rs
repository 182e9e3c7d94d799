//! Confusion matrices, precision/recall/F1 and cross-validation summaries.

use alloc::vec::Vec;

use crate::{Error, Result};

/// Rows are true classes, columns predicted classes.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfusionMatrix {
    classes: usize,
    counts: Vec<u64>,
}

impl ConfusionMatrix {
    pub fn new(classes: usize) -> Self {
        Self {
            classes,
            counts: alloc::vec![0; classes * classes],
        }
    }

    pub fn from_labels(truth: &[usize], predicted: &[usize], classes: usize) -> Result<Self> {
        if truth.len() != predicted.len() {
            return Err(Error::ShapeMismatch {
                op: "confusion",
                expected: alloc::vec![truth.len()],
                got: alloc::vec![predicted.len()],
            });
        }
        let mut m = Self::new(classes);
        for (&t, &p) in truth.iter().zip(predicted) {
            for label in [t, p] {
                if label >= classes {
                    return Err(Error::LabelOutOfRange { label, classes });
                }
            }
            m.counts[t * classes + p] += 1;
        }
        Ok(m)
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn get(&self, truth: usize, predicted: usize) -> u64 {
        self.counts[truth * self.classes + predicted]
    }

    pub fn row(&self, truth: usize) -> &[u64] {
        &self.counts[truth * self.classes..(truth + 1) * self.classes]
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    pub fn trace(&self) -> u64 {
        (0..self.classes).map(|c| self.get(c, c)).sum()
    }

    fn col_sum(&self, c: usize) -> u64 {
        (0..self.classes).map(|r| self.get(r, c)).sum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Prf {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

fn ratio(num: u64, den: u64) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

fn prf(tp: u64, fp: u64, fn_: u64) -> Prf {
    let precision = ratio(tp, tp + fp);
    let recall = ratio(tp, tp + fn_);
    let f1 = if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    };
    Prf { precision, recall, f1 }
}

/// One-vs-rest scores per class; any 0/0 ratio is 0.
pub fn per_class_prf(m: &ConfusionMatrix) -> Vec<Prf> {
    (0..m.classes)
        .map(|c| {
            let tp = m.get(c, c);
            prf(
                tp,
                m.col_sum(c) - tp,
                m.counts[c * m.classes..(c + 1) * m.classes].iter().sum::<u64>() - tp,
            )
        })
        .collect()
}

/// F1 from TP/FP/FN pooled over classes.
pub fn micro_f1(m: &ConfusionMatrix) -> Result<f64> {
    if m.total() == 0 {
        return Err(Error::EmptyInput("micro_f1"));
    }
    // every off-diagonal count is one false positive and one false negative, so
    // precision = recall = F1 = TP / N
    Ok(ratio(m.trace(), m.total()))
}

#[derive(Debug, Clone, PartialEq)]
pub struct FoldReport {
    /// Target subject of the fold.
    pub fold_id: u32,
    pub per_class: Vec<Prf>,
    pub micro_f1: f64,
    /// Unweighted mean of the per-class F1 values.
    pub mean_class_f1: f64,
    pub matrix: ConfusionMatrix,
}

pub fn fold_report(fold_id: u32, truth: &[usize], predicted: &[usize], classes: usize) -> Result<FoldReport> {
    let matrix = ConfusionMatrix::from_labels(truth, predicted, classes)?;
    let per_class = per_class_prf(&matrix);
    let mean_class_f1 = per_class.iter().map(|p| p.f1).sum::<f64>() / classes as f64;
    Ok(FoldReport {
        fold_id,
        micro_f1: micro_f1(&matrix)?,
        per_class,
        mean_class_f1,
        matrix,
    })
}

/// Mean and standard error across folds; `se` is `None` for a single fold.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MeanSe {
    pub mean: f64,
    pub se: Option<f64>,
}

pub fn mean_se(values: &[f64]) -> Result<MeanSe> {
    if values.is_empty() {
        return Err(Error::EmptyInput("mean_se"));
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let se = (values.len() > 1).then(|| {
        let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
        libm::sqrt(var) / libm::sqrt(n)
    });
    Ok(MeanSe { mean, se })
}

#[derive(Debug, Clone, PartialEq)]
pub struct CvSummary {
    pub per_class: Vec<MeanSe>,
    pub micro: MeanSe,
    pub mean_class: MeanSe,
    pub fold_count: usize,
}

pub fn cv_aggregate(folds: &[FoldReport]) -> Result<CvSummary> {
    let first = folds.first().ok_or(Error::EmptyInput("cv_aggregate"))?;
    let k = first.per_class.len();
    if folds.iter().any(|f| f.per_class.len() != k) {
        return Err(Error::InvalidConfig("folds disagree on the number of classes".into()));
    }
    // sorted so the summary does not depend on fold order
    let collect = |f: &dyn Fn(&FoldReport) -> f64| -> Result<MeanSe> {
        let mut v: Vec<f64> = folds.iter().map(f).collect();
        v.sort_by(f64::total_cmp);
        mean_se(&v)
    };
    Ok(CvSummary {
        per_class: (0..k).map(|c| collect(&|f| f.per_class[c].f1)).collect::<Result<_>>()?,
        micro: collect(&|f| f.micro_f1)?,
        mean_class: collect(&|f| f.mean_class_f1)?,
        fold_count: folds.len(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn examples() {
        let m = ConfusionMatrix::from_labels(&[0, 0, 0], &[1, 1, 1], 2).unwrap();
        assert_eq!(m.get(0, 1), 3);
        assert_eq!(ConfusionMatrix::from_labels(&[], &[], 3).unwrap().total(), 0);
        // TP=1, FP=1, FN=1 for class 0
        let m = ConfusionMatrix::from_labels(&[0, 0, 1], &[0, 1, 0], 3).unwrap();
        let p = per_class_prf(&m);
        assert_eq!((p[0].precision, p[0].recall, p[0].f1), (0.5, 0.5, 0.5));
        assert_eq!(
            p[2],
            Prf {
                precision: 0.0,
                recall: 0.0,
                f1: 0.0
            }
        );
        assert!(micro_f1(&ConfusionMatrix::new(3)).is_err());
        let diag = ConfusionMatrix::from_labels(&[0, 1, 2], &[0, 1, 2], 3).unwrap();
        assert_eq!(micro_f1(&diag).unwrap(), 1.0);
        assert!(ConfusionMatrix::from_labels(&[0, 3], &[0, 0], 3).is_err());
        assert!(ConfusionMatrix::from_labels(&[0], &[0, 0], 3).is_err());
    }

    #[test]
    fn standard_error() {
        let s = mean_se(&[0.8, 1.0]).unwrap();
        assert!((s.mean - 0.9).abs() < 1e-15);
        assert!((s.se.unwrap() - 0.1).abs() < 1e-12);
        let s = mean_se(&[0.9; 8]).unwrap();
        assert!((s.mean - 0.9).abs() < 1e-15);
        assert!(s.se.unwrap().abs() < 1e-15);
        assert_eq!(mean_se(&[0.5]).unwrap().se, None);
    }

    #[test]
    fn aggregate_is_order_free() {
        let a = fold_report(1, &[0, 1, 1], &[0, 1, 0], 2).unwrap();
        let b = fold_report(2, &[0, 1], &[0, 1], 2).unwrap();
        let c = fold_report(3, &[0, 0, 1], &[1, 0, 1], 2).unwrap();
        let x = cv_aggregate(&[a.clone(), b.clone(), c.clone()]).unwrap();
        let y = cv_aggregate(&[c, a, b]).unwrap();
        assert_eq!(x, y);
        assert_eq!(x.fold_count, 3);
    }
}
