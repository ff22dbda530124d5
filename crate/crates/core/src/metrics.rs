//! Segmentation metrics from exact pixel counts.
//!
//! Everything derives from a single C×C confusion matrix of u64 counts;
//! division happens only at the very end. A class absent from both the
//! prediction and the truth has no meaningful score and is excluded from
//! the macro averages (and listed in `undefined_classes`).

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::Mask;

#[derive(Debug, Error)]
pub enum MetricsError {
    #[error("mask shapes differ: {0:?} vs {1:?}")]
    ShapeMismatch((usize, usize), (usize, usize)),
    #[error("label {label} out of range for {num_classes} classes")]
    LabelOutOfRange { label: u8, num_classes: usize },
    #[error("no class is present in prediction or truth; metric undefined")]
    AllUndefined,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ConfusionMatrix {
    num_classes: usize,
    /// counts[t * C + p] = pixels with true class t predicted as p
    counts: Vec<u64>,
}

impl ConfusionMatrix {
    pub fn new(num_classes: usize) -> Self {
        assert!(num_classes >= 1);
        ConfusionMatrix {
            num_classes,
            counts: vec![0; num_classes * num_classes],
        }
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn count(&self, truth: usize, pred: usize) -> u64 {
        self.counts[truth * self.num_classes + pred]
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    /// Tallies one (prediction, truth) mask pair into the matrix.
    pub fn accumulate(&mut self, pred: &Mask, truth: &Mask) -> Result<(), MetricsError> {
        if pred.dim() != truth.dim() {
            return Err(MetricsError::ShapeMismatch(pred.dim(), truth.dim()));
        }
        let c = self.num_classes;
        for (&p, &t) in pred.iter().zip(truth.iter()) {
            if (p as usize) >= c {
                return Err(MetricsError::LabelOutOfRange {
                    label: p,
                    num_classes: c,
                });
            }
            if (t as usize) >= c {
                return Err(MetricsError::LabelOutOfRange {
                    label: t,
                    num_classes: c,
                });
            }
            self.counts[t as usize * c + p as usize] += 1;
        }
        Ok(())
    }

    /// Merges another matrix (same class count) into this one.
    pub fn merge(&mut self, other: &ConfusionMatrix) {
        assert_eq!(self.num_classes, other.num_classes);
        for (a, b) in self.counts.iter_mut().zip(&other.counts) {
            *a += b;
        }
    }

    pub fn true_positives(&self, class: usize) -> u64 {
        self.count(class, class)
    }

    /// Pixels predicted as `class` but belonging to another class.
    pub fn false_positives(&self, class: usize) -> u64 {
        (0..self.num_classes)
            .filter(|&t| t != class)
            .map(|t| self.count(t, class))
            .sum()
    }

    /// Pixels of `class` predicted as something else.
    pub fn false_negatives(&self, class: usize) -> u64 {
        (0..self.num_classes)
            .filter(|&p| p != class)
            .map(|p| self.count(class, p))
            .sum()
    }

    /// Number of truth pixels per class (row sums).
    pub fn support(&self, class: usize) -> u64 {
        (0..self.num_classes).map(|p| self.count(class, p)).sum()
    }

    /// IoU per class: TP / (TP + FP + FN). `None` when the union is empty
    /// (class absent from both prediction and truth).
    pub fn iou_per_class(&self) -> Vec<Option<f64>> {
        (0..self.num_classes)
            .map(|c| {
                let tp = self.true_positives(c);
                let union = tp + self.false_positives(c) + self.false_negatives(c);
                if union == 0 {
                    None
                } else {
                    Some(tp as f64 / union as f64)
                }
            })
            .collect()
    }

    /// Per-class precision TP/(TP+FP) and recall TP/(TP+FN); `None` where
    /// the denominator is zero.
    pub fn precision_recall(&self) -> (Vec<Option<f64>>, Vec<Option<f64>>) {
        let mut precision = Vec::with_capacity(self.num_classes);
        let mut recall = Vec::with_capacity(self.num_classes);
        for c in 0..self.num_classes {
            let tp = self.true_positives(c);
            let fp = self.false_positives(c);
            let fnn = self.false_negatives(c);
            precision.push(if tp + fp == 0 {
                None
            } else {
                Some(tp as f64 / (tp + fp) as f64)
            });
            recall.push(if tp + fnn == 0 {
                None
            } else {
                Some(tp as f64 / (tp + fnn) as f64)
            });
        }
        (precision, recall)
    }

    /// Per-class F1 computed directly on counts: 2TP / (2TP + FP + FN).
    /// Equals the harmonic mean of precision and recall where both exist,
    /// and is 0 for a class that is present but entirely missed. `None`
    /// when the class is absent from both sides.
    pub fn f1_per_class(&self) -> Vec<Option<f64>> {
        (0..self.num_classes)
            .map(|c| {
                let tp = self.true_positives(c);
                let fp = self.false_positives(c);
                let fnn = self.false_negatives(c);
                if tp + fp + fnn == 0 {
                    None
                } else {
                    Some(2.0 * tp as f64 / (2 * tp + fp + fnn) as f64)
                }
            })
            .collect()
    }

    /// Mean of the defined per-class IoUs. `include_background=false` drops
    /// class 0 from the average.
    pub fn mean_iou(&self, include_background: bool) -> Result<f64, MetricsError> {
        let start = if include_background { 0 } else { 1 };
        let defined: Vec<f64> = self.iou_per_class()[start..]
            .iter()
            .flatten()
            .copied()
            .collect();
        if defined.is_empty() {
            return Err(MetricsError::AllUndefined);
        }
        Ok(defined.iter().sum::<f64>() / defined.len() as f64)
    }

    /// Macro F1 over defined classes.
    pub fn macro_f1(&self) -> Result<f64, MetricsError> {
        let defined: Vec<f64> = self.f1_per_class().into_iter().flatten().collect();
        if defined.is_empty() {
            return Err(MetricsError::AllUndefined);
        }
        Ok(defined.iter().sum::<f64>() / defined.len() as f64)
    }

    pub fn undefined_classes(&self) -> Vec<usize> {
        self.iou_per_class()
            .iter()
            .enumerate()
            .filter_map(|(c, v)| v.is_none().then_some(c))
            .collect()
    }
}

/// Full per-class and aggregate metrics for one evaluation.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct MetricsReport {
    pub version: u32,
    pub num_classes: usize,
    pub num_pixels: u64,
    /// background class included in mean_iou
    pub background_included: bool,
    pub per_class_iou: Vec<Option<f64>>,
    pub per_class_precision: Vec<Option<f64>>,
    pub per_class_recall: Vec<Option<f64>>,
    pub per_class_f1: Vec<Option<f64>>,
    pub per_class_support: Vec<u64>,
    pub mean_iou: f64,
    pub macro_f1: f64,
    pub undefined_classes: Vec<usize>,
    /// free-form context: split, architecture, config hash, ...
    #[serde(default)]
    pub tags: BTreeMap<String, String>,
}

pub const METRICS_REPORT_VERSION: u32 = 1;

impl MetricsReport {
    pub fn from_confusion(
        cm: &ConfusionMatrix,
        include_background: bool,
    ) -> Result<Self, MetricsError> {
        let (per_class_precision, per_class_recall) = cm.precision_recall();
        Ok(MetricsReport {
            version: METRICS_REPORT_VERSION,
            num_classes: cm.num_classes(),
            num_pixels: cm.total(),
            background_included: include_background,
            per_class_iou: cm.iou_per_class(),
            per_class_precision,
            per_class_recall,
            per_class_f1: cm.f1_per_class(),
            per_class_support: (0..cm.num_classes()).map(|c| cm.support(c)).collect(),
            mean_iou: cm.mean_iou(include_background)?,
            macro_f1: cm.macro_f1()?,
            undefined_classes: cm.undefined_classes(),
            tags: BTreeMap::new(),
        })
    }

    pub fn tag(mut self, key: &str, value: impl Into<String>) -> Self {
        self.tags.insert(key.to_string(), value.into());
        self
    }

    /// Aligned text table, one row per class plus the summary line.
    pub fn render_table(&self, class_names: &[String]) -> String {
        let mut out = String::new();
        let _ = writeln!(
            out,
            "{:<14} {:>8} {:>10} {:>8} {:>8} {:>10}",
            "class", "iou", "precision", "recall", "f1", "support"
        );
        let fmt = |v: &Option<f64>| match v {
            Some(x) => format!("{x:.4}"),
            None => "-".to_string(),
        };
        for c in 0..self.num_classes {
            let name = class_names
                .get(c)
                .cloned()
                .unwrap_or_else(|| format!("class_{c}"));
            let _ = writeln!(
                out,
                "{:<14} {:>8} {:>10} {:>8} {:>8} {:>10}",
                name,
                fmt(&self.per_class_iou[c]),
                fmt(&self.per_class_precision[c]),
                fmt(&self.per_class_recall[c]),
                fmt(&self.per_class_f1[c]),
                self.per_class_support[c]
            );
        }
        let _ = writeln!(
            out,
            "mean IoU {:.4} | macro F1 {:.4} | pixels {}{}",
            self.mean_iou,
            self.macro_f1,
            self.num_pixels,
            if self.undefined_classes.is_empty() {
                String::new()
            } else {
                format!(" | undefined classes: {:?}", self.undefined_classes)
            }
        );
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::Array2;
    use proptest::prelude::*;

    /// Brute-force oracle: per-pixel set arithmetic, no confusion matrix.
    /// Written against the metric definitions directly.
    pub(crate) struct Oracle {
        pub iou: Vec<Option<f64>>,
        pub precision: Vec<Option<f64>>,
        pub recall: Vec<Option<f64>>,
        pub f1: Vec<Option<f64>>,
    }

    pub(crate) fn oracle(pred: &Mask, truth: &Mask, c: usize) -> Oracle {
        let mut iou = Vec::new();
        let mut precision = Vec::new();
        let mut recall = Vec::new();
        let mut f1 = Vec::new();
        for class in 0..c as u8 {
            let mut inter = 0u64; // pixels in both pred-region and truth-region
            let mut pred_px = 0u64;
            let mut truth_px = 0u64;
            for (p, t) in pred.iter().zip(truth.iter()) {
                let in_pred = *p == class;
                let in_truth = *t == class;
                if in_pred {
                    pred_px += 1;
                }
                if in_truth {
                    truth_px += 1;
                }
                if in_pred && in_truth {
                    inter += 1;
                }
            }
            let union = pred_px + truth_px - inter;
            iou.push((union > 0).then(|| inter as f64 / union as f64));
            precision.push((pred_px > 0).then(|| inter as f64 / pred_px as f64));
            recall.push((truth_px > 0).then(|| inter as f64 / truth_px as f64));
            // harmonic mean where both defined; present-but-missed is 0
            f1.push(if union == 0 {
                None
            } else {
                Some(2.0 * inter as f64 / (pred_px + truth_px) as f64)
            });
        }
        Oracle {
            iou,
            precision,
            recall,
            f1,
        }
    }

    fn mask_of(rows: &[&[u8]]) -> Mask {
        let h = rows.len();
        let w = rows[0].len();
        Array2::from_shape_fn((h, w), |(y, x)| rows[y][x])
    }

    #[test]
    fn hand_counted_two_by_two() {
        let truth = mask_of(&[&[0, 0], &[1, 1]]);
        let pred = mask_of(&[&[0, 1], &[1, 1]]);
        let mut cm = ConfusionMatrix::new(2);
        cm.accumulate(&pred, &truth).unwrap();
        assert_eq!(cm.count(0, 0), 1);
        assert_eq!(cm.count(0, 1), 1);
        assert_eq!(cm.count(1, 1), 2);
        assert_eq!(cm.count(1, 0), 0);
        assert_eq!(cm.total(), 4);
        // class 0: TP 1, union 2; class 1: TP 2, union 3
        let iou = cm.iou_per_class();
        assert_eq!(iou[0], Some(0.5));
        assert_eq!(iou[1], Some(2.0 / 3.0));
    }

    #[test]
    fn all_background_prediction() {
        // truth half class-0 / half class-1, prediction all class-0
        let truth = mask_of(&[&[0, 0, 0, 0], &[1, 1, 1, 1]]);
        let pred = Mask::zeros((2, 4));
        let mut cm = ConfusionMatrix::new(2);
        cm.accumulate(&pred, &truth).unwrap();
        let iou = cm.iou_per_class();
        assert_eq!(iou[0], Some(0.5));
        assert_eq!(iou[1], Some(0.0));
        let (p, r) = cm.precision_recall();
        assert_eq!(p[0], Some(0.5));
        assert_eq!(r[0], Some(1.0));
        assert_eq!(p[1], None); // never predicted
        assert_eq!(r[1], Some(0.0));
        // present but missed -> F1 = 0, not undefined
        assert_eq!(cm.f1_per_class()[1], Some(0.0));
        assert_eq!(cm.mean_iou(true).unwrap(), 0.25);
    }

    #[test]
    fn absent_class_is_undefined_and_excluded() {
        let truth = mask_of(&[&[0, 1]]);
        let pred = mask_of(&[&[0, 1]]);
        let mut cm = ConfusionMatrix::new(4);
        cm.accumulate(&pred, &truth).unwrap();
        assert_eq!(cm.undefined_classes(), vec![2, 3]);
        assert_eq!(cm.mean_iou(true).unwrap(), 1.0);
        assert_eq!(cm.macro_f1().unwrap(), 1.0);
        let report = MetricsReport::from_confusion(&cm, true).unwrap();
        assert_eq!(report.per_class_iou[2], None);
        assert_eq!(report.undefined_classes, vec![2, 3]);
    }

    #[test]
    fn mean_iou_can_exclude_background() {
        let truth = mask_of(&[&[0, 0, 1, 1]]);
        let pred = mask_of(&[&[0, 0, 1, 0]]);
        let mut cm = ConfusionMatrix::new(2);
        cm.accumulate(&pred, &truth).unwrap();
        // class 0: TP 2, FP 1 -> 2/3; class 1: TP 1, FN 1 -> 1/2
        assert!((cm.mean_iou(true).unwrap() - (2.0 / 3.0 + 0.5) / 2.0).abs() < 1e-15);
        assert!((cm.mean_iou(false).unwrap() - 0.5).abs() < 1e-15);
    }

    #[test]
    fn empty_metric_errors() {
        let cm = ConfusionMatrix::new(3);
        assert!(matches!(cm.mean_iou(true), Err(MetricsError::AllUndefined)));
        // only background present, excluded
        let mut cm = ConfusionMatrix::new(3);
        cm.accumulate(&Mask::zeros((2, 2)), &Mask::zeros((2, 2)))
            .unwrap();
        assert!(matches!(cm.mean_iou(false), Err(MetricsError::AllUndefined)));
    }

    #[test]
    fn rejects_bad_input() {
        let mut cm = ConfusionMatrix::new(2);
        let a = Mask::zeros((2, 2));
        let b = Mask::zeros((2, 3));
        assert!(matches!(
            cm.accumulate(&a, &b),
            Err(MetricsError::ShapeMismatch(_, _))
        ));
        let big = Mask::from_elem((2, 2), 5);
        assert!(matches!(
            cm.accumulate(&big, &a),
            Err(MetricsError::LabelOutOfRange { label: 5, .. })
        ));
    }

    #[test]
    fn report_table_renders_all_classes() {
        let truth = mask_of(&[&[0, 1, 2, 2]]);
        let pred = mask_of(&[&[0, 1, 2, 1]]);
        let mut cm = ConfusionMatrix::new(4);
        cm.accumulate(&pred, &truth).unwrap();
        let report = MetricsReport::from_confusion(&cm, true)
            .unwrap()
            .tag("split", "test");
        let names = crate::label::LabelSpace::semantic4().class_names;
        let table = report.render_table(&names);
        assert!(table.contains("background"));
        assert!(table.contains("roof"));
        assert!(table.contains("mean IoU"));
        assert_eq!(report.tags["split"], "test");
        // round-trips through serde
        let json = serde_json::to_string(&report).unwrap();
        let back: MetricsReport = serde_json::from_str(&json).unwrap();
        assert_eq!(back.mean_iou, report.mean_iou);
        assert_eq!(back.per_class_iou, report.per_class_iou);
    }

    fn arb_mask_pair() -> impl Strategy<Value = (Mask, Mask, usize)> {
        (1usize..=16, 1usize..=16, prop::sample::select(vec![2usize, 4, 8])).prop_flat_map(
            |(h, w, c)| {
                let cells = h * w;
                (
                    prop::collection::vec(0..c as u8, cells),
                    prop::collection::vec(0..c as u8, cells),
                )
                    .prop_map(move |(p, t)| {
                        (
                            Array2::from_shape_vec((h, w), p).unwrap(),
                            Array2::from_shape_vec((h, w), t).unwrap(),
                            c,
                        )
                    })
            },
        )
    }

    proptest! {
        #[test]
        fn matches_per_pixel_oracle((pred, truth, c) in arb_mask_pair()) {
            let mut cm = ConfusionMatrix::new(c);
            cm.accumulate(&pred, &truth).unwrap();
            let oracle = oracle(&pred, &truth, c);
            let close = |a: &Option<f64>, b: &Option<f64>| match (a, b) {
                (None, None) => true,
                (Some(x), Some(y)) => (x - y).abs() < 1e-12,
                _ => false,
            };
            let iou = cm.iou_per_class();
            let (p, r) = cm.precision_recall();
            let f1 = cm.f1_per_class();
            for class in 0..c {
                prop_assert!(close(&iou[class], &oracle.iou[class]));
                prop_assert!(close(&p[class], &oracle.precision[class]));
                prop_assert!(close(&r[class], &oracle.recall[class]));
                prop_assert!(close(&f1[class], &oracle.f1[class]));
            }
        }

        #[test]
        fn permutation_equivariance((pred, truth, c) in arb_mask_pair()) {
            // relabel classes by the reversal permutation
            let perm: Vec<u8> = (0..c as u8).rev().collect();
            let relabel = |m: &Mask| m.mapv(|v| perm[v as usize]);
            let mut cm = ConfusionMatrix::new(c);
            cm.accumulate(&pred, &truth).unwrap();
            let mut cm2 = ConfusionMatrix::new(c);
            cm2.accumulate(&relabel(&pred), &relabel(&truth)).unwrap();
            let iou = cm.iou_per_class();
            let iou2 = cm2.iou_per_class();
            for class in 0..c {
                prop_assert_eq!(iou[class], iou2[perm[class] as usize]);
            }
            match (cm.mean_iou(true), cm2.mean_iou(true)) {
                (Ok(a), Ok(b)) => prop_assert!((a - b).abs() < 1e-12),
                (Err(_), Err(_)) => {}
                _ => prop_assert!(false, "definedness changed under permutation"),
            }
        }

        #[test]
        fn additivity((pa, ta, c) in arb_mask_pair(), (pb, tb) in (prop::collection::vec(0..2u8, 9), prop::collection::vec(0..2u8, 9))) {
            let pb = Array2::from_shape_vec((3, 3), pb).unwrap();
            let tb = Array2::from_shape_vec((3, 3), tb).unwrap();
            let mut whole = ConfusionMatrix::new(c);
            whole.accumulate(&pa, &ta).unwrap();
            whole.accumulate(&pb, &tb).unwrap();
            let mut part1 = ConfusionMatrix::new(c);
            part1.accumulate(&pa, &ta).unwrap();
            let mut part2 = ConfusionMatrix::new(c);
            part2.accumulate(&pb, &tb).unwrap();
            part1.merge(&part2);
            prop_assert_eq!(whole, part1);
        }

        #[test]
        fn f1_equals_dice_of_iou_exactly((pred, truth, c) in arb_mask_pair()) {
            // 2*IoU/(1+IoU) with IoU = TP/U equals 2TP/(U+TP): check as an
            // exact rational identity on the integer counts
            let mut cm = ConfusionMatrix::new(c);
            cm.accumulate(&pred, &truth).unwrap();
            for class in 0..c {
                let tp = cm.true_positives(class) as u128;
                let union = (cm.true_positives(class)
                    + cm.false_positives(class)
                    + cm.false_negatives(class)) as u128;
                let f1 = cm.f1_per_class()[class];
                match f1 {
                    None => prop_assert_eq!(union, 0),
                    Some(f) => {
                        // f = 2tp/(union+tp) exactly, as f64 of a small rational
                        let expect = 2.0 * tp as f64 / (union + tp) as f64;
                        prop_assert!((f - expect).abs() < 1e-15);
                    }
                }
            }
        }

        #[test]
        fn bounds_hold((pred, truth, c) in arb_mask_pair()) {
            let mut cm = ConfusionMatrix::new(c);
            cm.accumulate(&pred, &truth).unwrap();
            let iou = cm.iou_per_class();
            for v in iou.iter().flatten() {
                prop_assert!((0.0..=1.0).contains(v));
            }
            let max_iou = iou.iter().flatten().copied().fold(0.0f64, f64::max);
            let mean = cm.mean_iou(true).unwrap();
            prop_assert!(mean <= max_iou + 1e-12);
        }
    }
}
