//! Overlap metrics and success curves.

use serde::{Deserialize, Serialize};

use super::BBox;
use crate::{Error, Result};

/// Number of overlap thresholds, 0.00 to 1.00 in steps of 0.01.
pub const THRESHOLDS: usize = 101;

/// Intersection over union; 0 when the union is empty.
pub fn iou(a: &BBox, b: &BBox) -> f64 {
    let inter = a.intersection(b);
    let union = a.area() + b.area() - inter;
    if union > 0.0 {
        (inter / union).clamp(0.0, 1.0)
    } else {
        0.0
    }
}

/// Euclidean distance between box centers.
pub fn center_error(a: &BBox, b: &BBox) -> f64 {
    let (ca, cb) = (a.center(), b.center());
    ((ca.0 - cb.0).powi(2) + (ca.1 - cb.1).powi(2)).sqrt()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SuccessCurve {
    pub thresholds: Vec<f64>,
    /// Fraction of frames with overlap strictly above each threshold.
    pub values: Vec<f64>,
    pub auc: f64,
    /// Value at threshold 0.5.
    pub op: f64,
}

impl SuccessCurve {
    pub fn thresholds() -> Vec<f64> {
        (0..THRESHOLDS).map(|i| i as f64 / (THRESHOLDS - 1) as f64).collect()
    }

    pub fn from_ious(ious: &[f64]) -> Self {
        let thresholds = Self::thresholds();
        let n = ious.len().max(1) as f64;
        let values: Vec<f64> = thresholds
            .iter()
            .map(|&t| ious.iter().filter(|&&o| o > t).count() as f64 / n)
            .collect();
        Self::from_values(values)
    }

    /// Curve from sampled values; AUC is their mean.
    pub fn from_values(values: Vec<f64>) -> Self {
        assert_eq!(values.len(), THRESHOLDS);
        let auc = values.iter().sum::<f64>() / THRESHOLDS as f64;
        let op = values[(THRESHOLDS - 1) / 2];
        SuccessCurve {
            thresholds: Self::thresholds(),
            values,
            auc,
            op,
        }
    }

    /// Threshold-wise mean of several curves.
    pub fn mean(curves: &[SuccessCurve]) -> Option<Self> {
        if curves.is_empty() {
            return None;
        }
        let values = (0..THRESHOLDS)
            .map(|i| curves.iter().map(|c| c.values[i]).sum::<f64>() / curves.len() as f64)
            .collect();
        Some(Self::from_values(values))
    }

    pub fn is_monotone(&self) -> bool {
        self.values.windows(2).all(|w| w[1] <= w[0])
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("threshold,success\n");
        for (t, v) in self.thresholds.iter().zip(&self.values) {
            out.push_str(&format!("{t:.2},{v:.6}\n"));
        }
        out
    }
}

/// Overlaps of the frames whose ground truth is valid.
pub fn overlaps(predicted: &[BBox], truth: &[BBox]) -> Result<Vec<f64>> {
    if predicted.len() != truth.len() {
        return Err(Error::ShapeMismatch {
            expected: format!("{} boxes", truth.len()),
            got: format!("{} boxes", predicted.len()),
        });
    }
    Ok(predicted
        .iter()
        .zip(truth)
        .filter(|(_, t)| t.is_valid())
        .map(|(p, t)| iou(p, t))
        .collect())
}

pub fn success_curve(predicted: &[BBox], truth: &[BBox]) -> Result<SuccessCurve> {
    Ok(SuccessCurve::from_ious(&overlaps(predicted, truth)?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn b(x: f64, y: f64, w: f64, h: f64) -> BBox {
        BBox::new(x, y, w, h)
    }

    #[test]
    fn tabulated_ious() {
        assert_eq!(iou(&b(3.0, 4.0, 10.0, 8.0), &b(3.0, 4.0, 10.0, 8.0)), 1.0);
        assert_eq!(iou(&b(0.0, 0.0, 2.0, 2.0), &b(5.0, 5.0, 2.0, 2.0)), 0.0);
        assert!((iou(&b(0.0, 0.0, 2.0, 2.0), &b(1.0, 0.0, 2.0, 2.0)) - 2.0 / 6.0).abs() < 1e-15);
        assert_eq!(iou(&b(0.0, 0.0, 0.0, 0.0), &b(0.0, 0.0, 0.0, 0.0)), 0.0);
        // nested: 4 / 16
        assert!((iou(&b(0.0, 0.0, 4.0, 4.0), &b(1.0, 1.0, 2.0, 2.0)) - 0.25).abs() < 1e-15);
    }

    #[test]
    fn perfect_and_missing_runs() {
        let perfect = SuccessCurve::from_ious(&[1.0; 10]);
        assert!(perfect.values[..100].iter().all(|&v| v == 1.0));
        assert_eq!(perfect.values[100], 0.0);
        assert!((perfect.auc - 100.0 / 101.0).abs() < 1e-12);
        let miss = SuccessCurve::from_ious(&[0.0; 10]);
        assert!(miss.values.iter().all(|&v| v == 0.0));
        assert_eq!(miss.auc, 0.0);
    }

    #[test]
    fn two_frame_hand_count() {
        let c = SuccessCurve::from_ious(&[0.4, 0.6]);
        assert_eq!(c.op, 0.5);
        assert_eq!(c.values[0], 1.0);
        assert_eq!(c.values[40], 0.5);
        assert_eq!(c.values[39], 1.0);
        assert_eq!(c.values[60], 0.0);
        assert_eq!(c.values[59], 0.5);
    }

    #[test]
    fn invalid_truth_frames_are_skipped() {
        let pred = [b(0.0, 0.0, 2.0, 2.0); 3];
        let truth = [b(0.0, 0.0, 2.0, 2.0), b(0.0, 0.0, 0.0, 0.0), b(9.0, 9.0, 2.0, 2.0)];
        assert_eq!(overlaps(&pred, &truth).unwrap(), vec![1.0, 0.0]);
        assert!(success_curve(&pred[..2], &truth).is_err());
    }

    fn arb_box() -> impl Strategy<Value = BBox> {
        (-50.0..50.0f64, -50.0..50.0f64, 0.0..40.0f64, 0.0..40.0f64).prop_map(|(x, y, w, h)| b(x, y, w, h))
    }

    proptest! {
        #[test]
        fn iou_symmetric_and_bounded(a in arb_box(), c in arb_box()) {
            let v = iou(&a, &c);
            prop_assert!((0.0..=1.0).contains(&v));
            prop_assert_eq!(v, iou(&c, &a));
            if a.area() > 0.0 {
                prop_assert!((iou(&a, &a) - 1.0).abs() < 1e-12);
            }
        }

        #[test]
        fn curve_monotone_with_mean_auc(ious in proptest::collection::vec(0.0..=1.0f64, 1..60)) {
            let c = SuccessCurve::from_ious(&ious);
            prop_assert!(c.is_monotone());
            prop_assert!((0.0..=1.0).contains(&c.auc));
            let mean = c.values.iter().sum::<f64>() / 101.0;
            prop_assert!((c.auc - mean).abs() < 1e-12);
            prop_assert_eq!(c.op, c.values[50]);
        }
    }
}
