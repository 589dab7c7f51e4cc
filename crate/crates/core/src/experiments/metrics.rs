use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Predictions for one original crop class.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CropCounts {
    pub predicted_maize: u64,
    pub predicted_non_maize: u64,
}

/// Metrics of one train/test run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunMetrics {
    pub run_index: usize,
    pub seed: u64,
    pub accuracy: f64,
    /// `confusion[predicted][actual]`, index 1 = maize, 0 = non-maize.
    pub confusion: [[u64; 2]; 2],
    pub per_crop: BTreeMap<String, CropCounts>,
    pub n_train: usize,
    pub n_test: usize,
    /// Agreement of pseudo-labels with the hidden truth, for two-stage runs.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pseudo_label_accuracy: Option<f64>,
}

impl RunMetrics {
    /// Precision of the maize class; `None` without maize predictions.
    pub fn precision(&self) -> Option<f64> {
        let predicted = self.confusion[1][0] + self.confusion[1][1];
        (predicted > 0).then(|| self.confusion[1][1] as f64 / predicted as f64)
    }

    /// Recall of the maize class; `None` without maize samples.
    pub fn recall(&self) -> Option<f64> {
        let actual = self.confusion[0][1] + self.confusion[1][1];
        (actual > 0).then(|| self.confusion[1][1] as f64 / actual as f64)
    }
}

/// Accuracy, confusion matrix and per-crop breakdown of binary predictions.
pub fn compute_metrics(pred: &[bool], truth: &[bool], crop_names: &[String]) -> Result<RunMetrics> {
    if pred.len() != truth.len() {
        return Err(Error::Length(pred.len(), truth.len()));
    }
    if crop_names.len() != truth.len() {
        return Err(Error::Length(crop_names.len(), truth.len()));
    }
    let mut confusion = [[0u64; 2]; 2];
    let mut per_crop: BTreeMap<String, CropCounts> = BTreeMap::new();
    for ((&p, &t), name) in pred.iter().zip(truth).zip(crop_names) {
        confusion[p as usize][t as usize] += 1;
        let entry = per_crop.entry(name.clone()).or_default();
        if p {
            entry.predicted_maize += 1;
        } else {
            entry.predicted_non_maize += 1;
        }
    }
    let n = pred.len();
    let correct = confusion[0][0] + confusion[1][1];
    Ok(RunMetrics {
        run_index: 0,
        seed: 0,
        accuracy: if n == 0 {
            0.0
        } else {
            correct as f64 / n as f64
        },
        confusion,
        per_crop,
        n_train: 0,
        n_test: n,
        pseudo_label_accuracy: None,
    })
}

/// Summary statistics over runs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub mean: f64,
    /// Population standard deviation.
    pub std: f64,
    /// Index of the run with median accuracy (lower middle for even counts).
    pub median_run: usize,
}

pub fn aggregate(accuracies: &[f64]) -> Result<Aggregate> {
    if accuracies.is_empty() {
        return Err(Error::Validation(
            "cannot aggregate an empty list of runs".into(),
        ));
    }
    // Shifted by the first value, which keeps identical runs at exactly zero spread.
    let n = accuracies.len() as f64;
    let k = accuracies[0];
    let mean = k + accuracies.iter().map(|a| a - k).sum::<f64>() / n;
    let var = accuracies.iter().map(|a| (a - mean).powi(2)).sum::<f64>() / n;
    let mut order: Vec<usize> = (0..accuracies.len()).collect();
    order.sort_by(|&i, &j| accuracies[i].total_cmp(&accuracies[j]).then(i.cmp(&j)));
    Ok(Aggregate {
        mean,
        std: var.sqrt(),
        median_run: order[(order.len() - 1) / 2],
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn names(n: usize) -> Vec<String> {
        (0..n)
            .map(|i| if i % 2 == 0 { "maize" } else { "soybean" }.to_string())
            .collect()
    }

    #[test]
    fn all_correct_and_all_flipped() {
        let truth = vec![true, false, true, false];
        let m = compute_metrics(&truth, &truth, &names(4)).unwrap();
        assert_eq!(m.accuracy, 1.0);
        assert_eq!(m.confusion[0][1] + m.confusion[1][0], 0);
        let flipped: Vec<bool> = truth.iter().map(|t| !t).collect();
        let m = compute_metrics(&flipped, &truth, &names(4)).unwrap();
        assert_eq!(m.accuracy, 0.0);
    }

    #[test]
    fn twenty_prediction_fixture() {
        // (pred, truth, crop)
        let rows = [
            (1, 1, "maize"),
            (1, 1, "maize"),
            (1, 1, "maize"),
            (1, 1, "maize"),
            (1, 1, "maize"),
            (1, 1, "maize"),
            (0, 1, "maize"),
            (0, 1, "maize"),
            (1, 0, "soybean"),
            (0, 0, "soybean"),
            (0, 0, "soybean"),
            (0, 0, "soybean"),
            (0, 0, "soybean"),
            (1, 0, "wheat"),
            (0, 0, "wheat"),
            (0, 0, "wheat"),
            (0, 0, "wheat"),
            (0, 0, "rice"),
            (1, 1, "maize"),
            (0, 0, "rice"),
        ];
        let pred: Vec<bool> = rows.iter().map(|r| r.0 == 1).collect();
        let truth: Vec<bool> = rows.iter().map(|r| r.1 == 1).collect();
        let crops: Vec<String> = rows.iter().map(|r| r.2.to_string()).collect();
        let m = compute_metrics(&pred, &truth, &crops).unwrap();
        // Hand tally: TP 7, FN 2, FP 2, TN 9.
        assert_eq!(m.confusion, [[9, 2], [2, 7]]);
        assert_eq!(m.accuracy, 16.0 / 20.0);
        assert_eq!(m.n_test, 20);
        assert_eq!(
            m.per_crop["maize"],
            CropCounts {
                predicted_maize: 7,
                predicted_non_maize: 2
            }
        );
        assert_eq!(
            m.per_crop["soybean"],
            CropCounts {
                predicted_maize: 1,
                predicted_non_maize: 4
            }
        );
        assert_eq!(
            m.per_crop["wheat"],
            CropCounts {
                predicted_maize: 1,
                predicted_non_maize: 3
            }
        );
        assert_eq!(
            m.per_crop["rice"],
            CropCounts {
                predicted_maize: 0,
                predicted_non_maize: 2
            }
        );
        assert_eq!(m.precision(), Some(7.0 / 9.0));
        assert_eq!(m.recall(), Some(7.0 / 9.0));
        let total: u64 = m.confusion.iter().flatten().sum();
        assert_eq!(total as usize, m.n_test);
    }

    #[test]
    fn length_mismatch() {
        assert!(matches!(
            compute_metrics(&[true], &[true, false], &names(2)),
            Err(Error::Length(1, 2))
        ));
    }

    #[test]
    fn aggregate_examples() {
        let a = aggregate(&[0.9]).unwrap();
        assert_eq!((a.mean, a.std, a.median_run), (0.9, 0.0, 0));

        let a = aggregate(&[0.8, 0.9, 1.0]).unwrap();
        assert!((a.mean - 0.9).abs() < 1e-12);
        assert!((a.std - (0.02f64 / 3.0).sqrt()).abs() < 1e-12);
        assert!((a.std - 0.0816).abs() < 1e-4);
        assert_eq!(a.median_run, 1);

        let a = aggregate(&[0.7; 11]).unwrap();
        assert_eq!(a.std, 0.0);
        assert_eq!(a.median_run, 5);

        // Even count: lower of the middle pair.
        let a = aggregate(&[0.9, 0.6, 0.8, 0.7]).unwrap();
        assert_eq!(a.median_run, 3);

        assert!(aggregate(&[]).is_err());
    }
}
