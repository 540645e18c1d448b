use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::EvalError;

/// Denominator of the per-class accuracy.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AccuracyDenominator {
    /// All evaluated samples: one-vs-rest accuracy in [0, 1].
    #[default]
    Total,
    /// Samples whose target is the class. Can exceed 1.
    ClassSize,
}

fn check_lengths(left: usize, right: usize) -> Result<(), EvalError> {
    if left != right {
        return Err(EvalError::LengthMismatch { left, right });
    }
    if left == 0 {
        return Err(EvalError::Empty);
    }
    Ok(())
}

pub fn mae(predicted: &[f64], target: &[f64]) -> Result<f64, EvalError> {
    check_lengths(predicted.len(), target.len())?;
    let sum: f64 = predicted
        .iter()
        .zip(target)
        .map(|(p, t)| (p - t).abs())
        .sum();
    Ok(sum / predicted.len() as f64)
}

/// `(TP_i + TN_i) / N` for class `class` among `n_classes`.
pub fn class_accuracy(
    predictions: &[usize],
    targets: &[usize],
    class: usize,
    n_classes: usize,
    denominator: AccuracyDenominator,
) -> Result<f64, EvalError> {
    check_lengths(predictions.len(), targets.len())?;
    if class >= n_classes {
        return Err(EvalError::UnknownClass(class));
    }
    if let Some(&bad) = predictions.iter().chain(targets).find(|&&c| c >= n_classes) {
        return Err(EvalError::UnknownClass(bad));
    }
    let mut tp = 0usize;
    let mut tn = 0usize;
    for (&p, &t) in predictions.iter().zip(targets) {
        if p == class && t == class {
            tp += 1;
        } else if p != class && t != class {
            tn += 1;
        }
    }
    let n = match denominator {
        AccuracyDenominator::Total => predictions.len(),
        AccuracyDenominator::ClassSize => targets.iter().filter(|&&t| t == class).count(),
    };
    if n == 0 {
        return Err(EvalError::EmptyClass(class));
    }
    Ok((tp + tn) as f64 / n as f64)
}

pub fn overall_accuracy(predictions: &[usize], targets: &[usize]) -> Result<f64, EvalError> {
    check_lengths(predictions.len(), targets.len())?;
    let hits = predictions
        .iter()
        .zip(targets)
        .filter(|(p, t)| p == t)
        .count();
    Ok(hits as f64 / predictions.len() as f64)
}

/// Metrics of one evaluation run. Classification fields are absent for pure
/// regressors and vice versa.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub n_samples: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub overall_accuracy: Option<f64>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub per_class_accuracy: BTreeMap<String, f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mae_seconds: Option<f64>,
}

impl Metrics {
    /// Metrics from aligned prediction and target lists. Per-class accuracy
    /// is filled only when `class_labels` is non-empty.
    pub fn compute(
        class_pred: Option<(&[usize], &[usize])>,
        value_pred: Option<(&[f64], &[f64])>,
        class_labels: &[String],
    ) -> Result<Self, EvalError> {
        let mut m = Metrics::default();
        if let Some((p, t)) = class_pred {
            m.n_samples = p.len();
            m.overall_accuracy = Some(overall_accuracy(p, t)?);
            for (i, name) in class_labels.iter().enumerate() {
                m.per_class_accuracy.insert(
                    name.clone(),
                    class_accuracy(p, t, i, class_labels.len(), AccuracyDenominator::Total)?,
                );
            }
        }
        if let Some((p, t)) = value_pred {
            m.n_samples = m.n_samples.max(p.len());
            m.mae_seconds = Some(mae(p, t)?);
        }
        Ok(m)
    }

    /// Mean per-class accuracy under the alternative denominator, over the
    /// classes present in `targets`.
    pub fn class_size_accuracies(
        predictions: &[usize],
        targets: &[usize],
        class_labels: &[String],
    ) -> Result<BTreeMap<String, f64>, EvalError> {
        let mut out = BTreeMap::new();
        for (i, name) in class_labels.iter().enumerate() {
            if targets.contains(&i) {
                out.insert(
                    name.clone(),
                    class_accuracy(
                        predictions,
                        targets,
                        i,
                        class_labels.len(),
                        AccuracyDenominator::ClassSize,
                    )?,
                );
            }
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mae_examples() {
        assert_eq!(mae(&[3.0, 5.0], &[4.0, 5.0]).unwrap(), 0.5);
        assert_eq!(mae(&[1.5, -2.0], &[1.5, -2.0]).unwrap(), 0.0);
        assert_eq!(mae(&[], &[]), Err(EvalError::Empty));
        assert!(matches!(
            mae(&[1.0], &[1.0, 2.0]),
            Err(EvalError::LengthMismatch { .. })
        ));
    }

    #[test]
    fn perfect_predictor() {
        let t: Vec<usize> = (0..10).map(|i| i % 3).collect();
        for c in 0..3 {
            assert_eq!(
                class_accuracy(&t, &t, c, 3, AccuracyDenominator::Total).unwrap(),
                1.0
            );
        }
    }

    #[test]
    fn hand_count() {
        let targets = [0, 0, 1, 1];
        let preds = [0, 1, 1, 1];
        assert_eq!(
            class_accuracy(&preds, &targets, 0, 2, AccuracyDenominator::Total).unwrap(),
            0.75
        );
        // Literal denominator: (1 + 2) / 2.
        assert_eq!(
            class_accuracy(&preds, &targets, 0, 2, AccuracyDenominator::ClassSize).unwrap(),
            1.5
        );
    }

    #[test]
    fn exhaustive_three_samples() {
        for code in 0..64u32 {
            let bits: Vec<usize> = (0..6).map(|b| ((code >> b) & 1) as usize).collect();
            let (p, t) = bits.split_at(3);
            let mut confusion = [[0usize; 2]; 2];
            for (&pi, &ti) in p.iter().zip(t) {
                confusion[ti][pi] += 1;
            }
            for c in 0..2 {
                let o = 1 - c;
                let expected = (confusion[c][c] + confusion[o][o]) as f64 / 3.0;
                let got = class_accuracy(p, t, c, 2, AccuracyDenominator::Total).unwrap();
                assert_eq!(got, expected);
            }
        }
    }

    #[test]
    fn unknown_class() {
        assert_eq!(
            class_accuracy(&[0], &[0], 2, 2, AccuracyDenominator::Total),
            Err(EvalError::UnknownClass(2))
        );
        assert_eq!(
            class_accuracy(&[3], &[0], 0, 2, AccuracyDenominator::Total),
            Err(EvalError::UnknownClass(3))
        );
    }
}
