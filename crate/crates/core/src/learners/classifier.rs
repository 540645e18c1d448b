//! Destination classifier over static inputs.

use serde::{Deserialize, Serialize};

use super::logistic::{LogisticRegression, LogisticSetting};
use super::naive_bayes::NaiveBayes;
use super::{argmax, softmax_normalize, FeatureKind, LearnError, StaticInput};
use crate::domain::StationId;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ClassifierKind {
    NaiveBayes,
    LogisticRegression,
}

/// One point of a classifier hyperparameter grid.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum ClassifierSetting {
    NaiveBayes {
        #[serde(default = "default_alpha")]
        alpha: f64,
        #[serde(default = "default_var_floor")]
        var_floor: f64,
    },
    LogisticRegression {
        #[serde(default)]
        l2: f64,
        #[serde(default = "default_learning_rate")]
        learning_rate: f64,
        #[serde(default = "default_max_iters")]
        max_iters: usize,
        #[serde(default = "default_tolerance")]
        tolerance: f64,
    },
}

fn default_alpha() -> f64 {
    1.0
}
fn default_var_floor() -> f64 {
    1e-3
}
fn default_learning_rate() -> f64 {
    0.1
}
fn default_max_iters() -> usize {
    10_000
}
fn default_tolerance() -> f64 {
    1e-6
}

impl ClassifierSetting {
    pub fn naive_bayes() -> Self {
        Self::NaiveBayes {
            alpha: default_alpha(),
            var_floor: default_var_floor(),
        }
    }

    pub fn logistic(l2: f64) -> Self {
        Self::LogisticRegression {
            l2,
            learning_rate: default_learning_rate(),
            max_iters: default_max_iters(),
            tolerance: default_tolerance(),
        }
    }

    pub fn kind(&self) -> ClassifierKind {
        match self {
            Self::NaiveBayes { .. } => ClassifierKind::NaiveBayes,
            Self::LogisticRegression { .. } => ClassifierKind::LogisticRegression,
        }
    }

    /// Naive Bayes plus logistic regression at L2 ∈ {0, 1e-3, 1e-1}.
    pub fn default_grid() -> Vec<Self> {
        vec![
            Self::naive_bayes(),
            Self::logistic(0.0),
            Self::logistic(1e-3),
            Self::logistic(1e-1),
        ]
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum ClassifierParams {
    NaiveBayes(NaiveBayes),
    LogisticRegression(LogisticRegression),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassifierModel {
    /// The K classes, in output order.
    pub class_labels: Vec<StationId>,
    pub schema: Vec<FeatureKind>,
    pub setting: ClassifierSetting,
    pub params: ClassifierParams,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DestinationPrediction {
    pub probabilities: Vec<f64>,
    pub index: usize,
    pub destination: StationId,
}

/// Fits a classifier over `class_labels.len()` classes.
///
/// Naive Bayes needs at least one sample; logistic regression at least as
/// many samples as classes.
pub fn train_classifier(
    data: &[(StaticInput, usize)],
    schema: &[FeatureKind],
    class_labels: &[StationId],
    setting: &ClassifierSetting,
) -> Result<ClassifierModel, LearnError> {
    let k = class_labels.len();
    if k == 0 {
        return Err(LearnError::InvalidConfig("no classes".into()));
    }
    if data.is_empty() {
        return Err(LearnError::InsufficientData("no training samples".into()));
    }
    let d = schema.len();
    for (x, y) in data {
        if x.dim() != d {
            return Err(LearnError::DimensionMismatch {
                expected: d,
                got: x.dim(),
            });
        }
        if *y >= k {
            return Err(LearnError::IndexOutOfRange { index: *y, k });
        }
    }
    let rows: Vec<&[f64]> = data.iter().map(|(x, _)| x.as_slice()).collect();
    let labels: Vec<usize> = data.iter().map(|(_, y)| *y).collect();
    let params = match setting {
        ClassifierSetting::NaiveBayes { alpha, var_floor } => ClassifierParams::NaiveBayes(
            NaiveBayes::fit(&rows, &labels, k, schema, *alpha, *var_floor)?,
        ),
        ClassifierSetting::LogisticRegression {
            l2,
            learning_rate,
            max_iters,
            tolerance,
        } => ClassifierParams::LogisticRegression(LogisticRegression::fit(
            &rows,
            &labels,
            k,
            d,
            &LogisticSetting {
                l2: *l2,
                learning_rate: *learning_rate,
                max_iters: *max_iters,
                tolerance: *tolerance,
            },
        )?),
    };
    Ok(ClassifierModel {
        class_labels: class_labels.to_vec(),
        schema: schema.to_vec(),
        setting: setting.clone(),
        params,
    })
}

impl ClassifierModel {
    pub fn n_features(&self) -> usize {
        self.schema.len()
    }

    /// Nonnegative class scores.
    pub fn scores(&self, x: &[f64]) -> Result<Vec<f64>, LearnError> {
        if x.len() != self.n_features() {
            return Err(LearnError::DimensionMismatch {
                expected: self.n_features(),
                got: x.len(),
            });
        }
        Ok(match &self.params {
            ClassifierParams::NaiveBayes(nb) => nb.scores(x),
            ClassifierParams::LogisticRegression(lr) => lr.scores(x),
        })
    }

    pub fn predict(&self, x: &[f64]) -> Result<DestinationPrediction, LearnError> {
        let probabilities = softmax_normalize(&self.scores(x)?)?;
        let index = argmax(&probabilities);
        Ok(DestinationPrediction {
            destination: self.class_labels[index].clone(),
            index,
            probabilities,
        })
    }
}

pub fn predict_destination(
    model: &ClassifierModel,
    x: &StaticInput,
) -> Result<DestinationPrediction, LearnError> {
    model.predict(x.as_slice())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn labels(k: usize) -> Vec<StationId> {
        (0..k).map(|i| StationId(format!("s{i}"))).collect()
    }

    #[test]
    fn dimension_mismatch() {
        let data = vec![
            (StaticInput(vec![1.0, 0.0]), 0),
            (StaticInput(vec![0.0, 1.0]), 1),
        ];
        let schema = [FeatureKind::Indicator; 2];
        let m = train_classifier(
            &data,
            &schema,
            &labels(2),
            &ClassifierSetting::naive_bayes(),
        )
        .unwrap();
        assert_eq!(
            predict_destination(&m, &StaticInput(vec![1.0])),
            Err(LearnError::DimensionMismatch {
                expected: 2,
                got: 1
            })
        );
        let bad = vec![(StaticInput(vec![1.0]), 0)];
        assert!(
            train_classifier(&bad, &schema, &labels(2), &ClassifierSetting::naive_bayes()).is_err()
        );
    }

    #[test]
    fn uniform_scores_pick_first_class() {
        // One sample per class with identical inputs: equal posteriors.
        let data = vec![
            (StaticInput(vec![1.0]), 0),
            (StaticInput(vec![1.0]), 1),
            (StaticInput(vec![1.0]), 2),
        ];
        let m = train_classifier(
            &data,
            &[FeatureKind::Indicator],
            &labels(3),
            &ClassifierSetting::naive_bayes(),
        )
        .unwrap();
        let p = predict_destination(&m, &StaticInput(vec![1.0])).unwrap();
        assert_eq!(p.index, 0);
        assert_eq!(p.destination, StationId::from("s0"));
        assert!((p.probabilities.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn full_class_list_is_kept() {
        let data = vec![(StaticInput(vec![0.5]), 1), (StaticInput(vec![0.7]), 1)];
        for setting in ClassifierSetting::default_grid() {
            let m =
                train_classifier(&data, &[FeatureKind::Continuous], &labels(2), &setting).unwrap();
            let p = m.predict(&[0.6]).unwrap();
            assert_eq!(p.probabilities.len(), 2);
            assert_eq!(p.index, 1);
        }
    }

    #[test]
    fn setting_json() {
        let s: ClassifierSetting =
            serde_json::from_str(r#"{"kind":"logistic-regression","l2":0.1}"#).unwrap();
        assert_eq!(s, ClassifierSetting::logistic(0.1));
        let s: ClassifierSetting = serde_json::from_str(r#"{"kind":"naive-bayes"}"#).unwrap();
        assert_eq!(s, ClassifierSetting::naive_bayes());
        assert!(serde_json::from_str::<ClassifierSetting>(r#"{"kind":"svm"}"#).is_err());
    }
}
