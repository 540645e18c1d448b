//! Hybrid naive Bayes: Bernoulli likelihoods with Laplace smoothing for
//! indicator columns, Gaussian likelihoods for continuous ones. Fitting is a
//! single closed-form pass over the data.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use super::{FeatureKind, LearnError};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "likelihood", rename_all = "kebab-case")]
pub enum FeatureStats {
    /// P(x = 1 | class) per class.
    Bernoulli {
        p_one: Vec<f64>,
    },
    Gaussian {
        mean: Vec<f64>,
        var: Vec<f64>,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NaiveBayes {
    pub n_classes: usize,
    pub n_features: usize,
    /// Class frequencies in the training data; unseen classes get 0.
    pub priors: Vec<f64>,
    pub features: Vec<FeatureStats>,
    pub alpha: f64,
    pub var_floor: f64,
}

impl NaiveBayes {
    pub fn fit(
        rows: &[&[f64]],
        labels: &[usize],
        n_classes: usize,
        schema: &[FeatureKind],
        alpha: f64,
        var_floor: f64,
    ) -> Result<Self, LearnError> {
        if rows.is_empty() {
            return Err(LearnError::InsufficientData("no training samples".into()));
        }
        if !(alpha > 0.0 && var_floor > 0.0) {
            return Err(LearnError::InvalidConfig(
                "alpha and var_floor must be positive".into(),
            ));
        }
        let d = schema.len();
        let mut counts = vec![0usize; n_classes];
        for &y in labels {
            counts[y] += 1;
        }
        let n = rows.len() as f64;
        let priors = counts.iter().map(|&c| c as f64 / n).collect();

        let features = schema
            .iter()
            .enumerate()
            .map(|(j, kind)| match kind {
                FeatureKind::Indicator => {
                    let mut ones = vec![0usize; n_classes];
                    for (row, &y) in rows.iter().zip(labels) {
                        if row[j] > 0.5 {
                            ones[y] += 1;
                        }
                    }
                    FeatureStats::Bernoulli {
                        p_one: ones
                            .iter()
                            .zip(&counts)
                            .map(|(&o, &c)| (o as f64 + alpha) / (c as f64 + 2.0 * alpha))
                            .collect(),
                    }
                }
                FeatureKind::Continuous => {
                    let mut sum = vec![0.0; n_classes];
                    for (row, &y) in rows.iter().zip(labels) {
                        sum[y] += row[j];
                    }
                    let mean: Vec<f64> = sum
                        .iter()
                        .zip(&counts)
                        .map(|(s, &c)| if c > 0 { s / c as f64 } else { 0.0 })
                        .collect();
                    let mut sq = vec![0.0; n_classes];
                    for (row, &y) in rows.iter().zip(labels) {
                        sq[y] += (row[j] - mean[y]).powi(2);
                    }
                    let var = sq
                        .iter()
                        .zip(&counts)
                        .map(|(s, &c)| if c > 0 { s / c as f64 + var_floor } else { 1.0 })
                        .collect();
                    FeatureStats::Gaussian { mean, var }
                }
            })
            .collect();

        Ok(Self {
            n_classes,
            n_features: d,
            priors,
            features,
            alpha,
            var_floor,
        })
    }

    /// Log of prior × likelihood per class; `-inf` for classes with zero prior.
    pub fn log_joint(&self, x: &[f64]) -> Vec<f64> {
        (0..self.n_classes)
            .map(|c| {
                if self.priors[c] == 0.0 {
                    return f64::NEG_INFINITY;
                }
                let mut lj = self.priors[c].ln();
                for (j, stats) in self.features.iter().enumerate() {
                    lj += match stats {
                        FeatureStats::Bernoulli { p_one } => {
                            if x[j] > 0.5 {
                                p_one[c].ln()
                            } else {
                                (1.0 - p_one[c]).ln()
                            }
                        }
                        FeatureStats::Gaussian { mean, var } => {
                            -0.5 * ((2.0 * PI * var[c]).ln() + (x[j] - mean[c]).powi(2) / var[c])
                        }
                    };
                }
                lj
            })
            .collect()
    }

    /// Nonnegative scores proportional to the class posterior.
    pub fn scores(&self, x: &[f64]) -> Vec<f64> {
        let lj = self.log_joint(x);
        let max = lj.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        lj.iter()
            .map(|&v| {
                if v == f64::NEG_INFINITY {
                    0.0
                } else {
                    (v - max).exp()
                }
            })
            .collect()
    }
}
