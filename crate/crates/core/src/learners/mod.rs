//! Supervised learners behind the two predictive features.
//!
//! `UserProfile` uses static per-user models: a destination classifier
//! ([`classifier`]) and a trip-duration regressor ([`ridge`]), kept fresh by
//! the [`registry`]. `LocationPreview` uses an echo state network over GPS
//! trajectory prefixes ([`esn`]), with a sliding-window static baseline
//! ([`window`]) for comparison.

pub mod classifier;
pub mod encoding;
pub mod esn;
pub mod logistic;
pub mod naive_bayes;
pub mod registry;
pub mod ridge;
pub mod window;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::domain::StationId;

pub use classifier::{
    predict_destination, train_classifier, ClassifierKind, ClassifierModel, ClassifierSetting,
    DestinationPrediction,
};
pub use encoding::{encode_departure, encode_trip_input, static_schema, StaticInput};
pub use esn::{
    fit_location_preview, init_reservoir, predict_from_prefix, train_esn, EsnModel,
    PrefixPrediction, Reservoir, ReservoirConfig, SequenceEncoder,
};
pub use registry::{IngestOutcome, RegistryConfig, UserModelRegistry, UserModels};
pub use ridge::{train_regressor, RegressorModel};
pub use window::{sliding_window_baseline, WindowClassifier};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LearnError {
    #[error("class index {index} out of range for {k} classes")]
    IndexOutOfRange { index: usize, k: usize },
    #[error("score vector is empty")]
    EmptyVector,
    #[error("score {value} at position {index} is negative")]
    NegativeComponent { index: usize, value: f64 },
    #[error("score at position {0} is not finite")]
    NonFiniteComponent(usize),
    #[error("insufficient data: {0}")]
    InsufficientData(String),
    #[error("training loss became non-finite")]
    NonFiniteLoss,
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("normal equations are singular")]
    SingularSystem,
    #[error("could not measure the reservoir spectral radius")]
    SpectralRadiusFailure,
    #[error("model has no trained readout")]
    UntrainedModel,
    #[error("unknown station {0}")]
    UnknownStation(StationId),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
}

/// How a naive-Bayes model treats an input column.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FeatureKind {
    /// 0/1 indicator, Bernoulli likelihood.
    Indicator,
    /// Real-valued, Gaussian likelihood.
    Continuous,
}

/// Length-`k` vector with a single 1 at `index`.
pub fn one_of_k(index: usize, k: usize) -> Result<Vec<f64>, LearnError> {
    if index >= k {
        return Err(LearnError::IndexOutOfRange { index, k });
    }
    let mut v = vec![0.0; k];
    v[index] = 1.0;
    Ok(v)
}

/// Ratio normalization `ȳ(k) = ỹ(k) / Σ_l ỹ(l)` of nonnegative scores.
///
/// An all-zero vector maps to the uniform distribution.
pub fn softmax_normalize(scores: &[f64]) -> Result<Vec<f64>, LearnError> {
    if scores.is_empty() {
        return Err(LearnError::EmptyVector);
    }
    for (index, &value) in scores.iter().enumerate() {
        if !value.is_finite() {
            return Err(LearnError::NonFiniteComponent(index));
        }
        if value < 0.0 {
            return Err(LearnError::NegativeComponent { index, value });
        }
    }
    let total: f64 = scores.iter().sum();
    if total == 0.0 {
        let k = scores.len() as f64;
        return Ok(vec![1.0 / k; scores.len()]);
    }
    Ok(scores.iter().map(|s| s / total).collect())
}

/// Clamps raw scores at zero, then normalizes.
pub fn normalize_raw_scores(raw: &[f64]) -> Result<Vec<f64>, LearnError> {
    let clamped: Vec<f64> = raw.iter().map(|&s| if s > 0.0 { s } else { 0.0 }).collect();
    softmax_normalize(&clamped)
}

/// Index of the largest value; the lowest index wins ties.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
        }
    }
    best
}
