//! Training, model selection by K-fold cross-validation, and final
//! assessment on an external hold-out set.

mod cv;
mod folds;
mod metrics;
pub mod pipelines;
mod report;

use thiserror::Error;

use crate::learners::LearnError;

pub use cv::{
    cross_validate, final_assessment, Assessment, CvResult, ModelFamily, Outputs, SettingResult,
    Summary, Task,
};
pub use folds::{holdout_split, kfold_split, FoldPlan, HoldoutSplit};
pub use metrics::{class_accuracy, mae, overall_accuracy, AccuracyDenominator, Metrics};
pub use report::{EvaluationReport, PrefixPoint, SelectionReport, UnitReport, REPORT_FORMAT};

pub const DEFAULT_K: usize = 5;
pub const DEFAULT_TEST_FRACTION: f64 = 0.2;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EvalError {
    #[error("too few samples: need at least {needed}, got {got}")]
    TooFewSamples { needed: usize, got: usize },
    #[error("length mismatch: {left} predictions vs {right} targets")]
    LengthMismatch { left: usize, right: usize },
    #[error("no samples to evaluate")]
    Empty,
    #[error("unknown class {0}")]
    UnknownClass(usize),
    #[error("class {0} has no samples")]
    EmptyClass(usize),
    #[error("invalid evaluation setting: {0}")]
    InvalidConfig(String),
    #[error("hyperparameter grid is empty")]
    EmptyGrid,
    #[error("training failed ({context}): {source}")]
    Training {
        context: String,
        #[source]
        source: LearnError,
    },
    #[error("{unit}: {source}")]
    Unit {
        unit: String,
        #[source]
        source: Box<EvalError>,
    },
}

impl EvalError {
    pub(crate) fn in_unit(self, unit: &str) -> Self {
        EvalError::Unit {
            unit: unit.to_owned(),
            source: Box::new(self),
        }
    }

    /// True when the failure comes from too little data rather than bad
    /// settings.
    pub fn is_insufficient_data(&self) -> bool {
        match self {
            EvalError::TooFewSamples { .. } | EvalError::Empty | EvalError::EmptyClass(_) => true,
            EvalError::Training { source, .. } => matches!(source, LearnError::InsufficientData(_)),
            EvalError::Unit { source, .. } => source.is_insufficient_data(),
            _ => false,
        }
    }

    /// The outermost unit (for example a user id) the error refers to.
    pub fn unit(&self) -> Option<&str> {
        match self {
            EvalError::Unit { unit, .. } => Some(unit),
            _ => None,
        }
    }
}
