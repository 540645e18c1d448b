use serde::{Deserialize, Serialize};

use super::folds::{holdout_split, kfold_split, FoldPlan, HoldoutSplit};
use super::metrics::Metrics;
use super::EvalError;
use crate::learners::LearnError;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Task {
    /// Selected by highest mean overall accuracy.
    Classification,
    /// Selected by lowest mean MAE.
    Regression,
}

/// What a model outputs (or a sample's ground truth) for one sample.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Outputs {
    pub class: Option<usize>,
    pub value: Option<f64>,
}

/// A learner with a hyperparameter space, seen through the protocol.
pub trait ModelFamily {
    type Sample;
    type Setting: Clone + Serialize;
    type Model;

    fn task(&self) -> Task;
    /// Class names in index order; empty for pure regressors.
    fn class_names(&self) -> Vec<String>;
    /// Label used to stratify splits.
    fn stratum(&self, sample: &Self::Sample) -> Option<usize>;
    fn target(&self, sample: &Self::Sample) -> Outputs;
    fn fit(
        &self,
        train: &[&Self::Sample],
        setting: &Self::Setting,
    ) -> Result<Self::Model, LearnError>;
    fn predict(&self, model: &Self::Model, sample: &Self::Sample) -> Result<Outputs, LearnError>;
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub mean: f64,
    /// Sample standard deviation over the folds.
    pub std: f64,
}

impl Summary {
    fn of(values: &[f64]) -> Self {
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let std = if values.len() > 1 {
            (values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0)).sqrt()
        } else {
            0.0
        };
        Self { mean, std }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SettingResult {
    pub setting: serde_json::Value,
    pub folds: Vec<Metrics>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub accuracy: Option<Summary>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mae_seconds: Option<Summary>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CvResult {
    pub task: Task,
    pub fold_plan: FoldPlan,
    pub settings: Vec<SettingResult>,
    pub best: usize,
}

fn setting_json<S: Serialize>(s: &S) -> serde_json::Value {
    serde_json::to_value(s).unwrap_or(serde_json::Value::Null)
}

fn training_error(fold: Option<usize>, setting: &serde_json::Value, e: LearnError) -> EvalError {
    let context = match fold {
        Some(f) => format!("fold {f}, setting {setting}"),
        None => format!("final fit, setting {setting}"),
    };
    EvalError::Training { context, source: e }
}

/// Predictions and metrics of `model` on `samples`.
pub(crate) fn evaluate<F: ModelFamily>(
    family: &F,
    model: &F::Model,
    samples: &[&F::Sample],
    class_names: &[String],
) -> Result<(Vec<Outputs>, Vec<Outputs>, Metrics), LearnError> {
    let mut preds = Vec::with_capacity(samples.len());
    let mut targets = Vec::with_capacity(samples.len());
    for s in samples {
        preds.push(family.predict(model, s)?);
        targets.push(family.target(s));
    }
    let m = metrics_of(&preds, &targets, class_names)
        .map_err(|e| LearnError::InvalidConfig(e.to_string()))?;
    Ok((preds, targets, m))
}

/// Metrics over the pairs where both prediction and target carry a value.
pub fn metrics_of(
    preds: &[Outputs],
    targets: &[Outputs],
    class_names: &[String],
) -> Result<Metrics, EvalError> {
    let (mut pc, mut tc, mut pv, mut tv) = (vec![], vec![], vec![], vec![]);
    for (p, t) in preds.iter().zip(targets) {
        if let (Some(a), Some(b)) = (p.class, t.class) {
            pc.push(a);
            tc.push(b);
        }
        if let (Some(a), Some(b)) = (p.value, t.value) {
            pv.push(a);
            tv.push(b);
        }
    }
    Metrics::compute(
        (!pc.is_empty()).then_some((&pc[..], &tc[..])),
        (!pv.is_empty()).then_some((&pv[..], &tv[..])),
        class_names,
    )
}

fn strata<F: ModelFamily>(family: &F, samples: &[&F::Sample]) -> Option<Vec<usize>> {
    samples.iter().map(|s| family.stratum(s)).collect()
}

/// K-fold cross-validation of every grid point. The best setting has the
/// highest mean accuracy (classification) or lowest mean MAE (regression);
/// ties go to the earlier grid point.
pub fn cross_validate<F: ModelFamily>(
    samples: &[&F::Sample],
    family: &F,
    grid: &[F::Setting],
    k: usize,
    seed: u64,
) -> Result<CvResult, EvalError> {
    if grid.is_empty() {
        return Err(EvalError::EmptyGrid);
    }
    let labels = strata(family, samples);
    let plan = kfold_split(samples.len(), k, seed, labels.as_deref())?;
    let folds: Vec<(Vec<&F::Sample>, Vec<&F::Sample>)> = (0..k)
        .map(|f| {
            let pick = |idx: Vec<usize>| idx.into_iter().map(|i| samples[i]).collect::<Vec<_>>();
            (pick(plan.complement(f)), pick(plan.fold(f)))
        })
        .collect();
    let no_classes: Vec<String> = Vec::new();
    let task = family.task();
    let mut settings = Vec::with_capacity(grid.len());
    for setting in grid {
        let json = setting_json(setting);
        let mut fold_metrics = Vec::with_capacity(k);
        for (f, (train, held)) in folds.iter().enumerate() {
            let model = family
                .fit(train, setting)
                .map_err(|e| training_error(Some(f), &json, e))?;
            let (_, _, m) = evaluate(family, &model, held, &no_classes)
                .map_err(|e| training_error(Some(f), &json, e))?;
            fold_metrics.push(m);
        }
        let acc: Option<Vec<f64>> = fold_metrics.iter().map(|m| m.overall_accuracy).collect();
        let err: Option<Vec<f64>> = fold_metrics.iter().map(|m| m.mae_seconds).collect();
        settings.push(SettingResult {
            setting: json,
            folds: fold_metrics,
            accuracy: acc.map(|v| Summary::of(&v)),
            mae_seconds: err.map(|v| Summary::of(&v)),
        });
    }
    let score = |s: &SettingResult| match task {
        Task::Classification => s.accuracy.map_or(f64::NEG_INFINITY, |a| a.mean),
        Task::Regression => s.mae_seconds.map_or(f64::NEG_INFINITY, |m| -m.mean),
    };
    let mut best = 0;
    for (i, s) in settings.iter().enumerate() {
        if score(s) > score(&settings[best]) {
            best = i;
        }
    }
    Ok(CvResult {
        task,
        fold_plan: plan,
        settings,
        best,
    })
}

pub struct Assessment<F: ModelFamily> {
    pub split: HoldoutSplit,
    pub cv: CvResult,
    pub best_setting: F::Setting,
    /// Best setting retrained on every non-test sample.
    pub model: F::Model,
    pub test_predictions: Vec<Outputs>,
    pub test_targets: Vec<Outputs>,
    pub metrics: Metrics,
}

/// Holds out an external test set, selects a setting by cross-validation on
/// the rest, retrains it on the whole rest and scores it on the test set.
pub fn final_assessment<F: ModelFamily>(
    samples: &[F::Sample],
    test_fraction: f64,
    family: &F,
    grid: &[F::Setting],
    k: usize,
    seed: u64,
) -> Result<Assessment<F>, EvalError> {
    let all: Vec<&F::Sample> = samples.iter().collect();
    let labels = strata(family, &all);
    let split = holdout_split(samples.len(), test_fraction, seed, labels.as_deref())?;
    if split.cv_indices.len() < k {
        return Err(EvalError::TooFewSamples {
            needed: k + split.test_indices.len(),
            got: samples.len(),
        });
    }
    let cv_samples: Vec<&F::Sample> = split.cv_indices.iter().map(|&i| &samples[i]).collect();
    let test_samples: Vec<&F::Sample> = split.test_indices.iter().map(|&i| &samples[i]).collect();
    let cv = cross_validate(&cv_samples, family, grid, k, seed)?;
    let best_setting = grid[cv.best].clone();
    let json = setting_json(&best_setting);
    let model = family
        .fit(&cv_samples, &best_setting)
        .map_err(|e| training_error(None, &json, e))?;
    let (test_predictions, test_targets, metrics) =
        evaluate(family, &model, &test_samples, &family.class_names())
            .map_err(|e| training_error(None, &json, e))?;
    Ok(Assessment {
        split,
        cv,
        best_setting,
        model,
        test_predictions,
        test_targets,
        metrics,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Predicts a constant class (the setting) for every sample.
    struct Constant {
        k: usize,
    }

    impl ModelFamily for Constant {
        type Sample = usize;
        type Setting = usize;
        type Model = usize;

        fn task(&self) -> Task {
            Task::Classification
        }
        fn class_names(&self) -> Vec<String> {
            (0..self.k).map(|i| i.to_string()).collect()
        }
        fn stratum(&self, s: &usize) -> Option<usize> {
            Some(*s)
        }
        fn target(&self, s: &usize) -> Outputs {
            Outputs {
                class: Some(*s),
                value: None,
            }
        }
        fn fit(&self, _: &[&usize], setting: &usize) -> Result<usize, LearnError> {
            Ok(*setting)
        }
        fn predict(&self, m: &usize, _: &usize) -> Result<Outputs, LearnError> {
            Ok(Outputs {
                class: Some(*m),
                value: None,
            })
        }
    }

    #[test]
    fn single_setting_is_best() {
        let data: Vec<usize> = (0..20).map(|i| i % 2).collect();
        let refs: Vec<&usize> = data.iter().collect();
        let r = cross_validate(&refs, &Constant { k: 2 }, &[1], 4, 0).unwrap();
        assert_eq!(r.best, 0);
    }

    #[test]
    fn majority_wins_and_ties_go_first() {
        let data: Vec<usize> = (0..30).map(|i| usize::from(i % 3 == 0)).collect();
        let refs: Vec<&usize> = data.iter().collect();
        let r = cross_validate(&refs, &Constant { k: 2 }, &[1, 0, 0], 5, 0).unwrap();
        assert_eq!(r.best, 1);
        let hand: f64 = r.settings[1]
            .folds
            .iter()
            .map(|m| m.overall_accuracy.unwrap())
            .sum::<f64>()
            / 5.0;
        assert_eq!(r.settings[1].accuracy.unwrap().mean, hand);
        // Stratified folds of 20 zeros and 10 ones give identical fold accuracy.
        assert_eq!(r.settings[1].accuracy.unwrap().std, 0.0);
    }

    #[test]
    fn final_assessment_disjoint() {
        let data: Vec<usize> = (0..100).map(|i| i % 2).collect();
        let a = final_assessment(&data, 0.2, &Constant { k: 2 }, &[0, 1], 5, 3).unwrap();
        assert_eq!(a.split.test_indices.len(), 20);
        assert!(a
            .split
            .test_indices
            .iter()
            .all(|i| !a.split.cv_indices.contains(i)));
        assert_eq!(a.metrics.n_samples, 20);
        assert_eq!(a.metrics.overall_accuracy, Some(0.5));
        assert_eq!(a.metrics.per_class_accuracy.len(), 2);
    }

    #[test]
    fn empty_grid_and_too_few() {
        let data = vec![0usize, 1, 0, 1];
        let refs: Vec<&usize> = data.iter().collect();
        assert_eq!(
            cross_validate(&refs, &Constant { k: 2 }, &[], 2, 0).unwrap_err(),
            EvalError::EmptyGrid
        );
        assert!(matches!(
            final_assessment(&data, 0.25, &Constant { k: 2 }, &[0], 5, 0),
            Err(EvalError::TooFewSamples { .. })
        ));
    }
}
