//! Attributed feature model of the status subsystem: product enumeration,
//! measured attributes from evaluation reports, and cost/performance ranking.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::evaluation::EvaluationReport;

pub const ALL_BIKES_NOW: &str = "AllBikesNow";
pub const LOCATION_PREVIEW: &str = "LocationPreview";
pub const USER_PROFILE: &str = "UserProfile";
pub const DEFAULT_MAE_HORIZON: f64 = 1800.0;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FeatureModelError {
    #[error("invalid feature model: {0}")]
    InvalidModel(String),
    #[error("no evaluation report for predictive feature {0}")]
    MissingReport(String),
    #[error("report for {feature} assesses {found}, expected {expected}")]
    ReportMismatch {
        feature: String,
        expected: String,
        found: String,
    },
    #[error("weights must be nonnegative, finite and not all zero")]
    InvalidWeights,
}

/// Attributes copied from a report's external test metrics.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Measurement {
    pub accuracy: f64,
    pub mae_seconds: f64,
    pub report_id: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Feature {
    pub name: String,
    pub optional: bool,
    pub cost: f64,
    /// Report kind (`user-profile`, `location-preview`) that measures this
    /// feature; absent for non-predictive features.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub predictive: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub measurement: Option<Measurement>,
}

/// A root with a flat list of mandatory and optional children.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FeatureModel {
    pub root: String,
    pub features: Vec<Feature>,
}

impl FeatureModel {
    /// The status subsystem: `AllBikesNow` mandatory, the two predictive
    /// features optional.
    pub fn status(cost_abn: f64, cost_lp: f64, cost_up: f64) -> Self {
        let feature = |name: &str, optional, cost, predictive: Option<&str>| Feature {
            name: name.into(),
            optional,
            cost,
            predictive: predictive.map(String::from),
            measurement: None,
        };
        Self {
            root: "Status".into(),
            features: vec![
                feature(ALL_BIKES_NOW, false, cost_abn, None),
                feature(LOCATION_PREVIEW, true, cost_lp, Some("location-preview")),
                feature(USER_PROFILE, true, cost_up, Some("user-profile")),
            ],
        }
    }

    pub fn validate(&self) -> Result<(), FeatureModelError> {
        let bad = |m: String| Err(FeatureModelError::InvalidModel(m));
        if self.root.is_empty() {
            return bad("root name is empty".into());
        }
        let mut seen = BTreeSet::new();
        for f in &self.features {
            if f.name.is_empty() || f.name == self.root {
                return bad(format!("bad feature name {:?}", f.name));
            }
            if !seen.insert(&f.name) {
                return bad(format!("duplicate feature {}", f.name));
            }
            if !(f.cost >= 0.0 && f.cost.is_finite()) {
                return bad(format!("{}: cost must be nonnegative", f.name));
            }
            if let Some(m) = &f.measurement {
                if f.predictive.is_none() {
                    return bad(format!(
                        "{}: measurement on a non-predictive feature",
                        f.name
                    ));
                }
                if !(0.0..=1.0).contains(&m.accuracy) || !(m.mae_seconds >= 0.0) {
                    return bad(format!("{}: measured attribute out of range", f.name));
                }
            }
        }
        Ok(())
    }

    pub fn get(&self, name: &str) -> Option<&Feature> {
        self.features.iter().find(|f| f.name == name)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Performance {
    pub accuracy: f64,
    pub mae_seconds: f64,
    pub report_id: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProductConfiguration {
    /// Selected features, lexicographically sorted.
    pub selected_features: Vec<String>,
    pub total_cost: f64,
    /// Measured predictive features of the product.
    pub performance: BTreeMap<String, Performance>,
    /// Number of predictive features in the whole model.
    pub n_predictive: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tradeoff_score: Option<f64>,
}

impl ProductConfiguration {
    pub fn label(&self) -> String {
        format!("{{{}}}", self.selected_features.join(","))
    }
}

/// Every valid selection: all mandatory features plus any subset of the
/// optional ones, ordered by size then lexicographically.
pub fn enumerate_products(
    model: &FeatureModel,
) -> Result<Vec<ProductConfiguration>, FeatureModelError> {
    model.validate()?;
    let mandatory: Vec<&Feature> = model.features.iter().filter(|f| !f.optional).collect();
    let optional: Vec<&Feature> = model.features.iter().filter(|f| f.optional).collect();
    let n_predictive = model
        .features
        .iter()
        .filter(|f| f.predictive.is_some())
        .count();
    if optional.len() > 20 {
        return Err(FeatureModelError::InvalidModel(
            "too many optional features".into(),
        ));
    }
    let mut products: Vec<ProductConfiguration> = (0..1u32 << optional.len())
        .map(|mask| {
            let chosen: Vec<&Feature> = mandatory
                .iter()
                .copied()
                .chain(
                    optional
                        .iter()
                        .enumerate()
                        .filter(|(i, _)| mask & (1 << i) != 0)
                        .map(|(_, f)| *f),
                )
                .collect();
            let mut selected_features: Vec<String> =
                chosen.iter().map(|f| f.name.clone()).collect();
            selected_features.sort();
            ProductConfiguration {
                selected_features,
                total_cost: chosen.iter().map(|f| f.cost).sum(),
                performance: chosen
                    .iter()
                    .filter_map(|f| {
                        f.measurement.as_ref().map(|m| {
                            (
                                f.name.clone(),
                                Performance {
                                    accuracy: m.accuracy,
                                    mae_seconds: m.mae_seconds,
                                    report_id: m.report_id.clone(),
                                },
                            )
                        })
                    })
                    .collect(),
                n_predictive,
                tradeoff_score: None,
            }
        })
        .collect();
    products.sort_by(|a, b| {
        a.selected_features
            .len()
            .cmp(&b.selected_features.len())
            .then_with(|| a.selected_features.cmp(&b.selected_features))
    });
    Ok(products)
}

/// Copies final hold-out metrics from `reports` (keyed by feature name) into
/// the predictive features' attributes.
pub fn attach_measurements(
    model: &FeatureModel,
    reports: &BTreeMap<String, EvaluationReport>,
) -> Result<FeatureModel, FeatureModelError> {
    model.validate()?;
    let mut out = model.clone();
    for f in &mut out.features {
        let Some(kind) = &f.predictive else { continue };
        let report = reports
            .get(&f.name)
            .ok_or_else(|| FeatureModelError::MissingReport(f.name.clone()))?;
        if &report.feature != kind {
            return Err(FeatureModelError::ReportMismatch {
                feature: f.name.clone(),
                expected: kind.clone(),
                found: report.feature.clone(),
            });
        }
        let m = &report.final_test_metrics;
        f.measurement = Some(Measurement {
            accuracy: m.overall_accuracy.unwrap_or(0.0),
            mae_seconds: m.mae_seconds.unwrap_or(0.0),
            report_id: report.id.clone(),
        });
    }
    out.validate()?;
    Ok(out)
}

/// Warnings for reports measured on different station maps.
pub fn deployment_warnings(reports: &BTreeMap<String, EvaluationReport>) -> Vec<String> {
    let digests: BTreeSet<&str> = reports
        .values()
        .map(|r| r.station_map_digest.as_str())
        .collect();
    if digests.len() > 1 {
        vec![format!(
            "reports come from {} different station maps; their measurements may not be comparable",
            digests.len()
        )]
    } else {
        Vec::new()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RankWeights {
    pub accuracy: f64,
    pub mae: f64,
    pub cost: f64,
    /// MAE normalization horizon in seconds.
    pub mae_horizon: f64,
}

impl Default for RankWeights {
    fn default() -> Self {
        Self {
            accuracy: 1.0,
            mae: 1.0,
            cost: 1.0,
            mae_horizon: DEFAULT_MAE_HORIZON,
        }
    }
}

impl RankWeights {
    pub fn validate(&self) -> Result<(), FeatureModelError> {
        let w = [self.accuracy, self.mae, self.cost];
        if w.iter().any(|v| !(v.is_finite() && *v >= 0.0))
            || w.iter().all(|v| *v == 0.0)
            || !(self.mae_horizon > 0.0 && self.mae_horizon.is_finite())
        {
            return Err(FeatureModelError::InvalidWeights);
        }
        Ok(())
    }
}

/// Scores are compared after scaling by the weight sum and rounding to this
/// grid, so rescaling all weights cannot reorder near-equal products.
const SCORE_RESOLUTION: f64 = 1e-9;

/// Scores and sorts products, best first. Ties go to the cheaper product,
/// then to the lexicographically smaller selection.
///
/// Accuracy and normalized MAE are averaged over all predictive features of
/// the model, unselected ones contributing 0, so each selected feature adds
/// its own term to the score.
pub fn rank_products(
    products: &[ProductConfiguration],
    weights: &RankWeights,
) -> Result<Vec<ProductConfiguration>, FeatureModelError> {
    weights.validate()?;
    let max_cost = products.iter().map(|p| p.total_cost).fold(0.0, f64::max);
    let mut scored: Vec<(i64, ProductConfiguration)> = products
        .iter()
        .map(|p| {
            let n = p.n_predictive.max(1) as f64;
            let acc = p.performance.values().map(|m| m.accuracy).sum::<f64>() / n;
            let mae = p.performance.values().map(|m| m.mae_seconds).sum::<f64>()
                / n
                / weights.mae_horizon;
            let cost = if max_cost > 0.0 {
                p.total_cost / max_cost
            } else {
                0.0
            };
            let score = weights.accuracy * acc - weights.mae * mae - weights.cost * cost;
            let total = weights.accuracy + weights.mae + weights.cost;
            let key = (score / total / SCORE_RESOLUTION).round() as i64;
            let mut q = p.clone();
            q.tradeoff_score = Some(score);
            (key, q)
        })
        .collect();
    scored.sort_by(|(ka, a), (kb, b)| {
        kb.cmp(ka)
            .then_with(|| a.total_cost.total_cmp(&b.total_cost))
            .then_with(|| a.selected_features.cmp(&b.selected_features))
    });
    Ok(scored.into_iter().map(|(_, p)| p).collect())
}

/// Products of `model`, after checking every selected predictive feature is
/// measured.
pub fn measured_products(
    model: &FeatureModel,
) -> Result<Vec<ProductConfiguration>, FeatureModelError> {
    for f in &model.features {
        if f.predictive.is_some() && f.measurement.is_none() {
            return Err(FeatureModelError::MissingReport(f.name.clone()));
        }
    }
    enumerate_products(model)
}

pub fn render_ranking(ranked: &[ProductConfiguration]) -> String {
    let mut out = format!(
        "{:<4} {:<48} {:>10} {:>10} {:>10} {:>10}\n",
        "rank", "product", "cost", "accuracy", "mae_s", "score"
    );
    for (i, p) in ranked.iter().enumerate() {
        let n = p.performance.len() as f64;
        let (acc, mae) = if n > 0.0 {
            (
                format!(
                    "{:.4}",
                    p.performance.values().map(|m| m.accuracy).sum::<f64>() / n
                ),
                format!(
                    "{:.1}",
                    p.performance.values().map(|m| m.mae_seconds).sum::<f64>() / n
                ),
            )
        } else {
            ("-".into(), "-".into())
        };
        out.push_str(&format!(
            "{:<4} {:<48} {:>10.2} {:>10} {:>10} {:>10.4}\n",
            i + 1,
            p.label(),
            p.total_cost,
            acc,
            mae,
            p.tradeoff_score.unwrap_or(f64::NAN)
        ));
    }
    out
}
