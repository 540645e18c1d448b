use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::cv::CvResult;
use super::metrics::Metrics;

pub const REPORT_FORMAT: &str = "bss-evaluation-report/1";

/// Model selection for one target of one unit.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SelectionReport {
    /// `destination`, `duration` or `trajectory`.
    pub target: String,
    pub selected: serde_json::Value,
    pub cv: CvResult,
}

/// One independently assessed dataset: a user for `UserProfile`, the whole
/// trajectory set for `LocationPreview`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct UnitReport {
    pub unit: String,
    pub n_samples: usize,
    pub cv_indices: Vec<usize>,
    pub test_indices: Vec<usize>,
    pub selections: Vec<SelectionReport>,
    pub final_test_metrics: Metrics,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PrefixPoint {
    pub fraction: f64,
    pub accuracy: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mae_seconds: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BaselineReport {
    pub model_descriptor: String,
    pub final_test_metrics: Metrics,
    pub prefix_curve: Vec<PrefixPoint>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub format: String,
    pub id: String,
    /// `user-profile` or `location-preview`.
    pub feature: String,
    pub model_descriptor: String,
    pub station_map_digest: String,
    pub class_labels: Vec<String>,
    pub k: usize,
    pub test_fraction: f64,
    pub seed: u64,
    pub units: Vec<UnitReport>,
    /// Pooled over every unit's external test set.
    pub final_test_metrics: Metrics,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub prefix_curve: Vec<PrefixPoint>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub baseline: Option<BaselineReport>,
    #[serde(default)]
    pub warnings: Vec<String>,
}

impl EvaluationReport {
    pub fn compute_id(&self) -> String {
        let mut copy = self.clone();
        copy.id.clear();
        let bytes = serde_json::to_vec(&copy).expect("report serializes");
        hex::encode(&Sha256::digest(&bytes)[..8])
    }

    pub fn seal(mut self) -> Self {
        self.id = self.compute_id();
        self
    }

    /// Checks the structural invariants; returns every violation found.
    pub fn validate(&self) -> Result<(), Vec<String>> {
        let mut errs = Vec::new();
        if self.format != REPORT_FORMAT {
            errs.push(format!("unknown format {}", self.format));
        }
        if self.id != self.compute_id() {
            errs.push("id does not match content".into());
        }
        check_metrics("final_test_metrics", &self.final_test_metrics, &mut errs);
        for u in &self.units {
            if u.cv_indices.iter().any(|i| u.test_indices.contains(i)) {
                errs.push(format!("{}: test and cv indices overlap", u.unit));
            }
            if u.cv_indices.len() + u.test_indices.len() != u.n_samples {
                errs.push(format!("{}: index sets do not cover the samples", u.unit));
            }
            check_metrics(&u.unit, &u.final_test_metrics, &mut errs);
            for s in &u.selections {
                let cv = &s.cv;
                if cv.fold_plan.k != self.k || cv.fold_plan.assignments.len() != u.cv_indices.len()
                {
                    errs.push(format!("{}/{}: fold plan does not match", u.unit, s.target));
                }
                if cv.best >= cv.settings.len() || cv.settings[cv.best].setting != s.selected {
                    errs.push(format!(
                        "{}/{}: selected setting mismatch",
                        u.unit, s.target
                    ));
                }
                for r in &cv.settings {
                    if r.folds.len() != self.k {
                        errs.push(format!(
                            "{}/{}: expected {} folds",
                            u.unit, s.target, self.k
                        ));
                    }
                    for m in &r.folds {
                        check_metrics(&u.unit, m, &mut errs);
                    }
                }
            }
        }
        if errs.is_empty() {
            Ok(())
        } else {
            Err(errs)
        }
    }

    /// Aligned plain-text rendering.
    pub fn render_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "report    {}", self.id);
        let _ = writeln!(out, "feature   {}", self.feature);
        let _ = writeln!(out, "model     {}", self.model_descriptor);
        let _ = writeln!(
            out,
            "protocol  K={} test_fraction={} seed={}",
            self.k, self.test_fraction, self.seed
        );
        let _ = writeln!(out);
        let _ = writeln!(
            out,
            "{:<16} {:>6} {:>10} {:>12}  selected",
            "unit", "test", "accuracy", "mae_s"
        );
        for u in &self.units {
            let selected: Vec<String> = u
                .selections
                .iter()
                .map(|s| format!("{}={}", s.target, s.selected))
                .collect();
            let _ = writeln!(
                out,
                "{:<16} {:>6} {:>10} {:>12}  {}",
                u.unit,
                u.test_indices.len(),
                fmt_opt(u.final_test_metrics.overall_accuracy, 4),
                fmt_opt(u.final_test_metrics.mae_seconds, 1),
                selected.join(" ")
            );
        }
        let m = &self.final_test_metrics;
        let _ = writeln!(
            out,
            "{:<16} {:>6} {:>10} {:>12}",
            "pooled",
            m.n_samples,
            fmt_opt(m.overall_accuracy, 4),
            fmt_opt(m.mae_seconds, 1)
        );
        if !m.per_class_accuracy.is_empty() {
            let _ = writeln!(out);
            let _ = writeln!(out, "{:<16} {:>10}", "class", "accuracy");
            for (c, a) in &m.per_class_accuracy {
                let _ = writeln!(out, "{:<16} {:>10.4}", c, a);
            }
        }
        let curve = |out: &mut String, title: &str, pts: &[PrefixPoint]| {
            if pts.is_empty() {
                return;
            }
            let _ = writeln!(out);
            let _ = writeln!(out, "{title}");
            let _ = writeln!(out, "{:<10} {:>10} {:>12}", "observed", "accuracy", "mae_s");
            for p in pts {
                let _ = writeln!(
                    out,
                    "{:<10.2} {:>10.4} {:>12}",
                    p.fraction,
                    p.accuracy,
                    fmt_opt(p.mae_seconds, 1)
                );
            }
        };
        curve(&mut out, "prefix curve", &self.prefix_curve);
        if let Some(b) = &self.baseline {
            curve(
                &mut out,
                &format!("baseline {}", b.model_descriptor),
                &b.prefix_curve,
            );
        }
        for w in &self.warnings {
            let _ = writeln!(out, "warning: {w}");
        }
        out
    }
}

fn fmt_opt(v: Option<f64>, digits: usize) -> String {
    v.map_or_else(|| "-".to_owned(), |x| format!("{x:.digits$}"))
}

fn check_metrics(ctx: &str, m: &Metrics, errs: &mut Vec<String>) {
    let in_unit = |v: f64| (0.0..=1.0).contains(&v);
    if m.overall_accuracy.is_some_and(|a| !in_unit(a)) {
        errs.push(format!("{ctx}: accuracy out of range"));
    }
    if m.per_class_accuracy.values().any(|&a| !in_unit(a)) {
        errs.push(format!("{ctx}: class accuracy out of range"));
    }
    if m.mae_seconds.is_some_and(|e| !(e >= 0.0)) {
        errs.push(format!("{ctx}: negative mae"));
    }
}
