use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::EvalError;
use crate::rng::{self, stream};

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FoldPlan {
    pub k: usize,
    /// Fold index of every sample.
    pub assignments: Vec<usize>,
    pub seed: u64,
}

impl FoldPlan {
    pub fn fold(&self, f: usize) -> Vec<usize> {
        (0..self.assignments.len())
            .filter(|&i| self.assignments[i] == f)
            .collect()
    }

    pub fn complement(&self, f: usize) -> Vec<usize> {
        (0..self.assignments.len())
            .filter(|&i| self.assignments[i] != f)
            .collect()
    }

    pub fn sizes(&self) -> Vec<usize> {
        let mut s = vec![0; self.k];
        for &a in &self.assignments {
            s[a] += 1;
        }
        s
    }
}

/// Shuffled sample order, grouped by label when `strata` is given.
fn ordered(n: usize, seed: u64, tag: u64, strata: Option<&[usize]>) -> Vec<Vec<usize>> {
    let mut rng = rng::keyed(seed, &[tag, n as u64]);
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut rng);
    match strata {
        None => vec![idx],
        Some(labels) => {
            let mut groups: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
            for i in idx {
                groups.entry(labels[i]).or_default().push(i);
            }
            groups.into_values().collect()
        }
    }
}

/// Seeded shuffle then round-robin fold assignment.
///
/// With `stratify_labels`, samples are dealt class by class with the
/// round-robin counter carried over between classes, so each class is spread
/// as evenly as possible and overall fold sizes still differ by at most one.
pub fn kfold_split(
    n_samples: usize,
    k: usize,
    seed: u64,
    stratify_labels: Option<&[usize]>,
) -> Result<FoldPlan, EvalError> {
    if k < 2 {
        return Err(EvalError::InvalidConfig("K must be at least 2".into()));
    }
    if n_samples < k {
        return Err(EvalError::TooFewSamples {
            needed: k,
            got: n_samples,
        });
    }
    if let Some(l) = stratify_labels {
        if l.len() != n_samples {
            return Err(EvalError::LengthMismatch {
                left: n_samples,
                right: l.len(),
            });
        }
    }
    let mut assignments = vec![0; n_samples];
    let mut counter = 0;
    for group in ordered(n_samples, seed, stream::FOLDS, stratify_labels) {
        for i in group {
            assignments[i] = counter % k;
            counter += 1;
        }
    }
    Ok(FoldPlan {
        k,
        assignments,
        seed,
    })
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct HoldoutSplit {
    /// Samples available to cross-validation and final training, ascending.
    pub cv_indices: Vec<usize>,
    /// External test samples, ascending.
    pub test_indices: Vec<usize>,
}

/// Splits off `round(test_fraction · n)` samples (at least one) as the
/// external test set. With `stratify_labels`, each class contributes in
/// proportion to its size.
pub fn holdout_split(
    n_samples: usize,
    test_fraction: f64,
    seed: u64,
    stratify_labels: Option<&[usize]>,
) -> Result<HoldoutSplit, EvalError> {
    if !(test_fraction > 0.0 && test_fraction <= 0.5) {
        return Err(EvalError::InvalidConfig(
            "test_fraction must lie in (0, 0.5]".into(),
        ));
    }
    if n_samples < 2 {
        return Err(EvalError::TooFewSamples {
            needed: 2,
            got: n_samples,
        });
    }
    let n_test = ((test_fraction * n_samples as f64).round() as usize).max(1);
    let mut keyed: Vec<(f64, usize, usize)> = Vec::with_capacity(n_samples);
    for (g, group) in ordered(n_samples, seed, stream::HOLDOUT, stratify_labels)
        .into_iter()
        .enumerate()
    {
        let len = group.len() as f64;
        for (r, i) in group.into_iter().enumerate() {
            keyed.push(((r as f64 + 0.5) / len, g, i));
        }
    }
    keyed.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    let mut test_indices: Vec<usize> = keyed[..n_test].iter().map(|e| e.2).collect();
    let mut cv_indices: Vec<usize> = keyed[n_test..].iter().map(|e| e.2).collect();
    test_indices.sort_unstable();
    cv_indices.sort_unstable();
    Ok(HoldoutSplit {
        cv_indices,
        test_indices,
    })
}
