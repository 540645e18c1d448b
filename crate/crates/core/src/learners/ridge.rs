//! Trip-duration regressor: closed-form ridge regression with an
//! unpenalized bias.
//!
//! Minimizes `Σ (wᵀx + b − y)² + λ‖w‖²`. Centering inputs and targets removes
//! the bias from the system, leaving `(XcᵀXc + λI) w = Xcᵀyc` and
//! `b = ȳ − x̄ᵀw`.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::{LearnError, StaticInput};
use crate::linalg::{self, LinalgError};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RegressorModel {
    pub weights: Vec<f64>,
    pub bias: f64,
    pub ridge_lambda: f64,
}

pub fn train_regressor(
    data: &[(StaticInput, f64)],
    ridge_lambda: f64,
) -> Result<RegressorModel, LearnError> {
    if data.len() < 2 {
        return Err(LearnError::InsufficientData(format!(
            "ridge regression needs at least 2 samples, got {}",
            data.len()
        )));
    }
    if !(ridge_lambda.is_finite() && ridge_lambda >= 0.0) {
        return Err(LearnError::InvalidConfig(
            "ridge_lambda must be a nonnegative number".into(),
        ));
    }
    let d = data[0].0.dim();
    if let Some((x, _)) = data.iter().find(|(x, _)| x.dim() != d) {
        return Err(LearnError::DimensionMismatch {
            expected: d,
            got: x.dim(),
        });
    }
    let n = data.len();
    let mut x_mean = vec![0.0; d];
    let mut y_mean = 0.0;
    for (x, y) in data {
        for (m, v) in x_mean.iter_mut().zip(x.as_slice()) {
            *m += v;
        }
        y_mean += y;
    }
    x_mean.iter_mut().for_each(|m| *m /= n as f64);
    y_mean /= n as f64;

    let xc = DMatrix::from_fn(n, d, |i, j| data[i].0.as_slice()[j] - x_mean[j]);
    let yc = DMatrix::from_fn(n, 1, |i, _| data[i].1 - y_mean);
    let w = linalg::ridge_solve(&xc, &yc, ridge_lambda).map_err(|e| match e {
        LinalgError::Singular => LearnError::SingularSystem,
        LinalgError::NoConvergence => LearnError::SingularSystem,
    })?;
    let weights: Vec<f64> = w.iter().copied().collect();
    if weights.iter().any(|v| !v.is_finite()) {
        return Err(LearnError::SingularSystem);
    }
    let bias = y_mean - weights.iter().zip(&x_mean).map(|(w, m)| w * m).sum::<f64>();
    Ok(RegressorModel {
        weights,
        bias,
        ridge_lambda,
    })
}

impl RegressorModel {
    pub fn predict(&self, x: &[f64]) -> Result<f64, LearnError> {
        if x.len() != self.weights.len() {
            return Err(LearnError::DimensionMismatch {
                expected: self.weights.len(),
                got: x.len(),
            });
        }
        Ok(self.bias + self.weights.iter().zip(x).map(|(w, v)| w * v).sum::<f64>())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn data(pairs: &[(Vec<f64>, f64)]) -> Vec<(StaticInput, f64)> {
        pairs
            .iter()
            .map(|(x, y)| (StaticInput(x.clone()), *y))
            .collect()
    }

    #[test]
    fn exact_linear_recovery() {
        let d = data(
            &(0..10)
                .map(|i| (vec![i as f64 * 1.5], 600.0 + 2.0 * i as f64 * 1.5))
                .collect::<Vec<_>>(),
        );
        let m = train_regressor(&d, 0.0).unwrap();
        assert!((m.bias - 600.0).abs() < 1e-8);
        assert!((m.weights[0] - 2.0).abs() < 1e-8);
        for (x, y) in &d {
            assert!((m.predict(x.as_slice()).unwrap() - y).abs() < 1e-8);
        }
    }

    #[test]
    fn huge_penalty_gives_mean() {
        let d = data(&[
            (vec![1.0, 0.0], 10.0),
            (vec![0.0, 1.0], 20.0),
            (vec![2.0, 3.0], 60.0),
        ]);
        let m = train_regressor(&d, 1e12).unwrap();
        assert!(m.weights.iter().all(|w| w.abs() < 1e-9));
        assert!((m.bias - 30.0).abs() < 1e-6);
    }

    #[test]
    fn tiny_system_matches_explicit_solve() {
        let d = data(&[
            (vec![1.0, 2.0], 3.0),
            (vec![2.0, 0.5], 1.0),
            (vec![4.0, 1.0], 7.5),
        ]);
        let lambda = 0.1;
        let m = train_regressor(&d, lambda).unwrap();

        // Centered 3x2 design, then the 2x2 normal equations by Cramer's rule.
        let xm = [7.0 / 3.0, 3.5 / 3.0];
        let ym = 11.5 / 3.0;
        let xc: Vec<[f64; 2]> = d
            .iter()
            .map(|(x, _)| [x.0[0] - xm[0], x.0[1] - xm[1]])
            .collect();
        let yc: Vec<f64> = d.iter().map(|(_, y)| y - ym).collect();
        let (mut a, mut b, mut c) = (lambda, 0.0, lambda);
        let (mut r0, mut r1) = (0.0, 0.0);
        for (x, y) in xc.iter().zip(&yc) {
            a += x[0] * x[0];
            b += x[0] * x[1];
            c += x[1] * x[1];
            r0 += x[0] * y;
            r1 += x[1] * y;
        }
        let det = a * c - b * b;
        let w0 = (r0 * c - b * r1) / det;
        let w1 = (a * r1 - b * r0) / det;
        assert!((m.weights[0] - w0).abs() < 1e-10);
        assert!((m.weights[1] - w1).abs() < 1e-10);
        assert!((m.bias - (ym - w0 * xm[0] - w1 * xm[1])).abs() < 1e-10);
    }

    #[test]
    fn rank_deficient_without_penalty() {
        let d = data(&[
            (vec![1.0, 2.0], 3.0),
            (vec![2.0, 4.0], 1.0),
            (vec![3.0, 6.0], 7.5),
        ]);
        assert_eq!(train_regressor(&d, 0.0), Err(LearnError::SingularSystem));
        assert!(train_regressor(&d, 0.5).is_ok());
    }

    #[test]
    fn needs_two_samples() {
        let d = data(&[(vec![1.0], 3.0)]);
        assert!(matches!(
            train_regressor(&d, 1.0),
            Err(LearnError::InsufficientData(_))
        ));
    }
}
