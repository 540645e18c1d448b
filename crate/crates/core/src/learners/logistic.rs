//! Multinomial logistic regression trained by full-batch gradient descent.
//!
//! The objective is the mean cross-entropy plus `l2/2 · ‖W‖²` (the bias is
//! not penalized). A step is accepted only if it does not increase the loss;
//! otherwise the learning rate is halved and the step retried.
//!
//! Only classes present in the training labels get parameters. For an absent
//! class the objective decreases without bound as its bias goes to −∞, so its
//! limiting probability is 0; it is scored 0 directly instead of being chased
//! by gradient descent.

use serde::{Deserialize, Serialize};

use super::LearnError;

/// Smallest learning rate tried before giving up on further progress.
const MIN_LEARNING_RATE: f64 = 1e-12;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LogisticSetting {
    pub l2: f64,
    pub learning_rate: f64,
    pub max_iters: usize,
    pub tolerance: f64,
}

impl Default for LogisticSetting {
    fn default() -> Self {
        Self {
            l2: 1e-3,
            learning_rate: 0.1,
            max_iters: 10_000,
            tolerance: 1e-6,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LogisticRegression {
    pub n_classes: usize,
    pub n_features: usize,
    /// Classes seen in training, ascending; parameter rows follow this order.
    pub active_classes: Vec<usize>,
    /// Row-major `active_classes.len() × n_features`.
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
    pub iterations: usize,
    pub final_loss: f64,
    pub converged: bool,
}

/// Training rows with zero entries dropped.
pub struct SparseRows {
    rows: Vec<Vec<(usize, f64)>>,
    n_features: usize,
}

impl SparseRows {
    pub fn new(rows: &[&[f64]], n_features: usize) -> Self {
        Self {
            rows: rows
                .iter()
                .map(|r| {
                    r.iter()
                        .enumerate()
                        .filter(|(_, v)| **v != 0.0)
                        .map(|(j, &v)| (j, v))
                        .collect()
                })
                .collect(),
            n_features,
        }
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }
}

/// Loss at `(weights, bias)` with row-major `weights`; fills the gradients
/// (same layout) when given.
pub fn objective(
    data: &SparseRows,
    labels: &[usize],
    n_classes: usize,
    l2: f64,
    weights: &[f64],
    bias: &[f64],
    grad: Option<(&mut [f64], &mut [f64])>,
) -> f64 {
    let d = data.n_features;
    let wt = transpose(weights, n_classes, d);
    match grad {
        None => objective_fm(data, labels, n_classes, l2, &wt, bias, None),
        Some((gw, gb)) => {
            let mut gwt = vec![0.0; wt.len()];
            let loss = objective_fm(data, labels, n_classes, l2, &wt, bias, Some((&mut gwt, gb)));
            gw.copy_from_slice(&transpose(&gwt, d, n_classes));
            loss
        }
    }
}

fn transpose(m: &[f64], rows: usize, cols: usize) -> Vec<f64> {
    let mut t = vec![0.0; m.len()];
    for r in 0..rows {
        for c in 0..cols {
            t[c * rows + r] = m[r * cols + c];
        }
    }
    t
}

/// [`objective`] with feature-major weights (`n_features × n_classes`).
fn objective_fm(
    data: &SparseRows,
    labels: &[usize],
    k: usize,
    l2: f64,
    wt: &[f64],
    bias: &[f64],
    mut grad: Option<(&mut [f64], &mut [f64])>,
) -> f64 {
    let n = data.len() as f64;
    let mut z = vec![0.0; k];
    let mut loss = 0.0;
    if let Some((gw, gb)) = grad.as_mut() {
        gw.fill(0.0);
        gb.fill(0.0);
    }
    for (row, &y) in data.rows.iter().zip(labels) {
        z.copy_from_slice(bias);
        for &(j, v) in row {
            for (zc, w) in z.iter_mut().zip(&wt[j * k..(j + 1) * k]) {
                *zc += w * v;
            }
        }
        let max = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let zy = z[y];
        let mut sum = 0.0;
        for zc in z.iter_mut() {
            *zc = (*zc - max).exp();
            sum += *zc;
        }
        loss += max + sum.ln() - zy;
        if let Some((gw, gb)) = grad.as_mut() {
            let inv = 1.0 / sum;
            for zc in z.iter_mut() {
                *zc *= inv;
            }
            z[y] -= 1.0;
            for (b, g) in gb.iter_mut().zip(&z) {
                *b += g;
            }
            for &(j, v) in row {
                for (gc, g) in gw[j * k..(j + 1) * k].iter_mut().zip(&z) {
                    *gc += g * v;
                }
            }
        }
    }
    loss /= n;
    loss += 0.5 * l2 * wt.iter().map(|w| w * w).sum::<f64>();
    if let Some((gw, gb)) = grad {
        for (g, w) in gw.iter_mut().zip(wt) {
            *g = *g / n + l2 * w;
        }
        for g in gb.iter_mut() {
            *g /= n;
        }
    }
    loss
}

fn max_abs(a: &[f64], b: &[f64]) -> f64 {
    a.iter().chain(b).fold(0.0_f64, |m, v| m.max(v.abs()))
}

impl LogisticRegression {
    /// Fits the model; also returns the loss after each accepted step
    /// (starting with the loss at zero parameters).
    pub fn fit_traced(
        rows: &[&[f64]],
        labels: &[usize],
        n_classes: usize,
        n_features: usize,
        setting: &LogisticSetting,
    ) -> Result<(Self, Vec<f64>), LearnError> {
        if rows.len() < n_classes {
            return Err(LearnError::InsufficientData(format!(
                "logistic regression needs at least {} samples, got {}",
                n_classes,
                rows.len()
            )));
        }
        if !(setting.l2 >= 0.0 && setting.learning_rate > 0.0 && setting.tolerance > 0.0) {
            return Err(LearnError::InvalidConfig(
                "l2 must be nonnegative; learning rate and tolerance positive".into(),
            ));
        }
        if let Some(&bad) = labels.iter().find(|&&y| y >= n_classes) {
            return Err(LearnError::IndexOutOfRange {
                index: bad,
                k: n_classes,
            });
        }
        let mut active_classes = labels.to_vec();
        active_classes.sort_unstable();
        active_classes.dedup();
        let compact: Vec<usize> = labels
            .iter()
            .map(|y| active_classes.binary_search(y).expect("label is active"))
            .collect();
        let labels = &compact[..];
        let data = SparseRows::new(rows, n_features);
        let (k, d) = (active_classes.len(), n_features);
        let mut w = vec![0.0; k * d];
        let mut b = vec![0.0; k];
        let mut gw = vec![0.0; k * d];
        let mut gb = vec![0.0; k];
        let mut cw = vec![0.0; k * d];
        let mut cb = vec![0.0; k];
        let mut cgw = vec![0.0; k * d];
        let mut cgb = vec![0.0; k];

        let mut loss = objective_fm(
            &data,
            labels,
            k,
            setting.l2,
            &w,
            &b,
            Some((&mut gw, &mut gb)),
        );
        if !loss.is_finite() {
            return Err(LearnError::NonFiniteLoss);
        }
        let mut trace = vec![loss];
        let mut lr = setting.learning_rate;
        let mut iterations = 0;
        let mut converged = false;
        while iterations < setting.max_iters {
            if max_abs(&gw, &gb) < setting.tolerance {
                converged = true;
                break;
            }
            for i in 0..w.len() {
                cw[i] = w[i] - lr * gw[i];
            }
            for i in 0..k {
                cb[i] = b[i] - lr * gb[i];
            }
            let cand = objective_fm(
                &data,
                labels,
                k,
                setting.l2,
                &cw,
                &cb,
                Some((&mut cgw, &mut cgb)),
            );
            iterations += 1;
            if cand.is_finite() && cand <= loss {
                std::mem::swap(&mut w, &mut cw);
                std::mem::swap(&mut b, &mut cb);
                std::mem::swap(&mut gw, &mut cgw);
                std::mem::swap(&mut gb, &mut cgb);
                loss = cand;
                trace.push(loss);
            } else {
                lr *= 0.5;
                if lr < MIN_LEARNING_RATE {
                    break;
                }
            }
        }
        if !converged && max_abs(&gw, &gb) < setting.tolerance {
            converged = true;
        }
        Ok((
            Self {
                n_classes,
                n_features: d,
                active_classes,
                weights: transpose(&w, d, k),
                bias: b,
                iterations,
                final_loss: loss,
                converged,
            },
            trace,
        ))
    }

    pub fn fit(
        rows: &[&[f64]],
        labels: &[usize],
        n_classes: usize,
        n_features: usize,
        setting: &LogisticSetting,
    ) -> Result<Self, LearnError> {
        Self::fit_traced(rows, labels, n_classes, n_features, setting).map(|(m, _)| m)
    }

    /// Logits over all classes; absent classes get −∞.
    pub fn logits(&self, x: &[f64]) -> Vec<f64> {
        let d = self.n_features;
        let mut z = vec![f64::NEG_INFINITY; self.n_classes];
        for (r, &c) in self.active_classes.iter().enumerate() {
            z[c] = self.bias[r]
                + self.weights[r * d..(r + 1) * d]
                    .iter()
                    .zip(x)
                    .map(|(w, v)| w * v)
                    .sum::<f64>();
        }
        z
    }

    /// `exp(z − max z)`: nonnegative scores whose ratio normalization is the
    /// usual exponential soft-max.
    pub fn scores(&self, x: &[f64]) -> Vec<f64> {
        let z = self.logits(x);
        let max = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        z.iter().map(|v| (v - max).exp()).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn refs(rows: &[Vec<f64>]) -> Vec<&[f64]> {
        rows.iter().map(|r| r.as_slice()).collect()
    }

    #[test]
    fn separable_two_class() {
        let rows: Vec<Vec<f64>> = vec![
            vec![0.0, 0.0],
            vec![0.2, 0.5],
            vec![0.4, 0.1],
            vec![2.0, 2.1],
            vec![2.5, 1.8],
            vec![1.9, 2.6],
        ];
        let labels = [0, 0, 0, 1, 1, 1];
        let m = LogisticRegression::fit(&refs(&rows), &labels, 2, 2, &LogisticSetting::default())
            .unwrap();
        for (x, &y) in rows.iter().zip(&labels) {
            assert_eq!(crate::learners::argmax(&m.scores(x)), y);
        }
    }

    #[test]
    fn loss_never_increases() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let rows: Vec<Vec<f64>> = (0..40)
            .map(|_| (0..4).map(|_| rng.random_range(-2.0..2.0)).collect())
            .collect();
        let labels: Vec<usize> = (0..40).map(|_| rng.random_range(0..3)).collect();
        let setting = LogisticSetting {
            l2: 0.0,
            learning_rate: 5.0,
            max_iters: 500,
            tolerance: 1e-6,
        };
        let (_, trace) =
            LogisticRegression::fit_traced(&refs(&rows), &labels, 3, 4, &setting).unwrap();
        assert!(trace.len() > 10);
        for w in trace.windows(2) {
            assert!(w[1] <= w[0]);
        }
    }

    #[test]
    fn converges_with_penalty() {
        let rows: Vec<Vec<f64>> = vec![
            vec![1.0, 0.0],
            vec![0.0, 1.0],
            vec![1.0, 1.0],
            vec![0.0, 0.0],
        ];
        let labels = [0, 1, 0, 1];
        let setting = LogisticSetting {
            l2: 0.1,
            ..LogisticSetting::default()
        };
        let m = LogisticRegression::fit(&refs(&rows), &labels, 2, 2, &setting).unwrap();
        assert!(m.converged);
        assert!(m.iterations < setting.max_iters);
    }

    #[test]
    fn absent_classes_score_zero() {
        let rows: Vec<Vec<f64>> = vec![vec![1.0], vec![-1.0], vec![0.9], vec![-1.2]];
        let m = LogisticRegression::fit(
            &refs(&rows),
            &[1, 3, 1, 3],
            4,
            1,
            &LogisticSetting::default(),
        )
        .unwrap();
        assert_eq!(m.active_classes, vec![1, 3]);
        let s = m.scores(&[1.0]);
        assert_eq!(s.len(), 4);
        assert_eq!((s[0], s[2]), (0.0, 0.0));
        assert!(s[1] > s[3]);
    }

    #[test]
    fn too_few_samples() {
        let rows = vec![vec![1.0]];
        assert!(matches!(
            LogisticRegression::fit(&refs(&rows), &[0], 3, 1, &LogisticSetting::default()),
            Err(LearnError::InsufficientData(_))
        ));
    }

    #[test]
    fn non_finite_inputs() {
        let rows = vec![vec![f64::NAN], vec![1.0]];
        assert_eq!(
            LogisticRegression::fit(&refs(&rows), &[0, 1], 2, 1, &LogisticSetting::default()),
            Err(LearnError::NonFiniteLoss)
        );
    }
}
