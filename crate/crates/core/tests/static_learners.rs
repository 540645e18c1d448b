use std::f64::consts::PI;

use bss_core::datagen::{generate_trips, user_habit, GeneratorConfig};
use bss_core::learners::logistic::{objective, SparseRows};
use bss_core::learners::naive_bayes::NaiveBayes;
use bss_core::learners::{
    encode_departure, encode_trip_input, predict_destination, softmax_normalize, static_schema,
    train_classifier, train_regressor, ClassifierSetting, FeatureKind, StaticInput,
};
use bss_core::rng::keyed;
use bss_core::{StationMap, TripRecord};
use rand::Rng;

fn normal_equations_residual(rows: &[Vec<f64>], y: &[f64], w: &[f64], b: f64, lambda: f64) -> f64 {
    // augmented design [x, 1]; the bias column is not penalized
    let d = w.len();
    let theta: Vec<f64> = w.iter().copied().chain([b]).collect();
    let aug = |r: &Vec<f64>, j: usize| if j < d { r[j] } else { 1.0 };
    let mut worst = 0.0_f64;
    for a in 0..=d {
        let mut lhs = 0.0;
        for c in 0..=d {
            let gram: f64 = rows.iter().map(|r| aug(r, a) * aug(r, c)).sum();
            lhs += gram * theta[c];
        }
        if a < d {
            lhs += lambda * theta[a];
        }
        let rhs: f64 = rows.iter().zip(y).map(|(r, t)| aug(r, a) * t).sum();
        worst = worst.max((lhs - rhs).abs());
    }
    worst
}

#[test]
fn ridge_satisfies_normal_equations() {
    let mut rng = keyed(11, &[1]);
    for case in 0..100 {
        let d = rng.random_range(1..=10);
        let n = rng.random_range(d + 2..=50);
        let lambda = [0.0, 1e-3, 0.1, 1.0, 10.0][case % 5];
        let rows: Vec<Vec<f64>> = (0..n)
            .map(|_| (0..d).map(|_| rng.random_range(-1.0..1.0)).collect())
            .collect();
        let y: Vec<f64> = (0..n).map(|_| rng.random_range(-5.0..5.0)).collect();
        let data: Vec<(StaticInput, f64)> = rows
            .iter()
            .cloned()
            .zip(y.iter().copied())
            .map(|(r, t)| (StaticInput(r), t))
            .collect();
        let m = train_regressor(&data, lambda).unwrap();
        let r = normal_equations_residual(&rows, &y, &m.weights, m.bias, lambda);
        assert!(r < 1e-8, "case {case}: residual {r}");
    }
}

#[test]
fn logistic_gradient_matches_finite_differences() {
    let mut rng = keyed(12, &[2]);
    for case in 0..20 {
        let d = rng.random_range(1..=8);
        let k = rng.random_range(2..=4);
        let n = rng.random_range(k..=30);
        let rows: Vec<Vec<f64>> = (0..n)
            .map(|_| (0..d).map(|_| rng.random_range(-2.0..2.0)).collect())
            .collect();
        let labels: Vec<usize> = (0..n).map(|_| rng.random_range(0..k)).collect();
        let refs: Vec<&[f64]> = rows.iter().map(|r| r.as_slice()).collect();
        let data = SparseRows::new(&refs, d);
        let l2 = rng.random_range(0.0..0.5);
        let w: Vec<f64> = (0..k * d).map(|_| rng.random_range(-1.0..1.0)).collect();
        let b: Vec<f64> = (0..k).map(|_| rng.random_range(-1.0..1.0)).collect();
        let mut gw = vec![0.0; k * d];
        let mut gb = vec![0.0; k];
        objective(&data, &labels, k, l2, &w, &b, Some((&mut gw, &mut gb)));

        let h = 1e-5;
        let f = |w: &[f64], b: &[f64]| objective(&data, &labels, k, l2, w, b, None);
        let check = |analytic: f64, numeric: f64, what: &str| {
            let rel = (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-8);
            assert!(
                rel < 1e-5 || (analytic - numeric).abs() < 1e-9,
                "case {case} {what}: {analytic} vs {numeric}"
            );
        };
        for i in 0..w.len() {
            let (mut wp, mut wm) = (w.clone(), w.clone());
            wp[i] += h;
            wm[i] -= h;
            check(
                gw[i],
                (f(&wp, &b) - f(&wm, &b)) / (2.0 * h),
                &format!("w[{i}]"),
            );
        }
        for i in 0..b.len() {
            let (mut bp, mut bm) = (b.clone(), b.clone());
            bp[i] += h;
            bm[i] -= h;
            check(
                gb[i],
                (f(&w, &bp) - f(&w, &bm)) / (2.0 * h),
                &format!("b[{i}]"),
            );
        }
    }
}

/// Bayes' rule computed directly from counts, with the same smoothing rules,
/// in log space to survive narrow Gaussians.
fn brute_force_posterior(
    rows: &[Vec<f64>],
    labels: &[usize],
    k: usize,
    schema: &[FeatureKind],
    x: &[f64],
) -> Vec<f64> {
    let alpha = 1.0;
    let var_floor = 1e-3;
    let mut log_joint = vec![f64::NEG_INFINITY; k];
    for (c, j) in log_joint.iter_mut().enumerate() {
        let members: Vec<&Vec<f64>> = rows
            .iter()
            .zip(labels)
            .filter(|(_, &y)| y == c)
            .map(|(r, _)| r)
            .collect();
        if members.is_empty() {
            continue;
        }
        let nc = members.len() as f64;
        let mut lp = (nc / rows.len() as f64).ln();
        for (f, kind) in schema.iter().enumerate() {
            match kind {
                FeatureKind::Indicator => {
                    let ones = members.iter().filter(|r| r[f] > 0.5).count() as f64;
                    let p1 = (ones + alpha) / (nc + 2.0 * alpha);
                    lp += if x[f] > 0.5 { p1 } else { 1.0 - p1 }.ln();
                }
                FeatureKind::Continuous => {
                    let mean = members.iter().map(|r| r[f]).sum::<f64>() / nc;
                    let var =
                        members.iter().map(|r| (r[f] - mean).powi(2)).sum::<f64>() / nc + var_floor;
                    lp += -(x[f] - mean).powi(2) / (2.0 * var) - 0.5 * (2.0 * PI * var).ln();
                }
            }
        }
        *j = lp;
    }
    let top = log_joint.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let unnorm: Vec<f64> = log_joint.iter().map(|v| (v - top).exp()).collect();
    let total: f64 = unnorm.iter().sum();
    unnorm.iter().map(|v| v / total).collect()
}

#[test]
fn naive_bayes_matches_bayes_rule() {
    let mut rng = keyed(13, &[3]);
    for case in 0..200 {
        let d = rng.random_range(1..=5);
        let k = rng.random_range(1..=3);
        let n = rng.random_range(1..=12);
        let schema: Vec<FeatureKind> = (0..d)
            .map(|_| {
                if rng.random::<bool>() {
                    FeatureKind::Indicator
                } else {
                    FeatureKind::Continuous
                }
            })
            .collect();
        let draw = |rng: &mut rand_chacha::ChaCha8Rng| -> Vec<f64> {
            schema
                .iter()
                .map(|kind| match kind {
                    FeatureKind::Indicator => f64::from(rng.random_range(0..2u8)),
                    FeatureKind::Continuous => rng.random_range(-1.0..1.0),
                })
                .collect()
        };
        let rows: Vec<Vec<f64>> = (0..n).map(|_| draw(&mut rng)).collect();
        let labels: Vec<usize> = (0..n).map(|_| rng.random_range(0..k)).collect();
        let refs: Vec<&[f64]> = rows.iter().map(|r| r.as_slice()).collect();
        let nb = NaiveBayes::fit(&refs, &labels, k, &schema, 1.0, 1e-3).unwrap();
        let x = draw(&mut rng);
        let got = softmax_normalize(&nb.scores(&x)).unwrap();
        let want = brute_force_posterior(&rows, &labels, k, &schema, &x);
        for (g, w) in got.iter().zip(&want) {
            assert!((g - w).abs() < 1e-9, "case {case}: {got:?} vs {want:?}");
        }
    }
}

#[test]
fn softmax_properties_on_random_vectors() {
    let mut rng = keyed(14, &[4]);
    for _ in 0..1000 {
        let k = rng.random_range(2..=10);
        let v: Vec<f64> = (0..k)
            .map(|_| {
                if rng.random_range(0..4) == 0 {
                    0.0
                } else {
                    rng.random_range(0.0..100.0)
                }
            })
            .collect();
        let p = softmax_normalize(&v).unwrap();
        assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        let c = rng.random_range(1e-3..1e3);
        let scaled: Vec<f64> = v.iter().map(|x| x * c).collect();
        for (a, b) in p.iter().zip(softmax_normalize(&scaled).unwrap()) {
            assert!((a - b).abs() < 1e-12);
        }
        assert_eq!(
            softmax_normalize(&vec![0.0; k]).unwrap(),
            vec![1.0 / k as f64; k]
        );
    }
}

fn habitual_config(seed: u64) -> GeneratorConfig {
    let mut c = GeneratorConfig::new(
        seed,
        StationMap::uniform_square(seed, 8, 3000.0, 20).unwrap(),
    );
    c.n_users = 6;
    c.trips_per_user = 40;
    c.habit_strength = 1.0;
    c.gps_noise_std = 0.0;
    c
}

#[test]
fn habitual_input_predicts_habitual_destination() {
    let c = habitual_config(21);
    let trips = generate_trips(&c).unwrap();
    let schema = static_schema(c.station_map.len());
    for u in 0..c.n_users {
        let id = c.user_id(u);
        let mine: Vec<&TripRecord> = trips.iter().filter(|t| t.user_id == id).collect();
        let data: Vec<(StaticInput, usize)> = mine
            .iter()
            .map(|t| {
                (
                    encode_trip_input(t, &c.station_map).unwrap(),
                    c.station_map.index_of(&t.return_station).unwrap(),
                )
            })
            .collect();
        let habit = user_habit(&c, u);
        let origin = &c.station_map.get(habit.origin).id;
        for setting in [
            ClassifierSetting::naive_bayes(),
            ClassifierSetting::logistic(1e-3),
        ] {
            let model = train_classifier(&data, &schema, &c.station_map.ids(), &setting).unwrap();
            let x = encode_departure(origin, mine[0].leave_time, &c.station_map).unwrap();
            let p = predict_destination(&model, &x).unwrap();
            assert_eq!(p.index, habit.destination, "user {id}, {setting:?}");
            assert!((p.probabilities.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        }
    }
}
