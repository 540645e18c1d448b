//! End-to-end assessment of the two predictive features.

use std::collections::BTreeMap;

use rand::RngCore;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::cv::{final_assessment, metrics_of, Assessment, ModelFamily, Outputs, Task};
use super::report::{
    BaselineReport, EvaluationReport, PrefixPoint, SelectionReport, UnitReport, REPORT_FORMAT,
};
use super::{EvalError, Metrics, DEFAULT_K, DEFAULT_TEST_FRACTION};
use crate::domain::{GpsTrajectory, StationId, StationMap, TripRecord, UserId};
use crate::learners::{
    encode_trip_input, fit_location_preview, sliding_window_baseline, static_schema,
    train_classifier, train_regressor, ClassifierModel, ClassifierSetting, EsnModel, FeatureKind,
    LearnError, RegressorModel, ReservoirConfig, StaticInput, UserModels, WindowClassifier,
};
use crate::rng;

/// Per-unit seed, so each user gets its own split.
pub fn unit_seed(seed: u64, unit: &str) -> u64 {
    let h = Sha256::digest(unit.as_bytes());
    let key = u64::from_le_bytes(h[..8].try_into().expect("8 bytes"));
    rng::keyed(seed, &[key]).next_u64()
}

fn names(ids: &[StationId]) -> Vec<String> {
    ids.iter().map(|s| s.to_string()).collect()
}

#[derive(Clone, Debug)]
pub struct TripSample {
    pub x: StaticInput,
    pub class: usize,
    pub duration: f64,
}

pub struct DestinationFamily {
    pub schema: Vec<FeatureKind>,
    pub labels: Vec<StationId>,
}

impl ModelFamily for DestinationFamily {
    type Sample = TripSample;
    type Setting = ClassifierSetting;
    type Model = ClassifierModel;

    fn task(&self) -> Task {
        Task::Classification
    }
    fn class_names(&self) -> Vec<String> {
        names(&self.labels)
    }
    fn stratum(&self, s: &TripSample) -> Option<usize> {
        Some(s.class)
    }
    fn target(&self, s: &TripSample) -> Outputs {
        Outputs {
            class: Some(s.class),
            value: None,
        }
    }
    fn fit(
        &self,
        train: &[&TripSample],
        setting: &ClassifierSetting,
    ) -> Result<ClassifierModel, LearnError> {
        let data: Vec<(StaticInput, usize)> =
            train.iter().map(|s| (s.x.clone(), s.class)).collect();
        train_classifier(&data, &self.schema, &self.labels, setting)
    }
    fn predict(&self, m: &ClassifierModel, s: &TripSample) -> Result<Outputs, LearnError> {
        Ok(Outputs {
            class: Some(m.predict(s.x.as_slice())?.index),
            value: None,
        })
    }
}

/// Ridge duration regressor; the setting is the penalty. Stratifies by
/// destination so its splits coincide with [`DestinationFamily`]'s.
pub struct DurationFamily;

impl ModelFamily for DurationFamily {
    type Sample = TripSample;
    type Setting = f64;
    type Model = RegressorModel;

    fn task(&self) -> Task {
        Task::Regression
    }
    fn class_names(&self) -> Vec<String> {
        Vec::new()
    }
    fn stratum(&self, s: &TripSample) -> Option<usize> {
        Some(s.class)
    }
    fn target(&self, s: &TripSample) -> Outputs {
        Outputs {
            class: None,
            value: Some(s.duration),
        }
    }
    fn fit(&self, train: &[&TripSample], lambda: &f64) -> Result<RegressorModel, LearnError> {
        let data: Vec<(StaticInput, f64)> =
            train.iter().map(|s| (s.x.clone(), s.duration)).collect();
        train_regressor(&data, *lambda)
    }
    fn predict(&self, m: &RegressorModel, s: &TripSample) -> Result<Outputs, LearnError> {
        Ok(Outputs {
            class: None,
            value: Some(m.predict(s.x.as_slice())?.max(0.0)),
        })
    }
}

pub fn default_ridge_grid() -> Vec<f64> {
    vec![1e-3, 1e-1, 1.0, 10.0]
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct UserProfileOptions {
    pub k: usize,
    pub test_fraction: f64,
    pub seed: u64,
    pub classifier_grid: Vec<ClassifierSetting>,
    pub ridge_grid: Vec<f64>,
}

impl Default for UserProfileOptions {
    fn default() -> Self {
        Self {
            k: DEFAULT_K,
            test_fraction: DEFAULT_TEST_FRACTION,
            seed: 0,
            classifier_grid: ClassifierSetting::default_grid(),
            ridge_grid: default_ridge_grid(),
        }
    }
}

#[derive(Debug)]
pub struct UserProfileOutcome {
    pub report: EvaluationReport,
    pub user_models: BTreeMap<UserId, UserModels>,
    /// Trained on every user's non-test trips, for users without a model.
    pub global_models: UserModels,
}

pub fn trip_samples(
    trips: &[TripRecord],
    stations: &StationMap,
) -> Result<Vec<TripSample>, LearnError> {
    trips
        .iter()
        .map(|t| {
            Ok(TripSample {
                x: encode_trip_input(t, stations)?,
                class: stations
                    .index_of(&t.return_station)
                    .ok_or_else(|| LearnError::UnknownStation(t.return_station.clone()))?,
                duration: t.duration() as f64,
            })
        })
        .collect()
}

fn most_selected<T: Clone + PartialEq>(grid: &[T], picks: &[T]) -> T {
    let mut best = 0;
    let mut best_n = 0;
    for (i, g) in grid.iter().enumerate() {
        let n = picks.iter().filter(|p| *p == g).count();
        if n > best_n {
            best = i;
            best_n = n;
        }
    }
    grid[best].clone()
}

fn selection<F: ModelFamily>(target: &str, a: &Assessment<F>) -> SelectionReport {
    SelectionReport {
        target: target.into(),
        selected: a.cv.settings[a.cv.best].setting.clone(),
        cv: a.cv.clone(),
    }
}

/// Assesses per-user destination and duration models for every user in
/// `trips`, each user on their own hold-out split.
pub fn assess_user_profile(
    stations: &StationMap,
    trips: &[TripRecord],
    opts: &UserProfileOptions,
) -> Result<UserProfileOutcome, EvalError> {
    if opts.classifier_grid.is_empty() || opts.ridge_grid.is_empty() {
        return Err(EvalError::EmptyGrid);
    }
    let mut by_user: BTreeMap<UserId, Vec<TripRecord>> = BTreeMap::new();
    for t in trips {
        by_user
            .entry(t.user_id.clone())
            .or_default()
            .push(t.clone());
    }
    if by_user.is_empty() {
        return Err(EvalError::Empty);
    }
    let labels = stations.ids();
    let class_names = names(&labels);
    let dest = DestinationFamily {
        schema: static_schema(stations.len()),
        labels: labels.clone(),
    };

    let mut units = Vec::new();
    let mut user_models = BTreeMap::new();
    let mut pooled_pred = Vec::new();
    let mut pooled_target = Vec::new();
    let mut picked_classifiers = Vec::new();
    let mut picked_lambdas = Vec::new();
    let mut global_trips = Vec::new();

    for (user, user_trips) in &by_user {
        let unit = user.as_str();
        let samples = trip_samples(user_trips, stations).map_err(|e| {
            EvalError::Training {
                context: "encoding trips".into(),
                source: e,
            }
            .in_unit(unit)
        })?;
        let seed = unit_seed(opts.seed, unit);
        let ca = final_assessment(
            &samples,
            opts.test_fraction,
            &dest,
            &opts.classifier_grid,
            opts.k,
            seed,
        )
        .map_err(|e| e.in_unit(unit))?;
        let ra = final_assessment(
            &samples,
            opts.test_fraction,
            &DurationFamily,
            &opts.ridge_grid,
            opts.k,
            seed,
        )
        .map_err(|e| e.in_unit(unit))?;
        debug_assert_eq!(ca.split, ra.split);

        let preds: Vec<Outputs> = ca
            .test_predictions
            .iter()
            .zip(&ra.test_predictions)
            .map(|(c, r)| Outputs {
                class: c.class,
                value: r.value,
            })
            .collect();
        let targets: Vec<Outputs> = ca
            .test_targets
            .iter()
            .zip(&ra.test_targets)
            .map(|(c, r)| Outputs {
                class: c.class,
                value: r.value,
            })
            .collect();
        let metrics = Metrics {
            mae_seconds: ra.metrics.mae_seconds,
            ..ca.metrics.clone()
        };
        units.push(UnitReport {
            unit: unit.to_owned(),
            n_samples: samples.len(),
            cv_indices: ca.split.cv_indices.clone(),
            test_indices: ca.split.test_indices.clone(),
            selections: vec![selection("destination", &ca), selection("duration", &ra)],
            final_test_metrics: metrics,
        });
        pooled_pred.extend(preds);
        pooled_target.extend(targets);
        picked_classifiers.push(ca.best_setting.clone());
        picked_lambdas.push(ra.best_setting);
        global_trips.extend(ca.split.cv_indices.iter().map(|&i| user_trips[i].clone()));
        user_models.insert(
            user.clone(),
            UserModels {
                classifier: ca.model,
                regressor: ra.model,
            },
        );
    }

    let global_setting = most_selected(&opts.classifier_grid, &picked_classifiers);
    let global_lambda = most_selected(&opts.ridge_grid, &picked_lambdas);
    let global_models = UserModels::train(&global_trips, stations, &global_setting, global_lambda)
        .map_err(|e| EvalError::Training {
            context: "global model".into(),
            source: e,
        })?;

    let report = EvaluationReport {
        format: REPORT_FORMAT.into(),
        id: String::new(),
        feature: "user-profile".into(),
        model_descriptor: "per-user destination classifier and ridge duration regressor".into(),
        station_map_digest: stations.digest(),
        class_labels: class_names.clone(),
        k: opts.k,
        test_fraction: opts.test_fraction,
        seed: opts.seed,
        units,
        final_test_metrics: metrics_of(&pooled_pred, &pooled_target, &class_names)?,
        prefix_curve: Vec::new(),
        baseline: None,
        warnings: Vec::new(),
    }
    .seal();
    Ok(UserProfileOutcome {
        report,
        user_models,
        global_models,
    })
}

fn destination_index(stations: &StationMap, tr: &GpsTrajectory) -> Option<usize> {
    tr.truth
        .as_ref()
        .and_then(|t| stations.index_of(&t.destination))
}

/// Ground truth of a trajectory seen through its prefix.
fn prefix_target(stations: &StationMap, tr: &GpsTrajectory, fraction: f64) -> Outputs {
    let last = tr.prefix(fraction).points.last().map(|p| p.t);
    Outputs {
        class: destination_index(stations, tr),
        value: tr
            .truth
            .as_ref()
            .zip(last)
            .map(|(t, l)| (t.arrival_time - l) as f64),
    }
}

pub struct EsnFamily {
    pub stations: StationMap,
    pub eval_fraction: f64,
}

impl EsnFamily {
    pub fn predict_at(
        &self,
        m: &EsnModel,
        tr: &GpsTrajectory,
        fraction: f64,
    ) -> Result<Outputs, LearnError> {
        let prefix = tr.prefix(fraction);
        let p = m.predict_prefix(&prefix.points)?;
        let last = prefix.points.last().expect("prefix has points").t;
        Ok(Outputs {
            class: Some(p.index),
            value: Some((p.expected_arrival_time - last) as f64),
        })
    }
}

impl ModelFamily for EsnFamily {
    type Sample = GpsTrajectory;
    type Setting = ReservoirConfig;
    type Model = EsnModel;

    fn task(&self) -> Task {
        Task::Classification
    }
    fn class_names(&self) -> Vec<String> {
        names(&self.stations.ids())
    }
    fn stratum(&self, s: &GpsTrajectory) -> Option<usize> {
        destination_index(&self.stations, s)
    }
    fn target(&self, s: &GpsTrajectory) -> Outputs {
        prefix_target(&self.stations, s, self.eval_fraction)
    }
    fn fit(
        &self,
        train: &[&GpsTrajectory],
        setting: &ReservoirConfig,
    ) -> Result<EsnModel, LearnError> {
        let owned: Vec<GpsTrajectory> = train.iter().map(|t| (*t).clone()).collect();
        fit_location_preview(setting, &self.stations, &owned)
    }
    fn predict(&self, m: &EsnModel, s: &GpsTrajectory) -> Result<Outputs, LearnError> {
        self.predict_at(m, s, self.eval_fraction)
    }
}

pub struct WindowFamily {
    pub stations: StationMap,
    pub window_len: usize,
    pub eval_fraction: f64,
}

impl WindowFamily {
    pub fn predict_at(
        &self,
        m: &WindowClassifier,
        tr: &GpsTrajectory,
        fraction: f64,
    ) -> Result<Outputs, LearnError> {
        Ok(Outputs {
            class: Some(m.predict_prefix(&tr.prefix(fraction).points)?.index),
            value: None,
        })
    }
}

impl ModelFamily for WindowFamily {
    type Sample = GpsTrajectory;
    type Setting = ClassifierSetting;
    type Model = WindowClassifier;

    fn task(&self) -> Task {
        Task::Classification
    }
    fn class_names(&self) -> Vec<String> {
        names(&self.stations.ids())
    }
    fn stratum(&self, s: &GpsTrajectory) -> Option<usize> {
        destination_index(&self.stations, s)
    }
    fn target(&self, s: &GpsTrajectory) -> Outputs {
        Outputs {
            class: destination_index(&self.stations, s),
            value: None,
        }
    }
    fn fit(
        &self,
        train: &[&GpsTrajectory],
        setting: &ClassifierSetting,
    ) -> Result<WindowClassifier, LearnError> {
        let owned: Vec<GpsTrajectory> = train.iter().map(|t| (*t).clone()).collect();
        sliding_window_baseline(&self.stations, &owned, self.window_len, setting)
    }
    fn predict(&self, m: &WindowClassifier, s: &GpsTrajectory) -> Result<Outputs, LearnError> {
        self.predict_at(m, s, self.eval_fraction)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BaselineOptions {
    pub window_len: usize,
    pub grid: Vec<ClassifierSetting>,
}

impl Default for BaselineOptions {
    fn default() -> Self {
        Self {
            window_len: 1,
            grid: vec![ClassifierSetting::naive_bayes()],
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LocationPreviewOptions {
    pub k: usize,
    pub test_fraction: f64,
    pub seed: u64,
    /// Reservoir settings to select from; their seeds are replaced by `seed`.
    pub reservoir_grid: Vec<ReservoirConfig>,
    /// Observed fraction at which models are selected and assessed.
    pub eval_fraction: f64,
    pub curve_fractions: Vec<f64>,
    pub baseline: Option<BaselineOptions>,
}

impl Default for LocationPreviewOptions {
    fn default() -> Self {
        Self {
            k: DEFAULT_K,
            test_fraction: DEFAULT_TEST_FRACTION,
            seed: 0,
            reservoir_grid: vec![ReservoirConfig::default()],
            eval_fraction: 0.8,
            curve_fractions: vec![0.2, 0.4, 0.6, 0.8, 1.0],
            baseline: Some(BaselineOptions::default()),
        }
    }
}

#[derive(Debug)]
pub struct LocationPreviewOutcome {
    pub report: EvaluationReport,
    pub esn: EsnModel,
    pub baseline: Option<WindowClassifier>,
}

fn curve<F>(
    stations: &StationMap,
    test: &[&GpsTrajectory],
    fractions: &[f64],
    predict: F,
) -> Result<Vec<PrefixPoint>, EvalError>
where
    F: Fn(&GpsTrajectory, f64) -> Result<Outputs, LearnError>,
{
    fractions
        .iter()
        .map(|&f| {
            let mut preds = Vec::with_capacity(test.len());
            let mut targets = Vec::with_capacity(test.len());
            for tr in test {
                preds.push(predict(tr, f).map_err(|e| EvalError::Training {
                    context: format!("prefix curve at {f}"),
                    source: e,
                })?);
                targets.push(prefix_target(stations, tr, f));
            }
            let m = metrics_of(&preds, &targets, &[])?;
            Ok(PrefixPoint {
                fraction: f,
                accuracy: m.overall_accuracy.unwrap_or(0.0),
                mae_seconds: m.mae_seconds,
            })
        })
        .collect()
}

pub fn assess_location_preview(
    stations: &StationMap,
    trajectories: &[GpsTrajectory],
    opts: &LocationPreviewOptions,
) -> Result<LocationPreviewOutcome, EvalError> {
    if opts.reservoir_grid.is_empty() {
        return Err(EvalError::EmptyGrid);
    }
    if !(opts.eval_fraction > 0.0 && opts.eval_fraction <= 1.0)
        || opts
            .curve_fractions
            .iter()
            .any(|f| !(*f > 0.0 && *f <= 1.0))
    {
        return Err(EvalError::InvalidConfig(
            "observed fractions must lie in (0, 1]".into(),
        ));
    }
    for tr in trajectories {
        if destination_index(stations, tr).is_none() {
            return Err(EvalError::InvalidConfig(format!(
                "trajectory {} lacks a ground-truth destination on this station map",
                tr.trip_id
            )));
        }
    }
    let grid: Vec<ReservoirConfig> = opts
        .reservoir_grid
        .iter()
        .map(|c| ReservoirConfig {
            seed: opts.seed,
            ..c.clone()
        })
        .collect();
    let esn_family = EsnFamily {
        stations: stations.clone(),
        eval_fraction: opts.eval_fraction,
    };
    let unit = "all";
    let ea = final_assessment(
        trajectories,
        opts.test_fraction,
        &esn_family,
        &grid,
        opts.k,
        opts.seed,
    )
    .map_err(|e| e.in_unit(unit))?;
    let test: Vec<&GpsTrajectory> = ea
        .split
        .test_indices
        .iter()
        .map(|&i| &trajectories[i])
        .collect();
    let prefix_curve = curve(stations, &test, &opts.curve_fractions, |tr, f| {
        esn_family.predict_at(&ea.model, tr, f)
    })?;

    let mut units = vec![UnitReport {
        unit: unit.into(),
        n_samples: trajectories.len(),
        cv_indices: ea.split.cv_indices.clone(),
        test_indices: ea.split.test_indices.clone(),
        selections: vec![selection("trajectory", &ea)],
        final_test_metrics: ea.metrics.clone(),
    }];

    let mut baseline_model = None;
    let mut baseline_report = None;
    if let Some(b) = &opts.baseline {
        let wf = WindowFamily {
            stations: stations.clone(),
            window_len: b.window_len,
            eval_fraction: opts.eval_fraction,
        };
        let wa = final_assessment(
            trajectories,
            opts.test_fraction,
            &wf,
            &b.grid,
            opts.k,
            opts.seed,
        )
        .map_err(|e| e.in_unit("baseline"))?;
        debug_assert_eq!(wa.split, ea.split);
        let bcurve = curve(stations, &test, &opts.curve_fractions, |tr, f| {
            wf.predict_at(&wa.model, tr, f)
        })?;
        units[0].selections.push(selection("baseline", &wa));
        baseline_report = Some(BaselineReport {
            model_descriptor: format!("sliding window (length {}) static classifier", b.window_len),
            final_test_metrics: wa.metrics.clone(),
            prefix_curve: bcurve,
        });
        baseline_model = Some(wa.model);
    }

    let report = EvaluationReport {
        format: REPORT_FORMAT.into(),
        id: String::new(),
        feature: "location-preview".into(),
        model_descriptor: format!(
            "echo state network, prefixes observed at {}",
            opts.eval_fraction
        ),
        station_map_digest: stations.digest(),
        class_labels: names(&stations.ids()),
        k: opts.k,
        test_fraction: opts.test_fraction,
        seed: opts.seed,
        units,
        final_test_metrics: ea.metrics.clone(),
        prefix_curve,
        baseline: baseline_report,
        warnings: Vec::new(),
    }
    .seal();
    Ok(LocationPreviewOutcome {
        report,
        esn: ea.model,
        baseline: baseline_model,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datagen::{generate_trips, ForkScenario, GeneratorConfig};

    fn habit_data(seed: u64, users: usize, trips: usize) -> (StationMap, Vec<TripRecord>) {
        let map = StationMap::uniform_square(seed, 6, 3000.0, 20).unwrap();
        let mut c = GeneratorConfig::new(seed, map.clone());
        c.n_users = users;
        c.trips_per_user = trips;
        c.habit_strength = 1.0;
        c.duration_noise_sigma = 0.0;
        (map, generate_trips(&c).unwrap())
    }

    #[test]
    fn perfect_habits_are_learned() {
        let (map, trips) = habit_data(1, 3, 40);
        let opts = UserProfileOptions {
            classifier_grid: vec![ClassifierSetting::naive_bayes()],
            ..UserProfileOptions::default()
        };
        let out = assess_user_profile(&map, &trips, &opts).unwrap();
        assert_eq!(out.report.final_test_metrics.overall_accuracy, Some(1.0));
        assert!(out.report.final_test_metrics.mae_seconds.unwrap() < 1.0);
        assert_eq!(out.report.units.len(), 3);
        assert_eq!(out.user_models.len(), 3);
        out.report.validate().unwrap();
    }

    #[test]
    fn too_few_trips_names_the_user() {
        let (map, mut trips) = habit_data(2, 2, 30);
        trips.retain(|t| t.user_id.as_str() != "u0002" || t.leave_time < trips_cutoff());
        let err = assess_user_profile(&map, &trips, &UserProfileOptions::default()).unwrap_err();
        assert!(err.is_insufficient_data());
        assert_eq!(err.unit(), Some("u0002"));
    }

    fn trips_cutoff() -> i64 {
        crate::datagen::DEFAULT_START_TIME + 4 * 86_400
    }

    #[test]
    fn reports_are_reproducible() {
        let (map, trips) = habit_data(3, 2, 30);
        let opts = UserProfileOptions {
            classifier_grid: vec![ClassifierSetting::naive_bayes()],
            ..UserProfileOptions::default()
        };
        let a = assess_user_profile(&map, &trips, &opts).unwrap().report;
        let b = assess_user_profile(&map, &trips, &opts).unwrap().report;
        assert_eq!(
            serde_json::to_string(&a).unwrap(),
            serde_json::to_string(&b).unwrap()
        );
    }

    #[test]
    fn location_preview_small_run() {
        let (map, _, trajs) = ForkScenario::new(4, 40).generate().unwrap();
        let opts = LocationPreviewOptions {
            reservoir_grid: vec![ReservoirConfig {
                n_reservoir: 30,
                ..ReservoirConfig::default()
            }],
            ..LocationPreviewOptions::default()
        };
        let out = assess_location_preview(&map, &trajs, &opts).unwrap();
        assert_eq!(out.report.prefix_curve.len(), 5);
        assert_eq!(out.report.baseline.as_ref().unwrap().prefix_curve.len(), 5);
        assert_eq!(out.report.units[0].test_indices.len(), 8);
        out.report.validate().unwrap();
    }

    #[test]
    fn tampered_report_fails_validation() {
        let (map, trips) = habit_data(5, 1, 30);
        let opts = UserProfileOptions {
            classifier_grid: vec![ClassifierSetting::naive_bayes()],
            ..UserProfileOptions::default()
        };
        let mut r = assess_user_profile(&map, &trips, &opts).unwrap().report;
        r.final_test_metrics.overall_accuracy = Some(0.5);
        assert!(r.validate().is_err());
    }
}
