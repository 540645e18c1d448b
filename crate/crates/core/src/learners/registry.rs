//! Per-user model registry with threshold-driven retraining.
//!
//! New trips land in the user's pending buffer. A user's first models are
//! trained once `min_bootstrap` trips are buffered; after that, both models
//! are retrained on the full history as soon as `retrain_threshold` new trips
//! have accumulated. Users without models are served by a global model
//! trained on every user's trips.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{
    encode_departure, encode_trip_input, static_schema, train_classifier, train_regressor,
    ClassifierModel, ClassifierSetting, DestinationPrediction, LearnError, RegressorModel,
    StaticInput,
};
use crate::domain::{StationId, StationMap, Timestamp, TripRecord, UserId};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RegistryConfig {
    pub retrain_threshold: usize,
    pub min_bootstrap: usize,
    pub classifier: ClassifierSetting,
    pub ridge_lambda: f64,
}

impl Default for RegistryConfig {
    fn default() -> Self {
        Self {
            retrain_threshold: 50,
            min_bootstrap: 20,
            classifier: ClassifierSetting::naive_bayes(),
            ridge_lambda: 1.0,
        }
    }
}

impl RegistryConfig {
    pub fn validate(&self) -> Result<(), LearnError> {
        if self.retrain_threshold == 0 {
            return Err(LearnError::InvalidConfig(
                "retrain_threshold must be positive".into(),
            ));
        }
        if self.min_bootstrap < 2 || self.min_bootstrap > self.retrain_threshold {
            return Err(LearnError::InvalidConfig(
                "min_bootstrap must lie in [2, retrain_threshold]".into(),
            ));
        }
        if !(self.ridge_lambda > 0.0) {
            return Err(LearnError::InvalidConfig(
                "ridge_lambda must be positive for unattended retraining".into(),
            ));
        }
        Ok(())
    }
}

/// The two separately trained models serving one user (or the global
/// fallback).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct UserModels {
    pub classifier: ClassifierModel,
    pub regressor: RegressorModel,
}

impl UserModels {
    pub fn train(
        trips: &[TripRecord],
        stations: &StationMap,
        classifier: &ClassifierSetting,
        ridge_lambda: f64,
    ) -> Result<Self, LearnError> {
        let mut class_data = Vec::with_capacity(trips.len());
        let mut duration_data = Vec::with_capacity(trips.len());
        for t in trips {
            let x = encode_trip_input(t, stations)?;
            let y = stations
                .index_of(&t.return_station)
                .ok_or_else(|| LearnError::UnknownStation(t.return_station.clone()))?;
            duration_data.push((x.clone(), t.duration() as f64));
            class_data.push((x, y));
        }
        Ok(Self {
            classifier: train_classifier(
                &class_data,
                &static_schema(stations.len()),
                &stations.ids(),
                classifier,
            )?,
            regressor: train_regressor(&duration_data, ridge_lambda)?,
        })
    }

    pub fn predict(
        &self,
        x: &StaticInput,
        leave_time: Timestamp,
    ) -> Result<TripPrediction, LearnError> {
        let destination = self.classifier.predict(x.as_slice())?;
        let duration = self.regressor.predict(x.as_slice())?.max(0.0);
        Ok(TripPrediction {
            expected_duration: duration,
            expected_return_time: leave_time + duration.round() as Timestamp,
            destination,
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TripPrediction {
    pub destination: DestinationPrediction,
    pub expected_duration: f64,
    pub expected_return_time: Timestamp,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum ModelSource {
    User,
    Global,
}

#[derive(Clone, Debug, PartialEq)]
pub enum IngestOutcome {
    Buffered,
    Trained,
    /// Training failed; previous models are kept and the trips stay in history.
    TrainingFailed(LearnError),
}

#[derive(Clone, Debug, Default)]
struct UserEntry {
    models: Option<UserModels>,
    history: Vec<TripRecord>,
    pending: Vec<TripRecord>,
    n_trained_on: usize,
}

#[derive(Clone, Debug)]
pub struct UserModelRegistry {
    config: RegistryConfig,
    stations: StationMap,
    users: BTreeMap<UserId, UserEntry>,
    global: Option<UserModels>,
    global_trained_on: usize,
    total_ingested: usize,
}

impl UserModelRegistry {
    pub fn new(stations: StationMap, config: RegistryConfig) -> Result<Self, LearnError> {
        config.validate()?;
        Ok(Self {
            config,
            stations,
            users: BTreeMap::new(),
            global: None,
            global_trained_on: 0,
            total_ingested: 0,
        })
    }

    pub fn config(&self) -> &RegistryConfig {
        &self.config
    }

    /// Buffers `trip` and retrains the user's models when due. Only trips
    /// referencing unknown stations or with non-positive duration are
    /// rejected.
    pub fn ingest(&mut self, trip: TripRecord) -> Result<IngestOutcome, LearnError> {
        trip.validate(&self.stations).map_err(|e| match e {
            crate::domain::DomainError::UnknownStation(s) => LearnError::UnknownStation(s),
            other => LearnError::InsufficientData(other.to_string()),
        })?;
        self.total_ingested += 1;
        let entry = self.users.entry(trip.user_id.clone()).or_default();
        entry.pending.push(trip);

        let due = if entry.models.is_none() {
            entry.pending.len() >= self.config.min_bootstrap
        } else {
            entry.pending.len() >= self.config.retrain_threshold
        };
        let outcome = if due {
            let mut all = std::mem::take(&mut entry.history);
            all.append(&mut entry.pending);
            let result = UserModels::train(
                &all,
                &self.stations,
                &self.config.classifier,
                self.config.ridge_lambda,
            );
            let n = all.len();
            entry.history = all;
            match result {
                Ok(models) => {
                    entry.models = Some(models);
                    entry.n_trained_on = n;
                    IngestOutcome::Trained
                }
                Err(e) => IngestOutcome::TrainingFailed(e),
            }
        } else {
            IngestOutcome::Buffered
        };
        self.maybe_refresh_global();
        Ok(outcome)
    }

    fn maybe_refresh_global(&mut self) {
        let fresh = self.total_ingested - self.global_trained_on;
        let due = if self.global.is_none() {
            self.total_ingested >= self.config.min_bootstrap
        } else {
            fresh >= self.config.retrain_threshold
        };
        if !due {
            return;
        }
        let all: Vec<TripRecord> = self
            .users
            .values()
            .flat_map(|e| e.history.iter().chain(&e.pending).cloned())
            .collect();
        if let Ok(models) = UserModels::train(
            &all,
            &self.stations,
            &self.config.classifier,
            self.config.ridge_lambda,
        ) {
            self.global = Some(models);
        }
        self.global_trained_on = self.total_ingested;
    }

    pub fn n_trained_on(&self, user: &UserId) -> usize {
        self.users.get(user).map_or(0, |e| e.n_trained_on)
    }

    pub fn pending(&self, user: &UserId) -> usize {
        self.users.get(user).map_or(0, |e| e.pending.len())
    }

    pub fn has_user_model(&self, user: &UserId) -> bool {
        self.users.get(user).is_some_and(|e| e.models.is_some())
    }

    pub fn user_models(&self, user: &UserId) -> Option<&UserModels> {
        self.users.get(user).and_then(|e| e.models.as_ref())
    }

    pub fn global_models(&self) -> Option<&UserModels> {
        self.global.as_ref()
    }

    /// Predicts with the user's own models, falling back to the global ones.
    pub fn predict(
        &self,
        user: &UserId,
        leave_station: &StationId,
        leave_time: Timestamp,
    ) -> Result<(ModelSource, TripPrediction), LearnError> {
        let x = encode_departure(leave_station, leave_time, &self.stations)?;
        if let Some(m) = self.user_models(user) {
            return Ok((ModelSource::User, m.predict(&x, leave_time)?));
        }
        let g = self.global.as_ref().ok_or(LearnError::UntrainedModel)?;
        Ok((ModelSource::Global, g.predict(&x, leave_time)?))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::{Point, Station};

    fn stations() -> StationMap {
        StationMap::new(
            (0..4)
                .map(|i| Station {
                    id: StationId(format!("s{i}")),
                    position: Point::new(i as f64 * 500.0, 0.0),
                    capacity: 10,
                })
                .collect(),
        )
        .unwrap()
    }

    fn trip(user: &str, j: i64, dest: &str) -> TripRecord {
        let leave = 1_704_067_200 + j * 86_400 + 8 * 3600;
        TripRecord {
            user_id: user.into(),
            leave_station: "s0".into(),
            leave_time: leave,
            return_station: dest.into(),
            return_time: leave + 600,
        }
    }

    fn registry(threshold: usize, bootstrap: usize) -> UserModelRegistry {
        UserModelRegistry::new(
            stations(),
            RegistryConfig {
                retrain_threshold: threshold,
                min_bootstrap: bootstrap,
                ..RegistryConfig::default()
            },
        )
        .unwrap()
    }

    #[test]
    fn retrain_fires_at_threshold() {
        let mut r = registry(50, 20);
        let u: UserId = "alice".into();
        for j in 0..20 {
            let out = r.ingest(trip("alice", j, "s2")).unwrap();
            assert_eq!(out == IngestOutcome::Trained, j == 19);
        }
        assert_eq!(r.n_trained_on(&u), 20);
        for j in 20..69 {
            assert_eq!(
                r.ingest(trip("alice", j, "s2")).unwrap(),
                IngestOutcome::Buffered
            );
        }
        assert_eq!(r.pending(&u), 49);
        assert_eq!(
            r.ingest(trip("alice", 69, "s2")).unwrap(),
            IngestOutcome::Trained
        );
        assert_eq!(r.pending(&u), 0);
        assert_eq!(r.n_trained_on(&u), 70);
    }

    #[test]
    fn pending_stays_below_threshold() {
        let mut r = registry(7, 3);
        for j in 0..100 {
            r.ingest(trip("bob", j, "s1")).unwrap();
            assert!(r.pending(&"bob".into()) < 7);
        }
    }

    #[test]
    fn new_users_fall_back_to_global() {
        let mut r = registry(50, 20);
        for j in 0..30 {
            r.ingest(trip("carol", j, "s3")).unwrap();
        }
        for j in 0..5 {
            r.ingest(trip("dave", j, "s1")).unwrap();
        }
        assert!(!r.has_user_model(&"dave".into()));
        let (source, p) = r
            .predict(&"dave".into(), &"s0".into(), 1_704_067_200 + 8 * 3600)
            .unwrap();
        assert_eq!(source, ModelSource::Global);
        assert_eq!(p.destination.destination, StationId::from("s3"));

        let (source, p) = r
            .predict(&"carol".into(), &"s0".into(), 1_704_067_200 + 8 * 3600)
            .unwrap();
        assert_eq!(source, ModelSource::User);
        assert!((p.expected_duration - 600.0).abs() < 1e-6);
    }

    #[test]
    fn nothing_trained_yet() {
        let mut r = registry(50, 20);
        r.ingest(trip("erin", 0, "s1")).unwrap();
        assert_eq!(
            r.predict(&"erin".into(), &"s0".into(), 0).unwrap_err(),
            LearnError::UntrainedModel
        );
    }

    #[test]
    fn invalid_trip_and_config() {
        let mut r = registry(50, 20);
        assert!(r.ingest(trip("erin", 0, "nowhere")).is_err());
        assert!(UserModelRegistry::new(
            stations(),
            RegistryConfig {
                retrain_threshold: 10,
                min_bootstrap: 20,
                ..RegistryConfig::default()
            }
        )
        .is_err());
    }
}
