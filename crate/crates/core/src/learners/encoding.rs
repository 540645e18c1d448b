//! Static input encoding for `UserProfile`.
//!
//! Layout: one-of-S departure station indicator, then the (sin, cos) of the
//! departure time-of-day over a 24 h cycle, then a one-of-7 day-of-week
//! indicator (Monday first).

use std::f64::consts::TAU;

use serde::{Deserialize, Serialize};

use super::{FeatureKind, LearnError};
use crate::domain::{StationId, StationMap, Timestamp, TripRecord};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct StaticInput(pub Vec<f64>);

impl StaticInput {
    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }
}

pub fn static_dim(n_stations: usize) -> usize {
    n_stations + 2 + 7
}

pub fn static_schema(n_stations: usize) -> Vec<FeatureKind> {
    let mut schema = vec![FeatureKind::Indicator; n_stations];
    schema.extend([FeatureKind::Continuous; 2]);
    schema.extend([FeatureKind::Indicator; 7]);
    schema
}

/// Monday = 0. The epoch fell on a Thursday.
pub fn day_of_week(t: Timestamp) -> usize {
    (t.div_euclid(86_400) + 3).rem_euclid(7) as usize
}

pub fn encode_departure(
    station: &StationId,
    time: Timestamp,
    stations: &StationMap,
) -> Result<StaticInput, LearnError> {
    let s = stations.len();
    let idx = stations
        .index_of(station)
        .ok_or_else(|| LearnError::UnknownStation(station.clone()))?;
    let mut v = vec![0.0; static_dim(s)];
    v[idx] = 1.0;
    let angle = TAU * time.rem_euclid(86_400) as f64 / 86_400.0;
    v[s] = angle.sin();
    v[s + 1] = angle.cos();
    v[s + 2 + day_of_week(time)] = 1.0;
    Ok(StaticInput(v))
}

/// Encodes only the departure half of a trip; return fields are targets.
pub fn encode_trip_input(
    trip: &TripRecord,
    stations: &StationMap,
) -> Result<StaticInput, LearnError> {
    encode_departure(&trip.leave_station, trip.leave_time, stations)
}
