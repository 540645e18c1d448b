//! Stations, trips, trajectories and the live docked/in-transit state.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;

use rand::Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::rng;

/// Integer seconds since the Unix epoch, UTC.
pub type Timestamp = i64;

macro_rules! string_id {
    ($(#[$meta:meta])* $name:ident) => {
        $(#[$meta])*
        #[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
        #[serde(transparent)]
        pub struct $name(pub String);

        impl $name {
            pub fn new(s: impl Into<String>) -> Self {
                Self(s.into())
            }

            pub fn as_str(&self) -> &str {
                &self.0
            }
        }

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(&self.0)
            }
        }

        impl From<&str> for $name {
            fn from(s: &str) -> Self {
                Self(s.to_owned())
            }
        }
    };
}

string_id!(
    /// Opaque station identifier.
    StationId
);
string_id!(
    /// Opaque user identifier.
    UserId
);
string_id!(
    /// Opaque bike identifier.
    BikeId
);

/// Planar position in meters (local tangent plane).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn distance(&self, other: &Point) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }

    pub fn lerp(&self, other: &Point, f: f64) -> Point {
        Point::new(
            (1.0 - f) * self.x + f * other.x,
            (1.0 - f) * self.y + f * other.y,
        )
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DomainError {
    #[error("station map needs at least 2 stations, got {0}")]
    TooFewStations(usize),
    #[error("duplicate station id {0}")]
    DuplicateStation(StationId),
    #[error("station {0} has zero capacity")]
    ZeroCapacity(StationId),
    #[error("station {0} has a non-finite position")]
    BadPosition(StationId),
    #[error("unknown station {0}")]
    UnknownStation(StationId),
    #[error("return time {return_time} is not after leave time {leave_time}")]
    NonPositiveDuration {
        leave_time: Timestamp,
        return_time: Timestamp,
    },
    #[error("trajectory {0} has fewer than 2 points")]
    TooFewPoints(String),
    #[error("trajectory {trip_id} is not strictly ordered by time at point {index}")]
    Unordered { trip_id: String, index: usize },
    #[error("trajectory {0} has a non-finite coordinate")]
    NonFinitePoint(String),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Station {
    pub id: StationId,
    pub position: Point,
    pub capacity: u32,
}

#[derive(Serialize, Deserialize)]
struct StationMapRepr {
    stations: Vec<Station>,
}

/// Ordered, validated set of stations.
///
/// The order is significant: a station's position in the map is its class
/// index for every learner.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "StationMapRepr", into = "StationMapRepr")]
pub struct StationMap {
    stations: Vec<Station>,
    index: HashMap<StationId, usize>,
}

impl TryFrom<StationMapRepr> for StationMap {
    type Error = DomainError;

    fn try_from(repr: StationMapRepr) -> Result<Self, Self::Error> {
        StationMap::new(repr.stations)
    }
}

impl From<StationMap> for StationMapRepr {
    fn from(map: StationMap) -> Self {
        StationMapRepr {
            stations: map.stations,
        }
    }
}

impl StationMap {
    pub fn new(stations: Vec<Station>) -> Result<Self, DomainError> {
        if stations.len() < 2 {
            return Err(DomainError::TooFewStations(stations.len()));
        }
        let mut index = HashMap::with_capacity(stations.len());
        for (i, s) in stations.iter().enumerate() {
            if s.capacity == 0 {
                return Err(DomainError::ZeroCapacity(s.id.clone()));
            }
            if !s.position.x.is_finite() || !s.position.y.is_finite() {
                return Err(DomainError::BadPosition(s.id.clone()));
            }
            if index.insert(s.id.clone(), i).is_some() {
                return Err(DomainError::DuplicateStation(s.id.clone()));
            }
        }
        Ok(Self { stations, index })
    }

    /// `n` stations placed uniformly at random in a `side_m` × `side_m`
    /// square, ids `s01`, `s02`, ...
    pub fn uniform_square(
        seed: u64,
        n: usize,
        side_m: f64,
        capacity: u32,
    ) -> Result<Self, DomainError> {
        let mut rng = rng::keyed(seed, &[rng::stream::STATIONS]);
        let width = n.to_string().len().max(2);
        let stations = (0..n)
            .map(|i| Station {
                id: StationId(format!("s{:0width$}", i + 1, width = width)),
                position: Point::new(rng.random::<f64>() * side_m, rng.random::<f64>() * side_m),
                capacity,
            })
            .collect();
        Self::new(stations)
    }

    pub fn len(&self) -> usize {
        self.stations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.stations.is_empty()
    }

    pub fn stations(&self) -> &[Station] {
        &self.stations
    }

    pub fn get(&self, index: usize) -> &Station {
        &self.stations[index]
    }

    pub fn index_of(&self, id: &StationId) -> Option<usize> {
        self.index.get(id).copied()
    }

    pub fn require(&self, id: &StationId) -> Result<usize, DomainError> {
        self.index_of(id)
            .ok_or_else(|| DomainError::UnknownStation(id.clone()))
    }

    pub fn ids(&self) -> Vec<StationId> {
        self.stations.iter().map(|s| s.id.clone()).collect()
    }

    pub fn position(&self, id: &StationId) -> Option<Point> {
        self.index_of(id).map(|i| self.stations[i].position)
    }

    /// Hex SHA-256 of the canonical JSON form; used to tell station maps apart.
    pub fn digest(&self) -> String {
        let json = serde_json::to_vec(&StationMapRepr {
            stations: self.stations.clone(),
        })
        .expect("station map serializes");
        hex::encode(Sha256::digest(&json))
    }
}

/// One hire: who, from where and when, to where and when.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TripRecord {
    pub user_id: UserId,
    pub leave_station: StationId,
    pub leave_time: Timestamp,
    pub return_station: StationId,
    pub return_time: Timestamp,
}

impl TripRecord {
    pub fn duration(&self) -> i64 {
        self.return_time - self.leave_time
    }

    pub fn validate_times(&self) -> Result<(), DomainError> {
        if self.return_time <= self.leave_time {
            return Err(DomainError::NonPositiveDuration {
                leave_time: self.leave_time,
                return_time: self.return_time,
            });
        }
        Ok(())
    }

    pub fn validate(&self, stations: &StationMap) -> Result<(), DomainError> {
        self.validate_times()?;
        stations.require(&self.leave_station)?;
        stations.require(&self.return_station)?;
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TrajectoryPoint {
    pub t: Timestamp,
    pub pos: Point,
}

/// Where and when a journey ended. Present for training data only.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct GroundTruth {
    pub destination: StationId,
    pub arrival_time: Timestamp,
}

#[derive(Clone, Debug, PartialEq)]
pub struct GpsTrajectory {
    pub trip_id: String,
    pub points: Vec<TrajectoryPoint>,
    pub truth: Option<GroundTruth>,
}

impl GpsTrajectory {
    pub fn validate(&self) -> Result<(), DomainError> {
        if self.points.len() < 2 {
            return Err(DomainError::TooFewPoints(self.trip_id.clone()));
        }
        for (i, p) in self.points.iter().enumerate() {
            if !p.pos.x.is_finite() || !p.pos.y.is_finite() {
                return Err(DomainError::NonFinitePoint(self.trip_id.clone()));
            }
            if i > 0 && p.t <= self.points[i - 1].t {
                return Err(DomainError::Unordered {
                    trip_id: self.trip_id.clone(),
                    index: i,
                });
            }
        }
        Ok(())
    }

    /// The first `max(2, ceil(fraction · n))` points, without ground truth.
    pub fn prefix(&self, fraction: f64) -> GpsTrajectory {
        let n = self.points.len();
        let keep = ((fraction * n as f64).ceil() as usize).clamp(2.min(n), n);
        GpsTrajectory {
            trip_id: self.trip_id.clone(),
            points: self.points[..keep].to_vec(),
            truth: None,
        }
    }
}

/// A change to the fleet. `Install` places a new bike in a dock and is how an
/// event log declares its initial fleet.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Event {
    Install {
        bike: BikeId,
        station: StationId,
    },
    Pickup {
        bike: BikeId,
        user: UserId,
        station: StationId,
        time: Timestamp,
    },
    Return {
        bike: BikeId,
        station: StationId,
        time: Timestamp,
    },
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum StateError {
    #[error("bike {bike} is not docked at station {station}")]
    BikeNotDocked { bike: BikeId, station: StationId },
    #[error("bike {0} is not in transit")]
    BikeNotInTransit(BikeId),
    #[error("station {0} is full")]
    StationFull(StationId),
    #[error("unknown station {0}")]
    UnknownStation(StationId),
    #[error("bike {0} is already part of the fleet")]
    BikeAlreadyKnown(BikeId),
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Transit {
    pub user: UserId,
    pub departure_station: StationId,
    pub departure_time: Timestamp,
}

#[derive(Clone, Debug, PartialEq, Eq)]
struct Dock {
    capacity: u32,
    bikes: BTreeSet<BikeId>,
}

/// Which bikes are docked where, and who holds the rest.
///
/// Mutation goes through [`SystemState::apply`], which either applies an
/// event fully or rejects it leaving the state untouched.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SystemState {
    docks: BTreeMap<StationId, Dock>,
    in_transit: BTreeMap<BikeId, Transit>,
}

impl SystemState {
    /// Empty docks for every station of the map.
    pub fn new(stations: &StationMap) -> Self {
        let docks = stations
            .stations()
            .iter()
            .map(|s| {
                (
                    s.id.clone(),
                    Dock {
                        capacity: s.capacity,
                        bikes: BTreeSet::new(),
                    },
                )
            })
            .collect();
        Self {
            docks,
            in_transit: BTreeMap::new(),
        }
    }

    pub fn apply(&mut self, event: &Event) -> Result<(), StateError> {
        match event {
            Event::Install { bike, station } => {
                if self.in_transit.contains_key(bike) || self.docked_at(bike).is_some() {
                    return Err(StateError::BikeAlreadyKnown(bike.clone()));
                }
                let dock = self.dock_with_room(station)?;
                dock.bikes.insert(bike.clone());
            }
            Event::Pickup {
                bike,
                user,
                station,
                time,
            } => {
                let dock = self
                    .docks
                    .get_mut(station)
                    .ok_or_else(|| StateError::UnknownStation(station.clone()))?;
                if !dock.bikes.remove(bike) {
                    return Err(StateError::BikeNotDocked {
                        bike: bike.clone(),
                        station: station.clone(),
                    });
                }
                self.in_transit.insert(
                    bike.clone(),
                    Transit {
                        user: user.clone(),
                        departure_station: station.clone(),
                        departure_time: *time,
                    },
                );
            }
            Event::Return { bike, station, .. } => {
                if !self.docks.contains_key(station) {
                    return Err(StateError::UnknownStation(station.clone()));
                }
                if !self.in_transit.contains_key(bike) {
                    return Err(StateError::BikeNotInTransit(bike.clone()));
                }
                self.dock_with_room(station)?.bikes.insert(bike.clone());
                self.in_transit.remove(bike);
            }
        }
        Ok(())
    }

    fn dock_with_room(&mut self, station: &StationId) -> Result<&mut Dock, StateError> {
        let dock = self
            .docks
            .get_mut(station)
            .ok_or_else(|| StateError::UnknownStation(station.clone()))?;
        if dock.bikes.len() >= dock.capacity as usize {
            return Err(StateError::StationFull(station.clone()));
        }
        Ok(dock)
    }

    pub fn docked_at(&self, bike: &BikeId) -> Option<&StationId> {
        self.docks
            .iter()
            .find(|(_, d)| d.bikes.contains(bike))
            .map(|(s, _)| s)
    }

    pub fn docked(&self, station: &StationId) -> Option<&BTreeSet<BikeId>> {
        self.docks.get(station).map(|d| &d.bikes)
    }

    pub fn in_transit(&self) -> &BTreeMap<BikeId, Transit> {
        &self.in_transit
    }

    pub fn total_bikes(&self) -> usize {
        self.docks.values().map(|d| d.bikes.len()).sum::<usize>() + self.in_transit.len()
    }

    /// Checks every structural invariant; returns a description of the first
    /// violation.
    pub fn check_invariants(&self) -> Result<(), String> {
        let mut seen = BTreeSet::new();
        for (station, dock) in &self.docks {
            if dock.bikes.len() > dock.capacity as usize {
                return Err(format!("station {station} over capacity"));
            }
            for bike in &dock.bikes {
                if !seen.insert(bike) {
                    return Err(format!("bike {bike} docked twice"));
                }
            }
        }
        for bike in self.in_transit.keys() {
            if !seen.insert(bike) {
                return Err(format!("bike {bike} both docked and in transit"));
            }
        }
        Ok(())
    }
}

/// Bikes parked at each station.
pub fn all_bikes_now(state: &SystemState) -> BTreeMap<StationId, usize> {
    state
        .docks
        .iter()
        .map(|(s, d)| (s.clone(), d.bikes.len()))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn map(n: usize, capacity: u32) -> StationMap {
        StationMap::new(
            (0..n)
                .map(|i| Station {
                    id: StationId(format!("s{}", i + 1)),
                    position: Point::new(i as f64 * 100.0, 0.0),
                    capacity,
                })
                .collect(),
        )
        .unwrap()
    }

    fn install(state: &mut SystemState, bike: &str, station: &str) {
        state
            .apply(&Event::Install {
                bike: bike.into(),
                station: station.into(),
            })
            .unwrap();
    }

    #[test]
    fn station_map_validation() {
        let one = vec![Station {
            id: "a".into(),
            position: Point::new(0.0, 0.0),
            capacity: 1,
        }];
        assert_eq!(
            StationMap::new(one.clone()),
            Err(DomainError::TooFewStations(1))
        );
        let mut dup = one.clone();
        dup.push(one[0].clone());
        assert!(matches!(
            StationMap::new(dup),
            Err(DomainError::DuplicateStation(_))
        ));
        let mut zero = one.clone();
        zero.push(Station {
            id: "b".into(),
            position: Point::new(1.0, 1.0),
            capacity: 0,
        });
        assert!(matches!(
            StationMap::new(zero),
            Err(DomainError::ZeroCapacity(_))
        ));
    }

    #[test]
    fn station_map_json_is_validated() {
        let bad = r#"{"stations":[{"id":"a","position":{"x":0,"y":0},"capacity":3}]}"#;
        assert!(serde_json::from_str::<StationMap>(bad).is_err());
        let m = map(3, 4);
        let back: StationMap = serde_json::from_str(&serde_json::to_string(&m).unwrap()).unwrap();
        assert_eq!(back, m);
        assert_eq!(back.index_of(&"s3".into()), Some(2));
    }

    #[test]
    fn uniform_square_is_seeded() {
        let a = StationMap::uniform_square(3, 12, 3000.0, 10).unwrap();
        let b = StationMap::uniform_square(3, 12, 3000.0, 10).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.get(0).id.as_str(), "s01");
        assert!(a.stations().iter().all(
            |s| (0.0..3000.0).contains(&s.position.x) && (0.0..3000.0).contains(&s.position.y)
        ));
        assert_ne!(
            a.digest(),
            StationMap::uniform_square(4, 12, 3000.0, 10)
                .unwrap()
                .digest()
        );
    }

    #[test]
    fn trip_validation() {
        let m = map(2, 1);
        let mut t = TripRecord {
            user_id: "u".into(),
            leave_station: "s1".into(),
            leave_time: 100,
            return_station: "s1".into(),
            return_time: 160,
        };
        assert!(t.validate(&m).is_ok());
        t.return_time = 100;
        assert!(matches!(
            t.validate(&m),
            Err(DomainError::NonPositiveDuration { .. })
        ));
        t.return_time = 200;
        t.return_station = "zz".into();
        assert_eq!(
            t.validate(&m),
            Err(DomainError::UnknownStation("zz".into()))
        );
    }

    #[test]
    fn trajectory_validation_and_prefix() {
        let pts: Vec<_> = (0..10)
            .map(|i| TrajectoryPoint {
                t: i * 10,
                pos: Point::new(i as f64, 0.0),
            })
            .collect();
        let traj = GpsTrajectory {
            trip_id: "t".into(),
            points: pts.clone(),
            truth: Some(GroundTruth {
                destination: "s1".into(),
                arrival_time: 90,
            }),
        };
        assert!(traj.validate().is_ok());
        assert_eq!(traj.prefix(0.2).points.len(), 2);
        assert_eq!(traj.prefix(0.05).points.len(), 2);
        assert_eq!(traj.prefix(0.81).points.len(), 9);
        assert_eq!(traj.prefix(1.0).points.len(), 10);
        assert!(traj.prefix(1.0).truth.is_none());

        let mut bad = traj.clone();
        bad.points[3].t = bad.points[2].t;
        assert!(matches!(
            bad.validate(),
            Err(DomainError::Unordered { index: 3, .. })
        ));
        bad.points.truncate(1);
        assert!(matches!(bad.validate(), Err(DomainError::TooFewPoints(_))));
    }

    #[test]
    fn pickup_then_return() {
        let m = map(3, 5);
        let mut s = SystemState::new(&m);
        install(&mut s, "b1", "s1");
        s.apply(&Event::Pickup {
            bike: "b1".into(),
            user: "u1".into(),
            station: "s1".into(),
            time: 10,
        })
        .unwrap();
        assert_eq!(
            s.in_transit().get(&BikeId::from("b1")),
            Some(&Transit {
                user: "u1".into(),
                departure_station: "s1".into(),
                departure_time: 10
            })
        );
        assert_eq!(all_bikes_now(&s)[&StationId::from("s1")], 0);

        s.apply(&Event::Return {
            bike: "b1".into(),
            station: "s2".into(),
            time: 20,
        })
        .unwrap();
        assert!(s.in_transit().is_empty());
        assert!(s
            .docked(&"s2".into())
            .unwrap()
            .contains(&BikeId::from("b1")));
    }

    #[test]
    fn rejected_events_leave_state_untouched() {
        let m = map(2, 1);
        let mut s = SystemState::new(&m);
        install(&mut s, "b1", "s1");
        install(&mut s, "b2", "s2");
        let before = s.clone();

        let cases = [
            (
                Event::Return {
                    bike: "b9".into(),
                    station: "s2".into(),
                    time: 1,
                },
                StateError::BikeNotInTransit("b9".into()),
            ),
            (
                Event::Pickup {
                    bike: "b1".into(),
                    user: "u".into(),
                    station: "s2".into(),
                    time: 1,
                },
                StateError::BikeNotDocked {
                    bike: "b1".into(),
                    station: "s2".into(),
                },
            ),
            (
                Event::Pickup {
                    bike: "b1".into(),
                    user: "u".into(),
                    station: "nowhere".into(),
                    time: 1,
                },
                StateError::UnknownStation("nowhere".into()),
            ),
            (
                Event::Install {
                    bike: "b3".into(),
                    station: "s1".into(),
                },
                StateError::StationFull("s1".into()),
            ),
            (
                Event::Install {
                    bike: "b2".into(),
                    station: "s1".into(),
                },
                StateError::BikeAlreadyKnown("b2".into()),
            ),
        ];
        for (event, err) in cases {
            assert_eq!(s.apply(&event), Err(err));
            assert_eq!(s, before);
        }

        // Return into a full station.
        s.apply(&Event::Pickup {
            bike: "b1".into(),
            user: "u".into(),
            station: "s1".into(),
            time: 1,
        })
        .unwrap();
        let before = s.clone();
        assert_eq!(
            s.apply(&Event::Return {
                bike: "b1".into(),
                station: "s2".into(),
                time: 2
            }),
            Err(StateError::StationFull("s2".into()))
        );
        assert_eq!(s, before);
    }

    #[test]
    fn counts() {
        let m = map(3, 5);
        let mut s = SystemState::new(&m);
        assert!(all_bikes_now(&s).values().all(|&c| c == 0));
        for b in ["b1", "b2", "b3", "b4"] {
            install(&mut s, b, "s1");
        }
        s.apply(&Event::Pickup {
            bike: "b4".into(),
            user: "u".into(),
            station: "s1".into(),
            time: 0,
        })
        .unwrap();
        let c = all_bikes_now(&s);
        assert_eq!(c[&StationId::from("s1")], 3);
        assert_eq!(c[&StationId::from("s2")], 0);
        assert_eq!(c[&StationId::from("s3")], 0);
        assert_eq!(s.total_bikes(), 4);
        assert!(s.check_invariants().is_ok());
    }
}
