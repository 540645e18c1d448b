//! Synthetic bike-sharing usage.
//!
//! Each user has a habitual (origin, destination, hour-of-day) triple. A trip
//! follows the habit with probability `habit_strength`; otherwise its
//! endpoints and hour are uniform. All draws come from streams keyed by
//! `(seed, user, trip)`, so output is a pure function of the configuration.

mod formats;

pub use formats::{
    check_trips, parse_event_log, parse_event_log_lines, parse_trajectories, parse_trip_log,
    write_event_log, write_trajectories, write_trip_log, FormatError, EVENT_LOG_HEADER,
    TRIP_LOG_HEADER,
};

use std::cmp::Reverse;
use std::collections::BinaryHeap;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::domain::{
    BikeId, Event, GpsTrajectory, GroundTruth, Point, Station, StationId, StationMap, SystemState,
    Timestamp, TrajectoryPoint, TripRecord, UserId,
};
use crate::rng::{self, stream};

/// 2024-01-01T00:00:00Z, a Monday.
pub const DEFAULT_START_TIME: Timestamp = 1_704_067_200;
const DAY: i64 = 86_400;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GenerateError {
    #[error("invalid generator config: {0}")]
    InvalidConfig(String),
}

#[derive(Clone, Debug, PartialEq)]
pub struct GeneratorConfig {
    pub seed: u64,
    pub station_map: StationMap,
    pub n_users: usize,
    pub trips_per_user: usize,
    /// Probability that a trip repeats the user's habitual journey.
    pub habit_strength: f64,
    pub speed_mps: f64,
    pub gps_noise_std: f64,
    pub gps_sample_period: f64,
    /// Standard deviation of the log-normal duration factor.
    pub duration_noise_sigma: f64,
    /// Lateral waypoint offset as a fraction of the trip's straight-line
    /// length. Zero gives straight paths.
    pub detour_fraction: f64,
    pub start_time: Timestamp,
    /// Floor on trip durations; keeps same-station round trips positive.
    pub min_trip_seconds: i64,
}

impl GeneratorConfig {
    pub fn new(seed: u64, station_map: StationMap) -> Self {
        Self {
            seed,
            station_map,
            n_users: 20,
            trips_per_user: 100,
            habit_strength: 0.9,
            speed_mps: 4.0,
            gps_noise_std: 10.0,
            gps_sample_period: 15.0,
            duration_noise_sigma: 0.1,
            detour_fraction: 0.2,
            start_time: DEFAULT_START_TIME,
            min_trip_seconds: 60,
        }
    }

    pub fn validate(&self) -> Result<(), GenerateError> {
        let bad = |msg: &str| Err(GenerateError::InvalidConfig(msg.to_owned()));
        if self.n_users == 0 {
            return bad("n_users must be positive");
        }
        if self.trips_per_user == 0 {
            return bad("trips_per_user must be positive");
        }
        if !(0.0..=1.0).contains(&self.habit_strength) {
            return bad("habit_strength must lie in [0, 1]");
        }
        if !(self.speed_mps.is_finite() && self.speed_mps > 0.0) {
            return bad("speed_mps must be positive");
        }
        if !(self.gps_noise_std.is_finite() && self.gps_noise_std >= 0.0) {
            return bad("gps_noise_std must be nonnegative");
        }
        // Timestamps have one-second resolution.
        if !(self.gps_sample_period.is_finite() && self.gps_sample_period >= 1.0) {
            return bad("gps_sample_period must be at least 1 second");
        }
        if !(self.duration_noise_sigma.is_finite() && self.duration_noise_sigma >= 0.0) {
            return bad("duration_noise_sigma must be nonnegative");
        }
        if !(self.detour_fraction.is_finite() && self.detour_fraction >= 0.0) {
            return bad("detour_fraction must be nonnegative");
        }
        if self.min_trip_seconds < 1 {
            return bad("min_trip_seconds must be at least 1");
        }
        Ok(())
    }

    pub fn user_id(&self, index: usize) -> UserId {
        let width = self.n_users.to_string().len().max(4);
        UserId(format!("u{:0width$}", index + 1, width = width))
    }
}

/// A user's habitual journey.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Habit {
    pub origin: usize,
    pub destination: usize,
    pub hour: u32,
}

/// The habit drawn for user `index`. The destination differs from the origin.
pub fn user_habit(config: &GeneratorConfig, index: usize) -> Habit {
    let s = config.station_map.len();
    let mut rng = rng::keyed(config.seed, &[stream::HABIT, index as u64]);
    let origin = rng.random_range(0..s);
    let destination = (origin + rng.random_range(1..s)) % s;
    let hour = rng.random_range(0..24);
    Habit {
        origin,
        destination,
        hour,
    }
}

/// `n_users × trips_per_user` trips, user-major, one trip per user per day.
pub fn generate_trips(config: &GeneratorConfig) -> Result<Vec<TripRecord>, GenerateError> {
    config.validate()?;
    let mut trips = Vec::with_capacity(config.n_users * config.trips_per_user);
    for u in 0..config.n_users {
        let habit = user_habit(config, u);
        let user = config.user_id(u);
        for j in 0..config.trips_per_user {
            trips.push(generate_trip(config, u, &user, &habit, j));
        }
    }
    Ok(trips)
}

fn generate_trip(
    config: &GeneratorConfig,
    u: usize,
    user: &UserId,
    habit: &Habit,
    j: usize,
) -> TripRecord {
    let map = &config.station_map;
    let s = map.len();
    let mut rng = rng::keyed(config.seed, &[stream::TRIP, u as u64, j as u64]);
    let habitual = rng.random::<f64>() < config.habit_strength;
    let (origin, destination, hour) = if habitual {
        (habit.origin, habit.destination, habit.hour)
    } else {
        (
            rng.random_range(0..s),
            rng.random_range(0..s),
            rng.random_range(0..24u32),
        )
    };
    let offset: i64 = rng.random_range(0..3600);
    let leave_time = config.start_time + j as i64 * DAY + hour as i64 * 3600 + offset;

    let dist = map
        .get(origin)
        .position
        .distance(&map.get(destination).position);
    let z: f64 = StandardNormal.sample(&mut rng);
    let seconds = dist / config.speed_mps * (config.duration_noise_sigma * z).exp();
    let duration = (seconds.round() as i64).max(config.min_trip_seconds);

    TripRecord {
        user_id: user.clone(),
        leave_station: map.get(origin).id.clone(),
        leave_time,
        return_station: map.get(destination).id.clone(),
        return_time: leave_time + duration,
    }
}

fn user_key(user: &UserId) -> u64 {
    let h = Sha256::digest(user.as_str().as_bytes());
    u64::from_le_bytes(h[..8].try_into().expect("8 bytes"))
}

/// Trip id `<user>-<k>` where `k` counts that user's trips in list order.
fn trip_ids(trips: &[TripRecord]) -> Vec<(String, u64)> {
    let mut counts = std::collections::HashMap::<&UserId, u64>::new();
    trips
        .iter()
        .map(|t| {
            let k = counts.entry(&t.user_id).or_insert(0);
            let id = (format!("{}-{:04}", t.user_id, *k), *k);
            *k += 1;
            id
        })
        .collect()
}

/// One GPS trajectory per trip along a piecewise-linear path through 1–3
/// seeded waypoints.
pub fn generate_trajectories(
    config: &GeneratorConfig,
    trips: &[TripRecord],
) -> Result<Vec<GpsTrajectory>, GenerateError> {
    config.validate()?;
    let map = &config.station_map;
    let ids = trip_ids(trips);
    trips
        .iter()
        .zip(ids)
        .map(|(trip, (trip_id, k))| {
            trip.validate(map)
                .map_err(|e| GenerateError::InvalidConfig(format!("trip {trip_id}: {e}")))?;
            let from = map.position(&trip.leave_station).expect("validated");
            let to = map.position(&trip.return_station).expect("validated");
            let mut rng = rng::keyed(
                config.seed,
                &[stream::TRAJECTORY, user_key(&trip.user_id), k],
            );
            let path = waypoint_path(from, to, config.detour_fraction, &mut rng);
            let points = sample_path(
                &path,
                trip.leave_time,
                trip.return_time,
                config.gps_sample_period,
                config.gps_noise_std,
                &mut rng,
            );
            Ok(GpsTrajectory {
                trip_id,
                points,
                truth: Some(GroundTruth {
                    destination: trip.return_station.clone(),
                    arrival_time: trip.return_time,
                }),
            })
        })
        .collect()
}

fn waypoint_path(from: Point, to: Point, detour: f64, rng: &mut ChaCha8Rng) -> Vec<Point> {
    let n_way = rng.random_range(1..=3usize);
    let mut fracs: Vec<f64> = (0..n_way).map(|_| rng.random::<f64>()).collect();
    fracs.sort_by(f64::total_cmp);
    let dist = from.distance(&to);
    let mut path = Vec::with_capacity(n_way + 2);
    path.push(from);
    if dist > 1e-9 {
        let (nx, ny) = (-(to.y - from.y) / dist, (to.x - from.x) / dist);
        for f in fracs {
            let off = rng.random_range(-1.0..=1.0) * detour * dist;
            let base = from.lerp(&to, f);
            path.push(Point::new(base.x + nx * off, base.y + ny * off));
        }
    } else {
        // Round trip: wander around the station.
        for _ in fracs {
            let angle = rng.random::<f64>() * std::f64::consts::TAU;
            let radius = rng.random::<f64>() * 1500.0 * detour;
            path.push(Point::new(
                from.x + radius * angle.cos(),
                from.y + radius * angle.sin(),
            ));
        }
    }
    path.push(to);
    path
}

/// Samples positions along `path` traversed at constant speed between
/// `start` and `end`, every `period` seconds plus a final point at `end`.
fn sample_path(
    path: &[Point],
    start: Timestamp,
    end: Timestamp,
    period: f64,
    noise: f64,
    rng: &mut ChaCha8Rng,
) -> Vec<TrajectoryPoint> {
    let mut cumulative = Vec::with_capacity(path.len());
    let mut total = 0.0;
    cumulative.push(0.0);
    for w in path.windows(2) {
        total += w[0].distance(&w[1]);
        cumulative.push(total);
    }
    let duration = (end - start) as f64;
    let position_at = |t: Timestamp| -> Point {
        let target = total * (t - start) as f64 / duration;
        let seg = cumulative
            .windows(2)
            .position(|c| target <= c[1])
            .unwrap_or(path.len() - 2);
        let len = cumulative[seg + 1] - cumulative[seg];
        let f = if len > 0.0 {
            ((target - cumulative[seg]) / len).clamp(0.0, 1.0)
        } else {
            0.0
        };
        path[seg].lerp(&path[seg + 1], f)
    };

    let mut times = Vec::new();
    let mut k = 0u64;
    loop {
        let t = start + (k as f64 * period).round() as i64;
        if t >= end {
            break;
        }
        times.push(t);
        k += 1;
    }
    times.push(end);

    times
        .into_iter()
        .map(|t| {
            let mut pos = position_at(t);
            if noise > 0.0 {
                let dx: f64 = StandardNormal.sample(rng);
                let dy: f64 = StandardNormal.sample(rng);
                pos.x += noise * dx;
                pos.y += noise * dy;
            }
            TrajectoryPoint { t, pos }
        })
        .collect()
}

/// Journeys that share their first half and fork towards one of two
/// destinations. The destination is only visible in the second half of each
/// trajectory.
#[derive(Clone, Debug, PartialEq)]
pub struct ForkScenario {
    pub seed: u64,
    pub n_trajectories: usize,
    pub speed_mps: f64,
    pub gps_noise_std: f64,
    pub gps_sample_period: f64,
    /// Lateral distance of each branch endpoint from the shared axis.
    pub fork_spread_m: f64,
    pub start_time: Timestamp,
}

impl ForkScenario {
    pub fn new(seed: u64, n_trajectories: usize) -> Self {
        Self {
            seed,
            n_trajectories,
            speed_mps: 5.0,
            gps_noise_std: 0.0,
            gps_sample_period: 15.0,
            fork_spread_m: 800.0,
            start_time: DEFAULT_START_TIME,
        }
    }

    /// Origin `A`, branch destinations `B` and `C`, and an unused station `D`.
    pub fn station_map(&self) -> StationMap {
        let st = |id: &str, x: f64, y: f64| Station {
            id: StationId::new(id),
            position: Point::new(x, y),
            capacity: 20,
        };
        StationMap::new(vec![
            st("A", 0.0, 0.0),
            st("B", 3000.0, self.fork_spread_m),
            st("C", 3000.0, -self.fork_spread_m),
            st("D", 1500.0, 2500.0),
        ])
        .expect("fixed layout is valid")
    }

    pub fn generate(
        &self,
    ) -> Result<(StationMap, Vec<TripRecord>, Vec<GpsTrajectory>), GenerateError> {
        if self.n_trajectories == 0 {
            return Err(GenerateError::InvalidConfig(
                "n_trajectories must be positive".into(),
            ));
        }
        if !(self.speed_mps > 0.0 && self.gps_noise_std >= 0.0 && self.gps_sample_period >= 1.0) {
            return Err(GenerateError::InvalidConfig(
                "speed, noise and sample period out of range".into(),
            ));
        }
        let map = self.station_map();
        let junction = Point::new(1500.0, 0.0);
        let mut trips = Vec::with_capacity(self.n_trajectories);
        let mut trajs = Vec::with_capacity(self.n_trajectories);
        for i in 0..self.n_trajectories {
            let mut rng = rng::keyed(self.seed, &[stream::TRAJECTORY, 0xf0, i as u64]);
            let dest = if rng.random::<bool>() { 1 } else { 2 };
            let path = [map.get(0).position, junction, map.get(dest).position];
            let length: f64 = path.windows(2).map(|w| w[0].distance(&w[1])).sum();
            let z: f64 = StandardNormal.sample(&mut rng);
            let duration = (length / self.speed_mps * (0.1 * z).exp()).round() as i64;
            let leave = self.start_time + i as i64 * 1800;
            let trip = TripRecord {
                user_id: UserId(format!("f{:04}", i)),
                leave_station: map.get(0).id.clone(),
                leave_time: leave,
                return_station: map.get(dest).id.clone(),
                return_time: leave + duration.max(1),
            };
            let points = sample_path(
                &path,
                trip.leave_time,
                trip.return_time,
                self.gps_sample_period,
                self.gps_noise_std,
                &mut rng,
            );
            trajs.push(GpsTrajectory {
                trip_id: format!("fork-{:04}", i),
                points,
                truth: Some(GroundTruth {
                    destination: trip.return_station.clone(),
                    arrival_time: trip.return_time,
                }),
            });
            trips.push(trip);
        }
        Ok((map, trips, trajs))
    }
}

/// Replays trips as a fleet event log.
///
/// Every station starts half full (`install` rows). Trips are taken in
/// departure order; a trip whose origin has no bike is dropped, and a bike
/// whose destination is full is returned to the nearest station with room.
pub fn trips_to_events(
    trips: &[TripRecord],
    stations: &StationMap,
) -> Result<Vec<Event>, GenerateError> {
    type Pending = Reverse<(Timestamp, usize, BikeId, StationId)>;
    let mut state = SystemState::new(stations);
    let mut events = Vec::new();
    let mut n_bikes = 0;
    for s in stations.stations() {
        for _ in 0..s.capacity / 2 {
            n_bikes += 1;
            let bike = BikeId(format!("b{n_bikes:05}"));
            push(
                &mut state,
                &mut events,
                Event::Install {
                    bike,
                    station: s.id.clone(),
                },
            )?;
        }
    }
    let mut order: Vec<&TripRecord> = trips.iter().collect();
    order.sort_by_key(|t| t.leave_time);
    let mut returns: BinaryHeap<Pending> = BinaryHeap::new();
    let flush = |state: &mut SystemState,
                 events: &mut Vec<Event>,
                 returns: &mut BinaryHeap<Pending>,
                 until: Timestamp| {
        while returns.peek().is_some_and(|Reverse((t, ..))| *t <= until) {
            let Reverse((time, _, bike, wanted)) = returns.pop().expect("peeked");
            let station = nearest_with_room(state, stations, &wanted);
            push(
                state,
                events,
                Event::Return {
                    bike,
                    station,
                    time,
                },
            )?;
        }
        Ok::<_, GenerateError>(())
    };
    for (seq, trip) in order.into_iter().enumerate() {
        trip.validate(stations)
            .map_err(|e| GenerateError::InvalidConfig(e.to_string()))?;
        flush(&mut state, &mut events, &mut returns, trip.leave_time)?;
        let Some(bike) = state
            .docked(&trip.leave_station)
            .and_then(|b| b.first().cloned())
        else {
            continue;
        };
        let pickup = Event::Pickup {
            bike: bike.clone(),
            user: trip.user_id.clone(),
            station: trip.leave_station.clone(),
            time: trip.leave_time,
        };
        push(&mut state, &mut events, pickup)?;
        returns.push(Reverse((
            trip.return_time,
            seq,
            bike,
            trip.return_station.clone(),
        )));
    }
    flush(&mut state, &mut events, &mut returns, Timestamp::MAX)?;
    Ok(events)
}

fn push(state: &mut SystemState, events: &mut Vec<Event>, e: Event) -> Result<(), GenerateError> {
    state
        .apply(&e)
        .map_err(|err| GenerateError::InvalidConfig(err.to_string()))?;
    events.push(e);
    Ok(())
}

fn nearest_with_room(state: &SystemState, stations: &StationMap, wanted: &StationId) -> StationId {
    let origin = stations.position(wanted).expect("validated trip");
    stations
        .stations()
        .iter()
        .filter(|s| {
            state
                .docked(&s.id)
                .is_some_and(|b| b.len() < s.capacity as usize)
        })
        .min_by(|a, b| {
            origin
                .distance(&a.position)
                .total_cmp(&origin.distance(&b.position))
        })
        .map(|s| s.id.clone())
        .unwrap_or_else(|| wanted.clone())
}
