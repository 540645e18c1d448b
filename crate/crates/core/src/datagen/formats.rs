//! On-disk formats: the trip log CSV, newline-delimited JSON trajectories and
//! the fleet event log CSV. Parsing is strict; the first bad row aborts with
//! its 1-based line number.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::domain::{
    BikeId, Event, GpsTrajectory, GroundTruth, Point, StationId, StationMap, Timestamp,
    TrajectoryPoint, TripRecord, UserId,
};

pub const TRIP_LOG_HEADER: &str = "user_id,leave_station,leave_time,return_station,return_time";
pub const EVENT_LOG_HEADER: &str = "event,bike_id,user_id,station_id,time";

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum FormatError {
    #[error("line {line}: {reason}")]
    MalformedRow { line: usize, reason: String },
}

fn malformed(line: usize, reason: impl Into<String>) -> FormatError {
    FormatError::MalformedRow {
        line,
        reason: reason.into(),
    }
}

fn csv_rows(bytes: &[u8], header: &str) -> Result<Vec<(usize, csv::StringRecord)>, FormatError> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(false)
        .from_reader(bytes);
    let mut rows = Vec::new();
    let mut saw_header = false;
    for result in reader.records() {
        let record = result.map_err(|e| {
            let line = e.position().map(|p| p.line() as usize).unwrap_or(0);
            malformed(line, e.to_string())
        })?;
        let line = record.position().map(|p| p.line() as usize).unwrap_or(0);
        if !saw_header {
            let got: Vec<&str> = record.iter().collect();
            if got.join(",") != header {
                return Err(malformed(line, format!("expected header `{header}`")));
            }
            saw_header = true;
            continue;
        }
        rows.push((line, record));
    }
    if !saw_header {
        return Err(malformed(1, format!("missing header `{header}`")));
    }
    Ok(rows)
}

fn field_time(line: usize, name: &str, raw: &str) -> Result<Timestamp, FormatError> {
    raw.parse::<Timestamp>()
        .map_err(|_| malformed(line, format!("{name} `{raw}` is not an integer timestamp")))
}

fn field_id(line: usize, name: &str, raw: &str) -> Result<String, FormatError> {
    if raw.is_empty() {
        return Err(malformed(line, format!("{name} is empty")));
    }
    Ok(raw.to_owned())
}

pub fn parse_trip_log(bytes: &[u8]) -> Result<Vec<TripRecord>, FormatError> {
    csv_rows(bytes, TRIP_LOG_HEADER)?
        .into_iter()
        .map(|(line, r)| {
            let trip = TripRecord {
                user_id: UserId(field_id(line, "user_id", &r[0])?),
                leave_station: StationId(field_id(line, "leave_station", &r[1])?),
                leave_time: field_time(line, "leave_time", &r[2])?,
                return_station: StationId(field_id(line, "return_station", &r[3])?),
                return_time: field_time(line, "return_time", &r[4])?,
            };
            trip.validate_times()
                .map_err(|e| malformed(line, e.to_string()))?;
            Ok(trip)
        })
        .collect()
}

/// Checks station references of parsed trips; line numbers assume the trips
/// came from a trip log in the same order.
pub fn check_trips(trips: &[TripRecord], stations: &StationMap) -> Result<(), FormatError> {
    for (i, t) in trips.iter().enumerate() {
        t.validate(stations)
            .map_err(|e| malformed(i + 2, e.to_string()))?;
    }
    Ok(())
}

fn csv_writer() -> csv::Writer<Vec<u8>> {
    csv::WriterBuilder::new()
        .has_headers(false)
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(Vec::new())
}

pub fn write_trip_log(trips: &[TripRecord]) -> Vec<u8> {
    let mut w = csv_writer();
    w.write_record(TRIP_LOG_HEADER.split(','))
        .expect("in-memory write");
    for t in trips {
        w.write_record([
            t.user_id.as_str(),
            t.leave_station.as_str(),
            &t.leave_time.to_string(),
            t.return_station.as_str(),
            &t.return_time.to_string(),
        ])
        .expect("in-memory write");
    }
    w.into_inner().expect("in-memory flush")
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct TrajectoryLine {
    trip_id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    destination: Option<StationId>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    arrival_time: Option<Timestamp>,
    points: Vec<(Timestamp, f64, f64)>,
}

pub fn parse_trajectories(bytes: &[u8]) -> Result<Vec<GpsTrajectory>, FormatError> {
    let text = std::str::from_utf8(bytes).map_err(|e| malformed(1, e.to_string()))?;
    let body = text.strip_suffix('\n').unwrap_or(text);
    if body.is_empty() {
        return Ok(Vec::new());
    }
    body.split('\n')
        .enumerate()
        .map(|(i, raw)| {
            let line = i + 1;
            let rec: TrajectoryLine =
                serde_json::from_str(raw).map_err(|e| malformed(line, e.to_string()))?;
            let truth = match (rec.destination, rec.arrival_time) {
                (Some(destination), Some(arrival_time)) => Some(GroundTruth {
                    destination,
                    arrival_time,
                }),
                (None, None) => None,
                _ => {
                    return Err(malformed(
                        line,
                        "destination and arrival_time must be both present or both absent",
                    ))
                }
            };
            let traj = GpsTrajectory {
                trip_id: rec.trip_id,
                points: rec
                    .points
                    .into_iter()
                    .map(|(t, x, y)| TrajectoryPoint {
                        t,
                        pos: Point::new(x, y),
                    })
                    .collect(),
                truth,
            };
            traj.validate()
                .map_err(|e| malformed(line, e.to_string()))?;
            Ok(traj)
        })
        .collect()
}

pub fn write_trajectories(trajectories: &[GpsTrajectory]) -> Vec<u8> {
    let mut out = Vec::new();
    for tr in trajectories {
        let rec = TrajectoryLine {
            trip_id: tr.trip_id.clone(),
            destination: tr.truth.as_ref().map(|g| g.destination.clone()),
            arrival_time: tr.truth.as_ref().map(|g| g.arrival_time),
            points: tr.points.iter().map(|p| (p.t, p.pos.x, p.pos.y)).collect(),
        };
        serde_json::to_writer(&mut out, &rec).expect("in-memory write");
        out.push(b'\n');
    }
    out
}

/// Event log rows: `install,<bike>,,<station>,`, `pickup,<bike>,<user>,<station>,<time>`,
/// `return,<bike>,,<station>,<time>`.
pub fn parse_event_log(bytes: &[u8]) -> Result<Vec<Event>, FormatError> {
    Ok(parse_event_log_lines(bytes)?
        .into_iter()
        .map(|(_, e)| e)
        .collect())
}

/// Like [`parse_event_log`], keeping each event's 1-based line number.
pub fn parse_event_log_lines(bytes: &[u8]) -> Result<Vec<(usize, Event)>, FormatError> {
    csv_rows(bytes, EVENT_LOG_HEADER)?
        .into_iter()
        .map(|(line, r)| {
            let bike = BikeId(field_id(line, "bike_id", &r[1])?);
            let station = StationId(field_id(line, "station_id", &r[3])?);
            let event = match &r[0] {
                "install" => Event::Install { bike, station },
                "pickup" => Event::Pickup {
                    bike,
                    user: UserId(field_id(line, "user_id", &r[2])?),
                    station,
                    time: field_time(line, "time", &r[4])?,
                },
                "return" => Event::Return {
                    bike,
                    station,
                    time: field_time(line, "time", &r[4])?,
                },
                other => return Err(malformed(line, format!("unknown event kind `{other}`"))),
            };
            Ok((line, event))
        })
        .collect()
}

pub fn write_event_log(events: &[Event]) -> Vec<u8> {
    let mut w = csv_writer();
    w.write_record(EVENT_LOG_HEADER.split(','))
        .expect("in-memory write");
    for e in events {
        let row: [String; 5] = match e {
            Event::Install { bike, station } => [
                "install".into(),
                bike.to_string(),
                String::new(),
                station.to_string(),
                String::new(),
            ],
            Event::Pickup {
                bike,
                user,
                station,
                time,
            } => [
                "pickup".into(),
                bike.to_string(),
                user.to_string(),
                station.to_string(),
                time.to_string(),
            ],
            Event::Return {
                bike,
                station,
                time,
            } => [
                "return".into(),
                bike.to_string(),
                String::new(),
                station.to_string(),
                time.to_string(),
            ],
        };
        w.write_record(&row).expect("in-memory write");
    }
    w.into_inner().expect("in-memory flush")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datagen::{generate_trajectories, generate_trips, GeneratorConfig};

    #[test]
    fn two_rows() {
        let csv = "user_id,leave_station,leave_time,return_station,return_time\n\
                   u1,s1,100,s2,400\n\
                   u2,s2,500,s2,900\n";
        let trips = parse_trip_log(csv.as_bytes()).unwrap();
        assert_eq!(trips.len(), 2);
        assert_eq!(trips[1].duration(), 400);
        assert_eq!(write_trip_log(&trips), csv.as_bytes());
    }

    #[test]
    fn malformed_rows_are_rejected() {
        let head = "user_id,leave_station,leave_time,return_station,return_time\n";
        let cases = [
            (format!("{head}u1,s1,100,s2,100\n"), 2),
            (format!("{head}u1,s1,100,s2,200\nu1,s1,1x,s2,200\n"), 3),
            (format!("{head}u1,s1,100,s2\n"), 2),
            (format!("{head}u1,,100,s2,300\n"), 2),
            (
                "user,leave_station,leave_time,return_station,return_time\n".to_owned(),
                1,
            ),
            (String::new(), 1),
        ];
        for (text, line) in cases {
            match parse_trip_log(text.as_bytes()) {
                Err(FormatError::MalformedRow { line: l, .. }) => assert_eq!(l, line, "{text}"),
                other => panic!("expected MalformedRow for {text:?}, got {other:?}"),
            }
        }
    }

    #[test]
    fn generator_output_round_trips() {
        let map = crate::domain::StationMap::uniform_square(5, 6, 3000.0, 10).unwrap();
        let mut c = GeneratorConfig::new(5, map.clone());
        c.n_users = 4;
        c.trips_per_user = 12;
        let trips = generate_trips(&c).unwrap();
        let csv = write_trip_log(&trips);
        let parsed = parse_trip_log(&csv).unwrap();
        assert_eq!(parsed, trips);
        assert_eq!(write_trip_log(&parsed), csv);
        check_trips(&parsed, &map).unwrap();

        let trajs = generate_trajectories(&c, &trips).unwrap();
        let text = write_trajectories(&trajs);
        let back = parse_trajectories(&text).unwrap();
        assert_eq!(back, trajs);
        assert_eq!(write_trajectories(&back), text);
    }

    #[test]
    fn trajectory_lines_are_strict() {
        let ok = r#"{"trip_id":"a","points":[[0,0.0,0.0],[5,1.0,2.0]]}"#;
        let parsed = parse_trajectories(ok.as_bytes()).unwrap();
        assert!(parsed[0].truth.is_none());

        let half = r#"{"trip_id":"a","destination":"s1","points":[[0,0.0,0.0],[5,1.0,2.0]]}"#;
        let unordered = r#"{"trip_id":"a","points":[[5,0.0,0.0],[5,1.0,2.0]]}"#;
        let short = r#"{"trip_id":"a","points":[[5,0.0,0.0]]}"#;
        let extra = r#"{"trip_id":"a","colour":1,"points":[[0,0.0,0.0],[5,1.0,2.0]]}"#;
        for bad in [half, unordered, short, extra] {
            let text = format!("{ok}\n{bad}\n");
            assert!(matches!(
                parse_trajectories(text.as_bytes()),
                Err(FormatError::MalformedRow { line: 2, .. })
            ));
        }
    }

    #[test]
    fn event_log() {
        let text = "event,bike_id,user_id,station_id,time\n\
                    install,b1,,s1,\n\
                    pickup,b1,u1,s1,10\n\
                    return,b1,,s2,20\n";
        let events = parse_event_log(text.as_bytes()).unwrap();
        assert_eq!(events.len(), 3);
        assert_eq!(write_event_log(&events), text.as_bytes());

        let bad = "event,bike_id,user_id,station_id,time\nsteal,b1,,s1,\n";
        assert!(matches!(
            parse_event_log(bad.as_bytes()),
            Err(FormatError::MalformedRow { line: 2, .. })
        ));
        let bad = "event,bike_id,user_id,station_id,time\npickup,b1,,s1,10\n";
        assert!(parse_event_log(bad.as_bytes()).is_err());
    }
}
