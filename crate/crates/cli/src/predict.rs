use std::path::{Path, PathBuf};

use bss_core::learners::registry::ModelSource;
use bss_core::learners::{encode_departure, LearnError};
use bss_core::persist::{load_model, ModelPayload, PersistError};
use bss_core::{StationId, StationMap, Timestamp, UserId};
use clap::{Args, Subcommand};
use serde::Serialize;

use crate::error::{CliError, CliResult};
use crate::io::{print_stdout, read, to_json, Outputs};
use crate::train::load_trajectories;

pub const PREDICTION_FILE: &str = "prediction.json";

#[derive(Subcommand, Debug)]
pub enum PredictCommand {
    /// Destination and return time of a bike just taken out by a user.
    Userprofile(UserProfileQuery),
    /// Destination and arrival time of bikes from their partial GPS tracks.
    Locationpreview(LocationPreviewQuery),
}

#[derive(Args, Debug, Serialize)]
pub struct UserProfileQuery {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub user: String,
    /// Station the bike was taken from.
    #[arg(long)]
    pub station: String,
    /// Departure time, Unix seconds.
    #[arg(long)]
    pub time: Timestamp,
    /// Write prediction.json and a manifest here instead of printing.
    #[arg(long)]
    #[serde(skip)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug, Serialize)]
pub struct LocationPreviewQuery {
    #[arg(long)]
    pub model: PathBuf,
    /// Trajectory file (one JSON object per line); each is one bike in transit.
    #[arg(long)]
    pub prefix: PathBuf,
    /// Use only this leading fraction of each trajectory.
    #[arg(long)]
    pub fraction: Option<f64>,
    /// Also report the probability that at least one of the bikes arrives here.
    #[arg(long)]
    pub station: Option<String>,
    #[arg(long)]
    #[serde(skip)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Serialize)]
pub struct StationProbability {
    pub station: StationId,
    pub probability: f64,
}

#[derive(Debug, Serialize)]
pub struct UserProfileAnswer {
    pub feature: &'static str,
    pub user: UserId,
    pub leave_station: StationId,
    pub leave_time: Timestamp,
    pub model_source: ModelSource,
    pub destination: StationId,
    pub probabilities: Vec<StationProbability>,
    pub expected_duration_seconds: f64,
    pub expected_return_time: Timestamp,
}

#[derive(Debug, Serialize)]
pub struct BikeAnswer {
    pub trip_id: String,
    pub points_used: usize,
    pub destination: StationId,
    pub probabilities: Vec<StationProbability>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub expected_arrival_time: Option<Timestamp>,
}

#[derive(Debug, Serialize)]
pub struct ArrivalAnswer {
    pub station: StationId,
    /// 1 - prod(1 - p_i) over the bikes, treating them as independent.
    pub probability_any: f64,
    /// Earliest predicted arrival among bikes whose most likely destination
    /// is this station.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub earliest_expected_arrival: Option<Timestamp>,
}

#[derive(Debug, Serialize)]
pub struct LocationPreviewAnswer {
    pub feature: &'static str,
    pub model_type: &'static str,
    pub bikes: Vec<BikeAnswer>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub arrival: Option<ArrivalAnswer>,
}

fn load(path: &Path, out: &mut Outputs) -> CliResult<ModelPayload> {
    let bytes = read(path)?;
    out.input("model", &bytes);
    load_model(&bytes).map_err(|e| match e {
        PersistError::Json(j) if j.is_syntax() || j.is_eof() || j.is_io() => {
            CliError::Input(format!("{}: {j}", path.display()))
        }
        other => CliError::Mismatch(format!("{}: {other}", path.display())),
    })
}

fn learn_error(e: LearnError) -> CliError {
    match e {
        LearnError::UnknownStation(_)
        | LearnError::DimensionMismatch { .. }
        | LearnError::UntrainedModel => CliError::Mismatch(e.to_string()),
        other => CliError::Input(other.to_string()),
    }
}

fn labelled(stations: &[StationId], p: &[f64]) -> Vec<StationProbability> {
    stations
        .iter()
        .zip(p)
        .map(|(s, &probability)| StationProbability {
            station: s.clone(),
            probability,
        })
        .collect()
}

fn station_in(map: &StationMap, raw: &str) -> CliResult<(usize, StationId)> {
    let id = StationId::new(raw);
    map.index_of(&id).map(|i| (i, id)).ok_or_else(|| {
        CliError::Mismatch(format!("station {raw} is not in the model's station map"))
    })
}

fn emit<T: Serialize, C: Serialize>(
    answer: &T,
    out: Outputs,
    dir: &Option<PathBuf>,
    config: &C,
) -> CliResult<()> {
    let bytes = to_json(answer);
    match dir {
        Some(_) => {
            let mut out = out;
            out.add(PREDICTION_FILE, bytes);
            out.write("predict", None, config)
        }
        None => {
            print_stdout(&bytes);
            Ok(())
        }
    }
}

fn answer_user_profile(q: &UserProfileQuery, out: &mut Outputs) -> CliResult<UserProfileAnswer> {
    let payload = load(&q.model, out)?;
    let ModelPayload::UserProfile(bundle) = payload else {
        return Err(CliError::Mismatch(format!(
            "{} holds a {} model, not user-profile",
            q.model.display(),
            payload.kind()
        )));
    };
    let (_, leave_station) = station_in(&bundle.stations, &q.station)?;
    let user = UserId::new(&q.user);
    let (source, models) = match bundle.users.get(&user) {
        Some(m) => (ModelSource::User, m),
        None => (
            ModelSource::Global,
            bundle.global.as_ref().ok_or_else(|| {
                CliError::Mismatch(format!("no model for user {user} and no global fallback"))
            })?,
        ),
    };
    let x = encode_departure(&leave_station, q.time, &bundle.stations).map_err(learn_error)?;
    let p = models.predict(&x, q.time).map_err(learn_error)?;
    Ok(UserProfileAnswer {
        feature: "userprofile",
        user,
        leave_station,
        leave_time: q.time,
        model_source: source,
        destination: p.destination.destination.clone(),
        probabilities: labelled(&bundle.stations.ids(), &p.destination.probabilities),
        expected_duration_seconds: p.expected_duration,
        expected_return_time: p.expected_return_time,
    })
}

fn answer_location_preview(
    q: &LocationPreviewQuery,
    out: &mut Outputs,
) -> CliResult<LocationPreviewAnswer> {
    let payload = load(&q.model, out)?;
    let fraction = q.fraction.unwrap_or(1.0);
    if !(fraction > 0.0 && fraction <= 1.0) {
        return Err(CliError::Config("--fraction must lie in (0, 1]".into()));
    }
    let stations = match &payload {
        ModelPayload::LocationPreview(m) => m.encoder.stations.clone(),
        ModelPayload::WindowBaseline(w) => w.encoder.stations.clone(),
        ModelPayload::UserProfile(_) => {
            return Err(CliError::Mismatch(format!(
                "{} holds a user-profile model, not location-preview",
                q.model.display()
            )))
        }
    };
    let target = q
        .station
        .as_deref()
        .map(|s| station_in(&stations, s))
        .transpose()?;
    let trajs = load_trajectories(&q.prefix, "prefix", out)?;
    let ids = stations.ids();
    let mut bikes = Vec::with_capacity(trajs.len());
    for tr in &trajs {
        let points = tr.prefix(fraction).points;
        let (probabilities, index, arrival) = match &payload {
            ModelPayload::LocationPreview(m) => {
                let p = m.predict_prefix(&points).map_err(learn_error)?;
                (p.probabilities, p.index, Some(p.expected_arrival_time))
            }
            ModelPayload::WindowBaseline(w) => {
                let p = w.predict_prefix(&points).map_err(learn_error)?;
                (p.probabilities, p.index, None)
            }
            ModelPayload::UserProfile(_) => unreachable!("rejected above"),
        };
        bikes.push((
            probabilities.clone(),
            index,
            BikeAnswer {
                trip_id: tr.trip_id.to_string(),
                points_used: points.len(),
                destination: ids[index].clone(),
                probabilities: labelled(&ids, &probabilities),
                expected_arrival_time: arrival,
            },
        ));
    }
    let arrival = target.map(|(i, station)| {
        let none = bikes.iter().map(|(p, _, _)| 1.0 - p[i]).product::<f64>();
        ArrivalAnswer {
            station,
            probability_any: 1.0 - none,
            earliest_expected_arrival: bikes
                .iter()
                .filter(|(_, idx, _)| *idx == i)
                .filter_map(|(_, _, b)| b.expected_arrival_time)
                .min(),
        }
    });
    Ok(LocationPreviewAnswer {
        feature: "locationpreview",
        model_type: payload.kind(),
        bikes: bikes.into_iter().map(|(_, _, b)| b).collect(),
        arrival,
    })
}

pub fn run(cmd: &PredictCommand) -> CliResult<()> {
    match cmd {
        PredictCommand::Userprofile(q) => {
            let mut out = Outputs::new(q.out.as_deref().unwrap_or(Path::new(".")));
            let answer = answer_user_profile(q, &mut out)?;
            emit(&answer, out, &q.out, q)
        }
        PredictCommand::Locationpreview(q) => {
            let mut out = Outputs::new(q.out.as_deref().unwrap_or(Path::new(".")));
            let answer = answer_location_preview(q, &mut out)?;
            emit(&answer, out, &q.out, q)
        }
    }
}
