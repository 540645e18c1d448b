use std::path::{Path, PathBuf};

use bss_core::datagen::{
    generate_trajectories, generate_trips, trips_to_events, write_event_log, write_trajectories,
    write_trip_log, ForkScenario, GeneratorConfig, DEFAULT_START_TIME,
};
use bss_core::StationMap;
use clap::{Args, ValueEnum};
use serde::{Deserialize, Serialize};

use crate::error::{CliError, CliResult};
use crate::io::{parse_document, print_stderr, read, to_json, Outputs};

pub const STATIONS_FILE: &str = "stations.json";
pub const TRIPS_FILE: &str = "trips.csv";
pub const TRAJECTORIES_FILE: &str = "trajectories.jsonl";
pub const EVENTS_FILE: &str = "events.csv";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Scenario {
    /// Users with habitual journeys on a random station layout.
    Habits,
    /// Shared first half of the path, then a fork to one of two stations.
    Fork,
}

/// A station count (random layout) or a station-map file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum StationsSpec {
    Count(usize),
    File(PathBuf),
}

impl std::str::FromStr for StationsSpec {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        Ok(match s.parse::<usize>() {
            Ok(n) => StationsSpec::Count(n),
            Err(_) => StationsSpec::File(PathBuf::from(s)),
        })
    }
}

/// Generator settings as read from a config file; every field optional.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatagenSettings {
    pub scenario: Option<Scenario>,
    pub seed: Option<u64>,
    pub stations: Option<StationsSpec>,
    pub area_side_m: Option<f64>,
    pub capacity: Option<u32>,
    pub users: Option<usize>,
    pub trips_per_user: Option<usize>,
    pub trajectories: Option<usize>,
    pub habit_strength: Option<f64>,
    pub speed_mps: Option<f64>,
    pub gps_noise_std: Option<f64>,
    pub gps_sample_period: Option<f64>,
    pub duration_noise_sigma: Option<f64>,
    pub detour_fraction: Option<f64>,
    pub fork_spread_m: Option<f64>,
    pub start_time: Option<i64>,
}

#[derive(Args, Debug)]
pub struct DatagenArgs {
    /// TOML or JSON settings file, or a manifest from an earlier run.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub scenario: Option<Scenario>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Number of randomly placed stations, or a station-map JSON file.
    #[arg(long)]
    pub stations: Option<StationsSpec>,
    /// Side of the square stations are placed in, meters.
    #[arg(long)]
    pub area_side_m: Option<f64>,
    #[arg(long)]
    pub capacity: Option<u32>,
    #[arg(long)]
    pub users: Option<usize>,
    #[arg(long)]
    pub trips_per_user: Option<usize>,
    /// Number of journeys in the fork scenario.
    #[arg(long)]
    pub trajectories: Option<usize>,
    #[arg(long)]
    pub habit_strength: Option<f64>,
    #[arg(long)]
    pub speed_mps: Option<f64>,
    #[arg(long)]
    pub gps_noise_std: Option<f64>,
    #[arg(long)]
    pub gps_sample_period: Option<f64>,
    #[arg(long)]
    pub duration_noise_sigma: Option<f64>,
    #[arg(long)]
    pub detour_fraction: Option<f64>,
    #[arg(long)]
    pub fork_spread_m: Option<f64>,
    #[arg(long)]
    pub start_time: Option<i64>,
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
}

impl DatagenArgs {
    fn flags(&self) -> DatagenSettings {
        DatagenSettings {
            scenario: self.scenario,
            seed: self.seed,
            stations: self.stations.clone(),
            area_side_m: self.area_side_m,
            capacity: self.capacity,
            users: self.users,
            trips_per_user: self.trips_per_user,
            trajectories: self.trajectories,
            habit_strength: self.habit_strength,
            speed_mps: self.speed_mps,
            gps_noise_std: self.gps_noise_std,
            gps_sample_period: self.gps_sample_period,
            duration_noise_sigma: self.duration_noise_sigma,
            detour_fraction: self.detour_fraction,
            fork_spread_m: self.fork_spread_m,
            start_time: self.start_time,
        }
    }
}

macro_rules! overlay {
    ($top:expr, $base:expr, $($f:ident),*) => {
        DatagenSettings { $($f: $top.$f.clone().or_else(|| $base.$f.clone()),)* }
    };
}

fn merge(top: &DatagenSettings, base: &DatagenSettings) -> DatagenSettings {
    overlay!(
        top,
        base,
        scenario,
        seed,
        stations,
        area_side_m,
        capacity,
        users,
        trips_per_user,
        trajectories,
        habit_strength,
        speed_mps,
        gps_noise_std,
        gps_sample_period,
        duration_noise_sigma,
        detour_fraction,
        fork_spread_m,
        start_time
    )
}

fn load_settings(path: &Path) -> CliResult<DatagenSettings> {
    let bytes = read(path)?;
    let value: serde_json::Value = parse_document(path, &bytes)?;
    let value = match value.get("command").and_then(|c| c.as_str()) {
        Some("datagen") => value.get("config").cloned().unwrap_or_default(),
        Some(other) => {
            return Err(CliError::Config(format!(
                "{} is a manifest of `{other}`, not `datagen`",
                path.display()
            )))
        }
        None => value,
    };
    serde_json::from_value(value).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
}

fn positive(name: &str, v: f64) -> CliResult<f64> {
    if v > 0.0 && v.is_finite() {
        Ok(v)
    } else {
        Err(CliError::Config(format!("{name} must be positive")))
    }
}

pub fn run(args: &DatagenArgs) -> CliResult<()> {
    let file = match &args.config {
        Some(p) => load_settings(p)?,
        None => DatagenSettings::default(),
    };
    let mut s = merge(&args.flags(), &file);
    let scenario = *s.scenario.get_or_insert(Scenario::Habits);
    let seed = *s.seed.get_or_insert(0);
    let mut out = Outputs::new(&args.out);

    let (stations, trips, trajectories) = match scenario {
        Scenario::Habits => {
            let spec = s.stations.clone().ok_or_else(|| {
                CliError::Config("--stations is required (a count or a station-map file)".into())
            })?;
            let stations = match &spec {
                StationsSpec::Count(n) => {
                    let side = positive("area_side_m", *s.area_side_m.get_or_insert(3000.0))?;
                    let capacity = *s.capacity.get_or_insert(20);
                    StationMap::uniform_square(seed, *n, side, capacity)
                        .map_err(|e| CliError::Config(e.to_string()))?
                }
                StationsSpec::File(p) => {
                    let bytes = read(p)?;
                    out.input("stations", &bytes);
                    serde_json::from_slice(&bytes)
                        .map_err(|e| CliError::Input(format!("{}: {e}", p.display())))?
                }
            };
            let mut c = GeneratorConfig::new(seed, stations.clone());
            c.n_users = *s.users.get_or_insert(c.n_users);
            c.trips_per_user = *s.trips_per_user.get_or_insert(c.trips_per_user);
            c.habit_strength = *s.habit_strength.get_or_insert(c.habit_strength);
            c.speed_mps = *s.speed_mps.get_or_insert(c.speed_mps);
            c.gps_noise_std = *s.gps_noise_std.get_or_insert(c.gps_noise_std);
            c.gps_sample_period = *s.gps_sample_period.get_or_insert(c.gps_sample_period);
            c.duration_noise_sigma = *s.duration_noise_sigma.get_or_insert(c.duration_noise_sigma);
            c.detour_fraction = *s.detour_fraction.get_or_insert(c.detour_fraction);
            c.start_time = *s.start_time.get_or_insert(DEFAULT_START_TIME);
            let trips = generate_trips(&c).map_err(|e| CliError::Config(e.to_string()))?;
            let trajs =
                generate_trajectories(&c, &trips).map_err(|e| CliError::Config(e.to_string()))?;
            (stations, trips, trajs)
        }
        Scenario::Fork => {
            if s.stations.is_some() {
                return Err(CliError::Config(
                    "the fork scenario uses its own station map; drop --stations".into(),
                ));
            }
            let mut f = ForkScenario::new(seed, 100);
            f.n_trajectories = *s.trajectories.get_or_insert(f.n_trajectories);
            f.speed_mps = *s.speed_mps.get_or_insert(f.speed_mps);
            f.gps_noise_std = *s.gps_noise_std.get_or_insert(f.gps_noise_std);
            f.gps_sample_period = *s.gps_sample_period.get_or_insert(f.gps_sample_period);
            f.fork_spread_m = *s.fork_spread_m.get_or_insert(f.fork_spread_m);
            f.start_time = *s.start_time.get_or_insert(DEFAULT_START_TIME);
            f.generate().map_err(|e| CliError::Config(e.to_string()))?
        }
    };

    out.add(STATIONS_FILE, to_json(&stations));
    out.add(TRIPS_FILE, write_trip_log(&trips));
    out.add(TRAJECTORIES_FILE, write_trajectories(&trajectories));
    let events = trips_to_events(&trips, &stations).map_err(|e| CliError::Config(e.to_string()))?;
    out.add(EVENTS_FILE, write_event_log(&events));
    out.write("datagen", Some(seed), &s)?;
    print_stderr(&format!(
        "wrote {} trips and {} trajectories over {} stations to {}\n",
        trips.len(),
        trajectories.len(),
        stations.len(),
        args.out.display()
    ));
    Ok(())
}
