use std::path::{Path, PathBuf};

use bss_core::datagen::{check_trips, parse_trajectories, parse_trip_log};
use bss_core::evaluation::pipelines::{
    assess_location_preview, assess_user_profile, LocationPreviewOptions, UserProfileOptions,
};
use bss_core::evaluation::{EvalError, EvaluationReport};
use bss_core::persist::{save_model, ModelPayload, UserProfileBundle};
use bss_core::{GpsTrajectory, StationMap, TripRecord};
use clap::{Args, ValueEnum};
use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::datagen::{STATIONS_FILE, TRAJECTORIES_FILE, TRIPS_FILE};
use crate::error::{CliError, CliResult};
use crate::io::{parse_document, print_stderr, read, to_json, Outputs};

pub const MODEL_FILE: &str = "model.json";
pub const BASELINE_FILE: &str = "baseline.json";
pub const REPORT_FILE: &str = "report.json";
pub const REPORT_TEXT_FILE: &str = "report.txt";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum FeatureArg {
    Userprofile,
    Locationpreview,
}

#[derive(Args, Debug)]
pub struct TrainArgs {
    #[arg(value_enum)]
    pub feature: FeatureArg,
    /// Directory written by `datagen`; supplies default input paths.
    #[arg(long)]
    pub data: Option<PathBuf>,
    #[arg(long)]
    pub stations: Option<PathBuf>,
    #[arg(long)]
    pub trips: Option<PathBuf>,
    #[arg(long)]
    pub trajectories: Option<PathBuf>,
    /// TOML or JSON file with hyperparameter grids and protocol settings.
    #[arg(long)]
    pub grid: Option<PathBuf>,
    /// Number of cross-validation folds.
    #[arg(short = 'k', long)]
    pub folds: Option<usize>,
    #[arg(long)]
    pub test_fraction: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub out: PathBuf,
}

fn input_path(
    explicit: &Option<PathBuf>,
    data: &Option<PathBuf>,
    default: &str,
    flag: &str,
) -> CliResult<PathBuf> {
    explicit
        .clone()
        .or_else(|| data.as_ref().map(|d| d.join(default)))
        .ok_or_else(|| CliError::Config(format!("--{flag} or --data is required")))
}

pub fn load_stations(path: &Path, out: &mut Outputs) -> CliResult<StationMap> {
    let bytes = read(path)?;
    out.input("stations", &bytes);
    serde_json::from_slice(&bytes).map_err(|e| CliError::Input(format!("{}: {e}", path.display())))
}

fn load_trips(path: &Path, stations: &StationMap, out: &mut Outputs) -> CliResult<Vec<TripRecord>> {
    let bytes = read(path)?;
    out.input("trips", &bytes);
    let trips =
        parse_trip_log(&bytes).map_err(|e| CliError::Input(format!("{}: {e}", path.display())))?;
    check_trips(&trips, stations)
        .map_err(|e| CliError::Input(format!("{}: {e}", path.display())))?;
    Ok(trips)
}

pub fn load_trajectories(
    path: &Path,
    role: &str,
    out: &mut Outputs,
) -> CliResult<Vec<GpsTrajectory>> {
    let bytes = read(path)?;
    out.input(role, &bytes);
    parse_trajectories(&bytes).map_err(|e| CliError::Input(format!("{}: {e}", path.display())))
}

fn eval_error(e: EvalError, unit_kind: &str) -> CliError {
    if e.is_insufficient_data() {
        let msg = match e.unit() {
            Some(_) => format!("{unit_kind} {e}"),
            None => e.to_string(),
        };
        CliError::InsufficientData(msg)
    } else {
        CliError::Config(e.to_string())
    }
}

fn emit_report(out: &mut Outputs, report: &EvaluationReport) {
    out.add(REPORT_FILE, to_json(report));
    out.add(REPORT_TEXT_FILE, report.render_text().into_bytes());
}

fn save(payload: ModelPayload) -> CliResult<Vec<u8>> {
    save_model(payload).map_err(|e| CliError::Internal(e.to_string()))
}

/// Reads an options file, or the options recorded in an earlier `train` manifest.
fn grid_options<O: DeserializeOwned>(
    path: &Path,
    bytes: &[u8],
    feature: FeatureArg,
) -> CliResult<O> {
    let value: serde_json::Value = parse_document(path, bytes)?;
    let value = match value.get("command").and_then(|c| c.as_str()) {
        Some("train") => {
            let recorded = value.pointer("/config/feature").and_then(|f| f.as_str());
            let wanted =
                serde_json::to_value(feature).map_err(|e| CliError::Internal(e.to_string()))?;
            if recorded != wanted.as_str() {
                return Err(CliError::Config(format!(
                    "{} records a {} run, not {}",
                    path.display(),
                    recorded.unwrap_or("?"),
                    wanted.as_str().unwrap_or("?")
                )));
            }
            value
                .pointer("/config/options")
                .cloned()
                .unwrap_or_default()
        }
        Some(other) => {
            return Err(CliError::Config(format!(
                "{} is a manifest of `{other}`, not `train`",
                path.display()
            )))
        }
        None => value,
    };
    serde_json::from_value(value).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
}

#[derive(Serialize)]
struct TrainConfig<O> {
    feature: FeatureArg,
    options: O,
}

pub fn run(args: &TrainArgs) -> CliResult<()> {
    let mut out = Outputs::new(&args.out);
    let stations_path = input_path(&args.stations, &args.data, STATIONS_FILE, "stations")?;
    let stations = load_stations(&stations_path, &mut out)?;
    let grid_bytes = match &args.grid {
        Some(p) => {
            let b = read(p)?;
            out.input("grid", &b);
            Some((p.clone(), b))
        }
        None => None,
    };

    match args.feature {
        FeatureArg::Userprofile => {
            let trips_path = input_path(&args.trips, &args.data, TRIPS_FILE, "trips")?;
            let trips = load_trips(&trips_path, &stations, &mut out)?;
            let mut opts: UserProfileOptions = match &grid_bytes {
                Some((p, b)) => grid_options(p, b, args.feature)?,
                None => UserProfileOptions::default(),
            };
            opts.k = args.folds.unwrap_or(opts.k);
            opts.test_fraction = args.test_fraction.unwrap_or(opts.test_fraction);
            opts.seed = args.seed.unwrap_or(opts.seed);
            let outcome =
                assess_user_profile(&stations, &trips, &opts).map_err(|e| eval_error(e, "user"))?;
            let bundle = UserProfileBundle {
                stations: stations.clone(),
                users: outcome.user_models,
                global: Some(outcome.global_models),
                report_id: Some(outcome.report.id.clone()),
            };
            out.add(MODEL_FILE, save(ModelPayload::UserProfile(bundle))?);
            emit_report(&mut out, &outcome.report);
            print_stderr(&outcome.report.render_text());
            out.write(
                "train",
                Some(opts.seed),
                &TrainConfig {
                    feature: args.feature,
                    options: &opts,
                },
            )
        }
        FeatureArg::Locationpreview => {
            let traj_path = input_path(
                &args.trajectories,
                &args.data,
                TRAJECTORIES_FILE,
                "trajectories",
            )?;
            let trajs = load_trajectories(&traj_path, "trajectories", &mut out)?;
            let mut opts: LocationPreviewOptions = match &grid_bytes {
                Some((p, b)) => grid_options(p, b, args.feature)?,
                None => LocationPreviewOptions::default(),
            };
            opts.k = args.folds.unwrap_or(opts.k);
            opts.test_fraction = args.test_fraction.unwrap_or(opts.test_fraction);
            opts.seed = args.seed.unwrap_or(opts.seed);
            let outcome = assess_location_preview(&stations, &trajs, &opts)
                .map_err(|e| eval_error(e, "set"))?;
            out.add(
                MODEL_FILE,
                save(ModelPayload::LocationPreview(outcome.esn))?,
            );
            if let Some(b) = outcome.baseline {
                out.add(BASELINE_FILE, save(ModelPayload::WindowBaseline(b))?);
            }
            emit_report(&mut out, &outcome.report);
            print_stderr(&outcome.report.render_text());
            out.write(
                "train",
                Some(opts.seed),
                &TrainConfig {
                    feature: args.feature,
                    options: &opts,
                },
            )
        }
    }
}
