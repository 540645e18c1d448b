use std::collections::BTreeMap;
use std::path::PathBuf;

use bss_core::datagen::parse_event_log_lines;
use bss_core::domain::all_bikes_now;
use bss_core::{StationId, SystemState};
use clap::Args;
use serde::Serialize;

use crate::error::{CliError, CliResult};
use crate::io::{print_stdout, read, to_json, Outputs};
use crate::train::load_stations;

pub const STATUS_FILE: &str = "status.json";

#[derive(Args, Debug, Serialize)]
pub struct StatusArgs {
    /// Fleet event log CSV.
    #[arg(long)]
    pub events: PathBuf,
    #[arg(long)]
    pub stations: PathBuf,
    /// Print the JSON document instead of the table.
    #[arg(long)]
    #[serde(skip)]
    pub json: bool,
    /// Write status.json and a manifest here.
    #[arg(long)]
    #[serde(skip)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Serialize)]
pub struct StatusDocument {
    pub events_applied: usize,
    pub bikes_total: usize,
    pub bikes_in_transit: usize,
    pub parked: BTreeMap<StationId, usize>,
}

impl StatusDocument {
    fn table(&self) -> String {
        let width = self
            .parked
            .keys()
            .map(|s| s.as_str().len())
            .max()
            .unwrap_or(0)
            .max(7);
        let mut out = format!("{:<width$} {:>6}\n", "station", "bikes");
        for (s, n) in &self.parked {
            out.push_str(&format!("{:<width$} {:>6}\n", s.as_str(), n));
        }
        out.push_str(&format!(
            "{:<width$} {:>6}\n",
            "transit", self.bikes_in_transit
        ));
        out
    }
}

pub fn run(args: &StatusArgs) -> CliResult<()> {
    let mut out = Outputs::new(args.out.as_deref().unwrap_or(std::path::Path::new(".")));
    let stations = load_stations(&args.stations, &mut out)?;
    let bytes = read(&args.events)?;
    out.input("events", &bytes);
    let events = parse_event_log_lines(&bytes)
        .map_err(|e| CliError::Input(format!("{}: {e}", args.events.display())))?;
    let mut state = SystemState::new(&stations);
    for (line, event) in &events {
        state
            .apply(event)
            .map_err(|e| CliError::Input(format!("{}: line {line}: {e}", args.events.display())))?;
    }
    let doc = StatusDocument {
        events_applied: events.len(),
        bikes_total: state.total_bikes(),
        bikes_in_transit: state.in_transit().len(),
        parked: all_bikes_now(&state),
    };
    if args.json {
        print_stdout(&to_json(&doc));
    } else {
        print_stdout(doc.table().as_bytes());
    }
    if args.out.is_some() {
        out.add(STATUS_FILE, to_json(&doc));
        out.write("status", None, args)?;
    }
    Ok(())
}
