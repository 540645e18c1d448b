//! `bss`: data generation, training, prediction, fleet status and product
//! ranking for the bike-sharing status features.

mod datagen;
mod error;
mod io;
mod predict;
mod rank;
mod report;
mod status;
mod train;

use clap::{Parser, Subcommand};

#[derive(Parser, Debug)]
#[command(name = "bss", version, about = "Bike-sharing status toolkit")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate a synthetic station map, trip log and GPS trajectories.
    Datagen(datagen::DatagenArgs),
    /// Select, train and assess the models of a predictive feature.
    Train(train::TrainArgs),
    /// Query a trained model.
    #[command(subcommand)]
    Predict(predict::PredictCommand),
    /// Replay a fleet event log and print bikes parked per station.
    Status(status::StatusArgs),
    /// Rank the product configurations of a feature model.
    Rank(rank::RankArgs),
    /// Validate and pretty-print an evaluation report.
    Report(report::ReportArgs),
}

fn main() {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Datagen(a) => datagen::run(a),
        Command::Train(a) => train::run(a),
        Command::Predict(c) => predict::run(c),
        Command::Status(a) => status::run(a),
        Command::Rank(a) => rank::run(a),
        Command::Report(a) => report::run(a),
    };
    if let Err(e) = result {
        io::print_stderr(&format!("error: {e}\n"));
        std::process::exit(e.exit_code());
    }
}
