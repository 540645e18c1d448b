use std::path::PathBuf;

use bss_core::evaluation::EvaluationReport;
use clap::Args;

use crate::error::{CliError, CliResult};
use crate::io::{print_stdout, read, to_json};

#[derive(Args, Debug)]
pub struct ReportArgs {
    /// A report.json written by `train`.
    pub path: PathBuf,
    /// Re-emit the validated report as JSON.
    #[arg(long)]
    pub json: bool,
}

pub fn run(args: &ReportArgs) -> CliResult<()> {
    let bytes = read(&args.path)?;
    let report: EvaluationReport = serde_json::from_slice(&bytes)
        .map_err(|e| CliError::Input(format!("{}: {e}", args.path.display())))?;
    report.validate().map_err(|problems| {
        CliError::Input(format!(
            "{}: invalid report:\n  {}",
            args.path.display(),
            problems.join("\n  ")
        ))
    })?;
    if args.json {
        print_stdout(&to_json(&report));
    } else {
        print_stdout(report.render_text().as_bytes());
    }
    Ok(())
}
