use std::collections::BTreeMap;
use std::path::PathBuf;

use bss_core::evaluation::EvaluationReport;
use bss_core::featuremodel::{
    attach_measurements, deployment_warnings, measured_products, rank_products, render_ranking,
    FeatureModel, FeatureModelError, ProductConfiguration, RankWeights,
};
use clap::Args;
use serde::Serialize;

use crate::error::{CliError, CliResult};
use crate::io::{parse_document, print_stderr, print_stdout, read, to_json, Outputs};

pub const RANKING_FILE: &str = "ranking.json";
pub const RANKING_TEXT_FILE: &str = "ranking.txt";

#[derive(Args, Debug)]
pub struct RankArgs {
    /// Feature model (TOML or JSON); defaults to the status subsystem.
    #[arg(long)]
    pub feature_model: Option<PathBuf>,
    /// Costs of AllBikesNow, LocationPreview, UserProfile for the default model.
    #[arg(long, num_args = 3, value_names = ["ABN", "LP", "UP"])]
    pub costs: Option<Vec<f64>>,
    /// Evaluation report of a predictive feature; repeat for each.
    #[arg(long = "report")]
    pub reports: Vec<PathBuf>,
    #[arg(long)]
    pub w_acc: Option<f64>,
    #[arg(long)]
    pub w_mae: Option<f64>,
    #[arg(long)]
    pub w_cost: Option<f64>,
    /// MAE normalization horizon, seconds.
    #[arg(long)]
    pub horizon: Option<f64>,
    /// Print the JSON document instead of the table.
    #[arg(long)]
    pub json: bool,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Serialize)]
pub struct RankConfig<'a> {
    pub feature_model: &'a FeatureModel,
    pub weights: RankWeights,
}

#[derive(Debug, Serialize)]
pub struct RankDocument {
    pub weights: RankWeights,
    pub products: Vec<ProductConfiguration>,
    pub warnings: Vec<String>,
}

fn model_error(e: FeatureModelError) -> CliError {
    match e {
        FeatureModelError::MissingReport(_) => CliError::MissingReport(e.to_string()),
        other => CliError::Config(other.to_string()),
    }
}

pub fn run(args: &RankArgs) -> CliResult<()> {
    let mut out = Outputs::new(args.out.as_deref().unwrap_or(std::path::Path::new(".")));
    let model = match (&args.feature_model, &args.costs) {
        (Some(_), Some(_)) => {
            return Err(CliError::Config(
                "--costs applies only to the default feature model".into(),
            ))
        }
        (Some(p), None) => {
            let bytes = read(p)?;
            out.input("feature_model", &bytes);
            parse_document::<FeatureModel>(p, &bytes)?
        }
        (None, costs) => {
            let c = costs.clone().unwrap_or_else(|| vec![1.0, 2.0, 2.0]);
            FeatureModel::status(c[0], c[1], c[2])
        }
    };
    model.validate().map_err(model_error)?;

    let mut reports = BTreeMap::new();
    for (i, p) in args.reports.iter().enumerate() {
        let bytes = read(p)?;
        out.input(&format!("report.{i}"), &bytes);
        let report: EvaluationReport = serde_json::from_slice(&bytes)
            .map_err(|e| CliError::Input(format!("{}: {e}", p.display())))?;
        if let Err(problems) = report.validate() {
            return Err(CliError::Input(format!(
                "{}: invalid report: {}",
                p.display(),
                problems.join("; ")
            )));
        }
        let feature = model
            .features
            .iter()
            .find(|f| f.predictive.as_deref() == Some(report.feature.as_str()))
            .ok_or_else(|| {
                CliError::Config(format!(
                    "{}: no feature of the model is measured by a {} report",
                    p.display(),
                    report.feature
                ))
            })?;
        if reports.insert(feature.name.clone(), report).is_some() {
            return Err(CliError::Config(format!(
                "two reports given for {}",
                feature.name
            )));
        }
    }
    let measured = if reports.is_empty() {
        model.clone()
    } else {
        attach_measurements(&model, &reports).map_err(model_error)?
    };

    let defaults = RankWeights::default();
    let weights = RankWeights {
        accuracy: args.w_acc.unwrap_or(defaults.accuracy),
        mae: args.w_mae.unwrap_or(defaults.mae),
        cost: args.w_cost.unwrap_or(defaults.cost),
        mae_horizon: args.horizon.unwrap_or(defaults.mae_horizon),
    };
    let products = measured_products(&measured).map_err(model_error)?;
    let ranked = rank_products(&products, &weights).map_err(model_error)?;
    let warnings = deployment_warnings(&reports);
    for w in &warnings {
        print_stderr(&format!("warning: {w}\n"));
    }
    let text = render_ranking(&ranked);
    let doc = RankDocument {
        weights,
        products: ranked,
        warnings,
    };
    if args.json {
        print_stdout(&to_json(&doc));
    } else {
        print_stdout(text.as_bytes());
    }
    if args.out.is_some() {
        out.add(RANKING_FILE, to_json(&doc));
        out.add(RANKING_TEXT_FILE, text.into_bytes());
        out.write(
            "rank",
            None,
            &RankConfig {
                feature_model: &model,
                weights,
            },
        )?;
    }
    Ok(())
}
