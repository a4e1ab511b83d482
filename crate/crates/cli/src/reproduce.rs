//! `reproduce`: rerun a published table row by row and diff it.

use std::fmt::Write as _;
use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use anyhow::{bail, Result};
use clap::{Args, ValueEnum};

use sdpnn::eval;
use sdpnn::solver::SolverOptions;

use crate::commands::{RoundingArgs, SgdOptionArgs, SolverArgs};
use crate::dataset::{DatasetArgs, DatasetSpec};
use crate::manifest;
use crate::pipeline;
use crate::reference::{self, Method};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
#[value(rename_all = "lower")]
pub enum Table {
    /// Training objectives and approximation ratios.
    #[value(alias = "AR")]
    Ar,
    /// Test accuracy and weighted F1.
    #[value(alias = "Prediction")]
    Prediction,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum MethodArg {
    Sgd,
    SdpNn,
    SdpNnBias,
}

impl From<MethodArg> for Method {
    fn from(m: MethodArg) -> Self {
        match m {
            MethodArg::Sgd => Method::Sgd,
            MethodArg::SdpNn => Method::SdpNn,
            MethodArg::SdpNnBias => Method::SdpNnBias,
        }
    }
}

#[derive(Debug, Clone, Args)]
pub struct ReproduceArgs {
    #[arg(value_enum)]
    pub table: Table,
    #[command(flatten)]
    pub data: DatasetArgs,
    /// Regularization value (repeatable); both published values when omitted.
    #[arg(long)]
    pub gamma: Vec<f64>,
    /// Generated datasets per row, seeded `seed, seed+1, ...`.
    #[arg(long, default_value_t = 1)]
    pub trials: usize,
    /// Methods for the prediction table.
    #[arg(long, value_enum, num_args = 1.., default_values_t = [MethodArg::SdpNn, MethodArg::SdpNnBias])]
    pub methods: Vec<MethodArg>,
    #[command(flatten)]
    pub solver: SolverArgs,
    #[command(flatten)]
    pub rounding: RoundingArgs,
    #[command(flatten)]
    pub sgd: SgdOptionArgs,
    #[arg(long, default_value = "runs/reproduce")]
    pub out: PathBuf,
}

/// One table cell: a value or a blank.
fn cell(v: Option<f64>, prec: usize) -> String {
    v.map(|x| format!("{x:.prec$}")).unwrap_or_default()
}

fn mean_std(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = if xs.len() > 1 {
        xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)
    } else {
        0.0
    };
    (mean, var.sqrt())
}

fn with_seed(spec: &DatasetSpec, offset: u64) -> DatasetSpec {
    match spec {
        DatasetSpec::Random { seed } => DatasetSpec::Random { seed: seed + offset },
        DatasetSpec::Spiral { seed } => DatasetSpec::Spiral { seed: seed + offset },
        other => other.clone(),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ArRow {
    pub dataset: String,
    pub gamma: f64,
    pub trials: usize,
    pub sgd: (f64, f64),
    pub sdp: (f64, f64),
    /// Mean of per-trial ratios, in percent.
    pub ar_percent: f64,
    pub sdp_seconds: f64,
    /// Trials whose solver stopped without meeting its tolerances.
    pub unconverged: usize,
}

pub const AR_HEADER: &str = "dataset,gamma,trials,sgd300_mean,sgd300_std,sdp_mean,sdp_std,ar_percent,\
ref_sgd300,ref_sdp,ref_ar_percent,diff_sgd300,diff_sdp,diff_ar_percent,sdp_seconds,status";

/// Objective row for one `γ`: gradient descent first, so its loss can
/// tighten the solver's dual bound.
pub fn ar_row(
    spec: &DatasetSpec,
    gamma: f64,
    trials: usize,
    solver: &SolverOptions,
    sgd: &SgdOptionArgs,
) -> Result<ArRow> {
    if trials == 0 {
        bail!("invalid parameter `trials`: must be at least 1");
    }
    let (mut sgd_losses, mut sdp_values, mut ratios) = (Vec::new(), Vec::new(), Vec::new());
    let (mut seconds, mut unconverged) = (0.0, 0);
    for t in 0..trials {
        let spec_t = with_seed(spec, t as u64);
        let ds = spec_t.resolve()?;
        let cfg = sgd.config(spec.name(), gamma);
        let trained = pipeline::train_sgd(&ds, gamma, false, sgd.width, &cfg)?;
        let opts = SolverOptions {
            upper_bound: Some(trained.final_loss),
            ..solver.clone()
        };
        let start = Instant::now();
        let solved = pipeline::solve(&ds, gamma, false, &opts)?;
        seconds += start.elapsed().as_secs_f64();
        if solved.solution.status != sdpnn::SolverStatus::Optimal {
            unconverged += 1;
        }
        let sdp = solved.solution.objective;
        log::info!("{} γ={gamma} trial {t}: sdp={sdp:.6} sgd={:.6}", spec.name(), trained.final_loss);
        ratios.push(100.0 * eval::approximation_ratio(sdp, trained.final_loss)?);
        sgd_losses.push(trained.final_loss);
        sdp_values.push(sdp);
    }
    Ok(ArRow {
        dataset: spec.name().to_string(),
        gamma,
        trials,
        sgd: mean_std(&sgd_losses),
        sdp: mean_std(&sdp_values),
        ar_percent: mean_std(&ratios).0,
        sdp_seconds: seconds / trials as f64,
        unconverged,
    })
}

pub fn format_ar(row: &ArRow) -> String {
    let r = reference::objective(&row.dataset, row.gamma);
    let status = if row.unconverged == 0 {
        "ok".to_string()
    } else {
        format!("ok ({} of {} solves hit max_iters)", row.unconverged, row.trials)
    };
    [
        row.dataset.clone(),
        row.gamma.to_string(),
        row.trials.to_string(),
        cell(Some(row.sgd.0), 4),
        cell(Some(row.sgd.1), 4),
        cell(Some(row.sdp.0), 4),
        cell(Some(row.sdp.1), 4),
        cell(Some(row.ar_percent), 2),
        cell(r.map(|r| r.sgd300), 2),
        cell(r.map(|r| r.sdp), 2),
        cell(r.map(|r| r.ar_percent), 2),
        cell(r.map(|r| row.sgd.0 - r.sgd300), 4),
        cell(r.map(|r| row.sdp.0 - r.sdp), 4),
        cell(r.map(|r| row.ar_percent - r.ar_percent), 2),
        cell(Some(row.sdp_seconds), 2),
        status,
    ]
    .join(",")
}

fn failed(prefix: &[String], columns: usize, err: &anyhow::Error) -> String {
    let mut cells = prefix.to_vec();
    cells.resize(columns - 1, String::new());
    cells.push(format!("FAILED: {}", format!("{err:#}").replace([',', '\n'], ";")));
    cells.join(",")
}

#[derive(Debug, Clone, PartialEq)]
pub struct PredictionRow {
    pub dataset: String,
    pub gamma: f64,
    pub method: Method,
    pub accuracy: f64,
    pub weighted_f1: f64,
    pub threshold: f64,
    pub seconds: f64,
}

pub const PREDICTION_HEADER: &str = "dataset,gamma,method,accuracy,weighted_f1,threshold,\
ref_accuracy,ref_weighted_f1,diff_accuracy,diff_weighted_f1,seconds,status";

/// Prediction row: relax-and-round for the relaxation methods, the
/// gradient-descent baseline otherwise, scored on the test split.
pub fn prediction_row(
    spec: &DatasetSpec,
    gamma: f64,
    method: Method,
    solver: &SolverOptions,
    rounding: &RoundingArgs,
    sgd: &SgdOptionArgs,
) -> Result<PredictionRow> {
    let ds = spec.resolve()?;
    let start = Instant::now();
    let (bias, weights) = match method {
        Method::Sgd => {
            let cfg = sgd.config(spec.name(), gamma);
            (false, pipeline::train_sgd(&ds, gamma, false, sgd.width, &cfg)?.weights)
        }
        Method::SdpNn | Method::SdpNnBias => {
            let bias = method == Method::SdpNnBias;
            let solved = pipeline::solve(&ds, gamma, bias, solver)?;
            let rounded = pipeline::round(&solved.problem, &solved.solution.lambda, &rounding.options(0))?;
            log::info!(
                "{} γ={gamma} {}: sdp={:.6} rounded loss={:.6}",
                spec.name(),
                method.label(),
                solved.solution.objective,
                rounded.loss
            );
            (bias, rounded.weights)
        }
    };
    let (metrics, _) = pipeline::evaluate(&ds, bias, &weights)?;
    Ok(PredictionRow {
        dataset: spec.name().to_string(),
        gamma,
        method,
        accuracy: metrics.accuracy,
        weighted_f1: metrics.weighted_f1,
        threshold: metrics.best_threshold,
        seconds: start.elapsed().as_secs_f64(),
    })
}

pub fn format_prediction(row: &PredictionRow) -> String {
    let r = reference::prediction(&row.dataset, row.gamma, row.method);
    [
        row.dataset.clone(),
        row.gamma.to_string(),
        row.method.label().to_string(),
        cell(Some(row.accuracy), 4),
        cell(Some(row.weighted_f1), 4),
        cell(Some(row.threshold), 2),
        cell(r.map(|r| r.accuracy), 3),
        cell(r.map(|r| r.weighted_f1), 3),
        cell(r.map(|r| row.accuracy - r.accuracy), 4),
        cell(r.map(|r| row.weighted_f1 - r.weighted_f1), 4),
        cell(Some(row.seconds), 2),
        "ok".to_string(),
    ]
    .join(",")
}

pub fn cmd_reproduce(args: &ReproduceArgs) -> Result<ExitCode> {
    let spec = args.data.spec()?;
    let gammas = if args.gamma.is_empty() {
        reference::GAMMAS.to_vec()
    } else {
        args.gamma.clone()
    };
    let solver = args.solver.options();
    solver.validate()?;

    let mut csv = String::new();
    let name = match args.table {
        Table::Ar => {
            csv.push_str(AR_HEADER);
            csv.push('\n');
            let columns = AR_HEADER.split(',').count();
            for &g in &gammas {
                let line = match ar_row(&spec, g, args.trials, &solver, &args.sgd) {
                    Ok(row) => format_ar(&row),
                    Err(e) => failed(&[spec.name().to_string(), g.to_string(), args.trials.to_string()], columns, &e),
                };
                println!("{line}");
                writeln!(csv, "{line}")?;
            }
            "ar.csv"
        }
        Table::Prediction => {
            csv.push_str(PREDICTION_HEADER);
            csv.push('\n');
            let columns = PREDICTION_HEADER.split(',').count();
            for &g in &gammas {
                for &m in &args.methods {
                    let m = Method::from(m);
                    let line = match prediction_row(&spec, g, m, &solver, &args.rounding, &args.sgd) {
                        Ok(row) => format_prediction(&row),
                        Err(e) => failed(&[spec.name().to_string(), g.to_string(), m.label().to_string()], columns, &e),
                    };
                    println!("{line}");
                    writeln!(csv, "{line}")?;
                }
            }
            "prediction.csv"
        }
    };
    manifest::write_file(&args.out, name, csv.as_bytes())?;
    Ok(ExitCode::SUCCESS)
}
