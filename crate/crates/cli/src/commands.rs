use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::json;

use sdpnn::data::Task;
use sdpnn::network::{self, Batch, NetworkWeights, SgdConfig, WeightsJson};
use sdpnn::rounding::{RoundingOptions, StepSize, TieBreak};
use sdpnn::solver::{SolverOptions, SolverStatus};
use sdpnn::{sdpa, LiftedProblem};

use crate::dataset::DatasetArgs;
use crate::manifest::{self, ExperimentConfig, Manifest, SolveSummary};
use crate::{matio, pipeline, reference, reproduce};

#[derive(Debug, Parser)]
#[command(name = "sdpnn", version, about = "Train two-layer ReLU networks through a lifted convex relaxation")]
pub struct Cli {
    /// Log progress (repeat for more detail).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Build a dataset and write it with its manifest.
    Data {
        #[command(flatten)]
        data: DatasetArgs,
        #[arg(long)]
        out: PathBuf,
    },
    /// Solve the relaxation and write the lifted solution.
    Solve(SolveArgs),
    /// Round a solved lifted matrix to network weights.
    Round(RoundArgs),
    /// Train the gradient-descent baseline.
    TrainSgd(SgdArgs),
    /// Score the weights in a run directory.
    Evaluate {
        #[arg(long)]
        run: PathBuf,
        /// Weights file; defaults to the run's weights.json.
        #[arg(long)]
        weights: Option<PathBuf>,
    },
    /// Rerun a published table and diff against it.
    Reproduce(reproduce::ReproduceArgs),
}

#[derive(Debug, Clone, Args)]
pub struct SolverArgs {
    #[arg(long, default_value_t = SolverOptions::default().max_iters)]
    pub max_iters: usize,
    #[arg(long, default_value_t = SolverOptions::default().eps_abs)]
    pub eps_abs: f64,
    #[arg(long, default_value_t = SolverOptions::default().eps_rel)]
    pub eps_rel: f64,
    /// Initial penalty [default: γ clamped to [1e-3, 1]].
    #[arg(long)]
    pub rho: Option<f64>,
    /// Keep the penalty fixed.
    #[arg(long)]
    pub fixed_rho: bool,
    /// Anderson acceleration memory; 0 disables.
    #[arg(long, default_value_t = SolverOptions::default().anderson_memory)]
    pub anderson: usize,
    /// Known upper bound on the optimum, used to tighten the dual bound.
    #[arg(long)]
    pub upper_bound: Option<f64>,
}

impl SolverArgs {
    pub fn options(&self) -> SolverOptions {
        SolverOptions {
            max_iters: self.max_iters,
            eps_abs: self.eps_abs,
            eps_rel: self.eps_rel,
            rho: self.rho,
            adaptive_rho: !self.fixed_rho,
            anderson_memory: self.anderson,
            upper_bound: self.upper_bound,
            ..SolverOptions::default()
        }
    }
}

#[derive(Debug, Clone, Args)]
pub struct SolveArgs {
    #[command(flatten)]
    pub data: DatasetArgs,
    #[arg(long, default_value_t = 0.1, allow_hyphen_values = true)]
    pub gamma: f64,
    /// Append a constant-1 input feature.
    #[arg(long)]
    pub bias: bool,
    #[command(flatten)]
    pub solver: SolverArgs,
    #[arg(long, default_value = "runs/solve")]
    pub out: PathBuf,
    /// Also export the problem in SDPA sparse format.
    #[arg(long)]
    pub sdpa: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum TieBreakArg {
    KeepAlpha,
    Literal,
}

#[derive(Debug, Clone, Args)]
pub struct RoundingArgs {
    /// Rounding width.
    #[arg(long, default_value_t = RoundingOptions::default().r)]
    pub round_width: usize,
    #[arg(long, default_value_t = RoundingOptions::default().iters)]
    pub round_iters: usize,
    /// Step as a multiple of 1/‖Λ⋆‖₂.
    #[arg(long, default_value_t = 0.125, conflicts_with = "step")]
    pub step_scale: f64,
    /// Absolute step size.
    #[arg(long)]
    pub step: Option<f64>,
    #[arg(long, value_enum, default_value_t = TieBreakArg::KeepAlpha)]
    pub tie_break: TieBreakArg,
    /// Extra runs from randomly rotated starts; the best is kept.
    #[arg(long, default_value_t = RoundingOptions::default().restarts)]
    pub round_restarts: usize,
}

impl RoundingArgs {
    pub fn options(&self, seed: u64) -> RoundingOptions {
        RoundingOptions {
            r: self.round_width,
            iters: self.round_iters,
            step: match self.step {
                Some(e) => StepSize::Fixed(e),
                None => StepSize::Scaled(self.step_scale),
            },
            seed,
            restarts: self.round_restarts,
            tie_break: match self.tie_break {
                TieBreakArg::KeepAlpha => TieBreak::KeepAlpha,
                TieBreakArg::Literal => TieBreak::PaperLiteral,
            },
        }
    }
}

#[derive(Debug, Clone, Args)]
pub struct RoundArgs {
    /// Directory written by `solve`.
    #[arg(long)]
    pub run: PathBuf,
    #[command(flatten)]
    pub rounding: RoundingArgs,
}

#[derive(Debug, Clone, Args)]
pub struct SgdOptionArgs {
    /// Hidden width.
    #[arg(long, default_value_t = 300)]
    pub width: usize,
    /// Step size; defaults to the published schedule for the dataset.
    #[arg(long)]
    pub lr: Option<f64>,
    /// Iterations; defaults to the published schedule for the dataset.
    #[arg(long)]
    pub iters: Option<usize>,
    #[arg(long, default_value_t = SgdConfig::default().restarts)]
    pub restarts: usize,
    #[arg(long, default_value_t = DEFAULT_INIT_SCALE)]
    pub init_scale: f64,
    /// Mini-batch size; full batch when omitted.
    #[arg(long)]
    pub batch: Option<usize>,
    #[arg(long, default_value_t = 0)]
    pub sgd_seed: u64,
}

/// Initialization scale used by the command line. Unit-variance weights
/// at width 300 start far out on the regularizer and the published step
/// sizes cannot bring them back within the published iteration budgets.
pub const DEFAULT_INIT_SCALE: f64 = 0.1;

impl SgdOptionArgs {
    pub fn config(&self, dataset: &str, gamma: f64) -> SgdConfig {
        let sched = reference::schedule(dataset);
        let base = SgdConfig::default();
        SgdConfig {
            lr: self.lr.or(sched.map(|s| s.lr)).unwrap_or(base.lr),
            iters: self.iters.or(sched.map(|s| s.iters_for(gamma))).unwrap_or(base.iters),
            batch: self.batch.map(Batch::Mini).unwrap_or(Batch::Full),
            seed: self.sgd_seed,
            init_scale: self.init_scale,
            restarts: self.restarts,
        }
    }
}

#[derive(Debug, Clone, Args)]
pub struct SgdArgs {
    #[command(flatten)]
    pub data: DatasetArgs,
    #[arg(long, default_value_t = 0.1, allow_hyphen_values = true)]
    pub gamma: f64,
    #[arg(long)]
    pub bias: bool,
    #[command(flatten)]
    pub sgd: SgdOptionArgs,
    #[arg(long, default_value = "runs/sgd")]
    pub out: PathBuf,
}

pub fn run(cli: Cli) -> Result<ExitCode> {
    match cli.command {
        Command::Data { data, out } => cmd_data(&data, &out),
        Command::Solve(a) => cmd_solve(&a),
        Command::Round(a) => cmd_round(&a),
        Command::TrainSgd(a) => cmd_train_sgd(&a),
        Command::Evaluate { run, weights } => cmd_evaluate(&run, weights.as_deref()),
        Command::Reproduce(a) => reproduce::cmd_reproduce(&a),
    }
}

fn cmd_data(args: &DatasetArgs, out: &Path) -> Result<ExitCode> {
    let spec = args.spec()?;
    let ds = spec.resolve()?;
    let man = ds.manifest();
    manifest::write_file(out, "dataset.json", &serde_json::to_vec(&ds)?)?;
    manifest::write_file(out, "dataset.manifest.json", &serde_json::to_vec_pretty(&json!({
        "spec": spec,
        "dataset": man,
    }))?)?;
    println!(
        "{}: train {}x{} -> {} test {} hash {}",
        spec.name(),
        ds.n(),
        ds.d(),
        ds.c(),
        ds.x_test.as_ref().map_or(0, |x| x.nrows()),
        man.content_hash
    );
    Ok(ExitCode::SUCCESS)
}

fn base_config(data: &DatasetArgs, gamma: f64, bias: bool, out: &Path) -> Result<ExperimentConfig> {
    Ok(ExperimentConfig {
        dataset: data.spec()?,
        gamma,
        bias,
        solver: SolverOptions::default(),
        rounding: RoundingOptions::default(),
        sgd: SgdConfig::default(),
        sgd_width: 300,
        out_dir: out.to_path_buf(),
        seed: data.seed,
    })
}

pub fn cmd_solve(args: &SolveArgs) -> Result<ExitCode> {
    let mut config = base_config(&args.data, args.gamma, args.bias, &args.out)?;
    config.solver = args.solver.options();
    config.validate()?;
    let ds = config.dataset.resolve()?;
    let out = &args.out;

    if let Some(path) = &args.sdpa {
        let prob = LiftedProblem::build(&ds.x_train, &ds.y_train, config.gamma, config.bias)?;
        let file = std::fs::File::create(path).with_context(|| format!("creating {}", path.display()))?;
        let comment = format!("{} gamma={} bias={} p={}", config.dataset.name(), config.gamma, config.bias, prob.p());
        sdpa::export(&prob).write(std::io::BufWriter::new(file), &comment)?;
    }

    let solved = pipeline::solve(&ds, config.gamma, config.bias, &config.solver)?;
    let sol = &solved.solution;
    let mut man = Manifest::new("solve", config.clone(), ds.manifest());
    man.problem = Some(solved.problem.meta());
    man.solve = Some(SolveSummary {
        status: format!("{:?}", sol.status),
        objective: sol.objective,
        iterations: sol.iterations,
        eq_residual: sol.eq_residual,
        min_eig: sol.min_eig,
        min_nonneg: sol.min_nonneg,
        dual_bound: sol.dual_bound,
        seconds: solved.trace.seconds,
    });

    let bin = matio::encode(&sol.lambda);
    man.write_output(out, manifest::LAMBDA_BIN, &bin)?;
    let meta = json!({
        "format": "8-byte magic SDPNNMAT, u64 LE rows, u64 LE cols, row-major f64 LE",
        "rows": sol.lambda.nrows(),
        "cols": sol.lambda.ncols(),
        "sha256": man.outputs[manifest::LAMBDA_BIN],
        "objective": sol.objective,
        "status": format!("{:?}", sol.status),
        "problem": solved.problem.meta(),
    });
    man.write_output(out, manifest::LAMBDA_JSON, &serde_json::to_vec_pretty(&meta)?)?;
    let mut trace = Vec::new();
    solved.trace.write_csv(&mut trace)?;
    man.write_output(out, manifest::TRACE_CSV, &trace)?;
    man.save(out)?;

    println!(
        "status={:?} objective={:.8} iterations={} eq_residual={:.3e} dual_bound={:.6} p={}",
        sol.status,
        sol.objective,
        sol.iterations,
        sol.eq_residual,
        sol.dual_bound,
        solved.problem.p()
    );
    Ok(match sol.status {
        SolverStatus::Optimal => ExitCode::SUCCESS,
        SolverStatus::MaxIterations => ExitCode::from(2),
        SolverStatus::NumericalFailure => ExitCode::from(1),
    })
}

pub fn cmd_round(args: &RoundArgs) -> Result<ExitCode> {
    let dir = &args.run;
    let man = Manifest::load(dir)?;
    if man.command != "solve" {
        bail!("{} was written by `{}`, not `solve`", dir.display(), man.command);
    }
    let lambda = matio::decode(&man.read_verified(dir, manifest::LAMBDA_BIN)?)?;
    let config = &man.config;
    let ds = config.dataset.resolve()?;
    if ds.manifest().content_hash != man.dataset.content_hash {
        bail!("dataset no longer matches the manifest (content hash changed)");
    }
    let prob = LiftedProblem::build(&ds.x_train, &ds.y_train, config.gamma, config.bias)?;
    if lambda.shape() != (prob.p(), prob.p()) {
        bail!("lifted matrix is {}x{}, problem needs p={}", lambda.nrows(), lambda.ncols(), prob.p());
    }
    let opts = args.rounding.options(config.seed);
    let rounded = pipeline::round(&prob, &lambda, &opts)?;

    let provenance = Some(man.outputs[manifest::LAMBDA_BIN].clone());
    let mut out = man.clone();
    out.command = "round".into();
    out.config.rounding = opts.clone();
    out.write_output(dir, manifest::WEIGHTS_JSON, &serde_json::to_vec_pretty(&rounded.weights.to_json(provenance.clone()))?)?;
    let mut hist = Vec::new();
    rounded.outcome.write_history_csv(&mut hist)?;
    out.write_output(dir, manifest::PHI_CSV, &hist)?;
    let objective = man.solve.as_ref().map(|s| s.objective);
    let summary = json!({
        "lambda_sha256": provenance,
        "rounding": opts,
        "step": rounded.outcome.step,
        "best_iter": rounded.outcome.best_iter,
        "best_phi": rounded.outcome.best_phi(),
        "width": rounded.weights.width(),
        "training_loss": rounded.loss,
        "sdp_objective": objective,
    });
    out.write_output(dir, manifest::ROUND_JSON, &serde_json::to_vec_pretty(&summary)?)?;
    // manifest.json stays the solve record.
    manifest::write_file(dir, "round.manifest.json", &serde_json::to_vec_pretty(&out)?)?;

    println!(
        "training_loss={:.8} width={} best_phi={:.3e} best_iter={} sdp_objective={}",
        rounded.loss,
        rounded.weights.width(),
        rounded.outcome.best_phi(),
        rounded.outcome.best_iter,
        objective.map_or("n/a".into(), |o| format!("{o:.8}"))
    );
    Ok(ExitCode::SUCCESS)
}

pub fn cmd_train_sgd(args: &SgdArgs) -> Result<ExitCode> {
    let mut config = base_config(&args.data, args.gamma, args.bias, &args.out)?;
    config.sgd = args.sgd.config(config.dataset.name(), args.gamma);
    config.sgd_width = args.sgd.width;
    config.validate()?;
    let ds = config.dataset.resolve()?;
    let outcome = pipeline::train_sgd(&ds, config.gamma, config.bias, config.sgd_width, &config.sgd)?;

    let dir = &args.out;
    let mut man = Manifest::new("train-sgd", config, ds.manifest());
    man.write_output(dir, manifest::WEIGHTS_JSON, &serde_json::to_vec_pretty(&outcome.weights.to_json(None))?)?;
    let mut curve = String::from("sample,loss\n");
    for (k, l) in outcome.loss_curve.iter().enumerate() {
        curve.push_str(&format!("{k},{l:.17e}\n"));
    }
    man.write_output(dir, manifest::LOSS_CSV, curve.as_bytes())?;
    let summary = json!({
        "final_loss": outcome.final_loss,
        "restart_losses": outcome.restart_losses,
        "best_restart": outcome.best_restart,
        "optimizer": "full-batch gradient descent, constant step",
    });
    man.write_output(dir, "sgd.json", &serde_json::to_vec_pretty(&summary)?)?;
    man.save(dir)?;
    println!("final_loss={:.8} best_restart={}", outcome.final_loss, outcome.best_restart);
    Ok(ExitCode::SUCCESS)
}

pub fn cmd_evaluate(dir: &Path, weights: Option<&Path>) -> Result<ExitCode> {
    let man = Manifest::load(dir)?;
    let path = weights.map(Path::to_path_buf).unwrap_or_else(|| dir.join(manifest::WEIGHTS_JSON));
    let bytes = std::fs::read(&path).with_context(|| format!("reading {}", path.display()))?;
    let wj: WeightsJson = serde_json::from_slice(&bytes).with_context(|| format!("parsing {}", path.display()))?;
    let w = NetworkWeights::from_json(&wj)?;
    let ds = man.config.dataset.resolve()?;
    let bias = man.config.bias;
    let x_train = pipeline::inputs(&ds.x_train, bias);
    let train_loss = network::training_loss(&x_train, &ds.y_train, &w, man.config.gamma)?;

    let report = match ds.task {
        Task::Classification => {
            let (metrics, split) = pipeline::evaluate(&ds, bias, &w)?;
            println!(
                "split={split} accuracy={:.4} weighted_f1={:.4} threshold={:.2} training_loss={train_loss:.8}",
                metrics.accuracy, metrics.weighted_f1, metrics.best_threshold
            );
            json!({ "split": split, "metrics": metrics, "training_loss": train_loss })
        }
        Task::Regression => {
            println!("training_loss={train_loss:.8}");
            json!({ "training_loss": train_loss })
        }
    };
    manifest::write_file(dir, manifest::METRICS_JSON, &serde_json::to_vec_pretty(&report)?)?;
    Ok(ExitCode::SUCCESS)
}
