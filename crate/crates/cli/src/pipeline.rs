//! Solve, round, train and score, shared by the subcommands and `reproduce`.

use anyhow::{Context, Result};
use nalgebra::DMatrix;

use sdpnn::data::Dataset;
use sdpnn::eval::{self, MetricsReport};
use sdpnn::lifted::{with_ones_column, LiftedProblem};
use sdpnn::network::{self, NetworkWeights, SgdConfig, SgdOutcome};
use sdpnn::rounding::{self, RoundingOptions, RoundingOutcome};
use sdpnn::solver::{self, LiftedSolution, SolverOptions, SolverTrace};

pub struct Solved {
    pub problem: LiftedProblem,
    pub solution: LiftedSolution,
    pub trace: SolverTrace,
}

pub fn solve(ds: &Dataset, gamma: f64, bias: bool, opts: &SolverOptions) -> Result<Solved> {
    let problem = LiftedProblem::build(&ds.x_train, &ds.y_train, gamma, bias)?;
    let (solution, trace) = solver::solve(&problem, opts)?;
    Ok(Solved {
        problem,
        solution,
        trace,
    })
}

pub struct Rounded {
    pub outcome: RoundingOutcome,
    pub weights: NetworkWeights,
    /// Training loss of `weights` on the (possibly bias-augmented) inputs.
    pub loss: f64,
}

pub fn round(problem: &LiftedProblem, lambda: &DMatrix<f64>, opts: &RoundingOptions) -> Result<Rounded> {
    let outcome = rounding::tos_round(lambda, problem, opts)?;
    let weights = rounding::extract_weights(&outcome.factor, problem.sel())?;
    let loss = network::training_loss(problem.x(), problem.y(), &weights, problem.gamma())?;
    Ok(Rounded { outcome, weights, loss })
}

pub fn inputs(x: &DMatrix<f64>, bias: bool) -> DMatrix<f64> {
    if bias {
        with_ones_column(x)
    } else {
        x.clone()
    }
}

pub fn train_sgd(ds: &Dataset, gamma: f64, bias: bool, width: usize, cfg: &SgdConfig) -> Result<SgdOutcome> {
    let x = inputs(&ds.x_train, bias);
    Ok(network::sgd_train(&x, &ds.y_train, gamma, width, cfg)?)
}

/// Score `w` on the test split, or on the training split when there is none.
pub fn evaluate(ds: &Dataset, bias: bool, w: &NetworkWeights) -> Result<(MetricsReport, &'static str)> {
    let (x, y, split) = match (&ds.x_test, &ds.y_test) {
        (Some(x), Some(y)) => (x, y, "test"),
        _ => (&ds.x_train, &ds.y_train, "train"),
    };
    let scores = network::forward(&inputs(x, bias), w).context("scoring network")?;
    Ok((eval::classify_and_score(&scores, y)?, split))
}
