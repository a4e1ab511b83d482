//! Convex lifting of two-layer ReLU network training, with a first-order
//! conic solver, a rounding procedure back to network weights, an SGD
//! baseline, dataset generation and evaluation metrics.

pub mod data;
pub mod error;
pub mod eval;
pub mod lifted;
pub mod linalg;
pub mod network;
pub mod rounding;
pub mod sdpa;
pub mod solver;

pub use error::{Error, Result};
pub use lifted::{critical_width, LiftedProblem, SelectionSet};
pub use network::NetworkWeights;
pub use solver::{solve, LiftedSolution, SolverOptions, SolverStatus, SolverTrace};
