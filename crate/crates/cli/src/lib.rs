//! Command-line driver: datasets, solves, rounding, the gradient-descent
//! baseline, evaluation and table reproduction, with run manifests.

pub mod commands;
pub mod dataset;
pub mod manifest;
pub mod matio;
pub mod pipeline;
pub mod reference;
pub mod reproduce;
