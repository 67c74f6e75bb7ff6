//! Agent-based simulation and mean-field analysis of wealth concentration
//! under a mixture of uniform and preferential (rich-get-richer) allocation.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analytics;
pub mod error;
pub mod experiment;
pub mod fenwick;
pub mod meanfield;
pub mod model;
pub mod rng;

pub use error::{Error, Result};
pub use meanfield::{evolve_expected, OccupancyVector};
pub use model::{
    ensemble_run, run, EnsembleHistogram, ModelParams, Simulation, WealthHistogram, WealthState,
};
