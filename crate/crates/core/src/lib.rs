//! Extrapolation of regression discontinuity treatment effects in
//! multi-cutoff designs.
//!
//! Units face one of several cutoffs. Comparing the control regression
//! functions of two cutoff groups below the lower cutoff identifies the
//! bias between the groups; under a constant-bias assumption the treatment
//! effect for the low-cutoff group can then be extrapolated to scores
//! between the two cutoffs:
//!
//! ```text
//! tau_low(xbar) = mu_{1,low}(xbar) - mu_{0,high}(xbar) - [mu_{0,low}(low-) - mu_{0,high}(low)]
//! ```
//!
//! Modules:
//! - [`dataset`]: loading and filtered views
//! - [`locfit`]: local polynomial engine, bandwidths, robust bias correction
//! - [`extrapolation`]: cutoff effects, pooled and weighted effects, sharp,
//!   fuzzy, polynomial-bias, and covariate-adjusted extrapolation
//! - [`falsification`]: parallel-trends tests below the low cutoff
//! - [`fixedeffects`]: linear fixed-effects models and slope test
//! - [`localrand`]: local randomization estimation and inference
//! - [`simulate`]: data generation and Monte Carlo studies
//! - [`rdplot`]: binned scatter data for RD plots
//! - [`cli`]: the `rdx` command line

pub mod cli;
pub mod dataset;
pub mod error;
pub mod extrapolation;
pub mod falsification;
pub mod fixedeffects;
pub mod localrand;
pub mod locfit;
pub mod ols;
pub mod output;
pub mod rdplot;
pub mod rng;
pub mod simulate;

pub use dataset::{
    load_dataset, CutoffPair, DataView, Dataset, Design, Filter, Observation, Schema,
};
pub use error::{RdError, Result};
pub use locfit::{
    fit_covariance, local_fit, rbc_interval, select_bandwidth_mse, Bandwidth, FitSpec, Interval,
    KernelKind, LocalFit, Sample, Side,
};
