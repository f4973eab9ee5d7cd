//! A stationary Markov process for count data with negative-binomial
//! marginals, in discrete and continuous time.
//!
//! The continuous-time transition probabilities have a closed form, a finite
//! mixture of negative-binomial and binomial terms, which makes exact
//! likelihoods cheap. On top of that the crate provides exact path simulation,
//! maximum-likelihood estimation for irregularly spaced observations, rolling
//! forecast evaluation, and a pgf-inversion baseline for comparison.

// `!(x > 0.0)` is used on purpose so that NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod diagnostics;
pub mod distributions;
pub mod error;
pub mod forecast;
pub mod inference;
pub mod inversion;
pub mod optimize;
pub mod process;
pub mod series;
pub mod simulate;

pub use distributions::{LogProb, Prob};
pub use error::{Error, Result};
pub use forecast::{Alignment, ForecastEval, RollingConfig};
pub use inference::{FitOptions, FitResult, StudySummary};
pub use inversion::{BenchReport, GridPreset, PgfQuery};
pub use process::{BDIRates, GeneratorRates, ModelParams, TransitionRow};
pub use series::TimeSeries;
pub use simulate::{RandomStream, SampleSchedule};
