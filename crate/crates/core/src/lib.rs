//! Regime-switching Generalized Pareto regression for spatio-temporal
//! threshold excesses.
//!
//! A fit consists of `K` locally stationary GPD regression models, whose
//! shape and scale are affine in the observed covariates, and one label path
//! per location that assigns every excess to a regime. Label paths are
//! persistent: each location may change regime at most `C` times. Parameters
//! are estimated by alternating an exact dynamic-programming assignment step
//! with an annealed random-walk search over the regression coefficients,
//! restarted from random paths. Configurations `(K, C, lambda)` are compared
//! with AICc.
//!
//! The crate is organised bottom-up:
//!
//! * [`data_model`] panels, threshold extraction, covariate scaling
//! * [`gpd`] density, distribution and quantile kernels
//! * [`regression`] per-regime coefficient sets and feasibility
//! * [`objective`] loss matrices, weighted NLL, L1 penalty, BV norms
//! * [`optimizer`] assignment step, coefficient step and the restarted fit
//! * [`selection`] AICc and grid search
//! * [`diagnostics`] QQ residuals, standard errors, event synchronization
//! * [`synth`] ground-truth synthetic panels

// `!(x > y)` is used on purpose so that NaN fails the check.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod data_model;
pub mod diagnostics;
mod error;
pub mod gpd;
pub mod objective;
pub mod optimizer;
pub mod regression;
pub mod rng;
pub mod selection;
pub mod synth;

pub use data_model::{
    align_panels, extract_excesses, scale_covariates, CovariateKind, CovariatePanel, ExcessPanel, LocationCovariates,
    LocationExcesses, RawSeries, TimeIndex,
};
pub use error::{Error, Result};
pub use gpd::GpdPoint;
pub use objective::{LossMatrix, SwitchingPath};
pub use optimizer::{fit, AnnealerSettings, FitResult, ModelConfig};
pub use regression::{RegimeCoefficients, RegimeParameters};
pub use selection::{aicc, count_parameters, grid_search, GridSpec, SelectionRecord};
