//! Two-step semiparametric estimation with single-index nuisance parameters.
//!
//! A first stage estimates the index direction θ (maximum score or probit).
//! The index `x'θ` is replaced by its empirical-CDF rank, and conditional
//! means given the rank are estimated by symmetrized nearest-neighborhood
//! (SNN) kernel regression. Second-stage estimators built on those fits are
//! provided for a sample-selection model and for a single-index matching
//! estimator of the treatment effect on the treated, together with plug-in
//! asymptotic variances and a seeded Monte Carlo harness.

pub mod bandwidth;
pub mod error;
pub mod estimators;
pub mod first_stage;
pub mod kernels;
pub mod linalg;
pub mod montecarlo;
pub mod normal;
pub mod population;
pub mod rank;
pub mod snn;

pub use bandwidth::{cross_validate, cross_validate_columns, CvResult};
pub use error::{Error, Result};
pub use estimators::{
    matching_estimate, ols_no_correction, plugin_estimate, selection_estimate, EstimateReport,
    MatchingSample, SelectionSample,
};
pub use first_stage::{max_score, probit_mle, IndexFit, IndexMethod, SearchConfig};
pub use kernels::Kernel;
pub use rank::{ranks, ranks_loo, IndexValues, RankValues};
pub use snn::{snn_fit, snn_fit_at, snn_fit_columns, xi_boundary, Conditioning, SnnFit};
