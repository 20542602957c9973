//! Downstream analyses of model predictions: ridge ensembling under nested
//! cross-validation, canonical correlation between verb embeddings and
//! predicate states, error regression and worst-error ranking.

mod cca;
mod cv;
mod errreg;
mod extract;
mod matrix;
mod report;
mod ridge;
mod stats;

pub use cca::{cca, CcaResult, DEFAULT_COMPONENTS, RANK_TOLERANCE};
pub use cv::{
    bootstrap_mean_ci, nested_cv, plan_folds, FoldPlan, NestedCvConfig, NestedCvReport,
    OuterFoldReport, DEFAULT_GRID,
};
pub use errreg::{
    error_design, error_regression, error_response, fit_mixed, likelihood_ratio, ols, Coefficient,
    Design, ErrorObservation, ErrorRegressionOptions, ErrorRegressionReport, LikelihoodRatioTest,
    MixedFit, MixedSummary, OlsFit, SumCoding, VarianceComponents, REFERENCE_FRAME,
    ZERO_ERROR_OFFSET,
};
pub use extract::extract_probe_matrices;
pub use matrix::PredictionMatrix;
pub use report::{render_error_table, top_errors, RankedError};
pub use ridge::{ridge_fit, RidgeFit};
pub use stats::{mean, mean_absolute_error, mean_squared_error, pearson};

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ProbeError {
    #[error("length mismatch: expected {expected}, found {found}")]
    Length { expected: usize, found: usize },
    #[error("{0}")]
    Invalid(String),
    #[error("correlation undefined: zero variance")]
    UndefinedCorrelation,
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("i/o error: {0}")]
    Io(String),
    #[error("numerical failure: {0}")]
    Numerical(String),
    #[error("rank deficient: {valid} valid components of {requested} requested")]
    Rank { valid: usize, requested: usize },
    #[error("design error: {0}")]
    Design(String),
}
