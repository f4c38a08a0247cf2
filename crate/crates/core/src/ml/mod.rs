//! Learning primitives: linear models, regression trees and their ensembles,
//! k-means, metrics, cross-validation and importance measures.
//!
//! Feature matrices are `ndarray` views with one row per sample. Every
//! stochastic routine takes an explicit seed and draws from
//! [`DetRng`](crate::rng::DetRng), so results are bit-reproducible.

mod cv;
mod ensemble;
mod importance;
mod kmeans;
mod linear;
mod metrics;
mod model;
mod tree;

use ndarray::ArrayView2;
use thiserror::Error;

pub use cv::{fold_sizes, kfold_cv, CvSummary, FoldScore};
pub use ensemble::{fit_forest, fit_gbr, Forest, ForestParams, GbrModel, GbrParams};
pub use importance::{gain_importance, permutation_importance, sum_normalize};
pub use kmeans::{kmeans, KMeansResult};
pub use linear::{fit_lasso, fit_ols, fit_ols_or_ridge, fit_ridge, soft_threshold, LassoParams, LinearModel, Standardization};
pub use metrics::{r2, rmse};
pub use model::Model;
pub use tree::{fit_tree, fit_tree_with, Node, RegressionTree, TreeParams};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MlError {
    #[error("normal equations are numerically singular")]
    SingularSystem,
    #[error("need at least {needed} rows, got {got}")]
    TooFewRows { needed: usize, got: usize },
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("target has zero variance")]
    DegenerateVariance,
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
}

/// Anything that maps a feature matrix to one prediction per row.
pub trait Regressor: Send + Sync {
    fn predict(&self, x: ArrayView2<'_, f64>) -> Vec<f64>;
    fn n_features(&self) -> usize;
}

pub(crate) fn check_xy(x: &ArrayView2<'_, f64>, y: &[f64]) -> Result<(), MlError> {
    if x.nrows() != y.len() {
        return Err(MlError::DimensionMismatch(format!("{} rows in X, {} targets", x.nrows(), y.len())));
    }
    Ok(())
}

pub(crate) fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}
