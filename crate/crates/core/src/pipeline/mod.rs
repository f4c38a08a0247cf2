//! Experimental protocol: spatially clustered train/test splits, the
//! single-feature baseline, combined and cross-region model scenarios,
//! reduced-feature reruns and artifact persistence.

mod artifact;
mod scenario;
mod split;

use thiserror::Error;

use crate::features::FeatureError;
use crate::ml::MlError;

pub use artifact::{metrics_csv, Metrics, ModelArtifact, ReducedInfo, ScenarioKind};
pub use scenario::{run_baseline, run_combined, run_cross_region, run_reduced, run_scenario, ModelConfig, ModelKind, ScenarioData};
pub use split::{spatial_split, SplitPlan};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PipelineError {
    #[error("need at least {needed} rows, got {got}")]
    TooFewRows { needed: usize, got: usize },
    #[error("unknown feature '{0}'")]
    UnknownFeature(String),
    #[error("feature columns differ between tables: train {train:?}, test {test:?}")]
    SchemaMismatch { train: Vec<String>, test: Vec<String> },
    #[error("top_n must be between 1 and {available}, got {requested}")]
    TooFewFeatures { requested: usize, available: usize },
    #[error("split plan does not match the table: {0}")]
    SplitMismatch(String),
    #[error("artifact is malformed: {0}")]
    Malformed(String),
    #[error(transparent)]
    Feature(#[from] FeatureError),
    #[error(transparent)]
    Ml(#[from] MlError),
}
