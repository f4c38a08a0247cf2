//! Feature layers on the analysis grid: rasterization of vector sources,
//! assembly into a regression table, and ensemble feature ranking.

mod ranking;
mod rasterize;
mod table;

use thiserror::Error;

use crate::ml::MlError;

pub use ranking::{aggregate_scores, normalize_scores, rank_features, rank_features_with, ImportanceReport, RankConfig, RankMethod};
pub use rasterize::{
    per_km2, polygon_area, rasterize_lines, rasterize_points, rasterize_polygon_value, rasterize_source, Rasterized,
};
pub use table::{assemble, FeatureTable, Mask};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FeatureError {
    #[error("invalid geometry in '{source_name}' polygon {index}: {reason}")]
    Geometry {
        source_name: String,
        index: usize,
        reason: String,
    },
    #[error("feature table has no rows")]
    EmptyTable,
    #[error("duplicate feature column '{0}'")]
    DuplicateColumn(String),
    #[error("column '{0}' is defined on a different grid")]
    GridMismatch(String),
    #[error("non-finite value in column '{column}' at cell ({col}, {row})")]
    NonFinite { column: String, col: usize, row: usize },
    #[error("unknown feature column '{0}'")]
    UnknownColumn(String),
    #[error("need at least {needed} rows, got {got}")]
    TooFewRows { needed: usize, got: usize },
    #[error("need at least {needed} features, got {got}")]
    TooFewFeatures { needed: usize, got: usize },
    #[error("malformed feature table: {0}")]
    Malformed(String),
    #[error(transparent)]
    Ml(#[from] MlError),
}
