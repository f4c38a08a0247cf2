//! Readers and writers for every external data file.
//!
//! * tabular inputs are CSV (`#` comment lines allowed, LF or CRLF)
//! * nighttime-light luminance is an ESRI ASCII grid
//! * vector feature layers are GeoJSON `FeatureCollection`s
//!
//! Parsers scan the whole input before returning: the result is either
//! complete and valid or an error that names every offending row.

mod raster;
mod tabular;
mod vector;

use std::fmt;
use std::path::{Path, PathBuf};

use thiserror::Error;

pub use raster::{parse_raster, parse_raster_str, raster_to_string, write_raster, RasterGrid, DEFAULT_NODATA};
pub use tabular::{
    measurements_to_csv, parse_measurements, parse_measurements_str, parse_sites, parse_sites_str, parse_traffic,
    parse_traffic_str, sites_to_csv, traffic_to_csv, write_measurements, write_sites, write_traffic,
    MeasurementRecord, TrafficRecord,
};
pub use vector::{
    feature_source_to_geojson, parse_feature_source, parse_feature_source_str, write_feature_source, Allocation,
    FeatureSource, SourceGeometry, SourceKind, ValuedPolygon,
};

#[derive(Debug, Clone, PartialEq)]
pub struct RowIssue {
    pub line: u64,
    pub column: Option<String>,
    pub reason: String,
}

impl fmt::Display for RowIssue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.column {
            Some(c) => write!(f, "line {}, column {}: {}", self.line, c, self.reason),
            None => write!(f, "line {}: {}", self.line, self.reason),
        }
    }
}

fn join_issues(issues: &[RowIssue]) -> String {
    issues.iter().map(|i| i.to_string()).collect::<Vec<_>>().join("; ")
}

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("parse error at line {line}, column {column}: {reason}")]
    Parse { line: u64, column: String, reason: String },
    #[error("{} invalid row(s): {}", issues.len(), join_issues(issues))]
    Validation { issues: Vec<RowIssue> },
    #[error("unsupported geometry in feature {feature}: {reason}")]
    UnsupportedGeometry { feature: usize, reason: String },
}

impl IngestError {
    pub(crate) fn parse(line: u64, column: impl Into<String>, reason: impl Into<String>) -> Self {
        IngestError::Parse {
            line,
            column: column.into(),
            reason: reason.into(),
        }
    }
}

pub(crate) fn read_to_string(path: &Path) -> Result<String, IngestError> {
    std::fs::read_to_string(path).map_err(|source| IngestError::Io {
        path: path.to_path_buf(),
        source,
    })
}

pub(crate) fn write_string(path: &Path, contents: &str) -> Result<(), IngestError> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent).map_err(|source| IngestError::Io {
                path: parent.to_path_buf(),
                source,
            })?;
        }
    }
    std::fs::write(path, contents).map_err(|source| IngestError::Io {
        path: path.to_path_buf(),
        source,
    })
}
