//! Command-line driver: one subcommand per pipeline stage, sharing a JSON
//! run configuration and a content-addressed run directory.

pub mod config;
mod stages;

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use thiserror::Error;

pub use config::{load, Loaded, RegionConfig, RunConfig, SynthConfig};

#[derive(Debug, Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("missing {}: run `sdk {stage}` first", path.display())]
    MissingStage { stage: &'static str, path: PathBuf },
    #[error("input file {} does not exist", .0.display())]
    MissingInput(PathBuf),
    #[error("{0}")]
    Io(String),
    #[error("{0}")]
    Validation(String),
    #[error(transparent)]
    Ingest(#[from] spectrum_demand::ingest::IngestError),
    #[error(transparent)]
    Geo(#[from] spectrum_demand::geo::GeoError),
    #[error(transparent)]
    Propagation(#[from] spectrum_demand::propagation::PropagationError),
    #[error(transparent)]
    Demand(#[from] spectrum_demand::demand::DemandError),
    #[error(transparent)]
    Feature(#[from] spectrum_demand::features::FeatureError),
    #[error(transparent)]
    Pipeline(#[from] spectrum_demand::pipeline::PipelineError),
    #[error(transparent)]
    Synth(#[from] spectrum_demand::synth::SynthError),
}

#[derive(Debug, Parser)]
#[command(name = "sdk", version, about = "Grid-level spectrum demand estimation pipeline")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Args)]
pub struct Common {
    /// Run configuration (JSON); relative paths inside resolve against its directory
    #[arg(long, value_name = "PATH")]
    pub config: PathBuf,
    /// Run directory; defaults to <output_dir>/run-<config hash>
    #[arg(long, value_name = "PATH")]
    pub run_dir: Option<PathBuf>,
    /// Overrides the configured seed
    #[arg(long, value_name = "INT")]
    pub seed: Option<u64>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Build the analysis grid (grid.json)
    Grid(Common),
    /// Deployed bandwidth, light weights and the weighted proxy (proxy.csv)
    Proxy(Common),
    /// Measurement-weighted throughput indicator (indicator.csv)
    Indicator(Common),
    /// OLS of the indicator on the proxy (validation.json)
    ValidateProxy(Common),
    /// Rasterize feature sources into the feature table (features.csv)
    Features(Common),
    /// Ensemble feature importance ranking (importance.json)
    Rank(Common),
    /// Spatially clustered train/test split (split.json)
    Split(Common),
    /// Fit baseline, ridge and gradient boosting models (models/, artifact.json)
    Train(Common),
    /// Reload stored models and recompute their metrics (metrics.csv)
    Evaluate(Common),
    /// Refit on the most important features (reduced.csv)
    Reduce(Common),
    /// Export a cell series as GeoJSON and CSV
    Heatmap {
        #[command(flatten)]
        common: Common,
        /// Series name: proxy, bandwidth, ntl_weight, indicator, user_weight, target or a feature column
        #[arg(long, value_name = "NAME")]
        series: String,
    },
    /// Generate synthetic datasets from the config's synth section
    Synth(Common),
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Grid(_) => "grid",
            Command::Proxy(_) => "proxy",
            Command::Indicator(_) => "indicator",
            Command::ValidateProxy(_) => "validate-proxy",
            Command::Features(_) => "features",
            Command::Rank(_) => "rank",
            Command::Split(_) => "split",
            Command::Train(_) => "train",
            Command::Evaluate(_) => "evaluate",
            Command::Reduce(_) => "reduce",
            Command::Heatmap { .. } => "heatmap",
            Command::Synth(_) => "synth",
        }
    }

    fn common(&self) -> &Common {
        match self {
            Command::Grid(c)
            | Command::Proxy(c)
            | Command::Indicator(c)
            | Command::ValidateProxy(c)
            | Command::Features(c)
            | Command::Rank(c)
            | Command::Split(c)
            | Command::Train(c)
            | Command::Evaluate(c)
            | Command::Reduce(c)
            | Command::Synth(c) => c,
            Command::Heatmap { common, .. } => common,
        }
    }
}

/// Ordered `key=value` pairs of a stage summary.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Summary(pub Vec<(String, String)>);

impl Summary {
    pub fn push(&mut self, key: impl Into<String>, value: impl ToString) -> &mut Self {
        self.0.push((key.into(), value.to_string()));
        self
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.0.iter().find(|(k, _)| k == key).map(|(_, v)| v.as_str())
    }

    pub fn line(&self, stage: &str) -> String {
        let mut s = format!("stage={stage} status=ok");
        for (k, v) in &self.0 {
            s.push_str(&format!(" {k}={v}"));
        }
        s
    }
}

/// Runs one subcommand and returns its summary line.
pub fn run(command: &Command) -> Result<String, CliError> {
    let common = command.common();
    let loaded = load(&common.config, common.seed, common.run_dir.as_deref())?;
    log::info!("run directory {}", loaded.run_dir.display());
    let summary = match command {
        Command::Grid(_) => stages::grid(&loaded)?,
        Command::Proxy(_) => stages::proxy(&loaded)?,
        Command::Indicator(_) => stages::indicator(&loaded)?,
        Command::ValidateProxy(_) => stages::validate_proxy(&loaded)?,
        Command::Features(_) => stages::features(&loaded)?,
        Command::Rank(_) => stages::rank(&loaded)?,
        Command::Split(_) => stages::split(&loaded)?,
        Command::Train(_) => stages::train(&loaded)?,
        Command::Evaluate(_) => stages::evaluate(&loaded)?,
        Command::Reduce(_) => stages::reduce(&loaded)?,
        Command::Heatmap { series, .. } => stages::heatmap(&loaded, series)?,
        Command::Synth(_) => stages::synth(&loaded)?,
    };
    Ok(summary.line(command.name()))
}
