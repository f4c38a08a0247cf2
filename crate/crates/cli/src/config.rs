use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use spectrum_demand::demand::TemporalReduction;
use spectrum_demand::features::RankConfig;
use spectrum_demand::geo::{GeoPoint, DEFAULT_CELL_SIZE_M};
use spectrum_demand::pipeline::ModelConfig;
use spectrum_demand::propagation::PropagationParams;
use spectrum_demand::synth::CitySpec;

use crate::CliError;

/// Input files of one region. Unset paths default to the standard file
/// names inside `dataset_dir`.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RegionConfig {
    pub dataset_dir: Option<PathBuf>,
    pub sites: Option<PathBuf>,
    pub traffic: Option<PathBuf>,
    pub measurements: Option<PathBuf>,
    pub ntl: Option<PathBuf>,
    /// JSON list of `{name, path, kind, allocation}` feature sources.
    pub sources: Option<PathBuf>,
    /// Grid bounding box; read from the dataset's `truth.json` when unset.
    pub bbox_min: Option<GeoPoint>,
    pub bbox_max: Option<GeoPoint>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthConfig {
    pub city: CitySpec,
    /// Seed of the second city written to the cross-region dataset directory.
    pub twin_seed: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub output_dir: PathBuf,
    #[serde(flatten)]
    pub region: RegionConfig,
    pub cell_size_m: f64,
    pub propagation: PropagationParams,
    pub temporal_reduction: TemporalReduction,
    pub model: ModelConfig,
    pub rank: RankConfig,
    /// Baseline feature; the single strongest predictor when unset.
    pub baseline_feature: Option<String>,
    pub reduce_top_n: Vec<usize>,
    /// Test region of the cross-region scenario.
    pub cross_region: Option<RegionConfig>,
    pub synth: Option<SynthConfig>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 42,
            output_dir: PathBuf::from("out"),
            region: RegionConfig::default(),
            cell_size_m: DEFAULT_CELL_SIZE_M,
            propagation: PropagationParams::default(),
            temporal_reduction: TemporalReduction::Mean,
            model: ModelConfig::default(),
            rank: RankConfig::default(),
            baseline_feature: None,
            reduce_top_n: vec![5, 1],
            cross_region: None,
            synth: None,
        }
    }
}

/// Resolved input paths of one region.
#[derive(Debug, Clone)]
pub struct RegionPaths {
    pub dataset_dir: Option<PathBuf>,
    pub sites: PathBuf,
    pub traffic: PathBuf,
    pub measurements: PathBuf,
    pub ntl: PathBuf,
    pub sources: PathBuf,
    pub bbox: Option<(GeoPoint, GeoPoint)>,
}

/// A loaded configuration with paths resolved against the config file.
#[derive(Debug, Clone)]
pub struct Loaded {
    pub config: RunConfig,
    pub base_dir: PathBuf,
    pub primary: RegionPaths,
    pub test: Option<RegionPaths>,
    pub run_dir: PathBuf,
}

fn resolve(base: &Path, p: &Path) -> PathBuf {
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        base.join(p)
    }
}

impl RegionConfig {
    fn paths(&self, base: &Path, role: &str) -> Result<RegionPaths, CliError> {
        let dir = self.dataset_dir.as_ref().map(|d| resolve(base, d));
        let pick = |explicit: &Option<PathBuf>, default: &str| -> Result<PathBuf, CliError> {
            match (explicit, &dir) {
                (Some(p), _) => Ok(resolve(base, p)),
                (None, Some(d)) => Ok(d.join(default)),
                (None, None) => Err(CliError::Config(format!("{role}: set dataset_dir or an explicit path for {default}"))),
            }
        };
        let bbox = match (self.bbox_min, self.bbox_max) {
            (Some(a), Some(b)) => Some((a, b)),
            (None, None) => None,
            _ => return Err(CliError::Config(format!("{role}: bbox_min and bbox_max must be given together"))),
        };
        Ok(RegionPaths {
            sites: pick(&self.sites, "sites.csv")?,
            traffic: pick(&self.traffic, "traffic.csv")?,
            measurements: pick(&self.measurements, "measurements.csv")?,
            ntl: pick(&self.ntl, "ntl.asc")?,
            sources: pick(&self.sources, "sources.json")?,
            dataset_dir: dir,
            bbox,
        })
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<(), CliError> {
        let bad = |m: String| Err(CliError::Config(m));
        if !(self.cell_size_m.is_finite() && self.cell_size_m > 0.0) {
            return bad(format!("cell_size_m must be positive, got {}", self.cell_size_m));
        }
        let p = &self.propagation;
        if !(-160.0..=0.0).contains(&p.rx_threshold_dbm) {
            return bad(format!("propagation.rx_threshold_dbm must be in [-160, 0], got {}", p.rx_threshold_dbm));
        }
        if !(1.0..=10.0).contains(&p.mobile_height_m) {
            return bad(format!("propagation.mobile_height_m must be in [1, 10], got {}", p.mobile_height_m));
        }
        let m = &self.model;
        if !(m.ridge_alpha.is_finite() && m.ridge_alpha >= 0.0) {
            return bad(format!("model.ridge_alpha must be >= 0, got {}", m.ridge_alpha));
        }
        if m.k_clusters == 0 {
            return bad("model.k_clusters must be >= 1".into());
        }
        if !(m.train_frac > 0.0 && m.train_frac < 1.0) {
            return bad(format!("model.train_frac must be in (0, 1), got {}", m.train_frac));
        }
        if m.cv_folds == 1 {
            return bad("model.cv_folds must be 0 (disabled) or >= 2".into());
        }
        if !(m.gbr.learning_rate > 0.0 && m.gbr.learning_rate <= 1.0) || m.gbr.n_estimators == 0 {
            return bad("model.gbr needs n_estimators >= 1 and learning_rate in (0, 1]".into());
        }
        if !(self.rank.holdout_frac > 0.0 && self.rank.holdout_frac < 1.0) {
            return bad(format!("rank.holdout_frac must be in (0, 1), got {}", self.rank.holdout_frac));
        }
        if self.reduce_top_n.contains(&0) {
            return bad("reduce_top_n entries must be >= 1".into());
        }
        Ok(())
    }

    /// Hex digest of the canonical JSON form; names the run directory.
    pub fn digest(&self) -> String {
        let canonical = serde_json::to_string(self).expect("config serializes");
        hex::encode(Sha256::digest(canonical.as_bytes()))
    }
}

pub fn load(path: &Path, seed: Option<u64>, run_dir: Option<&Path>) -> Result<Loaded, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
    let mut config: RunConfig =
        serde_json::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
    if let Some(s) = seed {
        config.seed = s;
    }
    config.validate()?;
    let base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
    let base_dir = if base_dir.as_os_str().is_empty() { PathBuf::from(".") } else { base_dir };
    let primary = config.region.paths(&base_dir, "primary region")?;
    let test = config.cross_region.as_ref().map(|r| r.paths(&base_dir, "cross_region")).transpose()?;
    let run_dir = match run_dir {
        Some(d) => d.to_path_buf(),
        None => resolve(&base_dir, &config.output_dir).join(format!("run-{}", &config.digest()[..12])),
    };
    Ok(Loaded {
        config,
        base_dir,
        primary,
        test,
        run_dir,
    })
}

pub fn sha256_file(path: &Path) -> Result<String, CliError> {
    let bytes = std::fs::read(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}
