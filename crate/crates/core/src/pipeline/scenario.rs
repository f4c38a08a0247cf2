use std::collections::BTreeMap;

use ndarray::{Array2, Axis};
use serde::{Deserialize, Serialize};

use super::artifact::{Metrics, ModelArtifact, ReducedInfo, ScenarioKind};
use super::split::{spatial_split, SplitPlan};
use super::PipelineError;
use crate::features::{FeatureTable, ImportanceReport, RankMethod};
use crate::ml::{fit_gbr, fit_ols, fit_ridge, gain_importance, kfold_cv, r2, rmse, GbrParams, MlError, Model, Regressor};
use crate::rng::derive_seed;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    Ridge,
    Gbr,
}

impl ModelKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            ModelKind::Ridge => "ridge",
            ModelKind::Gbr => "gbr",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelConfig {
    pub kind: ModelKind,
    pub ridge_alpha: f64,
    pub gbr: GbrParams,
    pub k_clusters: usize,
    pub train_frac: f64,
    /// 0 disables cross-validation.
    pub cv_folds: usize,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            kind: ModelKind::Gbr,
            ridge_alpha: 0.1,
            gbr: GbrParams::default(),
            k_clusters: 15,
            train_frac: 0.8,
            cv_folds: 5,
        }
    }
}

impl ModelConfig {
    pub fn with_kind(self, kind: ModelKind) -> Self {
        Self { kind, ..self }
    }
}

/// Data for one scenario: a single region split spatially, or a training
/// region evaluated on a second region.
#[derive(Debug, Clone, PartialEq)]
pub enum ScenarioData {
    Combined(FeatureTable),
    CrossRegion { train: FeatureTable, test: FeatureTable },
}

impl ScenarioData {
    fn select(&self, names: &[String]) -> Result<ScenarioData, PipelineError> {
        Ok(match self {
            ScenarioData::Combined(t) => ScenarioData::Combined(t.select(names)?),
            ScenarioData::CrossRegion { train, test } => ScenarioData::CrossRegion {
                train: train.select(names)?,
                test: test.select(names)?,
            },
        })
    }

    fn names(&self) -> &[String] {
        match self {
            ScenarioData::Combined(t) => &t.names,
            ScenarioData::CrossRegion { train, .. } => &train.names,
        }
    }
}

fn fit_model(cfg: &ModelConfig, x: ndarray::ArrayView2<'_, f64>, y: &[f64]) -> Result<Model, MlError> {
    Ok(match cfg.kind {
        ModelKind::Ridge => Model::Linear(fit_ridge(x, y, cfg.ridge_alpha)?),
        ModelKind::Gbr => Model::Gbr(fit_gbr(x, y, cfg.gbr)?),
    })
}

fn model_importance(model: &Model, names: &[String]) -> ImportanceReport {
    let (method, raw) = match model {
        Model::Linear(m) => (RankMethod::Ridge, m.coefficients.iter().map(|c| c.abs()).collect()),
        other => (RankMethod::GradientBoosting, gain_importance(other.trees(), names.len())),
    };
    ImportanceReport::from_scores(names.to_vec(), BTreeMap::from([(method, raw)]))
}

pub(super) fn evaluate(model: &dyn Regressor, x: &Array2<f64>, y: &[f64]) -> Result<(f64, f64), MlError> {
    let pred = model.predict(x.view());
    Ok((r2(y, &pred)?, rmse(y, &pred)?))
}

pub(super) fn rows_xy(table: &FeatureTable, rows: &[usize]) -> (Array2<f64>, Vec<f64>) {
    (table.matrix().select(Axis(0), rows), rows.iter().map(|&i| table.target[i]).collect())
}

fn fit_and_score(
    cfg: &ModelConfig,
    seed: u64,
    names: &[String],
    target: &str,
    (x_train, y_train): (Array2<f64>, Vec<f64>),
    (x_test, y_test): (Array2<f64>, Vec<f64>),
) -> Result<(Model, Metrics, Option<crate::ml::CvSummary>, ImportanceReport), PipelineError> {
    if y_test.len() < 2 {
        return Err(PipelineError::TooFewRows { needed: 2, got: y_test.len() });
    }
    let model = fit_model(cfg, x_train.view(), &y_train)?;
    let (test_r2, test_rmse) = evaluate(&model, &x_test, &y_test)?;
    let cv = if cfg.cv_folds >= 2 {
        Some(kfold_cv(x_train.view(), &y_train, cfg.cv_folds, derive_seed(seed, 7), |x, y| fit_model(cfg, x, y))?)
    } else {
        None
    };
    let importance = model_importance(&model, names);
    log::info!("{target}: {} r2={test_r2:.4} rmse={test_rmse:.4}", cfg.kind.as_str());
    let metrics = Metrics {
        r2: test_r2,
        rmse: test_rmse,
        n_train: y_train.len(),
        n_test: y_test.len(),
    };
    Ok((model, metrics, cv, importance))
}

/// Single-region scenario on a spatial split. A supplied `split` is reused
/// as-is; otherwise one is drawn from the config and seed.
pub fn run_combined(
    table: &FeatureTable,
    cfg: &ModelConfig,
    seed: u64,
    split: Option<&SplitPlan>,
) -> Result<ModelArtifact, PipelineError> {
    let split = match split {
        Some(s) => s.clone(),
        None => spatial_split(table, cfg.k_clusters, cfg.train_frac, seed)?,
    };
    let (train, test) = split.row_indices(table)?;
    let (model, metrics, cv, importance) =
        fit_and_score(cfg, seed, &table.names, &table.target_name, rows_xy(table, &train), rows_xy(table, &test))?;
    Ok(ModelArtifact {
        scenario: ScenarioKind::Combined,
        model,
        features: table.names.clone(),
        target: table.target_name.clone(),
        metrics,
        cv,
        importance,
        split: Some(split),
        config: *cfg,
        seed,
        fingerprints: BTreeMap::new(),
        reduced: None,
    })
}

/// Trains on every row of `train` and tests on every row of `test`.
pub fn run_cross_region(
    train: &FeatureTable,
    test: &FeatureTable,
    cfg: &ModelConfig,
    seed: u64,
) -> Result<ModelArtifact, PipelineError> {
    if train.names != test.names {
        return Err(PipelineError::SchemaMismatch {
            train: train.names.clone(),
            test: test.names.clone(),
        });
    }
    let all = |t: &FeatureTable| (t.matrix(), t.target.clone());
    let (model, metrics, cv, importance) = fit_and_score(cfg, seed, &train.names, &train.target_name, all(train), all(test))?;
    Ok(ModelArtifact {
        scenario: ScenarioKind::CrossRegion,
        model,
        features: train.names.clone(),
        target: train.target_name.clone(),
        metrics,
        cv,
        importance,
        split: None,
        config: *cfg,
        seed,
        fingerprints: BTreeMap::new(),
        reduced: None,
    })
}

pub fn run_scenario(data: &ScenarioData, cfg: &ModelConfig, seed: u64) -> Result<ModelArtifact, PipelineError> {
    match data {
        ScenarioData::Combined(t) => run_combined(t, cfg, seed, None),
        ScenarioData::CrossRegion { train, test } => run_cross_region(train, test, cfg, seed),
    }
}

/// OLS on one named feature over all rows; metrics are in-sample.
pub fn run_baseline(table: &FeatureTable, feature: &str) -> Result<ModelArtifact, PipelineError> {
    let j = table
        .column_index(feature)
        .map_err(|_| PipelineError::UnknownFeature(feature.to_string()))?;
    let x = Array2::from_shape_vec((table.n_rows(), 1), table.columns[j].clone())
        .map_err(|e| PipelineError::Malformed(e.to_string()))?;
    let model = Model::Linear(fit_ols(x.view(), &table.target)?);
    let (fit_r2, fit_rmse) = evaluate(&model, &x, &table.target)?;
    let names = vec![feature.to_string()];
    Ok(ModelArtifact {
        scenario: ScenarioKind::Baseline,
        importance: ImportanceReport::from_scores(names.clone(), BTreeMap::from([(RankMethod::Ridge, vec![1.0])])),
        model,
        features: names,
        target: table.target_name.clone(),
        metrics: Metrics {
            r2: fit_r2,
            rmse: fit_rmse,
            n_train: table.n_rows(),
            n_test: table.n_rows(),
        },
        cv: None,
        split: None,
        config: ModelConfig::default(),
        seed: 0,
        fingerprints: BTreeMap::new(),
        reduced: None,
    })
}

/// Reruns `artifact`'s scenario on its `top_n` most important features
/// (kept in their original column order), reusing the stored split.
pub fn run_reduced(artifact: &ModelArtifact, data: &ScenarioData, top_n: usize) -> Result<ModelArtifact, PipelineError> {
    let available = artifact.importance.ranking.len();
    if top_n == 0 || top_n > available {
        return Err(PipelineError::TooFewFeatures { requested: top_n, available });
    }
    if artifact.scenario == ScenarioKind::Baseline {
        return Err(PipelineError::Malformed("baseline artifacts cannot be reduced".into()));
    }
    let chosen = artifact.importance.top(top_n);
    let keep: Vec<String> = data.names().iter().filter(|n| chosen.contains(n)).cloned().collect();
    if keep.len() != top_n {
        return Err(PipelineError::UnknownFeature(
            chosen.into_iter().find(|c| !data.names().contains(c)).unwrap_or_default(),
        ));
    }
    let reduced_data = data.select(&keep)?;
    let mut out = match &reduced_data {
        ScenarioData::Combined(t) => run_combined(t, &artifact.config, artifact.seed, artifact.split.as_ref())?,
        ScenarioData::CrossRegion { train, test } => run_cross_region(train, test, &artifact.config, artifact.seed)?,
    };
    out.fingerprints = artifact.fingerprints.clone();
    out.reduced = Some(ReducedInfo {
        top_n,
        features: keep,
        full_r2: artifact.metrics.r2,
        delta_r2: out.metrics.r2 - artifact.metrics.r2,
    });
    Ok(out)
}
