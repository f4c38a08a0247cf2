use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::scenario::{evaluate, rows_xy, ModelConfig, ScenarioData};
use super::split::SplitPlan;
use super::PipelineError;
use crate::features::ImportanceReport;
use crate::ml::{CvSummary, Model, Regressor};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScenarioKind {
    Baseline,
    Combined,
    CrossRegion,
}

impl ScenarioKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            ScenarioKind::Baseline => "baseline",
            ScenarioKind::Combined => "combined",
            ScenarioKind::CrossRegion => "cross_region",
        }
    }
}

/// Test-set scores (in-sample for the baseline).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub r2: f64,
    pub rmse: f64,
    pub n_train: usize,
    pub n_test: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReducedInfo {
    pub top_n: usize,
    pub features: Vec<String>,
    pub full_r2: f64,
    pub delta_r2: f64,
}

/// Everything needed to audit and reproduce one fitted scenario.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelArtifact {
    pub scenario: ScenarioKind,
    pub model: Model,
    pub features: Vec<String>,
    pub target: String,
    pub metrics: Metrics,
    pub cv: Option<CvSummary>,
    pub importance: ImportanceReport,
    pub split: Option<SplitPlan>,
    pub config: ModelConfig,
    pub seed: u64,
    /// Content hashes of the input files, keyed by role.
    pub fingerprints: BTreeMap<String, String>,
    pub reduced: Option<ReducedInfo>,
}

impl ModelArtifact {
    pub fn model_kind(&self) -> &'static str {
        match (&self.scenario, &self.model) {
            (ScenarioKind::Baseline, _) => "ols",
            (_, Model::Linear(_)) => "ridge",
            (_, Model::Gbr(_)) => "gbr",
            (_, Model::Forest(_)) => "forest",
            (_, Model::Tree(_)) => "tree",
        }
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("artifact serializes");
        s.push('\n');
        s
    }

    pub fn from_json(text: &str) -> Result<Self, PipelineError> {
        serde_json::from_str(text).map_err(|e| PipelineError::Malformed(e.to_string()))
    }

    /// Scores the stored model on the stored split (or test region) again.
    pub fn recompute_metrics(&self, data: &ScenarioData) -> Result<Metrics, PipelineError> {
        let (x, y, n_train) = match (self.scenario, data) {
            (ScenarioKind::Combined, ScenarioData::Combined(t)) => {
                let t = t.select(&self.features)?;
                let split = self
                    .split
                    .as_ref()
                    .ok_or_else(|| PipelineError::Malformed("combined artifact without split".into()))?;
                let (train, test) = split.row_indices(&t)?;
                let (x, y) = rows_xy(&t, &test);
                (x, y, train.len())
            }
            (ScenarioKind::CrossRegion, ScenarioData::CrossRegion { train, test }) => {
                let t = test.select(&self.features)?;
                (t.matrix(), t.target.clone(), train.n_rows())
            }
            (ScenarioKind::Baseline, ScenarioData::Combined(t)) => {
                let t = t.select(&self.features)?;
                (t.matrix(), t.target.clone(), t.n_rows())
            }
            _ => return Err(PipelineError::Malformed("scenario data does not match the artifact".into())),
        };
        if x.ncols() != self.model.n_features() {
            return Err(PipelineError::Malformed("feature count differs from the stored model".into()));
        }
        let (r2, rmse) = evaluate(&self.model, &x, &y)?;
        Ok(Metrics {
            r2,
            rmse,
            n_train,
            n_test: y.len(),
        })
    }
}

/// One row per artifact: `name,scenario,model,n_features,n_train,n_test,r2,rmse,cv_mean_r2,cv_std_r2,delta_r2`.
pub fn metrics_csv(rows: &[(&str, &ModelArtifact)]) -> String {
    let mut out = String::from("name,scenario,model,n_features,n_train,n_test,r2,rmse,cv_mean_r2,cv_std_r2,delta_r2\n");
    let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
    for (name, a) in rows {
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{},{},{},{}\n",
            name,
            a.scenario.as_str(),
            a.model_kind(),
            a.features.len(),
            a.metrics.n_train,
            a.metrics.n_test,
            a.metrics.r2,
            a.metrics.rmse,
            opt(a.cv.as_ref().map(|c| c.mean_r2)),
            opt(a.cv.as_ref().map(|c| c.std_r2)),
            opt(a.reduced.as_ref().map(|r| r.delta_r2)),
        ));
    }
    out
}
