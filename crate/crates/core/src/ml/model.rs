use ndarray::ArrayView2;
use serde::{Deserialize, Serialize};

use super::ensemble::{Forest, GbrModel};
use super::linear::LinearModel;
use super::tree::RegressionTree;
use super::Regressor;

/// Any fitted model, tagged by `kind` when serialized.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Model {
    Linear(LinearModel),
    Tree(RegressionTree),
    Forest(Forest),
    Gbr(GbrModel),
}

impl Model {
    pub fn trees(&self) -> &[RegressionTree] {
        match self {
            Model::Linear(_) => &[],
            Model::Tree(t) => std::slice::from_ref(t),
            Model::Forest(f) => &f.trees,
            Model::Gbr(g) => &g.trees,
        }
    }
}

impl Regressor for Model {
    fn predict(&self, x: ArrayView2<'_, f64>) -> Vec<f64> {
        match self {
            Model::Linear(m) => m.predict(x),
            Model::Tree(m) => m.predict(x),
            Model::Forest(m) => m.predict(x),
            Model::Gbr(m) => m.predict(x),
        }
    }

    fn n_features(&self) -> usize {
        match self {
            Model::Linear(m) => m.n_features(),
            Model::Tree(m) => m.n_features(),
            Model::Forest(m) => m.n_features(),
            Model::Gbr(m) => m.n_features(),
        }
    }
}
