use ndarray::ArrayView2;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::tree::{Presorted, RegressionTree, TreeParams};
use super::{check_xy, mean, MlError, Regressor};
use crate::rng::DetRng;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ForestParams {
    pub n_trees: usize,
    pub max_depth: usize,
    pub min_leaf: usize,
    /// Fraction of features considered at each split, rounded up.
    pub feature_frac: f64,
    pub bootstrap: bool,
}

impl Default for ForestParams {
    fn default() -> Self {
        Self {
            n_trees: 200,
            max_depth: 10,
            min_leaf: 2,
            feature_frac: 1.0 / 3.0,
            bootstrap: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Forest {
    pub trees: Vec<RegressionTree>,
    pub n_features: usize,
}

impl Regressor for Forest {
    fn predict(&self, x: ArrayView2<'_, f64>) -> Vec<f64> {
        let mut out = vec![0.0; x.nrows()];
        for t in &self.trees {
            for (o, p) in out.iter_mut().zip(t.predict(x)) {
                *o += p;
            }
        }
        let k = self.trees.len() as f64;
        out.iter_mut().for_each(|o| *o /= k);
        out
    }

    fn n_features(&self) -> usize {
        self.n_features
    }
}

/// Random forest. Tree `t` draws its bootstrap sample and feature subsets
/// from `DetRng::new(seed).fork(t)`, so the result does not depend on thread
/// scheduling.
pub fn fit_forest(x: ArrayView2<'_, f64>, y: &[f64], params: ForestParams, seed: u64) -> Result<Forest, MlError> {
    check_xy(&x, y)?;
    if params.n_trees == 0 {
        return Err(MlError::InvalidParameter("n_trees must be >= 1".into()));
    }
    if !(params.feature_frac > 0.0 && params.feature_frac <= 1.0) {
        return Err(MlError::InvalidParameter(format!("feature_frac must be in (0, 1], got {}", params.feature_frac)));
    }
    let n = y.len();
    let p = x.ncols();
    let max_features = ((params.feature_frac * p as f64).ceil() as usize).clamp(1, p.max(1));
    let tp = TreeParams {
        max_depth: params.max_depth,
        min_leaf: params.min_leaf,
    };
    let base = DetRng::new(seed);
    let presorted = Presorted::new(x);
    let trees = (0..params.n_trees)
        .into_par_iter()
        .map(|t| {
            let mut rng = base.fork(t as u64);
            let rows: Option<Vec<usize>> = params.bootstrap.then(|| (0..n).map(|_| rng.index(n)).collect());
            presorted.fit(y, tp, rows.as_deref(), Some((max_features, &mut rng)))
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok(Forest { trees, n_features: p })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GbrParams {
    pub n_estimators: usize,
    pub learning_rate: f64,
    pub max_depth: usize,
    pub min_leaf: usize,
}

impl Default for GbrParams {
    fn default() -> Self {
        Self {
            n_estimators: 300,
            learning_rate: 0.05,
            max_depth: 3,
            min_leaf: 5,
        }
    }
}

/// Gradient-boosted trees for squared error.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GbrModel {
    pub init: f64,
    pub learning_rate: f64,
    pub trees: Vec<RegressionTree>,
    pub n_features: usize,
    /// Training MSE after the initial constant and after each stage.
    pub train_mse: Vec<f64>,
}

impl GbrModel {
    /// Predictions using only the first `stages` trees.
    pub fn predict_staged(&self, x: ArrayView2<'_, f64>, stages: usize) -> Vec<f64> {
        let mut out = vec![self.init; x.nrows()];
        for t in self.trees.iter().take(stages) {
            for (o, row) in out.iter_mut().zip(x.rows()) {
                *o += self.learning_rate * t.predict_row(|f| row[f]);
            }
        }
        out
    }
}

impl Regressor for GbrModel {
    fn predict(&self, x: ArrayView2<'_, f64>) -> Vec<f64> {
        self.predict_staged(x, self.trees.len())
    }

    fn n_features(&self) -> usize {
        self.n_features
    }
}

/// Fits `F_m = F_{m-1} + lr * h_m` where each `h_m` is a regression tree on
/// the current residuals, starting from the target mean. Deterministic: no
/// row or feature subsampling is performed.
pub fn fit_gbr(x: ArrayView2<'_, f64>, y: &[f64], params: GbrParams) -> Result<GbrModel, MlError> {
    check_xy(&x, y)?;
    if y.is_empty() {
        return Err(MlError::TooFewRows { needed: 1, got: 0 });
    }
    if !(params.learning_rate > 0.0 && params.learning_rate <= 1.0) {
        return Err(MlError::InvalidParameter(format!("learning_rate must be in (0, 1], got {}", params.learning_rate)));
    }
    let tp = TreeParams {
        max_depth: params.max_depth,
        min_leaf: params.min_leaf,
    };
    let init = mean(y);
    let mut pred = vec![init; y.len()];
    let mse = |pred: &[f64]| y.iter().zip(pred).map(|(a, b)| (a - b) * (a - b)).sum::<f64>() / y.len() as f64;
    let mut train_mse = vec![mse(&pred)];
    let mut trees = Vec::with_capacity(params.n_estimators);
    let presorted = Presorted::new(x);
    for _ in 0..params.n_estimators {
        let residual: Vec<f64> = y.iter().zip(&pred).map(|(a, b)| a - b).collect();
        let tree = presorted.fit(&residual, tp, None, None)?;
        for (o, row) in pred.iter_mut().zip(x.rows()) {
            *o += params.learning_rate * tree.predict_row(|f| row[f]);
        }
        train_mse.push(mse(&pred));
        trees.push(tree);
    }
    Ok(GbrModel {
        init,
        learning_rate: params.learning_rate,
        trees,
        n_features: x.ncols(),
        train_mse,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ml::fit_tree;
    use approx::assert_abs_diff_eq;
    use ndarray::{array, Array2};

    fn toy(seed: u64, n: usize) -> (Array2<f64>, Vec<f64>) {
        let mut rng = DetRng::new(seed);
        let x = Array2::from_shape_fn((n, 4), |_| rng.uniform());
        let y = x.rows().into_iter().map(|r| (6.0 * r[0]).sin() + r[1] * r[2] + 0.1 * rng.normal()).collect();
        (x, y)
    }

    #[test]
    fn single_full_tree_forest_equals_tree() {
        let (x, y) = toy(3, 80);
        let tp = TreeParams { max_depth: 4, min_leaf: 2 };
        let f = fit_forest(
            x.view(),
            &y,
            ForestParams { n_trees: 1, max_depth: 4, min_leaf: 2, feature_frac: 1.0, bootstrap: false },
            9,
        )
        .unwrap();
        assert_eq!(f.trees[0], fit_tree(x.view(), &y, tp).unwrap());
    }

    #[test]
    fn forest_is_seed_deterministic() {
        let (x, y) = toy(4, 120);
        let p = ForestParams { n_trees: 20, ..Default::default() };
        let a = fit_forest(x.view(), &y, p, 11).unwrap();
        let b = fit_forest(x.view(), &y, p, 11).unwrap();
        let c = fit_forest(x.view(), &y, p, 12).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn gbr_zero_estimators_predicts_mean() {
        let x = array![[1.0], [2.0], [3.0]];
        let m = fit_gbr(x.view(), &[1.0, 2.0, 6.0], GbrParams { n_estimators: 0, ..Default::default() }).unwrap();
        assert_eq!(m.predict(x.view()), vec![3.0; 3]);
    }

    #[test]
    fn gbr_single_stage_is_scaled_tree() {
        let (x, y) = toy(5, 60);
        let m = fit_gbr(x.view(), &y, GbrParams { n_estimators: 1, learning_rate: 1.0, max_depth: 2, min_leaf: 1 }).unwrap();
        let yc: Vec<f64> = y.iter().map(|v| v - m.init).collect();
        let t = fit_tree(x.view(), &yc, TreeParams { max_depth: 2, min_leaf: 1 }).unwrap();
        for (a, b) in m.predict(x.view()).iter().zip(t.predict(x.view())) {
            assert_abs_diff_eq!(*a, m.init + b, epsilon = 1e-12);
        }
    }

    #[test]
    fn gbr_training_mse_non_increasing() {
        let (x, y) = toy(6, 200);
        let m = fit_gbr(x.view(), &y, GbrParams { n_estimators: 100, ..Default::default() }).unwrap();
        for w in m.train_mse.windows(2) {
            assert!(w[1] <= w[0] * (1.0 + 1e-12));
        }
        assert!(m.train_mse.last().unwrap() < &m.train_mse[0]);
    }
}
