use std::collections::BTreeMap;
use std::fmt;

use ndarray::{Array2, Axis};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{FeatureError, FeatureTable};
use crate::ml::{
    fit_forest, fit_gbr, fit_lasso, fit_ridge, gain_importance, permutation_importance, ForestParams, GbrParams,
    LassoParams, MlError, Standardization,
};
use crate::rng::{derive_seed, DetRng};

pub const MIN_RANK_ROWS: usize = 30;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RankMethod {
    RandomForest,
    GradientBoosting,
    Lasso,
    Ridge,
    Permutation,
}

impl RankMethod {
    pub const ALL: [RankMethod; 5] = [
        RankMethod::RandomForest,
        RankMethod::GradientBoosting,
        RankMethod::Lasso,
        RankMethod::Ridge,
        RankMethod::Permutation,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            RankMethod::RandomForest => "random_forest",
            RankMethod::GradientBoosting => "gradient_boosting",
            RankMethod::Lasso => "lasso",
            RankMethod::Ridge => "ridge",
            RankMethod::Permutation => "permutation",
        }
    }
}

impl fmt::Display for RankMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RankConfig {
    pub forest: ForestParams,
    pub gbr: GbrParams,
    pub lasso_alpha: f64,
    pub ridge_alpha: f64,
    pub permutation_repeats: usize,
    pub holdout_frac: f64,
}

impl Default for RankConfig {
    fn default() -> Self {
        Self {
            forest: ForestParams::default(),
            gbr: GbrParams::default(),
            lasso_alpha: 0.01,
            ridge_alpha: 0.1,
            permutation_repeats: 5,
            holdout_frac: 0.25,
        }
    }
}

/// Per-method and aggregate importance, each a distribution over features
/// in column order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImportanceReport {
    pub features: Vec<String>,
    pub per_method: BTreeMap<RankMethod, Vec<f64>>,
    pub aggregate: Vec<f64>,
    /// Feature names by descending aggregate importance.
    pub ranking: Vec<String>,
}

impl ImportanceReport {
    pub fn from_scores(features: Vec<String>, per_method: BTreeMap<RankMethod, Vec<f64>>) -> Self {
        let normalized: BTreeMap<RankMethod, Vec<f64>> =
            per_method.into_iter().map(|(m, s)| (m, normalize_scores(&s))).collect();
        let aggregate = aggregate_scores(&normalized.values().cloned().collect::<Vec<_>>());
        let mut order: Vec<usize> = (0..features.len()).collect();
        order.sort_by(|&a, &b| aggregate[b].total_cmp(&aggregate[a]).then(a.cmp(&b)));
        Self {
            ranking: order.iter().map(|&i| features[i].clone()).collect(),
            features,
            per_method: normalized,
            aggregate,
        }
    }

    pub fn top(&self, n: usize) -> Vec<String> {
        self.ranking.iter().take(n).cloned().collect()
    }

    pub fn aggregate_of(&self, feature: &str) -> Option<f64> {
        self.features.iter().position(|f| f == feature).map(|i| self.aggregate[i])
    }
}

/// Clips negatives to 0 and scales to sum 1; an all-zero vector becomes uniform.
pub fn normalize_scores(raw: &[f64]) -> Vec<f64> {
    let clipped: Vec<f64> = raw.iter().map(|v| if v.is_finite() { v.max(0.0) } else { 0.0 }).collect();
    let total: f64 = clipped.iter().sum();
    if total > 0.0 {
        clipped.iter().map(|v| v / total).collect()
    } else {
        vec![1.0 / raw.len() as f64; raw.len()]
    }
}

/// Element-wise unweighted mean of already-normalized score vectors.
pub fn aggregate_scores(methods: &[Vec<f64>]) -> Vec<f64> {
    let p = methods.first().map_or(0, Vec::len);
    (0..p)
        .map(|j| methods.iter().map(|m| m[j]).sum::<f64>() / methods.len() as f64)
        .collect()
}

pub fn rank_features(table: &FeatureTable, seed: u64) -> Result<ImportanceReport, FeatureError> {
    rank_features_with(table, seed, &RankConfig::default())
}

/// Five-method ensemble ranking on z-scored features and target.
pub fn rank_features_with(table: &FeatureTable, seed: u64, cfg: &RankConfig) -> Result<ImportanceReport, FeatureError> {
    if table.n_features() < 2 {
        return Err(FeatureError::TooFewFeatures { needed: 2, got: table.n_features() });
    }
    if table.n_rows() < MIN_RANK_ROWS {
        return Err(FeatureError::TooFewRows { needed: MIN_RANK_ROWS, got: table.n_rows() });
    }
    let raw = table.matrix();
    let x = Standardization::fit(&raw.view()).apply(&raw.view());
    let n = table.n_rows();
    let y_mean = table.target.iter().sum::<f64>() / n as f64;
    let y_sd = (table.target.iter().map(|v| (v - y_mean).powi(2)).sum::<f64>() / n as f64).sqrt();
    if !(y_sd > 0.0) {
        return Err(MlError::DegenerateVariance.into());
    }
    let y: Vec<f64> = table.target.iter().map(|v| (v - y_mean) / y_sd).collect();
    let p = table.n_features();

    let scores = RankMethod::ALL
        .par_iter()
        .map(|m| -> Result<Vec<f64>, MlError> {
            match m {
                RankMethod::RandomForest => {
                    let f = fit_forest(x.view(), &y, cfg.forest, derive_seed(seed, 0))?;
                    Ok(gain_importance(&f.trees, p))
                }
                RankMethod::GradientBoosting => {
                    let g = fit_gbr(x.view(), &y, cfg.gbr)?;
                    Ok(gain_importance(&g.trees, p))
                }
                RankMethod::Lasso => {
                    let params = LassoParams {
                        alpha: cfg.lasso_alpha,
                        ..Default::default()
                    };
                    Ok(fit_lasso(x.view(), &y, params)?.coefficients.iter().map(|c| c.abs()).collect())
                }
                RankMethod::Ridge => Ok(fit_ridge(x.view(), &y, cfg.ridge_alpha)?
                    .coefficients
                    .iter()
                    .map(|c| c.abs())
                    .collect()),
                RankMethod::Permutation => permutation_scores(&x, &y, cfg, seed),
            }
        })
        .collect::<Result<Vec<_>, _>>()?;
    let per_method = RankMethod::ALL.into_iter().zip(scores).collect();
    Ok(ImportanceReport::from_scores(table.names.clone(), per_method))
}

/// GBR fitted on a shuffled share of rows, scored by permutation on the rest.
fn permutation_scores(x: &Array2<f64>, y: &[f64], cfg: &RankConfig, seed: u64) -> Result<Vec<f64>, MlError> {
    let n = y.len();
    let n_test = ((n as f64 * cfg.holdout_frac).round() as usize).clamp(2, n - 2);
    let mut order: Vec<usize> = (0..n).collect();
    DetRng::new(derive_seed(seed, 1)).shuffle(&mut order);
    let (test, train) = order.split_at(n_test);
    let y_train: Vec<f64> = train.iter().map(|&i| y[i]).collect();
    let y_test: Vec<f64> = test.iter().map(|&i| y[i]).collect();
    let model = fit_gbr(x.select(Axis(0), train).view(), &y_train, cfg.gbr)?;
    let x_test = x.select(Axis(0), test);
    permutation_importance(&model, x_test.view(), &y_test, cfg.permutation_repeats, derive_seed(seed, 2))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::demand::CellSeries;
    use crate::features::{assemble, Mask};
    use crate::geo::{CellId, GeoPoint, GridSpec};
    use approx::assert_abs_diff_eq;

    fn table_from(cols: &[(&str, Vec<f64>)], target: Vec<f64>) -> FeatureTable {
        let n = target.len();
        let grid = GridSpec::anchored(GeoPoint { lat: 45.0, lon: -75.0 }, 100.0, n, 1);
        let series = |name: &str, v: &[f64]| {
            let mut s = CellSeries::new(grid, name, "");
            for (i, x) in v.iter().enumerate() {
                s.values.insert(CellId::new(i, 0), *x);
            }
            s
        };
        let cols: Vec<CellSeries> = cols.iter().map(|(n, v)| series(n, v)).collect();
        assemble(&cols, &series("target", &target), &Mask::All).unwrap()
    }

    fn quick() -> RankConfig {
        RankConfig {
            forest: ForestParams { n_trees: 30, ..Default::default() },
            gbr: GbrParams { n_estimators: 60, ..Default::default() },
            ..Default::default()
        }
    }

    #[test]
    fn aggregation_rule() {
        let agg = aggregate_scores(&[vec![0.2, 0.8], vec![0.6, 0.4]]);
        assert_abs_diff_eq!(agg[0], 0.4, epsilon = 1e-15);
        assert_abs_diff_eq!(agg[1], 0.6, epsilon = 1e-15);
    }

    #[test]
    fn normalization() {
        assert_eq!(normalize_scores(&[0.0, 0.0, 0.0, 0.0]), vec![0.25; 4]);
        assert_eq!(normalize_scores(&[-1.0, 3.0, 1.0]), vec![0.0, 0.75, 0.25]);
    }

    #[test]
    fn planted_relevance() {
        let mut rng = DetRng::new(21);
        let x1: Vec<f64> = (0..200).map(|_| rng.normal()).collect();
        let x2: Vec<f64> = (0..200).map(|_| rng.normal()).collect();
        let y: Vec<f64> = x1.iter().map(|v| 3.0 * v + 1e-3 * rng.normal()).collect();
        let t = table_from(&[("x1", x1), ("x2", x2)], y);
        let r = rank_features_with(&t, 5, &quick()).unwrap();
        assert!(r.aggregate[0] > 0.8, "{:?}", r.aggregate);
        assert_eq!(r.ranking[0], "x1");
        for s in r.per_method.values().chain(std::iter::once(&r.aggregate)) {
            assert_abs_diff_eq!(s.iter().sum::<f64>(), 1.0, epsilon = 1e-9);
        }
        assert_eq!(r, rank_features_with(&t, 5, &quick()).unwrap());
    }

    #[test]
    fn constant_feature_zero_permutation() {
        let mut rng = DetRng::new(22);
        let x1: Vec<f64> = (0..120).map(|_| rng.normal()).collect();
        let x2 = vec![3.0; 120];
        let y: Vec<f64> = x1.iter().map(|v| v + 0.1 * rng.normal()).collect();
        let t = table_from(&[("x1", x1), ("c", x2)], y);
        let r = rank_features_with(&t, 1, &quick()).unwrap();
        assert_eq!(r.per_method[&RankMethod::Permutation][1], 0.0);
    }

    #[test]
    fn preconditions() {
        let t = table_from(&[("a", vec![1.0; 10]), ("b", vec![2.0; 10])], (0..10).map(f64::from).collect());
        assert!(matches!(rank_features(&t, 0), Err(FeatureError::TooFewRows { .. })));
        let t = table_from(&[("a", (0..40).map(f64::from).collect())], (0..40).map(f64::from).collect());
        assert!(matches!(rank_features(&t, 0), Err(FeatureError::TooFewFeatures { .. })));
    }

    #[test]
    fn json_has_method_blocks() {
        let mut per = BTreeMap::new();
        per.insert(RankMethod::Lasso, vec![1.0, 3.0]);
        let r = ImportanceReport::from_scores(vec!["a".into(), "b".into()], per);
        let v = serde_json::to_value(&r).unwrap();
        assert_eq!(v["per_method"]["lasso"][1], 0.75);
        assert_eq!(v["ranking"][0], "b");
    }

    proptest::proptest! {
        #![proptest_config(proptest::prelude::ProptestConfig::with_cases(16))]
        #[test]
        fn duplicate_feature_does_not_inflate_unrelated(a in 0.5..3.0f64, b in -2.0..2.0f64, c in 0.1..2.0f64) {
            // bit columns of the row index: centred and mutually orthogonal
            let bit = |k: usize| (0..64).map(|i| if (i >> k) & 1 == 1 { 1.0 } else { -1.0 }).collect::<Vec<f64>>();
            let y: Vec<f64> = (0..64).map(|i| a * bit(0)[i] + b * bit(1)[i] + c * bit(2)[i]).collect();
            let cfg = RankConfig {
                forest: ForestParams { n_trees: 2, ..Default::default() },
                gbr: GbrParams { n_estimators: 2, ..Default::default() },
                ..Default::default()
            };
            let linear = |r: &ImportanceReport, j: usize| (r.per_method[&RankMethod::Lasso][j] + r.per_method[&RankMethod::Ridge][j]) / 2.0;
            let base = table_from(&[("x1", bit(0)), ("x2", bit(1)), ("x3", bit(2))], y.clone());
            let dup = table_from(&[("x1", bit(0)), ("x1_copy", bit(0)), ("x2", bit(1)), ("x3", bit(2))], y);
            let rb = rank_features_with(&base, 3, &cfg).unwrap();
            let rd = rank_features_with(&dup, 3, &cfg).unwrap();
            proptest::prop_assert!(linear(&rd, 2) <= linear(&rb, 1) + 1e-6);
            proptest::prop_assert!(linear(&rd, 3) <= linear(&rb, 2) + 1e-6);
        }
    }
}
