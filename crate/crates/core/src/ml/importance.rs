use ndarray::ArrayView2;

use super::tree::RegressionTree;
use super::{check_xy, metrics::r2, MlError, Regressor};
use crate::rng::DetRng;

/// Scales non-negative scores to sum to 1. All-zero input stays all zero.
pub fn sum_normalize(scores: &[f64]) -> Vec<f64> {
    let total: f64 = scores.iter().map(|s| s.max(0.0)).sum();
    if total > 0.0 {
        scores.iter().map(|s| s.max(0.0) / total).collect()
    } else {
        vec![0.0; scores.len()]
    }
}

/// Total split gain attributed to each feature over all trees, normalized to
/// sum to 1 (all zeros when no tree has a split).
pub fn gain_importance<'a>(trees: impl IntoIterator<Item = &'a RegressionTree>, n_features: usize) -> Vec<f64> {
    let mut raw = vec![0.0; n_features];
    for t in trees {
        for node in &t.nodes {
            if let Some(f) = node.feature {
                raw[f] += node.gain;
            }
        }
    }
    sum_normalize(&raw)
}

/// Mean drop in R² when one column is shuffled, averaged over `n_repeats`.
///
/// One generator seeded with `seed` is consumed feature by feature, repeat
/// by repeat; each draw is a Fisher-Yates permutation of the row indices.
pub fn permutation_importance(
    model: &dyn Regressor,
    x: ArrayView2<'_, f64>,
    y: &[f64],
    n_repeats: usize,
    seed: u64,
) -> Result<Vec<f64>, MlError> {
    check_xy(&x, y)?;
    if n_repeats == 0 {
        return Err(MlError::InvalidParameter("n_repeats must be >= 1".into()));
    }
    let base = r2(y, &model.predict(x))?;
    let mut rng = DetRng::new(seed);
    let mut work = x.to_owned();
    let mut out = Vec::with_capacity(x.ncols());
    for j in 0..x.ncols() {
        let original = x.column(j);
        let mut drop = 0.0;
        for _ in 0..n_repeats {
            let mut perm: Vec<usize> = (0..x.nrows()).collect();
            rng.shuffle(&mut perm);
            for (dst, &src) in work.column_mut(j).iter_mut().zip(&perm) {
                *dst = original[src];
            }
            drop += base - r2(y, &model.predict(work.view()))?;
        }
        work.column_mut(j).assign(&original);
        out.push(drop / n_repeats as f64);
    }
    Ok(out)
}
