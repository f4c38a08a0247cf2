use ndarray::{ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use super::metrics::{r2, rmse};
use super::{check_xy, MlError, Regressor};
use crate::rng::DetRng;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldScore {
    pub fold: usize,
    pub n_test: usize,
    pub r2: f64,
    pub rmse: f64,
}

/// Per-fold scores with their mean and population standard deviation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvSummary {
    pub folds: Vec<FoldScore>,
    pub mean_r2: f64,
    pub std_r2: f64,
    pub mean_rmse: f64,
    pub std_rmse: f64,
}

/// Sizes of `k` folds over `n` rows; the first `n % k` folds get one extra.
pub fn fold_sizes(n: usize, k: usize) -> Vec<usize> {
    (0..k).map(|i| n / k + usize::from(i < n % k)).collect()
}

fn mean_std(v: &[f64]) -> (f64, f64) {
    let m = v.iter().sum::<f64>() / v.len() as f64;
    let var = v.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / v.len() as f64;
    (m, var.sqrt())
}

/// Shuffled k-fold cross-validation. `fit` trains on the given rows and
/// returns a model that is scored on the held-out fold.
pub fn kfold_cv<F, M>(x: ArrayView2<'_, f64>, y: &[f64], k: usize, seed: u64, fit: F) -> Result<CvSummary, MlError>
where
    F: Fn(ArrayView2<'_, f64>, &[f64]) -> Result<M, MlError>,
    M: Regressor,
{
    check_xy(&x, y)?;
    if k < 2 {
        return Err(MlError::InvalidParameter(format!("k must be >= 2, got {k}")));
    }
    if y.len() < k {
        return Err(MlError::TooFewRows { needed: k, got: y.len() });
    }
    let mut order: Vec<usize> = (0..y.len()).collect();
    DetRng::new(seed).shuffle(&mut order);
    let mut folds = Vec::with_capacity(k);
    let mut start = 0;
    for (fold, size) in fold_sizes(y.len(), k).into_iter().enumerate() {
        let test = &order[start..start + size];
        let train: Vec<usize> = order[..start].iter().chain(&order[start + size..]).copied().collect();
        start += size;
        let x_train = x.select(Axis(0), &train);
        let y_train: Vec<f64> = train.iter().map(|&i| y[i]).collect();
        let model = fit(x_train.view(), &y_train)?;
        let x_test = x.select(Axis(0), test);
        let y_test: Vec<f64> = test.iter().map(|&i| y[i]).collect();
        let pred = model.predict(x_test.view());
        folds.push(FoldScore {
            fold,
            n_test: size,
            r2: r2(&y_test, &pred)?,
            rmse: rmse(&y_test, &pred)?,
        });
    }
    let (mean_r2, std_r2) = mean_std(&folds.iter().map(|f| f.r2).collect::<Vec<_>>());
    let (mean_rmse, std_rmse) = mean_std(&folds.iter().map(|f| f.rmse).collect::<Vec<_>>());
    Ok(CvSummary {
        folds,
        mean_r2,
        std_r2,
        mean_rmse,
        std_rmse,
    })
}
