use nalgebra::{DMatrix, DVector};
use ndarray::ArrayView2;
use serde::{Deserialize, Serialize};

use super::{check_xy, mean, MlError, Regressor};

// Relative pivot below which the unregularized system is treated as singular.
const SINGULAR_PIVOT: f64 = 1e-10;

/// Per-feature z-score parameters (population standard deviation).
/// Constant columns get `std = 1` and are flagged so their coefficient stays 0.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardization {
    pub means: Vec<f64>,
    pub stds: Vec<f64>,
    pub constant: Vec<bool>,
}

impl Standardization {
    pub fn fit(x: &ArrayView2<'_, f64>) -> Self {
        let n = x.nrows() as f64;
        let mut means = Vec::with_capacity(x.ncols());
        let mut stds = Vec::with_capacity(x.ncols());
        let mut constant = Vec::with_capacity(x.ncols());
        for col in x.columns() {
            let m = col.sum() / n;
            let var = col.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / n;
            let sd = var.sqrt();
            let is_const = !(sd > 1e-12 * m.abs().max(1.0));
            means.push(m);
            stds.push(if is_const { 1.0 } else { sd });
            constant.push(is_const);
        }
        Self { means, stds, constant }
    }

    pub fn apply(&self, x: &ArrayView2<'_, f64>) -> ndarray::Array2<f64> {
        let mut z = x.to_owned();
        for (j, mut col) in z.columns_mut().into_iter().enumerate() {
            if self.constant[j] {
                col.fill(0.0);
            } else {
                col.mapv_inplace(|v| (v - self.means[j]) / self.stds[j]);
            }
        }
        z
    }
}

/// Linear model fitted on standardized features.
///
/// `coefficients` and `intercept` are on the standardized scale
/// (`intercept` = training target mean); see [`LinearModel::raw_coefficients`]
/// for the original feature units.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearModel {
    pub coefficients: Vec<f64>,
    pub intercept: f64,
    pub standardization: Standardization,
    pub alpha: f64,
    pub converged: bool,
}

impl LinearModel {
    pub fn raw_coefficients(&self) -> Vec<f64> {
        self.coefficients
            .iter()
            .zip(&self.standardization.stds)
            .map(|(w, s)| w / s)
            .collect()
    }

    pub fn raw_intercept(&self) -> f64 {
        let shift: f64 = self
            .coefficients
            .iter()
            .zip(self.standardization.means.iter().zip(&self.standardization.stds))
            .map(|(w, (m, s))| w * m / s)
            .sum();
        self.intercept - shift
    }
}

impl Regressor for LinearModel {
    fn predict(&self, x: ArrayView2<'_, f64>) -> Vec<f64> {
        let st = &self.standardization;
        x.rows()
            .into_iter()
            .map(|row| {
                self.intercept
                    + row
                        .iter()
                        .enumerate()
                        .filter(|(j, _)| !st.constant[*j])
                        .map(|(j, v)| self.coefficients[j] * (v - st.means[j]) / st.stds[j])
                        .sum::<f64>()
            })
            .collect()
    }

    fn n_features(&self) -> usize {
        self.coefficients.len()
    }
}

fn centered(y: &[f64]) -> (f64, Vec<f64>) {
    let m = mean(y);
    (m, y.iter().map(|v| v - m).collect())
}

/// Ridge regression: solves `(ZᵀZ + α n I) w = Zᵀ(y - ȳ)` on z-scored
/// features; the intercept is not penalized.
pub fn fit_ridge(x: ArrayView2<'_, f64>, y: &[f64], alpha: f64) -> Result<LinearModel, MlError> {
    check_xy(&x, y)?;
    if !(alpha >= 0.0 && alpha.is_finite()) {
        return Err(MlError::InvalidParameter(format!("alpha must be >= 0, got {alpha}")));
    }
    let n = x.nrows();
    if n < 2 {
        return Err(MlError::TooFewRows { needed: 2, got: n });
    }
    let st = Standardization::fit(&x);
    let z = st.apply(&x);
    let (y_mean, yc) = centered(y);
    let active: Vec<usize> = (0..x.ncols()).filter(|j| !st.constant[*j]).collect();
    let mut coefficients = vec![0.0; x.ncols()];
    if !active.is_empty() {
        let p = active.len();
        let mut gram = DMatrix::<f64>::zeros(p, p);
        let mut rhs = DVector::<f64>::zeros(p);
        for (a, &ja) in active.iter().enumerate() {
            let ca = z.column(ja);
            rhs[a] = ca.iter().zip(&yc).map(|(u, v)| u * v).sum();
            for (b, &jb) in active.iter().enumerate().skip(a) {
                let g = ca.dot(&z.column(jb));
                gram[(a, b)] = g;
                gram[(b, a)] = g;
            }
        }
        let scale = gram.diagonal().max();
        for a in 0..p {
            gram[(a, a)] += alpha * n as f64;
        }
        let chol = gram.clone().cholesky().ok_or(MlError::SingularSystem)?;
        if alpha == 0.0 {
            let l = chol.l_dirty();
            let min_pivot = (0..p).map(|i| l[(i, i)] * l[(i, i)]).fold(f64::INFINITY, f64::min);
            if min_pivot < SINGULAR_PIVOT * scale {
                return Err(MlError::SingularSystem);
            }
        }
        let w = chol.solve(&rhs);
        for (a, &j) in active.iter().enumerate() {
            coefficients[j] = w[a];
        }
    }
    Ok(LinearModel {
        coefficients,
        intercept: y_mean,
        standardization: st,
        alpha,
        converged: true,
    })
}

/// Least squares with intercept; identical to ridge with `alpha = 0`.
pub fn fit_ols(x: ArrayView2<'_, f64>, y: &[f64]) -> Result<LinearModel, MlError> {
    let needed = x.ncols() + 1;
    if x.nrows() < needed {
        return Err(MlError::TooFewRows { needed, got: x.nrows() });
    }
    fit_ridge(x, y, 0.0)
}

/// OLS that falls back to ridge with `fallback_alpha` on a singular system.
pub fn fit_ols_or_ridge(x: ArrayView2<'_, f64>, y: &[f64], fallback_alpha: f64) -> Result<LinearModel, MlError> {
    match fit_ols(x, y) {
        Err(MlError::SingularSystem) => fit_ridge(x, y, fallback_alpha),
        other => other,
    }
}

/// `sign(z) * max(|z| - gamma, 0)`
pub fn soft_threshold(z: f64, gamma: f64) -> f64 {
    if z > gamma {
        z - gamma
    } else if z < -gamma {
        z + gamma
    } else {
        0.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LassoParams {
    pub alpha: f64,
    pub max_iter: usize,
    pub tol: f64,
}

impl Default for LassoParams {
    fn default() -> Self {
        Self {
            alpha: 0.01,
            max_iter: 1000,
            tol: 1e-6,
        }
    }
}

/// Cyclic coordinate descent for `(1/2n)‖y − ȳ − Zw‖² + α‖w‖₁` on z-scored
/// features. Hitting `max_iter` leaves `converged = false`.
pub fn fit_lasso(x: ArrayView2<'_, f64>, y: &[f64], params: LassoParams) -> Result<LinearModel, MlError> {
    check_xy(&x, y)?;
    if !(params.alpha > 0.0) {
        return Err(MlError::InvalidParameter(format!("lasso alpha must be > 0, got {}", params.alpha)));
    }
    let n = x.nrows();
    if n < 2 {
        return Err(MlError::TooFewRows { needed: 2, got: n });
    }
    let st = Standardization::fit(&x);
    let z = st.apply(&x);
    let (y_mean, mut residual) = centered(y);
    let p = x.ncols();
    let col_sq: Vec<f64> = (0..p).map(|j| z.column(j).dot(&z.column(j))).collect();
    let gamma = params.alpha * n as f64;
    let mut w = vec![0.0; p];
    let mut converged = false;
    for _ in 0..params.max_iter {
        let mut max_change = 0.0_f64;
        for j in 0..p {
            if st.constant[j] || col_sq[j] == 0.0 {
                continue;
            }
            let col = z.column(j);
            let rho: f64 = col.iter().zip(&residual).map(|(a, r)| a * (r + a * w[j])).sum();
            let new = soft_threshold(rho, gamma) / col_sq[j];
            let delta = new - w[j];
            if delta != 0.0 {
                for (r, a) in residual.iter_mut().zip(col.iter()) {
                    *r -= a * delta;
                }
                w[j] = new;
            }
            max_change = max_change.max(delta.abs());
        }
        if max_change < params.tol {
            converged = true;
            break;
        }
    }
    Ok(LinearModel {
        coefficients: w,
        intercept: y_mean,
        standardization: st,
        alpha: params.alpha,
        converged,
    })
}
