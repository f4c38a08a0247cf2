use super::{mean, MlError};

fn check(y: &[f64], pred: &[f64]) -> Result<(), MlError> {
    if y.len() != pred.len() {
        return Err(MlError::DimensionMismatch(format!("{} targets, {} predictions", y.len(), pred.len())));
    }
    if y.is_empty() {
        return Err(MlError::TooFewRows { needed: 1, got: 0 });
    }
    Ok(())
}

/// Coefficient of determination `1 - SS_res / SS_tot`.
pub fn r2(y: &[f64], pred: &[f64]) -> Result<f64, MlError> {
    check(y, pred)?;
    let m = mean(y);
    let ss_tot: f64 = y.iter().map(|v| (v - m) * (v - m)).sum();
    if ss_tot == 0.0 {
        return Err(MlError::DegenerateVariance);
    }
    let ss_res: f64 = y.iter().zip(pred).map(|(a, b)| (a - b) * (a - b)).sum();
    Ok(1.0 - ss_res / ss_tot)
}

pub fn rmse(y: &[f64], pred: &[f64]) -> Result<f64, MlError> {
    check(y, pred)?;
    let mse = y.iter().zip(pred).map(|(a, b)| (a - b) * (a - b)).sum::<f64>() / y.len() as f64;
    Ok(mse.sqrt())
}
