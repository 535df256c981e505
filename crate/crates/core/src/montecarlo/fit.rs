use serde::Serialize;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FitError {
    #[error("need at least 2 points, got {0}")]
    TooFewPoints(usize),
    #[error("step sizes and errors must be finite and positive (point {index}: h = {h}, e = {e})")]
    NonPositive { index: usize, h: f64, e: f64 },
    #[error("all step sizes are equal")]
    DegenerateFit,
}

/// Least-squares line through `(log2 h, log2 e_h)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RateFit {
    /// Slope, the observed convergence order.
    pub q: f64,
    pub intercept: f64,
    /// Euclidean norm of the residual vector.
    pub resid: f64,
}

/// Fits `log2 e = q log2 h + b` by ordinary least squares.
pub fn fit_rate(points: &[(f64, f64)]) -> Result<RateFit, FitError> {
    if points.len() < 2 {
        return Err(FitError::TooFewPoints(points.len()));
    }
    let mut xs = Vec::with_capacity(points.len());
    let mut ys = Vec::with_capacity(points.len());
    for (index, &(h, e)) in points.iter().enumerate() {
        if !(h > 0.0 && e > 0.0 && h.is_finite() && e.is_finite()) {
            return Err(FitError::NonPositive { index, h, e });
        }
        xs.push(h.log2());
        ys.push(e.log2());
    }
    let n = xs.len() as f64;
    let x_mean = xs.iter().sum::<f64>() / n;
    let y_mean = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - x_mean).powi(2)).sum();
    if sxx == 0.0 {
        return Err(FitError::DegenerateFit);
    }
    let sxy: f64 = xs
        .iter()
        .zip(&ys)
        .map(|(x, y)| (x - x_mean) * (y - y_mean))
        .sum();
    let q = sxy / sxx;
    let intercept = y_mean - q * x_mean;
    let resid = xs
        .iter()
        .zip(&ys)
        .map(|(x, y)| (y - q * x - intercept).powi(2))
        .sum::<f64>()
        .sqrt();
    Ok(RateFit {
        q,
        intercept,
        resid,
    })
}
