use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Least-squares fit of `log e = log_c + kappa log h`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RateFit {
    pub kappa: f64,
    pub log_c: f64,
    /// Euclidean norm of the residual vector in log space.
    pub residual: f64,
}

pub fn fit_rate(points: &[(f64, f64)]) -> Result<RateFit> {
    if points.len() < 2 {
        return Err(Error::invalid("rate fit needs at least two points"));
    }
    if points
        .iter()
        .any(|&(h, e)| !(h > 0.0 && e > 0.0 && h.is_finite() && e.is_finite()))
    {
        return Err(Error::invalid("rate fit needs positive, finite h and e_h"));
    }
    let n = points.len() as f64;
    let xs: Vec<f64> = points.iter().map(|p| p.0.ln()).collect();
    let ys: Vec<f64> = points.iter().map(|p| p.1.ln()).collect();
    let x_mean = xs.iter().sum::<f64>() / n;
    let y_mean = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - x_mean).powi(2)).sum();
    if sxx == 0.0 {
        return Err(Error::invalid("rate fit needs at least two distinct step sizes"));
    }
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - x_mean) * (y - y_mean)).sum();
    let kappa = sxy / sxx;
    let log_c = y_mean - kappa * x_mean;
    let residual = xs
        .iter()
        .zip(&ys)
        .map(|(x, y)| (log_c + kappa * x - y).powi(2))
        .sum::<f64>()
        .sqrt();
    Ok(RateFit { kappa, log_c, residual })
}
