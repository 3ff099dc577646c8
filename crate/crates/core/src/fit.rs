//! Small least-squares fits used for asymptotic order estimation.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Least-squares line `y = intercept + slope·x`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LineFit {
    pub slope: f64,
    pub intercept: f64,
    /// Root-mean-square residual.
    pub rms_residual: f64,
}

pub fn fit_line(xs: &[f64], ys: &[f64]) -> Result<LineFit> {
    let coeffs = polynomial_fit(xs, ys, &[0, 1])?;
    let rms = rms_residual(xs, ys, &[0, 1], &coeffs);
    Ok(LineFit {
        slope: coeffs[1],
        intercept: coeffs[0],
        rms_residual: rms,
    })
}

/// Slope of `ln y` against `ln x`: the empirical order `p` in `y ≈ C·xᵖ`.
pub fn fit_loglog(xs: &[f64], ys: &[f64]) -> Result<LineFit> {
    if xs.iter().chain(ys).any(|&v| !(v > 0.0)) {
        return Err(Error::InvalidParameter("log-log fit needs positive data".into()));
    }
    let lx: Vec<f64> = xs.iter().map(|x| x.ln()).collect();
    let ly: Vec<f64> = ys.iter().map(|y| y.ln()).collect();
    fit_line(&lx, &ly)
}

/// Least-squares coefficients of `y ≈ Σ_k a_k x^{p_k}` for the given powers.
pub fn polynomial_fit(xs: &[f64], ys: &[f64], powers: &[i32]) -> Result<Vec<f64>> {
    if xs.len() != ys.len() || xs.len() < powers.len() || powers.is_empty() {
        return Err(Error::InvalidParameter(format!(
            "cannot fit {} coefficients to {} points",
            powers.len(),
            xs.len()
        )));
    }
    let a = DMatrix::from_fn(xs.len(), powers.len(), |i, j| xs[i].powi(powers[j]));
    let b = DVector::from_column_slice(ys);
    let svd = a.svd(true, true);
    let sol = svd
        .solve(&b, 1e-14)
        .map_err(|e| Error::InvalidParameter(format!("least-squares solve failed: {e}")))?;
    Ok(sol.iter().copied().collect())
}

pub fn rms_residual(xs: &[f64], ys: &[f64], powers: &[i32], coeffs: &[f64]) -> f64 {
    let ss: f64 = xs
        .iter()
        .zip(ys)
        .map(|(&x, &y)| {
            let model: f64 = powers.iter().zip(coeffs).map(|(&p, &c)| c * x.powi(p)).sum();
            (y - model).powi(2)
        })
        .sum();
    (ss / xs.len() as f64).sqrt()
}
