//! Free energy `f(T) = −(T/2π) ∫ ln(1 + e^{−ε(λ)/T}) dλ` and its `T → 0` limit
//! `f₀ = (1/2π) ∫_{−q}^{q} ε₀(λ|q) dλ`.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::dressed::{find_q, solve_eps0};
use crate::error::{Error, Result};
use crate::fit::{polynomial_fit, rms_residual};
use crate::kernel::ModelParams;
use crate::lowt::solve_sweep;
use crate::nlie::EpsilonSolution;

/// Powers of `T` in the low-temperature fit.
pub const FIT_POWERS: [i32; 3] = [0, 2, 4];
/// Number of smallest temperatures used by the fit.
pub const FIT_POINTS: usize = 4;

/// `f(T)` by the solver's own quadrature.
pub fn free_energy(sol: &EpsilonSolution) -> Result<f64> {
    let mut acc = 0.0;
    for (g, w) in sol.thermal_logs().iter().zip(sol.weights()) {
        acc += g * w;
    }
    let f = -acc / (2.0 * PI);
    if f.is_finite() {
        Ok(f)
    } else {
        Err(Error::NonFinite {
            node: f64::NAN,
            value: f,
        })
    }
}

/// Bound on the part of `|f|` from `|λ| > Λ`, using `ε(λ) ≥ λ² − z_h`:
/// `(T/π)∫_Λ^∞ e^{−(λ² − z_h)/T} dλ ≤ T²·e^{−(Λ² − z_h)/T}/(2πΛ)`.
pub fn truncation_tail_bound(sol: &EpsilonSolution) -> f64 {
    let t = sol.temperature();
    let l = sol.lambda_max();
    t * t * (-(l * l - sol.z_h()) / t).exp() / (2.0 * PI * l)
}

/// `(1/2π) ∫_{−q}^{q} ε₀(λ|q) dλ` on the dressed-energy grid.
pub fn zero_temperature_free_energy(params: &ModelParams, grid_n: usize) -> Result<f64> {
    let q = find_q(params, grid_n)?;
    let d = solve_eps0(q, params, grid_n)?;
    let mut acc = 0.0;
    for (e, w) in d.eps0_values().values().iter().zip(d.resolvent().weights()) {
        acc += e * w;
    }
    Ok(acc / (2.0 * PI))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FreeEnergyPoint {
    #[serde(rename = "T")]
    pub t: f64,
    pub f: f64,
    /// Fitted `T = 0` value.
    pub f0: f64,
    /// `(f − f0)/T²`.
    pub quadratic_coefficient: f64,
    pub tail_bound: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FreeEnergyFit {
    pub params: ModelParams,
    pub powers: Vec<i32>,
    /// Coefficients of `f ≈ Σ c_k T^{p_k}` on the smallest temperatures.
    pub coefficients: Vec<f64>,
    pub f0: f64,
    /// Coefficient of `T²`.
    pub a: f64,
    pub fit_residual: f64,
    pub f0_reference: f64,
    pub points: Vec<FreeEnergyPoint>,
}

impl FreeEnergyFit {
    pub fn f0_discrepancy(&self) -> f64 {
        (self.f0 - self.f0_reference).abs()
    }
}

/// Computes `f` at every temperature and fits `f0 + a·T² + b·T⁴` on the four
/// smallest.
pub fn free_energy_lowt_fit(params: &ModelParams, t_list: &[f64], tol: f64, grid_n: usize) -> Result<FreeEnergyFit> {
    if t_list.len() < FIT_POINTS {
        return Err(Error::InvalidParameter(format!(
            "need at least {FIT_POINTS} temperatures, got {}",
            t_list.len()
        )));
    }
    if t_list.iter().any(|&t| !(t > 0.0 && t.is_finite())) {
        return Err(Error::InvalidParameter("temperatures must be positive".into()));
    }
    let solutions = solve_sweep(params, t_list, tol, true)?;
    let fs: Vec<f64> = solutions
        .iter()
        .map(|s| free_energy(s).map_err(|e| e.at_temperature(s.temperature())))
        .collect::<Result<_>>()?;
    let mut order: Vec<usize> = (0..t_list.len()).collect();
    order.sort_by(|&i, &j| t_list[i].total_cmp(&t_list[j]));
    let chosen = &order[..FIT_POINTS];
    let xs: Vec<f64> = chosen.iter().map(|&i| t_list[i]).collect();
    let ys: Vec<f64> = chosen.iter().map(|&i| fs[i]).collect();
    let coefficients = polynomial_fit(&xs, &ys, &FIT_POWERS)?;
    let fit_residual = rms_residual(&xs, &ys, &FIT_POWERS, &coefficients);
    let f0 = coefficients[0];
    let points = solutions
        .iter()
        .zip(&fs)
        .map(|(s, &f)| {
            let t = s.temperature();
            FreeEnergyPoint {
                t,
                f,
                f0,
                quadratic_coefficient: (f - f0) / (t * t),
                tail_bound: truncation_tail_bound(s),
            }
        })
        .collect();
    Ok(FreeEnergyFit {
        params: *params,
        powers: FIT_POWERS.to_vec(),
        a: coefficients[1],
        f0,
        coefficients,
        fit_residual,
        f0_reference: zero_temperature_free_energy(params, grid_n)?,
        points,
    })
}
