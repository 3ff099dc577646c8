//! Scalar auxiliary functions: `L(x)`, `ω(x)`, `V_h(T)` and the roots `z_h`, `w`.
//!
//! `−z_h` is the zero of `L(x) − x` and gives the pointwise lower bound
//! `ε(λ) ≥ λ² − z_h`, which fixes the truncation radius of every quadrature.
//! `w` is the zero of `ω`, and `√h ≤ q̂ ≤ 2√w` brackets the finite-T Fermi point.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fermi::{fermi_factor, log_fermi};
use crate::kernel::ModelParams;
use crate::quadrature::{coarse_width_for, integrate, thermal_mesh_with_width, PanelMesh, DEFAULT_BASE_ORDER};
use crate::roots::{bracketed_newton, RootTolerance};

/// Truncation level used for the scalar integrals in this module.
const SCALAR_QUAD_TOL: f64 = 1e-16;
const MAX_DOUBLINGS: usize = 200;

/// Radius beyond which `ln(1 + e^{−ε/T}) < tol` given `ε(λ) ≥ λ² − z`:
/// `Λ = sqrt(z + T·ln(1/tol))` plus one kernel scale (`c`, or `1` when `c = ∞`).
pub fn truncation_radius(z: f64, t: f64, tol: f64, params: &ModelParams) -> f64 {
    (z.max(0.0) + t * (1.0 / tol).ln()).sqrt() + params.kernel_scale()
}

/// Symmetric mesh for integrands carrying `ln(1 + e^{−(µ² − z)/T})`, refined
/// at `±√z` (or at the origin when the Fermi sea is thinner than `√T`).
pub(crate) fn fermi_sea_mesh(z: f64, t: f64, lambda_max: f64, params: &ModelParams) -> Result<PanelMesh> {
    let coarse = coarse_width_for(params.kernel_scale());
    let centre = z.max(0.0).sqrt();
    if centre > t.sqrt() && centre < lambda_max {
        thermal_mesh_with_width(centre, t, lambda_max, DEFAULT_BASE_ORDER, coarse)
    } else {
        PanelMesh::symmetric_graded(lambda_max, 0.25 * t.sqrt(), coarse, DEFAULT_BASE_ORDER)
    }
}

fn check_temperature(t: f64) -> Result<()> {
    if t > 0.0 && t.is_finite() {
        Ok(())
    } else {
        Err(Error::OutOfRange { what: "T", value: t })
    }
}

/// `L(x) = −h − (T/2π) ∫ K(µ) ln(1 + e^{−(µ² + x)/T}) dµ`.
pub fn l_function(x: f64, params: &ModelParams, t: f64) -> Result<f64> {
    check_temperature(t)?;
    if params.is_impenetrable() {
        return Ok(-params.h());
    }
    let lambda_max = truncation_radius(-x, t, SCALAR_QUAD_TOL, params);
    let mesh = fermi_sea_mesh(-x, t, lambda_max, params)?;
    let integral = integrate(|mu| params.kernel(mu) * log_fermi(mu * mu + x, t), &mesh)?;
    Ok(-params.h() - t / (2.0 * PI) * integral)
}

/// `L′(x) = (1/2π) ∫ K(µ) / (1 + e^{(µ² + x)/T}) dµ`, which lies in `(0, 1)`.
pub fn l_function_deriv(x: f64, params: &ModelParams, t: f64) -> Result<f64> {
    check_temperature(t)?;
    if params.is_impenetrable() {
        return Ok(0.0);
    }
    let lambda_max = truncation_radius(-x, t, SCALAR_QUAD_TOL, params);
    let mesh = fermi_sea_mesh(-x, t, lambda_max, params)?;
    let integral = integrate(|mu| params.kernel(mu) * fermi_factor(mu * mu + x, t), &mesh)?;
    Ok(integral / (2.0 * PI))
}

/// The root `z_h > 0` of `z + L(−z)`.
///
/// `z ↦ z + L(−z)` is increasing and negative at `z = h` (since `L < −h`), so
/// the bracket `[h, 2ᵏh]` is grown by doubling and then polished by Newton.
pub fn find_z_h(params: &ModelParams, t: f64) -> Result<f64> {
    check_temperature(t)?;
    let h = params.h();
    if params.is_impenetrable() {
        return Ok(h);
    }
    let g = |z: f64| -> Result<f64> { Ok(z + l_function(-z, params, t)?) };
    let lo = h;
    let mut hi = 2.0 * h;
    let mut doublings = 0;
    while g(hi)? <= 0.0 {
        doublings += 1;
        if doublings > MAX_DOUBLINGS {
            return Err(Error::BracketExpansion(MAX_DOUBLINGS));
        }
        hi *= 2.0;
    }
    let tol = RootTolerance {
        x_tol: 1e-13 * hi.max(1.0),
        f_tol: 1e-12,
        max_steps: 200,
    };
    bracketed_newton(
        |z| {
            let value = g(z)?;
            let slope = 1.0 - l_function_deriv(-z, params, t)?;
            Ok((value, Some(slope)))
        },
        lo,
        hi,
        tol,
    )
}

/// `ω(x) = x − h − (2(x + c²)/π)·arctan(√x/c) + (2c/π)·√x`; `x − h` when `c = ∞`.
pub fn omega(x: f64, params: &ModelParams) -> Result<f64> {
    if !(x >= 0.0) {
        return Err(Error::OutOfRange { what: "x", value: x });
    }
    let h = params.h();
    if params.is_impenetrable() {
        return Ok(x - h);
    }
    let c = params.c();
    let r = x.sqrt();
    Ok(x - h - 2.0 * (x + c * c) / PI * (r / c).atan() + 2.0 * c / PI * r)
}

/// `ω′(x) = 1 − (2/π)·arctan(√x/c)`.
pub fn omega_deriv(x: f64, params: &ModelParams) -> Result<f64> {
    if !(x >= 0.0) {
        return Err(Error::OutOfRange { what: "x", value: x });
    }
    if params.is_impenetrable() {
        return Ok(1.0);
    }
    Ok(1.0 - 2.0 / PI * (x.sqrt() / params.c()).atan())
}

/// The unique zero `w > 0` of `ω`.
pub fn find_w(params: &ModelParams) -> Result<f64> {
    if params.is_impenetrable() {
        return Ok(params.h());
    }
    let mut hi = params.h().max(1.0);
    let mut doublings = 0;
    while omega(hi, params)? <= 0.0 {
        doublings += 1;
        if doublings > MAX_DOUBLINGS {
            return Err(Error::BracketExpansion(MAX_DOUBLINGS));
        }
        hi *= 2.0;
    }
    let tol = RootTolerance {
        x_tol: 4.0 * f64::EPSILON * hi,
        f_tol: 1e-13,
        max_steps: 400,
    };
    bracketed_newton(|x| Ok((omega(x, params)?, Some(omega_deriv(x, params)?))), 0.0, hi, tol)
}

/// `V_h(T) = (T/π) ∫₀^∞ K(µ) ln(1 + e^{−|µ² − z_h|/T}) dµ`, checked against
/// `V_h ≤ T·ln 2`.
pub fn v_h_bound(params: &ModelParams, t: f64, z_h: f64) -> Result<f64> {
    check_temperature(t)?;
    if !(z_h > 0.0) {
        return Err(Error::OutOfRange {
            what: "z_h",
            value: z_h,
        });
    }
    if params.is_impenetrable() {
        return Ok(0.0);
    }
    let lambda_max = truncation_radius(z_h, t, SCALAR_QUAD_TOL, params);
    let mesh = fermi_sea_mesh(z_h, t, lambda_max, params)?;
    // Integrate over the whole line and halve; the integrand is even.
    let integral = integrate(|mu| params.kernel(mu) * log_fermi((mu * mu - z_h).abs(), t), &mesh)?;
    let v = t / (2.0 * PI) * integral;
    let cap = t * 2f64.ln();
    if v > cap + 1e-12 {
        return Err(Error::BoundViolation(format!("V_h = {v} exceeds T ln 2 = {cap}")));
    }
    Ok(v)
}

/// Bounds at one temperature. `t0_checked` is filled by callers that sample
/// the Fermi point over a temperature grid.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BoundsReport {
    pub params: ModelParams,
    #[serde(rename = "T")]
    pub t: f64,
    pub z_h: f64,
    pub w: f64,
    #[serde(rename = "V_h")]
    pub v_h: f64,
    pub qhat_lower: f64,
    pub qhat_upper: f64,
    /// `ω(z_h) − V_h(T)`, zero up to quadrature and root tolerances.
    pub omega_residual: f64,
    /// Whether `w ≤ z_h ≤ 4w`.
    pub z_h_within_4w: bool,
    #[serde(rename = "T0_checked")]
    pub t0_checked: Option<f64>,
}

impl BoundsReport {
    pub fn compute(params: &ModelParams, t: f64) -> Result<Self> {
        let z_h = find_z_h(params, t)?;
        let w = find_w(params)?;
        let v_h = v_h_bound(params, t, z_h)?;
        let report = Self {
            params: *params,
            t,
            z_h,
            w,
            v_h,
            qhat_lower: params.h().sqrt(),
            qhat_upper: 2.0 * w.sqrt(),
            omega_residual: omega(z_h, params)? - v_h,
            z_h_within_4w: w <= z_h && z_h <= 4.0 * w,
            t0_checked: None,
        };
        if !(report.z_h > 0.0 && report.w > 0.0 && report.qhat_lower < report.qhat_upper) {
            return Err(Error::BoundViolation(format!(
                "degenerate bounds: z_h = {z_h}, w = {w}, sqrt(h) = {}",
                report.qhat_lower
            )));
        }
        Ok(report)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fit::fit_loglog;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn p(c: f64, h: f64) -> ModelParams {
        ModelParams::new(c, h).unwrap()
    }

    #[test]
    fn l_tends_to_minus_h() {
        let params = p(1.0, 1.0);
        let t = 0.1;
        let z_guess = find_z_h(&params, t).unwrap();
        let x = 50.0 * t * 10f64.ln() + z_guess;
        assert!((l_function(x, &params, t).unwrap() + 1.0).abs() < 1e-8);
    }

    #[test]
    fn l_is_minus_h_when_impenetrable() {
        let params = ModelParams::impenetrable(1.3).unwrap();
        for x in [-5.0, 0.0, 2.0] {
            assert_eq!(l_function(x, &params, 0.1).unwrap(), -1.3);
        }
    }

    #[test]
    fn l_is_increasing_and_l_minus_x_decreasing() {
        let params = p(1.0, 1.0);
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..20 {
            let x: f64 = rng.random_range(-4.0..3.0);
            let a = l_function(x, &params, 0.1).unwrap();
            let b = l_function(x + 1.0, &params, 0.1).unwrap();
            assert!(b > a, "L({}) = {b} <= L({x}) = {a}", x + 1.0);
            assert!(b <= -1.0 && a <= -1.0);
        }
        let xs: Vec<f64> = (0..20).map(|i| -4.0 + 0.35 * i as f64).collect();
        let g: Vec<f64> = xs.iter().map(|&x| l_function(x, &params, 0.1).unwrap() - x).collect();
        assert!(g.windows(2).all(|w| w[1] - w[0] < 0.0));
    }

    #[test]
    fn l_derivative_matches_finite_difference() {
        let params = p(0.8, 1.2);
        let (x, step) = (-1.1, 1e-5);
        let fd = (l_function(x + step, &params, 0.05).unwrap() - l_function(x - step, &params, 0.05).unwrap())
            / (2.0 * step);
        let d = l_function_deriv(x, &params, 0.05).unwrap();
        assert!((fd - d).abs() < 1e-7, "{fd} vs {d}");
        assert!(d > 0.0 && d < 1.0);
    }

    #[test]
    fn z_h_residual_and_impenetrable_value() {
        let params = p(1.0, 1.0);
        let z = find_z_h(&params, 0.1).unwrap();
        assert!(z > 0.0);
        assert!((l_function(-z, &params, 0.1).unwrap() + z).abs() <= 1e-10);
        assert_eq!(find_z_h(&ModelParams::impenetrable(0.7).unwrap(), 0.1).unwrap(), 0.7);
    }

    #[test]
    fn z_h_approaches_w() {
        let params = p(1.0, 1.0);
        let w = find_w(&params).unwrap();
        let ts = [0.1, 0.05, 0.025];
        let gaps: Vec<f64> = ts.iter().map(|&t| find_z_h(&params, t).unwrap() - w).collect();
        assert!(gaps.iter().all(|&g| g > 0.0));
        let fit = fit_loglog(&ts, &gaps).unwrap();
        assert!(fit.slope >= 0.9, "slope {}", fit.slope);
    }

    #[test]
    fn z_h_solves_the_omega_relation() {
        for (c, h, t) in [(1.0, 1.0, 0.1), (0.5, 2.0, 0.05), (5.0, 0.5, 0.2)] {
            let report = BoundsReport::compute(&p(c, h), t).unwrap();
            assert!(
                report.omega_residual.abs() <= 1e-8,
                "{c} {h} {t}: {}",
                report.omega_residual
            );
            assert!(report.z_h_within_4w);
        }
    }

    #[test]
    fn omega_values() {
        let params = p(1.0, 1.0);
        assert_eq!(omega(0.0, &params).unwrap(), -1.0);
        assert!(omega(-1.0, &params).is_err());
        let step = 1e-5;
        let fd = (omega(1.0 + step, &params).unwrap() - omega(1.0 - step, &params).unwrap()) / (2.0 * step);
        assert!((fd - (1.0 - 2.0 / PI * 1f64.atan())).abs() < 1e-7);
        assert!((fd - omega_deriv(1.0, &params).unwrap()).abs() < 1e-7);
        let x = 1e8;
        let ratio = omega(x, &params).unwrap() / x.sqrt() / (4.0 / PI);
        assert!((ratio - 1.0).abs() < 0.01, "{ratio}");
    }

    #[test]
    fn w_residual_and_ordering() {
        let params = p(1.0, 1.0);
        let w = find_w(&params).unwrap();
        assert!(omega(w, &params).unwrap().abs() <= 1e-12);
        assert!(omega(1.0, &params).unwrap() < 0.0);
        assert!(w > 1.0);
        assert!(find_w(&p(1.0, 2.0)).unwrap() > w);
    }

    #[test]
    fn v_h_values() {
        let params = p(1.0, 1.0);
        let z = find_z_h(&params, 0.1).unwrap();
        let v = v_h_bound(&params, 0.1, z).unwrap();
        assert!(v > 0.0 && v <= 0.1 * 2f64.ln());
        let z_small = find_z_h(&params, 0.01).unwrap();
        assert!(v_h_bound(&params, 0.01, z_small).unwrap() < v);
        assert_eq!(
            v_h_bound(&ModelParams::impenetrable(1.0).unwrap(), 0.1, 1.0).unwrap(),
            0.0
        );
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(50))]

        #[test]
        fn omega_vanishes_at_w(c in 0.2f64..10.0, h in 0.2f64..10.0) {
            let params = p(c, h);
            let w = find_w(&params).unwrap();
            prop_assert!(w > 0.0);
            prop_assert!(omega(w, &params).unwrap().abs() <= 1e-12);
        }
    }
}
