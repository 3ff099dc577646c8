//! Zero-temperature dressed energy `ε₀(λ|α)`:
//!
//! ```text
//! ε₀(λ|α) − (1/2π) ∫_{−α}^{α} K(λ−µ) ε₀(µ|α) dµ = λ² − h,
//! ```
//!
//! and the Fermi point `q`, the positive zero of `α ↦ ε₀(α|α)`.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::bounds::find_w;
use crate::error::{Error, Result};
use crate::fredholm::{build_resolvent, ResolventOperator};
use crate::grid::GridFunction;
use crate::kernel::ModelParams;
use crate::quadrature::{integrate, PanelMesh};
use crate::roots::{bracketed_newton, RootTolerance};

pub const DEFAULT_GRID_N: usize = 128;
const SCAN_POINTS: usize = 100;
const MAX_WIDENINGS: usize = 3;

#[derive(Debug, Clone)]
pub struct DressedEnergy {
    alpha: f64,
    params: ModelParams,
    resolvent: ResolventOperator,
    eps0_values: GridFunction,
    /// `max |Nyström − resolvent|` over the grid.
    route_gap: f64,
}

/// Solves the dressed-energy equation on `[−α, α]` directly, and once more
/// through `ε₀ = λ² − h + (1/2π)∫R(λ,µ)(µ² − h)dµ`.
pub fn solve_eps0(alpha: f64, params: &ModelParams, grid_n: usize) -> Result<DressedEnergy> {
    let resolvent = build_resolvent(alpha, params, grid_n)?;
    let h = params.h();
    let nodes = resolvent.nodes().to_vec();
    let weights = resolvent.weights();
    let rhs: Vec<f64> = nodes.iter().map(|x| x * x - h).collect();
    let direct = resolvent.solve_second_kind(&rhs)?;
    let mut route_gap = 0.0f64;
    for (i, (&x, &e)) in nodes.iter().zip(&direct).enumerate() {
        let mut acc = 0.0;
        for (j, (&wj, &fj)) in weights.iter().zip(&rhs).enumerate() {
            acc += resolvent.grid_value(i, j) * wj * fj;
        }
        let via_resolvent = x * x - h + acc / (2.0 * PI);
        route_gap = route_gap.max((e - via_resolvent).abs());
    }
    let eps0_values = GridFunction::new(nodes, direct)?;
    Ok(DressedEnergy {
        alpha,
        params: *params,
        resolvent,
        eps0_values,
        route_gap,
    })
}

impl DressedEnergy {
    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn params(&self) -> &ModelParams {
        &self.params
    }

    pub fn resolvent(&self) -> &ResolventOperator {
        &self.resolvent
    }

    pub fn eps0_values(&self) -> &GridFunction {
        &self.eps0_values
    }

    /// Largest difference between the direct and the resolvent solution.
    pub fn route_gap(&self) -> f64 {
        self.route_gap
    }

    /// `ε₀(λ|α)` for any real `λ`.
    pub fn eps0_eval(&self, lambda: f64) -> f64 {
        let p = &self.params;
        let mut acc = 0.0;
        for ((&x, &w), &e) in self
            .resolvent
            .nodes()
            .iter()
            .zip(self.resolvent.weights())
            .zip(self.eps0_values.values())
        {
            acc += p.kernel(lambda - x) * w * e;
        }
        lambda * lambda - p.h() + acc / (2.0 * PI)
    }

    /// `∂_λ ε₀(λ|α)`.
    pub fn eps0_deriv(&self, lambda: f64) -> f64 {
        let p = &self.params;
        let mut acc = 0.0;
        for ((&x, &w), &e) in self
            .resolvent
            .nodes()
            .iter()
            .zip(self.resolvent.weights())
            .zip(self.eps0_values.values())
        {
            acc += p.kernel_deriv(lambda - x) * w * e;
        }
        2.0 * lambda + acc / (2.0 * PI)
    }

    /// `ε₀(α|α)`.
    pub fn diag_value(&self) -> f64 {
        self.eps0_eval(self.alpha)
    }

    /// `d/dα ε₀(α|α) = ε₀(α|α)·R(α,−α)/π + 2α + (1/π)∫₀^α [R(α,µ) − R(α,−µ)]·µ dµ`.
    pub fn diag_derivative(&self) -> f64 {
        let a = self.alpha;
        if self.params.is_impenetrable() {
            return 2.0 * a;
        }
        // R(α, µ) = R(µ, α): one column serves every µ.
        let column = self.resolvent.column(a);
        let mesh = PanelMesh::with_order(self.half_breakpoints(), 32).expect("half mesh is valid");
        let integral =
            integrate(|mu| (column.eval(mu) - column.eval(-mu)) * mu, &mesh).expect("resolvent values are finite");
        self.diag_value() * column.eval(-a) / PI + 2.0 * a + integral / PI
    }

    fn half_breakpoints(&self) -> Vec<f64> {
        let mut bp: Vec<f64> = self
            .resolvent
            .mesh()
            .breakpoints()
            .iter()
            .copied()
            .filter(|&b| b > 0.0)
            .collect();
        bp.insert(0, 0.0);
        bp
    }

    /// Residual of the equation at the nodes of the order-doubled mesh, with
    /// the integral taken on that mesh.
    pub fn equation_residual(&self) -> Result<f64> {
        let fine = self.resolvent.mesh().scale_orders(2).discretize()?;
        let values: Vec<f64> = fine.nodes.iter().map(|&x| self.eps0_eval(x)).collect();
        let p = &self.params;
        let mut worst = 0.0f64;
        for (&y, &e) in fine.nodes.iter().zip(&values) {
            let mut acc = 0.0;
            for ((&x, &w), &v) in fine.nodes.iter().zip(&fine.weights).zip(&values) {
                acc += p.kernel(y - x) * w * v;
            }
            worst = worst.max((e - acc / (2.0 * PI) - (y * y - p.h())).abs());
        }
        Ok(worst)
    }
}

/// `α ↦ ε₀(α|α)` and its derivative, each from a fresh solve.
pub fn diag_value_and_derivative(alpha: f64, params: &ModelParams, grid_n: usize) -> Result<(f64, f64)> {
    let d = solve_eps0(alpha, params, grid_n)?;
    Ok((d.diag_value(), d.diag_derivative()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FermiPoint {
    pub q: f64,
    /// `ε₀(q|q)`.
    pub residual: f64,
    /// `d/dα ε₀(α|α)` at `α = q`.
    pub diag_derivative: f64,
    pub scan_lo: f64,
    pub scan_hi: f64,
    /// Sign changes of `ε₀(α|α)` seen on the scan grid.
    pub sign_changes: usize,
    pub widenings: usize,
}

/// Finds `q` with `|ε₀(q|q)| ≤ 1e−10·max(1, h)`.
pub fn find_q(params: &ModelParams, grid_n: usize) -> Result<f64> {
    Ok(find_q_report(params, grid_n)?.q)
}

/// Scans `[√h/2, 2√w]` on 100 points for the sign change of `ε₀(α|α)`, widening
/// up to three times, then polishes the root by Newton with the diagonal
/// derivative.
pub fn find_q_report(params: &ModelParams, grid_n: usize) -> Result<FermiPoint> {
    let h = params.h();
    if params.is_impenetrable() {
        let q = h.sqrt();
        return Ok(FermiPoint {
            q,
            residual: 0.0,
            diag_derivative: 2.0 * q,
            scan_lo: q / 2.0,
            scan_hi: 2.0 * q,
            sign_changes: 1,
            widenings: 0,
        });
    }
    let mut lo = h.sqrt() / 2.0;
    let mut hi = 2.0 * find_w(params)?.sqrt();
    let mut widenings = 0;
    let (bracket, sign_changes) = loop {
        let alphas: Vec<f64> = (0..SCAN_POINTS)
            .map(|i| lo + (hi - lo) * i as f64 / (SCAN_POINTS - 1) as f64)
            .collect();
        let values: Vec<f64> = alphas
            .iter()
            .map(|&a| Ok(solve_eps0(a, params, grid_n)?.diag_value()))
            .collect::<Result<_>>()?;
        let changes: Vec<usize> = (1..SCAN_POINTS)
            .filter(|&i| (values[i - 1] < 0.0) != (values[i] < 0.0))
            .collect();
        if let Some(&i) = changes.first() {
            break ((alphas[i - 1], alphas[i]), changes.len());
        }
        if widenings == MAX_WIDENINGS {
            return Err(Error::NoSignChange {
                lo,
                hi,
                f_lo: values[0],
                f_hi: values[SCAN_POINTS - 1],
            });
        }
        widenings += 1;
        lo /= 2.0;
        hi *= 2.0;
    };
    let tol = RootTolerance {
        x_tol: 1e-15,
        f_tol: 1e-11 * h.max(1.0),
        max_steps: 200,
    };
    let q = bracketed_newton(
        |a| {
            let (v, d) = diag_value_and_derivative(a, params, grid_n)?;
            Ok((v, Some(d)))
        },
        bracket.0,
        bracket.1,
        tol,
    )?;
    let (residual, diag_derivative) = diag_value_and_derivative(q, params, grid_n)?;
    if !(diag_derivative > 0.0) {
        return Err(Error::BoundViolation(format!(
            "d/dalpha eps0(alpha|alpha) = {diag_derivative} at q = {q}"
        )));
    }
    Ok(FermiPoint {
        q,
        residual,
        diag_derivative,
        scan_lo: lo,
        scan_hi: hi,
        sign_changes,
        widenings,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn p(c: f64, h: f64) -> ModelParams {
        ModelParams::new(c, h).unwrap()
    }

    #[test]
    fn impenetrable_is_free() {
        let params = ModelParams::impenetrable(1.0).unwrap();
        let d = solve_eps0(1.3, &params, 64).unwrap();
        for (x, e) in d.eps0_values().iter() {
            assert_eq!(e, x * x - 1.0);
        }
        assert_eq!(d.diag_derivative(), 2.6);
        assert_eq!(find_q(&params, 64).unwrap(), 1.0);
    }

    #[test]
    fn two_routes_agree() {
        let d = solve_eps0(1.0, &p(1.0, 1.0), DEFAULT_GRID_N).unwrap();
        assert!(d.route_gap() <= 1e-8);
        assert!(d.equation_residual().unwrap() <= 1e-9);
    }

    #[test]
    fn vanishing_interval_gives_minus_h() {
        let d = solve_eps0(1e-8, &p(1.0, 1.0), DEFAULT_GRID_N).unwrap();
        assert!((d.eps0_eval(0.0) + 1.0).abs() < 1e-7);
    }

    #[test]
    fn evaluation_is_even_and_node_consistent() {
        let d = solve_eps0(1.0, &p(1.0, 1.0), DEFAULT_GRID_N).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..20 {
            let l: f64 = rng.random_range(-3.0..3.0);
            assert!((d.eps0_eval(l) - d.eps0_eval(-l)).abs() <= 1e-10);
        }
        for (x, e) in d.eps0_values().iter().step_by(7) {
            assert!((d.eps0_eval(x) - e).abs() <= 1e-9);
        }
        let step = 1e-5;
        let fd = (d.eps0_eval(0.6 + step) - d.eps0_eval(0.6 - step)) / (2.0 * step);
        assert!((fd - d.eps0_deriv(0.6)).abs() < 1e-7);
    }

    #[test]
    fn diagonal_grows_at_large_alpha() {
        let d = solve_eps0(20.0, &p(1.0, 1.0), DEFAULT_GRID_N).unwrap();
        assert!(d.diag_value() > 200.0);
    }

    #[test]
    fn diagonal_derivative_matches_finite_differences() {
        let params = p(1.0, 1.0);
        let delta = 1e-4;
        let d = solve_eps0(1.0, &params, DEFAULT_GRID_N).unwrap();
        let up = solve_eps0(1.0 + delta, &params, DEFAULT_GRID_N).unwrap().diag_value();
        let down = solve_eps0(1.0 - delta, &params, DEFAULT_GRID_N).unwrap().diag_value();
        let fd = (up - down) / (2.0 * delta);
        assert!(
            (fd - d.diag_derivative()).abs() <= 1e-5,
            "{fd} vs {}",
            d.diag_derivative()
        );
    }

    #[test]
    fn fermi_point() {
        let params = p(1.0, 1.0);
        let report = find_q_report(&params, DEFAULT_GRID_N).unwrap();
        assert!(report.residual.abs() <= 1e-10);
        assert_eq!(report.sign_changes, 1);
        assert!(report.diag_derivative > 0.0);
        let q = report.q;
        for i in 1..=10 {
            let a = q + 0.2 * i as f64;
            let d = solve_eps0(a, &params, DEFAULT_GRID_N).unwrap();
            assert!(d.diag_value() > 0.0);
            assert!(d.diag_derivative() > 0.0);
        }
        let fine = find_q(&params, 2 * DEFAULT_GRID_N).unwrap();
        assert!((fine - q).abs() <= 1e-8);
    }

    #[test]
    fn local_diffeomorphism_at_q() {
        let params = p(1.0, 1.0);
        let report = find_q_report(&params, DEFAULT_GRID_N).unwrap();
        let deltas = [1e-3, 5e-4, 2.5e-4];
        for &delta in &deltas {
            let v = solve_eps0(report.q + delta, &params, DEFAULT_GRID_N)
                .unwrap()
                .diag_value();
            let slope = v / delta;
            assert!((slope / report.diag_derivative - 1.0).abs() < 0.01);
        }
    }
}
