//! Resolvent of `I − K/2π` on `[−α, α]`, its Neumann series, the Fredholm
//! log-determinant and positivity checks.
//!
//! The resolvent kernel solves
//!
//! ```text
//! R(λ,µ) = K(λ−µ) + (1/2π) ∫_{−α}^{α} K(λ−τ) R(τ,µ) dτ,
//! ```
//!
//! so that `(I − K/2π)⁻¹ = I + R/2π`. On the Nyström grid this is
//! `(I − W)R = K` with `W_ij = K(x_i − x_j)·w_j/2π`. For fixed `µ` the column
//! `r_i = R(x_i, µ)` extends to any `λ` through the equation itself; that
//! extension is symmetric in `(λ, µ)`.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector, Dyn, LU};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernel::{kernel_mass, ModelParams};
use crate::quadrature::{check_dense_size, Discretization, PanelMesh};

pub const MIN_GRID_N: usize = 8;
const MIN_PANEL_ORDER: usize = 16;
const MAX_PANEL_ORDER: usize = 128;

/// Panels of width at most `min(c, 1)` on `[−α, α]`, with about `grid_n`
/// nodes in total (at least 16 and at most 128 per panel).
pub fn resolvent_mesh(alpha: f64, params: &ModelParams, grid_n: usize) -> Result<PanelMesh> {
    if !(alpha > 0.0 && alpha.is_finite()) {
        return Err(Error::OutOfRange {
            what: "alpha",
            value: alpha,
        });
    }
    if grid_n < MIN_GRID_N {
        return Err(Error::OutOfRange {
            what: "grid_n",
            value: grid_n as f64,
        });
    }
    let width = params.kernel_scale().min(1.0);
    let panels = (2.0 * alpha / width).ceil().max(1.0);
    check_dense_size((panels * MIN_PANEL_ORDER as f64) as usize)?;
    let panels = panels as usize;
    let order = grid_n.div_ceil(panels).clamp(MIN_PANEL_ORDER, MAX_PANEL_ORDER);
    check_dense_size(panels * order)?;
    PanelMesh::uniform(-alpha, alpha, panels, order)
}

fn weighted_kernel_matrix(params: &ModelParams, disc: &Discretization) -> DMatrix<f64> {
    let n = disc.len();
    DMatrix::from_fn(n, n, |i, j| {
        params.kernel(disc.nodes[i] - disc.nodes[j]) * disc.weights[j] / (2.0 * PI)
    })
}

/// Nyström factorization of `I − K/2π` on `[−α, α]`.
#[derive(Debug, Clone)]
pub struct ResolventOperator {
    alpha: f64,
    params: ModelParams,
    grid_n: usize,
    mesh: PanelMesh,
    disc: Discretization,
    lu: LU<f64, Dyn, Dyn>,
    /// `R(x_i, x_j)`.
    grid_values: DMatrix<f64>,
    /// `W = K·diag(w)/2π`.
    weighted: DMatrix<f64>,
}

/// `R(·, µ)` for one fixed `µ`.
#[derive(Debug, Clone)]
pub struct ResolventColumn<'a> {
    op: &'a ResolventOperator,
    mu: f64,
    on_grid: Vec<f64>,
}

impl ResolventColumn<'_> {
    pub fn mu(&self) -> f64 {
        self.mu
    }

    /// `R(x_i, µ)` at the grid nodes.
    pub fn on_grid(&self) -> &[f64] {
        &self.on_grid
    }

    /// `R(λ, µ) = K(λ−µ) + Σ_j K(λ−x_j)·(w_j/2π)·R(x_j, µ)`.
    pub fn eval(&self, lambda: f64) -> f64 {
        let p = &self.op.params;
        let mut acc = 0.0;
        for ((&x, &w), &r) in self.op.disc.nodes.iter().zip(&self.op.disc.weights).zip(&self.on_grid) {
            acc += p.kernel(lambda - x) * w * r;
        }
        p.kernel(lambda - self.mu) + acc / (2.0 * PI)
    }
}

/// Builds the resolvent on `[−α, α]` with about `grid_n` nodes.
pub fn build_resolvent(alpha: f64, params: &ModelParams, grid_n: usize) -> Result<ResolventOperator> {
    let mesh = resolvent_mesh(alpha, params, grid_n)?;
    let disc = mesh.discretize()?;
    let n = disc.len();
    let weighted = weighted_kernel_matrix(params, &disc);
    let lu = (DMatrix::identity(n, n) - &weighted).lu();
    if !lu.is_invertible() {
        return Err(Error::SingularMatrix);
    }
    let kmat = DMatrix::from_fn(n, n, |i, j| params.kernel(disc.nodes[i] - disc.nodes[j]));
    let grid_values = lu.solve(&kmat).ok_or(Error::SingularMatrix)?;
    if grid_values.iter().any(|v| !v.is_finite()) {
        return Err(Error::SingularMatrix);
    }
    Ok(ResolventOperator {
        alpha,
        params: *params,
        grid_n,
        mesh,
        disc,
        lu,
        grid_values,
        weighted,
    })
}

impl ResolventOperator {
    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn params(&self) -> &ModelParams {
        &self.params
    }

    pub fn grid_n(&self) -> usize {
        self.grid_n
    }

    pub fn mesh(&self) -> &PanelMesh {
        &self.mesh
    }

    pub fn nodes(&self) -> &[f64] {
        &self.disc.nodes
    }

    pub fn weights(&self) -> &[f64] {
        &self.disc.weights
    }

    pub fn len(&self) -> usize {
        self.disc.len()
    }

    pub fn is_empty(&self) -> bool {
        self.disc.is_empty()
    }

    /// `R(x_i, x_j)`.
    pub fn grid_value(&self, i: usize, j: usize) -> f64 {
        self.grid_values[(i, j)]
    }

    /// Solves `(I − W)u = rhs` on the grid.
    pub fn solve_second_kind(&self, rhs: &[f64]) -> Result<Vec<f64>> {
        if rhs.len() != self.len() {
            return Err(Error::InvalidParameter(format!(
                "right-hand side has {} entries, grid has {}",
                rhs.len(),
                self.len()
            )));
        }
        let sol = self
            .lu
            .solve(&DVector::from_column_slice(rhs))
            .ok_or(Error::SingularMatrix)?;
        Ok(sol.iter().copied().collect())
    }

    /// The column `R(·, µ)`, solved once and evaluable at any `λ`.
    pub fn column(&self, mu: f64) -> ResolventColumn<'_> {
        let rhs: Vec<f64> = self.disc.nodes.iter().map(|&x| self.params.kernel(x - mu)).collect();
        let on_grid = self
            .solve_second_kind(&rhs)
            .expect("factorization checked at construction");
        ResolventColumn { op: self, mu, on_grid }
    }

    /// `R(λ, µ)` for any real `λ`, `µ`.
    pub fn eval(&self, lambda: f64, mu: f64) -> f64 {
        self.column(mu).eval(lambda)
    }

    /// `max |(I − W)(I + R·diag(w)/2π) − I|` over the grid.
    pub fn identity_residual(&self) -> f64 {
        let n = self.len();
        let scaled = DMatrix::from_fn(n, n, |i, j| {
            self.grid_values[(i, j)] * self.disc.weights[j] / (2.0 * PI)
        });
        let eye = DMatrix::<f64>::identity(n, n);
        let prod = (&eye - &self.weighted) * (&eye + scaled);
        (prod - eye).amax()
    }

    /// `max |R(x_i, x_j) − R(x_j, x_i)|`.
    pub fn symmetry_defect(&self) -> f64 {
        (&self.grid_values - self.grid_values.transpose()).amax()
    }
}

/// Partial sum of the Neumann series of `R(λ, µ)` and its geometric tail.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NeumannSum {
    pub value: f64,
    /// `K(λ−µ)`, then the successive convolution terms.
    pub terms: Vec<f64>,
    /// `K(0)·mᴺ/(1 − m)` with `m` the kernel mass on `[−α, α]`.
    pub tail_bound: f64,
}

/// Neumann series `Σ_{n<N} (K/2π)^{*n} * K` evaluated at `(λ, µ)` with each
/// convolution done by Gauss quadrature on a grid of order 48 per panel,
/// independent of [`build_resolvent`].
pub fn neumann_resolvent(alpha: f64, params: &ModelParams, lambda: f64, mu: f64, n_terms: usize) -> Result<NeumannSum> {
    if n_terms == 0 {
        return Err(Error::OutOfRange {
            what: "n_terms",
            value: 0.0,
        });
    }
    let m = kernel_mass(alpha, params)?;
    let tail_bound = params.kernel_sup() * m.powi(n_terms as i32) / (1.0 - m);
    let mut terms = vec![params.kernel(lambda - mu)];
    if n_terms > 1 && !params.is_impenetrable() {
        let mesh = resolvent_mesh(alpha, params, MIN_GRID_N)?;
        let mesh = PanelMesh::with_order(mesh.breakpoints().to_vec(), 48)?;
        let disc = mesh.discretize()?;
        let w = weighted_kernel_matrix(params, &disc);
        let mut f = DVector::from_iterator(disc.len(), disc.nodes.iter().map(|&x| params.kernel(x - mu)));
        for _ in 1..n_terms {
            let mut at_lambda = 0.0;
            for ((&x, &wt), &fx) in disc.nodes.iter().zip(&disc.weights).zip(f.iter()) {
                at_lambda += params.kernel(lambda - x) * wt * fx;
            }
            terms.push(at_lambda / (2.0 * PI));
            f = &w * f;
        }
    } else {
        terms.resize(n_terms, 0.0);
    }
    let value = terms.iter().sum();
    Ok(NeumannSum {
        value,
        terms,
        tail_bound,
    })
}

/// Log-determinant of `I − K/2π` on `[−α, α]` from the trace series and from
/// the dense factorization.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogDetReport {
    pub alpha: f64,
    pub n_terms: usize,
    /// `−Σ_{n=1}^{N} Tr(Wⁿ)/n`.
    pub series: f64,
    /// `ln det(I − W)` from the LU factors.
    pub dense: f64,
    /// Bound on the omitted terms `n > N`.
    pub tail_bound: f64,
    /// `Tr W`, which approximates `2α·K(0)/2π`.
    pub first_trace: f64,
    /// `2α·K(0)/2π` in closed form.
    pub first_trace_exact: f64,
    pub traces: Vec<f64>,
}

impl LogDetReport {
    pub fn discrepancy(&self) -> f64 {
        (self.series - self.dense).abs()
    }
}

pub fn log_fredholm_det(alpha: f64, params: &ModelParams, n_terms: usize, grid_n: usize) -> Result<LogDetReport> {
    if n_terms == 0 {
        return Err(Error::OutOfRange {
            what: "n_terms",
            value: 0.0,
        });
    }
    let mesh = resolvent_mesh(alpha, params, grid_n)?;
    let disc = mesh.discretize()?;
    let n = disc.len();
    let w = weighted_kernel_matrix(params, &disc);
    let first_trace_exact = 2.0 * alpha * params.kernel_sup() / (2.0 * PI);
    let m = kernel_mass(alpha, params)?;
    let mut traces = Vec::with_capacity(n_terms);
    let mut power = w.clone();
    let mut series = 0.0;
    for k in 1..=n_terms {
        let tr = power.trace();
        traces.push(tr);
        series -= tr / k as f64;
        if k < n_terms {
            power = &power * &w;
        }
    }
    let lu = (DMatrix::identity(n, n) - &w).lu();
    let u = lu.u();
    let mut dense = 0.0;
    for i in 0..n {
        let d = u[(i, i)];
        if !(d > 0.0) {
            return Err(Error::SingularMatrix);
        }
        dense += d.ln();
    }
    let tail_bound = if m > 0.0 {
        first_trace_exact * m.powi(n_terms as i32) / ((n_terms + 1) as f64 * (1.0 - m))
    } else {
        0.0
    };
    Ok(LogDetReport {
        alpha,
        n_terms,
        series,
        dense,
        tail_bound,
        first_trace: traces[0],
        first_trace_exact,
        traces,
    })
}

/// Sampled positivity of `R(λ,µ)` and of `R(λ,µ) − R(λ,−µ)` on `(0, α)²`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PositivityReport {
    pub alpha: f64,
    pub samples: usize,
    pub seed: u64,
    pub min_resolvent: f64,
    pub min_difference: f64,
    pub passed: bool,
}

pub const POSITIVITY_SLACK: f64 = 1e-10;

pub fn positivity_check(op: &ResolventOperator, samples: usize, seed: u64) -> PositivityReport {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let alpha = op.alpha;
    let mut min_resolvent = f64::INFINITY;
    let mut min_difference = f64::INFINITY;
    for _ in 0..samples {
        let lambda: f64 = rng.random_range(0.0..alpha);
        let mu: f64 = rng.random_range(0.0..alpha);
        let plus = op.column(mu).eval(lambda);
        let minus = op.column(-mu).eval(lambda);
        min_resolvent = min_resolvent.min(plus).min(minus);
        min_difference = min_difference.min(plus - minus);
    }
    let passed =
        samples == 0 || (min_difference >= -POSITIVITY_SLACK && (op.params.is_impenetrable() || min_resolvent > 0.0));
    PositivityReport {
        alpha,
        samples,
        seed,
        min_resolvent,
        min_difference,
        passed,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::Rng;

    fn p(c: f64) -> ModelParams {
        ModelParams::new(c, 1.0).unwrap()
    }

    #[test]
    fn impenetrable_resolvent_vanishes() {
        let op = build_resolvent(1.0, &ModelParams::impenetrable(1.0).unwrap(), 32).unwrap();
        assert_eq!(op.eval(0.3, -0.2), 0.0);
        assert!(op.grid_values.iter().all(|&v| v == 0.0));
        let det = log_fredholm_det(1.0, &ModelParams::impenetrable(1.0).unwrap(), 5, 32).unwrap();
        assert_eq!(det.series, 0.0);
        assert_eq!(det.dense, 0.0);
    }

    #[test]
    fn nystrom_matches_neumann_at_small_alpha() {
        let params = p(1.0);
        let op = build_resolvent(0.1, &params, 64).unwrap();
        for &(l, m) in &[(0.0, 0.0), (0.05, -0.03), (-0.09, 0.08), (0.3, 0.1), (1.2, -0.7)] {
            let neumann = neumann_resolvent(0.1, &params, l, m, 30).unwrap();
            assert!(neumann.tail_bound < 1e-10);
            assert!((op.eval(l, m) - neumann.value).abs() <= 1e-8);
        }
    }

    #[test]
    fn identity_residual_and_symmetry() {
        let op = build_resolvent(1.0, &p(1.0), 64).unwrap();
        assert!(op.identity_residual() <= 1e-9);
        assert!(op.symmetry_defect() <= 1e-9);
        for i in (0..op.len()).step_by(9) {
            let x = op.nodes()[i];
            let col = op.column(op.nodes()[3]);
            assert!((col.eval(x) - op.grid_value(i, 3)).abs() <= 1e-9);
        }
    }

    #[test]
    fn off_grid_symmetries() {
        let op = build_resolvent(1.0, &p(1.0), 64).unwrap();
        let r = op.eval(0.3, 0.7);
        assert!((r - op.eval(-0.3, -0.7)).abs() <= 1e-10);
        assert!((r - op.eval(0.7, 0.3)).abs() <= 1e-9);
    }

    #[test]
    fn neumann_terms() {
        let params = p(1.0);
        let one = neumann_resolvent(0.5, &params, 0.2, -0.1, 1).unwrap();
        assert_eq!(one.value, params.kernel(0.3));
        let many = neumann_resolvent(0.5, &params, 0.2, -0.1, 10).unwrap();
        let m = kernel_mass(0.5, &params).unwrap();
        for (n, term) in many.terms.iter().enumerate() {
            assert!(term.abs() <= params.kernel_sup() * m.powi(n as i32) * (1.0 + 1e-12));
        }
        assert!(neumann_resolvent(0.5, &params, 0.0, 0.0, 0).is_err());
    }

    #[test]
    fn log_det_series_matches_dense() {
        let report = log_fredholm_det(1.0, &p(1.0), 40, 96).unwrap();
        assert!(report.discrepancy() <= 1e-6, "{report:?}");
        assert!(report.dense < 0.0 && report.series < 0.0);
        assert!((report.first_trace - report.first_trace_exact).abs() < 1e-12);
    }

    #[test]
    fn positivity_samples() {
        let op = build_resolvent(1.0, &p(1.0), 64).unwrap();
        let report = positivity_check(&op, 500, 42);
        assert!(report.passed, "{report:?}");
        let half = 0.5;
        assert!(op.eval(half, half) - op.eval(half, -half) > 0.0);
        let free = build_resolvent(1.0, &ModelParams::impenetrable(1.0).unwrap(), 16).unwrap();
        let report = positivity_check(&free, 50, 42);
        assert!(report.passed && report.min_difference == 0.0);
    }

    #[test]
    fn resolvent_is_lipschitz_in_alpha() {
        let params = p(1.0);
        let delta = 1e-4;
        let a = build_resolvent(1.0, &params, 64).unwrap();
        let b = build_resolvent(1.0 + delta, &params, 64).unwrap();
        let (l, m) = (0.4, -0.2);
        let slope = (b.eval(l, m) - a.eval(l, m)) / delta;
        // ∂_α R(λ,µ) = [R(λ,α)R(α,µ) + R(λ,−α)R(−α,µ)]/2π
        let exact = (a.eval(l, 1.0) * a.eval(1.0, m) + a.eval(l, -1.0) * a.eval(-1.0, m)) / (2.0 * PI);
        assert!((slope - exact).abs() <= 1e-3 * exact.abs(), "{slope} vs {exact}");
    }

    #[test]
    fn rejects_bad_input() {
        assert!(build_resolvent(0.0, &p(1.0), 64).is_err());
        assert!(build_resolvent(1.0, &p(1.0), 7).is_err());
    }

    /// `|∫∫ f(µ)K(λ−µ) dµ dλ| ≤ ∫|f| · ∫_{−α}^{α} K` for step functions `f`.
    #[test]
    fn convolution_majorant_for_step_functions() {
        let params = p(1.0);
        let alpha = 1.5;
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let steps = 6;
        let edges: Vec<f64> = (0..=steps)
            .map(|i| -alpha + 2.0 * alpha * i as f64 / steps as f64)
            .collect();
        let inner = PanelMesh::with_order(edges.clone(), 32).unwrap();
        let outer = PanelMesh::uniform(-alpha, alpha, 12, 32).unwrap();
        for _ in 0..10 {
            let heights: Vec<f64> = (0..steps).map(|_| rng.random_range(0.0..2.0)).collect();
            let f = |x: f64| {
                heights[((x + alpha) / (2.0 * alpha) * steps as f64)
                    .floor()
                    .min(steps as f64 - 1.0) as usize]
            };
            let lhs = crate::quadrature::integrate(
                |l| crate::quadrature::integrate(|m| f(m) * params.kernel(l - m), &inner).unwrap(),
                &outer,
            )
            .unwrap();
            let norm_f: f64 = heights.iter().map(|h| h * 2.0 * alpha / steps as f64).sum();
            let rhs = norm_f * 2.0 * PI * kernel_mass(alpha, &params).unwrap();
            assert!(lhs.abs() <= rhs * (1.0 + 1e-12));
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(16))]

        #[test]
        fn operator_identity_holds(c in 0.3f64..5.0, alpha in 0.1f64..3.0) {
            let op = build_resolvent(alpha, &p(c), 64).unwrap();
            prop_assert!(op.identity_residual() <= 1e-9);
        }

        #[test]
        fn resolvent_positivity_holds(c in 0.3f64..5.0, alpha in 0.1f64..3.0, seed in 0u64..1000) {
            let op = build_resolvent(alpha, &p(c), 48).unwrap();
            let report = positivity_check(&op, 40, seed);
            prop_assert!(report.passed);
        }
    }
}
