//! Finite-temperature solver for the Yang-Yang equation.
//!
//! With `v = ε − λ²` the equation reads `v = 𝓛[v]`,
//!
//! ```text
//! 𝓛[f](λ) = −h − (T/2π) ∫ K(λ−µ) ln(1 + e^{−(µ² + f(µ))/T}) dµ.
//! ```
//!
//! Starting from `v₀ = 0` the iterates decrease monotonically and stay above
//! `−z_h`; starting from `v₀ = −z_h` they increase. Both facts are checked at
//! every step. The operator is discretized by Nyström on a thermally graded
//! mesh centred at the Fermi point, and off-grid values are obtained by
//! applying the discrete equation once more.

use std::f64::consts::PI;

use log::{debug, warn};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bounds::{find_w, find_z_h, truncation_radius};
use crate::error::{Error, Result};
use crate::fermi::thermal_log;
use crate::grid::GridFunction;
use crate::kernel::ModelParams;
use crate::quadrature::{
    check_dense_size, coarse_width_for, thermal_mesh_with_width, Discretization, PanelMesh, DEFAULT_BASE_ORDER,
};
use crate::roots::{bracketed_newton, RootTolerance};

pub const DEFAULT_TOL: f64 = 1e-10;
pub const DEFAULT_MAX_ITERATIONS: usize = 10_000;
/// Allowed nodewise move against the monotone direction.
pub const MONOTONE_SLACK: f64 = 1e-12;
/// Allowed undershoot of the lower bound `−z_h`.
pub const LOWER_BOUND_SLACK: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolverOptions {
    pub tol: f64,
    pub max_iterations: usize,
    pub base_order: usize,
    /// Every panel of the thermal mesh is split into this many.
    pub panel_split: usize,
    /// Solves on a mesh re-centred at the latest `q̂`, at most this many times.
    pub max_rounds: usize,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            tol: DEFAULT_TOL,
            max_iterations: DEFAULT_MAX_ITERATIONS,
            base_order: DEFAULT_BASE_ORDER,
            panel_split: 1,
            max_rounds: 6,
        }
    }
}

impl SolverOptions {
    pub fn with_tol(tol: f64) -> Self {
        Self { tol, ..Self::default() }
    }
}

/// First iterate of the fixed-point sequence.
#[derive(Debug, Clone, Copy)]
pub enum InitialGuess<'a> {
    /// `v₀ = 0`; iterates decrease.
    Zero,
    /// `v₀ = −z_h`; iterates increase.
    LowerBound,
    /// Values of an earlier solution, e.g. at a nearby temperature. No
    /// monotonicity is expected.
    Warm(&'a EpsilonSolution),
}

impl InitialGuess<'_> {
    fn direction(&self) -> Option<f64> {
        match self {
            InitialGuess::Zero => Some(-1.0),
            InitialGuess::LowerBound => Some(1.0),
            InitialGuess::Warm(_) => None,
        }
    }
}

/// Per-iteration diagnostics. Entry `n` describes the step `v_n → v_{n+1}`.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct IterationHistory {
    /// `‖v_{n+1} − v_n‖∞`.
    pub steps: Vec<f64>,
    /// `steps[n] / steps[n−1]`, starting at `n = 1`.
    pub ratios: Vec<f64>,
    /// `min v_{n+1}`.
    pub min_values: Vec<f64>,
    /// Largest nodewise move against the expected monotone direction (zero
    /// for warm starts).
    pub monotone_defects: Vec<f64>,
}

/// Nyström matrix `A_ij = K(x_i − x_j)·w_j/2π` on a discretization.
struct NystromOperator {
    disc: Discretization,
    matrix: Vec<f64>,
}

impl NystromOperator {
    fn new(params: &ModelParams, disc: Discretization) -> Self {
        let n = disc.len();
        let matrix = if params.is_impenetrable() {
            Vec::new()
        } else {
            let mut m = vec![0.0; n * n];
            m.par_chunks_mut(n).enumerate().for_each(|(i, row)| {
                let xi = disc.nodes[i];
                for (j, a) in row.iter_mut().enumerate() {
                    *a = params.kernel(xi - disc.nodes[j]) * disc.weights[j] / (2.0 * PI);
                }
            });
            m
        };
        Self { disc, matrix }
    }

    fn len(&self) -> usize {
        self.disc.len()
    }

    /// `T·ln(1 + e^{−(x_j² + v_j)/T})` at every node.
    fn thermal_logs(&self, v: &[f64], t: f64) -> Result<Vec<f64>> {
        self.disc
            .nodes
            .iter()
            .zip(v)
            .map(|(&x, &vj)| {
                let g = thermal_log(x * x + vj, t);
                if g.is_finite() {
                    Ok(g)
                } else {
                    Err(Error::NonFinite { node: x, value: vj })
                }
            })
            .collect()
    }

    /// `𝓛[v]` at the nodes.
    fn apply(&self, v: &[f64], params: &ModelParams, t: f64) -> Result<Vec<f64>> {
        let n = self.len();
        let h = params.h();
        if self.matrix.is_empty() {
            return Ok(vec![-h; n]);
        }
        let g = self.thermal_logs(v, t)?;
        let mut out = vec![0.0; n];
        out.par_iter_mut().enumerate().for_each(|(i, o)| {
            let row = &self.matrix[i * n..(i + 1) * n];
            let mut acc = 0.0;
            for (a, gj) in row.iter().zip(&g) {
                acc += a * gj;
            }
            *o = -h - acc;
        });
        Ok(out)
    }
}

/// Converged solution of the Yang-Yang equation at one temperature.
#[derive(Debug, Clone)]
pub struct EpsilonSolution {
    params: ModelParams,
    t: f64,
    tol: f64,
    z_h: f64,
    w: f64,
    lambda_max: f64,
    mesh: PanelMesh,
    weights: Vec<f64>,
    v_values: GridFunction,
    /// `(w_j/2π)·T·ln(1 + e^{−ε_j/T})`, the sources of the off-grid formula.
    sources: Vec<f64>,
    qhat: f64,
    iterations: usize,
    rounds: usize,
    contraction_estimate: f64,
    residual_norm: f64,
    history: IterationHistory,
}

/// Solves with default options and tolerance `tol`.
pub fn solve_yang_yang(params: &ModelParams, t: f64, tol: f64) -> Result<EpsilonSolution> {
    solve_with(params, t, &SolverOptions::with_tol(tol), InitialGuess::Zero)
}

/// Solves from the given initial iterate. The mesh is first centred at `√z_h`
/// and then re-centred at the computed `q̂` until the two agree to a quarter of
/// the finest panel width.
pub fn solve_with(
    params: &ModelParams,
    t: f64,
    options: &SolverOptions,
    start: InitialGuess<'_>,
) -> Result<EpsilonSolution> {
    if !(t > 0.0 && t.is_finite()) {
        return Err(Error::OutOfRange { what: "T", value: t });
    }
    if !(options.tol > 0.0) {
        return Err(Error::OutOfRange {
            what: "tol",
            value: options.tol,
        });
    }
    let z_h = find_z_h(params, t)?;
    let w = find_w(params)?;
    let lambda_max = truncation_radius(z_h, t, options.tol, params);
    let coarse = coarse_width_for(params.kernel_scale());
    let mut centre = z_h.sqrt();
    let rounds = options.max_rounds.max(1);
    let mut round = 0;
    loop {
        round += 1;
        let mesh = thermal_mesh_with_width(centre, t, lambda_max, options.base_order, coarse)?
            .split(options.panel_split.max(1));
        let mut sol = solve_on_mesh(params, t, options, start, z_h, w, lambda_max, mesh)?;
        sol.rounds = round;
        let first_width = (t / centre.max(1.0)).min(coarse) / options.panel_split.max(1) as f64;
        let offset = (sol.qhat - centre).abs();
        debug!("round {round}: centre {centre}, qhat {}, offset {offset:e}", sol.qhat);
        if offset <= 0.25 * first_width || round >= rounds || params.is_impenetrable() {
            sol.residual_norm = sol.equation_residual()?;
            return Ok(sol);
        }
        centre = sol.qhat;
    }
}

#[allow(clippy::too_many_arguments)]
fn solve_on_mesh(
    params: &ModelParams,
    t: f64,
    options: &SolverOptions,
    start: InitialGuess<'_>,
    z_h: f64,
    w: f64,
    lambda_max: f64,
    mesh: PanelMesh,
) -> Result<EpsilonSolution> {
    let disc = mesh.discretize()?;
    if !params.is_impenetrable() {
        check_dense_size(disc.len())?;
    }
    let op = NystromOperator::new(params, disc);
    let n = op.len();
    let mut v: Vec<f64> = match start {
        InitialGuess::Zero => vec![0.0; n],
        InitialGuess::LowerBound => vec![-z_h; n],
        InitialGuess::Warm(prev) => op
            .disc
            .nodes
            .iter()
            .map(|&x| {
                let x = x.clamp(-prev.lambda_max, prev.lambda_max);
                Ok(prev.epsilon_eval(x)? - x * x)
            })
            .collect::<Result<_>>()?,
    };
    let direction = start.direction();
    let lower = -z_h - LOWER_BOUND_SLACK;
    let mut history = IterationHistory::default();
    let mut kappa = 0.0;
    let mut converged = false;
    for it in 1..=options.max_iterations {
        let next = op.apply(&v, params, t)?;
        let mut step = 0.0f64;
        let mut defect = 0.0f64;
        let mut min_v = f64::INFINITY;
        for (a, b) in v.iter().zip(&next) {
            let d = b - a;
            step = step.max(d.abs());
            if let Some(dir) = direction {
                defect = defect.max(-dir * d);
            }
            min_v = min_v.min(*b);
        }
        if defect > MONOTONE_SLACK {
            return Err(Error::MonotonicityViolation {
                step: it,
                excess: defect,
            });
        }
        if min_v < lower {
            return Err(Error::LowerBoundViolation {
                step: it,
                min: min_v,
                bound: -z_h,
            });
        }
        if let Some(&prev) = history.steps.last() {
            if prev > 0.0 {
                history.ratios.push(step / prev);
            }
        }
        history.steps.push(step);
        history.min_values.push(min_v);
        history.monotone_defects.push(defect);
        v = next;
        let recent = &history.ratios[history.ratios.len().saturating_sub(3)..];
        kappa = recent.iter().fold(0.0f64, |m, &r| m.max(r)).min(0.999);
        if step == 0.0 || (!recent.is_empty() && step <= options.tol * (1.0 - kappa)) {
            converged = true;
            break;
        }
    }
    if !converged {
        return Err(Error::IterationCap(options.max_iterations));
    }
    let iterations = history.steps.len();
    let g = op.thermal_logs(&v, t)?;
    let sources = g
        .iter()
        .zip(&op.disc.weights)
        .map(|(gj, wj)| gj * wj / (2.0 * PI))
        .collect();
    let weights = op.disc.weights.clone();
    let v_values = GridFunction::new(op.disc.nodes.clone(), v)?;
    let mut sol = EpsilonSolution {
        params: *params,
        t,
        tol: options.tol,
        z_h,
        w,
        lambda_max,
        mesh,
        weights,
        v_values,
        sources,
        qhat: f64::NAN,
        iterations,
        rounds: 1,
        contraction_estimate: kappa,
        residual_norm: f64::NAN,
        history,
    };
    sol.qhat = find_qhat(&sol)?;
    Ok(sol)
}

/// `𝓛[v]` for `v` sampled at the nodes of `mesh`. The output is at most `−h`.
pub fn apply_l_functional(v: &GridFunction, params: &ModelParams, t: f64, mesh: &PanelMesh) -> Result<GridFunction> {
    if !(t > 0.0) {
        return Err(Error::OutOfRange { what: "T", value: t });
    }
    let disc = mesh.discretize()?;
    if disc.nodes.as_slice() != v.nodes() {
        return Err(Error::InvalidParameter(
            "grid function is not sampled on the mesh nodes".into(),
        ));
    }
    if !params.is_impenetrable() {
        check_dense_size(disc.len())?;
    }
    let op = NystromOperator::new(params, disc);
    let out = op.apply(v.values(), params, t)?;
    let cap = -params.h() + 1e-10;
    if let Some(bad) = out.iter().find(|&&o| o > cap) {
        return Err(Error::BoundViolation(format!("L[v] = {bad} exceeds -h")));
    }
    GridFunction::new(op.disc.nodes, out)
}

impl EpsilonSolution {
    pub fn params(&self) -> &ModelParams {
        &self.params
    }

    pub fn temperature(&self) -> f64 {
        self.t
    }

    pub fn tol(&self) -> f64 {
        self.tol
    }

    pub fn z_h(&self) -> f64 {
        self.z_h
    }

    pub fn w(&self) -> f64 {
        self.w
    }

    /// Truncation radius `Λ`.
    pub fn lambda_max(&self) -> f64 {
        self.lambda_max
    }

    pub fn mesh(&self) -> &PanelMesh {
        &self.mesh
    }

    pub fn nodes(&self) -> &[f64] {
        self.v_values.nodes()
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// `v = ε − λ²` at the nodes.
    pub fn v_values(&self) -> &GridFunction {
        &self.v_values
    }

    /// `ε` at the nodes.
    pub fn epsilon_values(&self) -> GridFunction {
        let values = self.v_values.iter().map(|(x, v)| x * x + v).collect();
        GridFunction::new(self.nodes().to_vec(), values).expect("nodes already validated")
    }

    /// `T·ln(1 + e^{−ε/T})` at the nodes.
    pub fn thermal_logs(&self) -> Vec<f64> {
        self.sources
            .iter()
            .zip(&self.weights)
            .map(|(s, w)| s * 2.0 * PI / w)
            .collect()
    }

    pub fn qhat(&self) -> f64 {
        self.qhat
    }

    pub fn iterations(&self) -> usize {
        self.iterations
    }

    /// Number of meshes solved on before the centre settled.
    pub fn rounds(&self) -> usize {
        self.rounds
    }

    pub fn contraction_estimate(&self) -> f64 {
        self.contraction_estimate
    }

    /// Max residual of the full equation at the nodes of the order-doubled mesh.
    pub fn residual_norm(&self) -> f64 {
        self.residual_norm
    }

    pub fn history(&self) -> &IterationHistory {
        &self.history
    }

    /// Whether `√h ≤ q̂ ≤ 2√w`.
    pub fn qhat_in_bracket(&self) -> bool {
        self.params.h().sqrt() <= self.qhat && self.qhat <= 2.0 * self.w.sqrt()
    }

    fn check_range(&self, lambda: f64) -> Result<()> {
        if lambda.abs() <= self.lambda_max {
            Ok(())
        } else {
            Err(Error::OutOfRange {
                what: "lambda",
                value: lambda,
            })
        }
    }

    fn eval_unchecked(&self, lambda: f64) -> f64 {
        let p = &self.params;
        let mut acc = 0.0;
        if !p.is_impenetrable() {
            for (&x, &s) in self.nodes().iter().zip(&self.sources) {
                acc += p.kernel(lambda - x) * s;
            }
        }
        lambda * lambda - p.h() - acc
    }

    /// `ε(λ)` for `|λ| ≤ Λ`, by applying the discrete equation to the stored
    /// node values.
    pub fn epsilon_eval(&self, lambda: f64) -> Result<f64> {
        self.check_range(lambda)?;
        Ok(self.eval_unchecked(lambda))
    }

    /// `ε′(λ) = 2λ − (T/2π) ∫ K′(λ−µ) ln(1 + e^{−ε(µ)/T}) dµ`.
    pub fn epsilon_deriv(&self, lambda: f64) -> Result<f64> {
        self.check_range(lambda)?;
        let p = &self.params;
        let mut acc = 0.0;
        if !p.is_impenetrable() {
            for (&x, &s) in self.nodes().iter().zip(&self.sources) {
                acc += p.kernel_deriv(lambda - x) * s;
            }
        }
        Ok(2.0 * lambda - acc)
    }

    /// Residual `ε − (λ² − h − (T/2π)∫K ln(1+e^{−ε/T}))` on the mesh with all
    /// panel orders doubled, where `ε` is the off-grid interpolant.
    pub fn equation_residual(&self) -> Result<f64> {
        let fine = self.mesh.scale_orders(2).discretize()?;
        let eps: Vec<f64> = fine.nodes.par_iter().map(|&y| self.eval_unchecked(y)).collect();
        let p = &self.params;
        let t = self.t;
        let src: Vec<f64> = eps
            .iter()
            .zip(&fine.weights)
            .map(|(&e, &w)| thermal_log(e, t) * w / (2.0 * PI))
            .collect();
        let residuals: Vec<f64> = fine
            .nodes
            .par_iter()
            .zip(&eps)
            .map(|(&y, &e)| {
                let mut acc = 0.0;
                if !p.is_impenetrable() {
                    for (&x, &s) in fine.nodes.iter().zip(&src) {
                        acc += p.kernel(y - x) * s;
                    }
                }
                (e - (y * y - p.h() - acc)).abs()
            })
            .collect();
        let r = residuals.into_iter().fold(0.0, f64::max);
        if r.is_finite() {
            Ok(r)
        } else {
            Err(Error::NonFinite {
                node: f64::NAN,
                value: r,
            })
        }
    }
}

/// The positive zero `q̂` of `ε`, searched in `[√h, 2√w]` (slightly widened).
/// When `ε` has no sign change there, the search moves to `[√h, √z_h]`, which
/// always brackets the zero because `ε(λ) ≥ λ² − z_h`.
pub fn find_qhat(sol: &EpsilonSolution) -> Result<f64> {
    let p = &sol.params;
    let h = p.h();
    if p.is_impenetrable() {
        return Ok(h.sqrt());
    }
    let lo = h.sqrt() * (1.0 - 1e-6);
    let mut hi = (2.0 * sol.w.sqrt() * (1.0 + 1e-6)).min(sol.lambda_max);
    let f_hi = sol.eval_unchecked(hi);
    if !(f_hi > 0.0) {
        warn!(
            "no sign change of epsilon on [{lo}, {hi}] at T = {} (epsilon = {f_hi}); widening to sqrt(z_h)",
            sol.t
        );
        hi = (sol.z_h.sqrt() * (1.0 + 1e-9)).min(sol.lambda_max);
    }
    let tol = RootTolerance {
        x_tol: 1e-15,
        f_tol: 1e-11 * h.max(1.0),
        max_steps: 200,
    };
    bracketed_newton(
        |x| Ok((sol.eval_unchecked(x), Some(sol.epsilon_deriv(x)?))),
        lo,
        hi,
        tol,
    )
}

/// Largest temperature of `temps` such that `√h ≤ q̂ ≤ 2√w` holds at it and
/// at every smaller sampled temperature. `None` when the bracket already
/// fails at the smallest one.
pub fn certify_t0(params: &ModelParams, temps: &[f64], tol: f64) -> Result<Option<f64>> {
    let mut sorted: Vec<f64> = temps.to_vec();
    sorted.sort_by(|a, b| a.total_cmp(b));
    let mut certified = None;
    for &t in &sorted {
        let sol = solve_yang_yang(params, t, tol).map_err(|e| e.at_temperature(t))?;
        if sol.qhat_in_bracket() {
            certified = Some(t);
        } else {
            break;
        }
    }
    Ok(certified)
}
