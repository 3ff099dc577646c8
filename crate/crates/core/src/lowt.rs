//! Low-temperature structure of the solution.
//!
//! Splitting `T·ln(1 + e^{−ε/T}) = −ε·1[ε<0] + T·ln(1 + e^{−|ε|/T})` turns the
//! Yang-Yang equation into the dressed-energy equation on `[−q̂, q̂]` plus a
//! source concentrated in a layer of width `O(T)` around `±q̂`. Expanding that
//! source by Sommerfeld's method gives
//!
//! ```text
//! ε(λ) = ε₀(λ|q) + T²·ε₂(λ) + O(T⁴),   ε₂(λ) = −C₀·[R(λ,q) + R(λ,−q)] / ∂_λε₀(λ|q)|_{λ=q}
//! ```
//!
//! with `C₀ = 2·η(2)/2π = π/12`, where `R = R^(q)` is the resolvent on
//! `[−q, q]`. The shift of the Fermi point from `q` to `q̂` only enters at
//! order `T⁴` because `ε₀(q|q) = 0`.
//!
//! This module evaluates `ε₂`, checks it against a direct quadrature of the
//! layer integral, decomposes the right-hand side of the equation into its
//! bulk, layer and tail parts, and fits the orders of the remainders over a
//! temperature sweep.

use std::f64::consts::PI;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dressed::{find_q, solve_eps0, DressedEnergy};
use crate::error::{Error, Result};
use crate::fermi::thermal_log;
use crate::fit::fit_loglog;
use crate::fredholm::{ResolventColumn, ResolventOperator};
use crate::grid::GridFunction;
use crate::kernel::ModelParams;
use crate::nlie::{solve_with, EpsilonSolution, InitialGuess, SolverOptions};
use crate::quadrature::{coarse_width_for, Discretization, PanelMesh, DEFAULT_BASE_ORDER};
use crate::roots::{bracketed_newton, RootTolerance};

pub const MAX_MOMENT: usize = 20;

/// `B_2, B_4, …, B_22`.
const BERNOULLI_EVEN: [f64; 11] = [
    1.0 / 6.0,
    -1.0 / 30.0,
    1.0 / 42.0,
    -1.0 / 30.0,
    5.0 / 66.0,
    -691.0 / 2730.0,
    7.0 / 6.0,
    -3617.0 / 510.0,
    43867.0 / 798.0,
    -174611.0 / 330.0,
    854513.0 / 138.0,
];

/// `ζ(s)` for real `s ≥ 2` by Euler-Maclaurin summation with cut `N = 10`,
/// together with the size of the first omitted correction.
fn zeta_with_tail(s: f64) -> (f64, f64) {
    const N: usize = 10;
    let nf = N as f64;
    let mut sum = 0.0;
    for n in (1..N).rev() {
        sum += (n as f64).powf(-s);
    }
    sum += nf.powf(1.0 - s) / (s - 1.0) + 0.5 * nf.powf(-s);
    // term_k = B_{2k}/(2k)! · s(s+1)…(s+2k−2) · N^{−s−2k+1}
    let mut rising = s;
    let mut factorial = 2.0;
    let mut power = nf.powf(-s - 1.0);
    let mut tail = 0.0;
    for (k, b) in BERNOULLI_EVEN.iter().enumerate() {
        let term = b / factorial * rising * power;
        if k + 1 == BERNOULLI_EVEN.len() {
            tail = term.abs();
            break;
        }
        sum += term;
        let two_k = 2.0 * (k + 1) as f64;
        rising *= (s + two_k - 1.0) * (s + two_k);
        factorial *= (two_k + 1.0) * (two_k + 2.0);
        power /= nf * nf;
    }
    (sum, tail)
}

/// `(1 − 2^{−1−r})·ζ(r + 2) = (1/r!) ∫₀^∞ tʳ ln(1 + e^{−t}) dt` for `0 ≤ r ≤ 20`.
pub fn sommerfeld_moment(r: usize) -> Result<f64> {
    if r > MAX_MOMENT {
        return Err(Error::OutOfRange {
            what: "r",
            value: r as f64,
        });
    }
    let (zeta, tail) = zeta_with_tail(r as f64 + 2.0);
    debug_assert!(tail <= 1e-14);
    Ok((1.0 - 2f64.powi(-1 - r as i32)) * zeta)
}

/// `C₀ = 2·η(2)/2π`: the layer integral `T∫ln(1 + e^{−|s|/T})ds = 2η(2)·T²`
/// taken with the measure `ds/2π`.
pub fn sommerfeld_prefactor() -> f64 {
    2.0 * sommerfeld_moment(0).expect("r = 0 is in range") / (2.0 * PI)
}

/// Half-width `δ = min(h/4, |ε′(q̂)|·√h/8)` of the layer around the Fermi point.
pub fn layer_half_width(sol: &EpsilonSolution) -> Result<f64> {
    let h = sol.params().h();
    let slope = sol.epsilon_deriv(sol.qhat())?.abs();
    Ok((0.25 * h).min(slope * h.sqrt() / 8.0))
}

/// `µ > 0` with `ε(µ) = s`, for `−h < s`. The zero lies in
/// `[√(h+s), √(z_h+s)]` because `λ² − z_h ≤ ε(λ) ≤ λ² − h`.
fn invert_epsilon(sol: &EpsilonSolution, s: f64) -> Result<f64> {
    let params = sol.params();
    let h = params.h();
    if !(h + s > 0.0) {
        return Err(Error::OutOfRange { what: "s", value: s });
    }
    if params.is_impenetrable() {
        return Ok((h + s).sqrt());
    }
    let lo = (h + s).sqrt();
    let hi = (sol.z_h() + s).sqrt().min(sol.lambda_max());
    let tol = RootTolerance {
        x_tol: 1e-15,
        f_tol: 1e-12,
        max_steps: 200,
    };
    bracketed_newton(
        |mu| Ok((sol.epsilon_eval(mu)? - s, Some(sol.epsilon_deriv(mu)?))),
        lo,
        hi,
        tol,
    )
}

/// The local inverse `ε⁻¹(s)` near the Fermi point, for `|s| < δ/2`.
pub fn local_inverse(sol: &EpsilonSolution, s: f64) -> Result<f64> {
    let delta = layer_half_width(sol)?;
    if !(s.abs() < 0.5 * delta) {
        return Err(Error::OutOfRange { what: "s", value: s });
    }
    if s == 0.0 {
        return Ok(sol.qhat());
    }
    invert_epsilon(sol, s)
}

/// `ε₂(λ)` built from the resolvent on `[−q, q]`.
#[derive(Debug, Clone)]
pub struct Eps2<'a> {
    plus: ResolventColumn<'a>,
    minus: ResolventColumn<'a>,
    slope: f64,
    prefactor: f64,
}

impl<'a> Eps2<'a> {
    /// `d` must be the dressed energy on `[−q, q]`.
    pub fn new(d: &'a DressedEnergy) -> Result<Self> {
        Self::with_resolvent(d, d.resolvent())
    }

    pub fn with_resolvent(d: &DressedEnergy, resolvent: &'a ResolventOperator) -> Result<Self> {
        let q = d.alpha();
        let slope = d.eps0_deriv(q);
        if !(slope.abs() >= 1e-8) {
            return Err(Error::Degenerate(format!("eps0'(q|q) = {slope} at q = {q}")));
        }
        Ok(Self {
            plus: resolvent.column(q),
            minus: resolvent.column(-q),
            slope,
            prefactor: sommerfeld_prefactor(),
        })
    }

    /// `R(λ,q) + R(λ,−q)`.
    pub fn folded_resolvent(&self, lambda: f64) -> f64 {
        self.plus.eval(lambda) + self.minus.eval(lambda)
    }

    pub fn eval(&self, lambda: f64) -> f64 {
        -self.prefactor * self.folded_resolvent(lambda) / self.slope
    }

    /// `∂_λε₀(λ|q)` at `λ = q`.
    pub fn fermi_slope(&self) -> f64 {
        self.slope
    }
}

/// `ε₂(λ) = −C₀·[R(λ,q) + R(λ,−q)] / ∂_λε₀(λ|q)|_{λ=q}`.
pub fn compute_eps2(
    params: &ModelParams,
    q: f64,
    d: &DressedEnergy,
    r: &ResolventOperator,
    lambda: f64,
) -> Result<f64> {
    if d.params() != params || r.params() != params || d.alpha() != q || r.alpha() != q {
        return Err(Error::InvalidParameter(
            "dressed energy and resolvent must live on [-q, q]".into(),
        ));
    }
    Ok(Eps2::with_resolvent(d, r)?.eval(lambda))
}

/// Comparison of `T²ε₂` with a direct quadrature of the layer integral
/// `−(T/2π)∫_{−δ/2}^{δ/2} R̄(λ, ε⁻¹(s))/ε′(ε⁻¹(s))·ln(1 + e^{−|s|/T}) ds`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Eps2Calibration {
    pub params: ModelParams,
    #[serde(rename = "T")]
    pub t: f64,
    pub q: f64,
    pub prefactor: f64,
    pub probes: Vec<f64>,
    /// Layer integral divided by `T²`.
    pub brute_force: Vec<f64>,
    pub eps2: Vec<f64>,
    pub max_relative_error: f64,
}

pub fn calibrate_eps2(
    params: &ModelParams,
    t: f64,
    probes: &[f64],
    tol: f64,
    grid_n: usize,
) -> Result<Eps2Calibration> {
    let q = find_q(params, grid_n)?;
    let d = solve_eps0(q, params, grid_n)?;
    let eps2 = Eps2::new(&d)?;
    let sol = solve_with(params, t, &SolverOptions::with_tol(tol), InitialGuess::Zero)?;
    let half = 0.5 * layer_half_width(&sol)?;
    let mesh = PanelMesh::symmetric_graded(half, t / 8.0, half / 8.0, DEFAULT_BASE_ORDER)?;
    let disc = mesh.discretize()?;
    // Per node: ε⁻¹(s), 1/ε′ and the Fermi weight.
    let layer: Vec<(f64, f64)> = disc
        .nodes
        .iter()
        .zip(&disc.weights)
        .map(|(&s, &w)| {
            let mu = invert_epsilon(&sol, s)?;
            Ok((mu, w * thermal_log(s.abs(), t) / sol.epsilon_deriv(mu)?))
        })
        .collect::<Result<_>>()?;
    let resolvent = d.resolvent();
    let mut brute_force = Vec::with_capacity(probes.len());
    let mut predicted = Vec::with_capacity(probes.len());
    let mut worst = 0.0f64;
    for &lambda in probes {
        // R(λ, µ) = R(µ, λ): one column per probe.
        let column = resolvent.column(lambda);
        let integral: f64 = layer
            .iter()
            .map(|&(mu, f)| (column.eval(mu) + column.eval(-mu)) * f)
            .sum();
        let value = -integral / (2.0 * PI) / (t * t);
        let e2 = eps2.eval(lambda);
        worst = worst.max(((value - e2) / e2).abs());
        brute_force.push(value);
        predicted.push(e2);
    }
    Ok(Eps2Calibration {
        params: *params,
        t,
        q,
        prefactor: sommerfeld_prefactor(),
        probes: probes.to_vec(),
        brute_force,
        eps2: predicted,
        max_relative_error: worst,
    })
}

/// A folded integral `(1/2π)∫ [K(λ−µ) + K(λ+µ)]·f(µ) dµ` over `µ ≥ 0` with
/// `f` sampled once.
struct FoldedPiece {
    disc: Discretization,
    values: Vec<f64>,
}

impl FoldedPiece {
    fn new(meshes: &[PanelMesh], f: impl Fn(f64) -> Result<f64>) -> Result<Self> {
        let mut disc = Discretization {
            nodes: Vec::new(),
            weights: Vec::new(),
        };
        for m in meshes {
            let d = m.discretize()?;
            disc.nodes.extend(d.nodes);
            disc.weights.extend(d.weights);
        }
        let values = disc.nodes.iter().map(|&x| f(x)).collect::<Result<_>>()?;
        Ok(Self { disc, values })
    }

    /// Same piece over `[to, from]` with the orientation of `[from, to]`.
    fn oriented(from: f64, to: f64, f: impl Fn(f64) -> Result<f64>) -> Result<Self> {
        if from == to {
            return Ok(Self {
                disc: Discretization {
                    nodes: Vec::new(),
                    weights: Vec::new(),
                },
                values: Vec::new(),
            });
        }
        let (a, b, sign) = if from < to { (from, to, 1.0) } else { (to, from, -1.0) };
        let mut piece = Self::new(&[PanelMesh::uniform(a, b, 1, DEFAULT_BASE_ORDER)?], f)?;
        piece.weights_mut().iter_mut().for_each(|w| *w *= sign);
        Ok(piece)
    }

    fn weights_mut(&mut self) -> &mut Vec<f64> {
        &mut self.disc.weights
    }

    fn eval(&self, params: &ModelParams, lambda: f64) -> f64 {
        let mut acc = 0.0;
        for ((&mu, &w), &v) in self.disc.nodes.iter().zip(&self.disc.weights).zip(&self.values) {
            acc += (params.kernel(lambda - mu) + params.kernel(lambda + mu)) * w * v;
        }
        acc / (2.0 * PI)
    }
}

/// Pieces of `F(λ) = −(T/2π)∫K(λ−µ) ln(1 + e^{−ε(µ)/T}) dµ` at the probes:
///
/// - `bulk`: `(1/2π)∫_{−q̂}^{q̂} K(λ−µ)ε(µ) dµ`
/// - `layer` (`V⁰`): the `ln(1 + e^{−|ε|/T})` part over `±J`, `J = [ε⁻¹(−δ), ε⁻¹(δ)]`
/// - `tail` (`V^∞`): the same part over the rest of the line
/// - `bulk_q`: the bulk integral over `[−q, q]` instead
/// - `layer_shifted` (`Ṽ⁰`): `layer` plus the bulk integrand over `q < |µ| < q̂`
///
/// so that `F = bulk + layer + tail = bulk_q + layer_shifted + tail`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Decomposition {
    #[serde(rename = "T")]
    pub t: f64,
    pub q: f64,
    pub qhat: f64,
    pub delta: f64,
    /// `J = [layer_lo, layer_hi]`.
    pub layer_lo: f64,
    pub layer_hi: f64,
    pub probes: Vec<f64>,
    pub full: Vec<f64>,
    pub bulk: Vec<f64>,
    pub layer: Vec<f64>,
    pub tail: Vec<f64>,
    pub bulk_q: Vec<f64>,
    pub layer_shifted: Vec<f64>,
    /// `max |F − (bulk + layer + tail)|` and the same for the shifted split.
    pub sum_defect: f64,
    pub shifted_sum_defect: f64,
    /// `T·ln(1 + e^{−δ/T})`.
    pub tail_bound: f64,
    /// `T²·π·K(0)/(6√h)`.
    pub layer_bound: f64,
    pub tail_bound_holds: bool,
    pub layer_bound_holds: bool,
    /// `ε′ > 0` at sampled points of `J`.
    pub layer_monotone: bool,
}

pub fn decompose_rhs(sol: &EpsilonSolution, q: f64, probes: &[f64]) -> Result<Decomposition> {
    let params = *sol.params();
    let t = sol.temperature();
    let qhat = sol.qhat();
    let delta = layer_half_width(sol)?;
    let lo = invert_epsilon(sol, -delta)?;
    let hi = invert_epsilon(sol, delta)?;
    let lambda_max = sol.lambda_max();
    let coarse = coarse_width_for(params.kernel_scale());
    let order = DEFAULT_BASE_ORDER;
    let first = (t / qhat.max(1.0)).min(coarse);
    let eps = |mu: f64| sol.epsilon_eval(mu);
    let layer_weight = |mu: f64| Ok(-thermal_log(sol.epsilon_eval(mu)?.abs(), t));

    let bulk = FoldedPiece::new(&[PanelMesh::graded(qhat, 0.0, coarse, coarse, order)?], eps)?;
    let bulk_q = FoldedPiece::new(&[PanelMesh::graded(q, 0.0, coarse, coarse, order)?], eps)?;
    let shift = FoldedPiece::oriented(q, qhat, eps)?;
    let layer = FoldedPiece::new(
        &[
            PanelMesh::graded(qhat, lo, first, coarse, order)?,
            PanelMesh::graded(qhat, hi, first, coarse, order)?,
        ],
        layer_weight,
    )?;
    let tail = FoldedPiece::new(
        &[
            PanelMesh::graded(lo, 0.0, first, coarse, order)?,
            PanelMesh::graded(hi, lambda_max, first, coarse, order)?,
        ],
        layer_weight,
    )?;

    let n = probes.len();
    let mut report = Decomposition {
        t,
        q,
        qhat,
        delta,
        layer_lo: lo,
        layer_hi: hi,
        probes: probes.to_vec(),
        full: Vec::with_capacity(n),
        bulk: Vec::with_capacity(n),
        layer: Vec::with_capacity(n),
        tail: Vec::with_capacity(n),
        bulk_q: Vec::with_capacity(n),
        layer_shifted: Vec::with_capacity(n),
        sum_defect: 0.0,
        shifted_sum_defect: 0.0,
        tail_bound: thermal_log(delta, t),
        layer_bound: t * t * PI * params.kernel_sup() / (6.0 * params.h().sqrt()),
        tail_bound_holds: true,
        layer_bound_holds: true,
        layer_monotone: true,
    };
    for &lambda in probes {
        let full = sol.epsilon_eval(lambda)? - lambda * lambda + params.h();
        let b = bulk.eval(&params, lambda);
        let l = layer.eval(&params, lambda);
        let tl = tail.eval(&params, lambda);
        let bq = bulk_q.eval(&params, lambda);
        let ls = l + shift.eval(&params, lambda);
        report.sum_defect = report.sum_defect.max((full - (b + l + tl)).abs());
        report.shifted_sum_defect = report.shifted_sum_defect.max((full - (bq + ls + tl)).abs());
        report.tail_bound_holds &= tl.abs() <= report.tail_bound * (1.0 + 1e-12) + 1e-300;
        report.layer_bound_holds &= l.abs() <= report.layer_bound * (1.0 + 1e-12);
        report.full.push(full);
        report.bulk.push(b);
        report.layer.push(l);
        report.tail.push(tl);
        report.bulk_q.push(bq);
        report.layer_shifted.push(ls);
    }
    for i in 0..=64 {
        let mu = lo + (hi - lo) * i as f64 / 64.0;
        report.layer_monotone &= sol.epsilon_deriv(mu)? > 0.0;
    }
    Ok(report)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExpansionConfig {
    pub tol: f64,
    pub grid_n: usize,
    /// Solve the temperatures concurrently.
    pub parallel: bool,
}

impl Default for ExpansionConfig {
    fn default() -> Self {
        Self {
            tol: crate::nlie::DEFAULT_TOL,
            grid_n: crate::dressed::DEFAULT_GRID_N,
            parallel: true,
        }
    }
}

/// Nine probes on `[0, q + s/2]`, `s` the kernel scale.
pub fn default_probes(params: &ModelParams, q: f64) -> Vec<f64> {
    let top = q + 0.5 * params.kernel_scale();
    (0..9).map(|i| top * i as f64 / 8.0).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExpansionReport {
    pub params: ModelParams,
    pub tol: f64,
    pub grid_n: usize,
    #[serde(rename = "T_list")]
    pub t_list: Vec<f64>,
    pub q: f64,
    pub w: f64,
    pub qhat_list: Vec<f64>,
    pub qhat_in_bracket: Vec<bool>,
    pub iterations: Vec<usize>,
    pub residual_norms: Vec<f64>,
    pub probes: Vec<f64>,
    /// `max_probes |ε(λ;T) − ε₀(λ|q)|`.
    pub sup_residual0: Vec<f64>,
    /// `max_probes |ε(λ;T) − ε₀(λ|q) − T²ε₂(λ)|`.
    pub sup_residual2: Vec<f64>,
    /// Log-log slopes on the last four temperatures; absent when a residual
    /// vanishes (the expansion is exact).
    pub fitted_order0: Option<f64>,
    pub fitted_order2: Option<f64>,
    /// `b` in `q̂ − q ≈ b·T²` (least squares through the origin).
    pub qhat_shift_coefficient: f64,
    /// `‖q̂ − q − bT²‖₂ / ‖q̂ − q‖₂`, zero when `q̂ = q` throughout.
    pub qhat_shift_relative_residual: f64,
    /// `−ε₂(q)/∂_λε₀(q|q)`, the expected value of `b`.
    pub qhat_shift_predicted: f64,
    pub sommerfeld_prefactor: f64,
    pub eps2_probe_values: GridFunction,
    /// `(ε − ε₀ − T²ε₂)/T⁴` at the smallest temperature.
    pub eps4_probe_values: GridFunction,
}

fn validate_sweep(params: &ModelParams, t_list: &[f64]) -> Result<()> {
    if t_list.len() < 4 {
        return Err(Error::InvalidParameter(format!(
            "need at least 4 temperatures, got {}",
            t_list.len()
        )));
    }
    if t_list.iter().any(|&t| !(t > 0.0 && t <= 0.2 * params.h())) {
        return Err(Error::InvalidParameter("temperatures must lie in (0, 0.2 h]".into()));
    }
    if t_list.windows(2).any(|w| w[1] >= w[0]) {
        return Err(Error::InvalidParameter(
            "temperatures must be strictly decreasing".into(),
        ));
    }
    Ok(())
}

/// Solves at every temperature of a sweep, in the order given.
pub(crate) fn solve_sweep(
    params: &ModelParams,
    t_list: &[f64],
    tol: f64,
    parallel: bool,
) -> Result<Vec<EpsilonSolution>> {
    let options = SolverOptions::with_tol(tol);
    let solve = |&t: &f64| solve_with(params, t, &options, InitialGuess::Zero).map_err(|e| e.at_temperature(t));
    if parallel {
        t_list.par_iter().map(solve).collect()
    } else {
        t_list.iter().map(solve).collect()
    }
}

fn order_fit(ts: &[f64], residuals: &[f64]) -> Result<Option<f64>> {
    let k = ts.len().min(4);
    let (xs, ys) = (&ts[ts.len() - k..], &residuals[residuals.len() - k..]);
    if ys.iter().any(|&y| !(y > 0.0)) {
        return Ok(None);
    }
    Ok(Some(fit_loglog(xs, ys)?.slope))
}

pub fn verify_expansion(
    params: &ModelParams,
    t_list: &[f64],
    probes: Option<&[f64]>,
    config: &ExpansionConfig,
) -> Result<ExpansionReport> {
    validate_sweep(params, t_list)?;
    let q = find_q(params, config.grid_n)?;
    let d = solve_eps0(q, params, config.grid_n)?;
    let eps2 = Eps2::new(&d)?;
    let mut probes: Vec<f64> = probes.map(<[f64]>::to_vec).unwrap_or_else(|| default_probes(params, q));
    probes.sort_by(f64::total_cmp);
    probes.dedup();
    let eps0: Vec<f64> = probes.iter().map(|&l| d.eps0_eval(l)).collect();
    let e2: Vec<f64> = probes.iter().map(|&l| eps2.eval(l)).collect();

    let solutions = solve_sweep(params, t_list, config.tol, config.parallel)?;
    let mut sup_residual0 = Vec::with_capacity(t_list.len());
    let mut sup_residual2 = Vec::with_capacity(t_list.len());
    let mut last_remainder = Vec::new();
    for sol in &solutions {
        let t = sol.temperature();
        let mut r0 = 0.0f64;
        let mut r2 = 0.0f64;
        last_remainder.clear();
        for (i, &lambda) in probes.iter().enumerate() {
            let e = sol.epsilon_eval(lambda).map_err(|e| e.at_temperature(t))?;
            let d0 = e - eps0[i];
            let d2 = d0 - t * t * e2[i];
            r0 = r0.max(d0.abs());
            r2 = r2.max(d2.abs());
            last_remainder.push(d2 / t.powi(4));
        }
        sup_residual0.push(r0);
        sup_residual2.push(r2);
    }

    let qhat_list: Vec<f64> = solutions.iter().map(EpsilonSolution::qhat).collect();
    let x: Vec<f64> = t_list.iter().map(|t| t * t).collect();
    let y: Vec<f64> = qhat_list.iter().map(|qh| qh - q).collect();
    let sxx: f64 = x.iter().map(|v| v * v).sum();
    let b = x.iter().zip(&y).map(|(a, c)| a * c).sum::<f64>() / sxx;
    let num: f64 = x.iter().zip(&y).map(|(a, c)| (c - b * a).powi(2)).sum();
    let den: f64 = y.iter().map(|c| c * c).sum();
    let rel = if den > 0.0 { (num / den).sqrt() } else { 0.0 };

    Ok(ExpansionReport {
        params: *params,
        tol: config.tol,
        grid_n: config.grid_n,
        t_list: t_list.to_vec(),
        q,
        w: solutions[0].w(),
        qhat_in_bracket: solutions.iter().map(EpsilonSolution::qhat_in_bracket).collect(),
        iterations: solutions.iter().map(EpsilonSolution::iterations).collect(),
        residual_norms: solutions.iter().map(EpsilonSolution::residual_norm).collect(),
        qhat_list,
        fitted_order0: order_fit(t_list, &sup_residual0)?,
        fitted_order2: order_fit(t_list, &sup_residual2)?,
        sup_residual0,
        sup_residual2,
        qhat_shift_coefficient: b,
        qhat_shift_relative_residual: rel,
        qhat_shift_predicted: -eps2.eval(q) / eps2.fermi_slope(),
        sommerfeld_prefactor: sommerfeld_prefactor(),
        eps2_probe_values: GridFunction::new(probes.clone(), e2)?,
        eps4_probe_values: GridFunction::new(probes.clone(), last_remainder)?,
        probes,
    })
}
