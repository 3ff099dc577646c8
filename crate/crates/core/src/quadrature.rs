//! Composite Gauss-Legendre quadrature on panel meshes.
//!
//! Every integral in the crate is a fixed-order sum over panels, accumulated
//! left to right, so results are reproducible bit for bit. Near the Fermi
//! points `±q̂` the Fermi weight `ln(1 + e^{−ε/T})` changes on a scale `T`;
//! [`thermal_mesh`] grades the panels geometrically towards those points.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const MAX_ORDER: usize = 256;
pub const DEFAULT_BASE_ORDER: usize = 24;
pub const DEFAULT_COARSE_WIDTH: f64 = 0.5;
/// Largest panel count any mesh builder will produce.
pub const MAX_PANELS: usize = 1 << 16;
/// Largest node count for which a dense Nyström matrix is formed.
pub const MAX_DENSE_NODES: usize = 10_000;

/// Rejects discretizations too large for a dense `n × n` matrix.
pub fn check_dense_size(nodes: usize) -> Result<()> {
    if nodes > MAX_DENSE_NODES {
        return Err(Error::Degenerate(format!(
            "discretization needs {nodes} nodes, above the dense limit {MAX_DENSE_NODES}"
        )));
    }
    Ok(())
}

fn check_panels(panels: f64) -> Result<usize> {
    if !(panels <= MAX_PANELS as f64) {
        return Err(Error::Degenerate(format!(
            "mesh needs {panels:.3e} panels, above the limit {MAX_PANELS}"
        )));
    }
    Ok(panels.max(1.0) as usize)
}

/// Coarse panel width for integrands carrying the kernel: half the kernel
/// scale, capped at [`DEFAULT_COARSE_WIDTH`].
pub fn coarse_width_for(kernel_scale: f64) -> f64 {
    DEFAULT_COARSE_WIDTH.min(0.5 * kernel_scale)
}

/// Gauss-Legendre nodes and weights on `[−1, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadratureRule {
    nodes: Vec<f64>,
    weights: Vec<f64>,
}

impl QuadratureRule {
    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn order(&self) -> usize {
        self.nodes.len()
    }

    /// Applies the rule on `[a, b]`.
    pub fn integrate(&self, a: f64, b: f64, f: impl Fn(f64) -> f64) -> f64 {
        let mid = 0.5 * (a + b);
        let half = 0.5 * (b - a);
        let mut acc = 0.0;
        for (&t, &w) in self.nodes.iter().zip(&self.weights) {
            acc += w * f(mid + half * t);
        }
        acc * half
    }
}

/// Legendre polynomial `P_n(x)` and its derivative by the three-term recurrence.
fn legendre(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    for k in 2..=n {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    let dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, dp)
}

/// Gauss-Legendre rule with `order` points, exact for polynomials of degree
/// `2·order − 1`. Nodes are strictly increasing and exactly antisymmetric.
pub fn gauss_rule(order: usize) -> Result<QuadratureRule> {
    if order == 0 || order > MAX_ORDER {
        return Err(Error::OutOfRange {
            what: "quadrature order",
            value: order as f64,
        });
    }
    if order == 1 {
        return Ok(QuadratureRule {
            nodes: vec![0.0],
            weights: vec![2.0],
        });
    }
    let n = order;
    let half = n / 2;
    // Roots in (0, 1), largest first.
    let mut pos = Vec::with_capacity(half);
    for i in 0..half {
        let mut x = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        for _ in 0..100 {
            let (p, dp) = legendre(n, x);
            let dx = p / dp;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        let (_, dp) = legendre(n, x);
        pos.push((x, 2.0 / ((1.0 - x * x) * dp * dp)));
    }
    let mut nodes = Vec::with_capacity(n);
    let mut weights = Vec::with_capacity(n);
    for &(x, w) in &pos {
        nodes.push(-x);
        weights.push(w);
    }
    if n % 2 == 1 {
        let (_, dp) = legendre(n, 0.0);
        nodes.push(0.0);
        weights.push(2.0 / (dp * dp));
    }
    for &(x, w) in pos.iter().rev() {
        nodes.push(x);
        weights.push(w);
    }
    Ok(QuadratureRule { nodes, weights })
}

/// Breakpoints with a Gauss order per panel.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PanelMesh {
    breakpoints: Vec<f64>,
    orders: Vec<usize>,
}

/// Flattened nodes and weights of a mesh.
#[derive(Debug, Clone, PartialEq)]
pub struct Discretization {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl Discretization {
    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }
}

impl PanelMesh {
    pub fn new(breakpoints: Vec<f64>, orders: Vec<usize>) -> Result<Self> {
        if breakpoints.len() < 2 || orders.len() + 1 != breakpoints.len() {
            return Err(Error::InvalidParameter(format!(
                "mesh needs n+1 breakpoints for n orders, got {} and {}",
                breakpoints.len(),
                orders.len()
            )));
        }
        if breakpoints.iter().any(|b| !b.is_finite()) || breakpoints.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::InvalidParameter(
                "breakpoints must be finite and strictly increasing".into(),
            ));
        }
        if orders.iter().any(|&o| o == 0 || o > MAX_ORDER) {
            return Err(Error::InvalidParameter(format!(
                "panel orders must lie in 1..={MAX_ORDER}"
            )));
        }
        Ok(Self { breakpoints, orders })
    }

    pub fn with_order(breakpoints: Vec<f64>, order: usize) -> Result<Self> {
        let n = breakpoints.len().saturating_sub(1);
        Self::new(breakpoints, vec![order; n])
    }

    /// `panels` equal panels on `[a, b]`.
    pub fn uniform(a: f64, b: f64, panels: usize, order: usize) -> Result<Self> {
        if panels == 0 || !(b > a) {
            return Err(Error::InvalidParameter(format!(
                "bad uniform mesh on [{a}, {b}] with {panels} panels"
            )));
        }
        let bp = (0..=panels)
            .map(|i| {
                if i == panels {
                    b
                } else {
                    a + (b - a) * i as f64 / panels as f64
                }
            })
            .collect();
        Self::with_order(bp, order)
    }

    /// Symmetric uniform mesh on `[−Λ, Λ]` with panels no wider than `width`.
    pub fn symmetric_uniform(lambda_max: f64, width: f64, order: usize) -> Result<Self> {
        let per_side = check_panels((lambda_max / width).ceil())?;
        let positive: Vec<f64> = (0..=per_side)
            .map(|i| {
                if i == per_side {
                    lambda_max
                } else {
                    lambda_max * i as f64 / per_side as f64
                }
            })
            .collect();
        Self::with_order(mirror(&positive), order)
    }

    /// Symmetric mesh on `[−Λ, Λ]` graded away from the origin: the panels next
    /// to `0` have width `first_width` and double up to `max_width`.
    pub fn symmetric_graded(lambda_max: f64, first_width: f64, max_width: f64, order: usize) -> Result<Self> {
        if !(lambda_max > 0.0 && lambda_max.is_finite()) || !(first_width > 0.0) || !(max_width > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "bad symmetric graded mesh: Lambda = {lambda_max}, widths {first_width}, {max_width}"
            )));
        }
        Self::with_order(mirror(&graded_points(0.0, lambda_max, first_width, max_width)?), order)
    }

    /// Mesh on `[from, to]` whose panels start at width `first_width` next to
    /// `from` and double until they reach `max_width`. `from` may be either end.
    pub fn graded(from: f64, to: f64, first_width: f64, max_width: f64, order: usize) -> Result<Self> {
        if from == to {
            return Err(Error::InvalidParameter("graded mesh on an empty interval".into()));
        }
        let mut bp = graded_points(from, to, first_width, max_width)?;
        if from > to {
            bp.reverse();
        }
        Self::with_order(bp, order)
    }

    pub fn breakpoints(&self) -> &[f64] {
        &self.breakpoints
    }

    pub fn orders(&self) -> &[usize] {
        &self.orders
    }

    pub fn panel_count(&self) -> usize {
        self.orders.len()
    }

    pub fn lower(&self) -> f64 {
        self.breakpoints[0]
    }

    pub fn upper(&self) -> f64 {
        *self.breakpoints.last().unwrap()
    }

    pub fn node_count(&self) -> usize {
        self.orders.iter().sum()
    }

    pub fn panel_widths(&self) -> impl Iterator<Item = f64> + '_ {
        self.breakpoints.windows(2).map(|w| w[1] - w[0])
    }

    /// True when the breakpoints are mirror images about the origin.
    pub fn is_symmetric(&self) -> bool {
        let n = self.breakpoints.len();
        (0..n).all(|i| self.breakpoints[i] == -self.breakpoints[n - 1 - i])
            && (0..self.orders.len()).all(|i| self.orders[i] == self.orders[self.orders.len() - 1 - i])
    }

    /// Splits every panel into `parts` equal sub-panels.
    pub fn split(&self, parts: usize) -> Self {
        let parts = parts.max(1);
        let mut bp = vec![self.breakpoints[0]];
        let mut orders = Vec::with_capacity(self.orders.len() * parts);
        for (w, &o) in self.breakpoints.windows(2).zip(&self.orders) {
            let (a, b) = (w[0], w[1]);
            let mid = 0.5 * (a + b);
            let half = 0.5 * (b - a);
            for k in 1..=parts {
                // Symmetric parametrization keeps mirrored panels exact mirrors.
                let t = (2 * k as i64 - parts as i64) as f64 / parts as f64;
                bp.push(if k == parts { b } else { mid + half * t });
                orders.push(o);
            }
        }
        Self {
            breakpoints: bp,
            orders,
        }
    }

    /// Multiplies every panel order by `factor` (capped at [`MAX_ORDER`]).
    pub fn scale_orders(&self, factor: usize) -> Self {
        Self {
            breakpoints: self.breakpoints.clone(),
            orders: self.orders.iter().map(|&o| (o * factor).clamp(1, MAX_ORDER)).collect(),
        }
    }

    pub fn discretize(&self) -> Result<Discretization> {
        let mut nodes = Vec::with_capacity(self.node_count());
        let mut weights = Vec::with_capacity(self.node_count());
        let mut cache: Vec<(usize, QuadratureRule)> = Vec::new();
        for (w, &o) in self.breakpoints.windows(2).zip(&self.orders) {
            let rule = match cache.iter().find(|(k, _)| *k == o) {
                Some((_, r)) => r.clone(),
                None => {
                    let r = gauss_rule(o)?;
                    cache.push((o, r.clone()));
                    r
                }
            };
            let mid = 0.5 * (w[0] + w[1]);
            let half = 0.5 * (w[1] - w[0]);
            for (&t, &wt) in rule.nodes.iter().zip(&rule.weights) {
                nodes.push(mid + half * t);
                weights.push(half * wt);
            }
        }
        Ok(Discretization { nodes, weights })
    }
}

fn mirror(positive: &[f64]) -> Vec<f64> {
    let mut bp: Vec<f64> = positive.iter().rev().map(|x| -x).collect();
    bp.pop();
    bp.push(0.0);
    bp.extend(positive.iter().skip(1));
    bp
}

/// Points from `from` to `to` (in that order) with geometrically growing gaps.
fn graded_points(from: f64, to: f64, first_width: f64, max_width: f64) -> Result<Vec<f64>> {
    let dir = (to - from).signum();
    let total = (to - from).abs();
    let mut pts = vec![from];
    let mut covered = 0.0;
    let mut w = first_width.min(max_width);
    while w < max_width && covered + 2.0 * w <= total {
        covered += w;
        pts.push(from + dir * covered);
        w *= 2.0;
    }
    let rest = total - covered;
    let k = check_panels((rest / max_width).ceil())?;
    for i in 1..=k {
        pts.push(if i == k {
            to
        } else {
            from + dir * (covered + rest * i as f64 / k as f64)
        });
    }
    Ok(pts)
}

/// Sum of the per-panel Gauss approximations of `∫ f` over the mesh, in fixed
/// left-to-right order. A non-finite value of `f` at any node is an error.
pub fn integrate(f: impl Fn(f64) -> f64, mesh: &PanelMesh) -> Result<f64> {
    let mut total = 0.0;
    for (w, &o) in mesh.breakpoints.windows(2).zip(&mesh.orders) {
        let rule = gauss_rule(o)?;
        let mid = 0.5 * (w[0] + w[1]);
        let half = 0.5 * (w[1] - w[0]);
        let mut panel = 0.0;
        for (&t, &wt) in rule.nodes.iter().zip(&rule.weights) {
            let x = mid + half * t;
            let fx = f(x);
            if !fx.is_finite() {
                return Err(Error::NonFinite { node: x, value: fx });
            }
            panel += wt * fx;
        }
        total += half * panel;
    }
    Ok(total)
}

/// Weighted sum `Σ wᵢ f(xᵢ)` over a discretization, with the same non-finite check.
pub fn integrate_discrete(f: impl Fn(f64) -> f64, disc: &Discretization) -> Result<f64> {
    let mut total = 0.0;
    for (&x, &w) in disc.nodes.iter().zip(&disc.weights) {
        let fx = f(x);
        if !fx.is_finite() {
            return Err(Error::NonFinite { node: x, value: fx });
        }
        total += w * fx;
    }
    Ok(total)
}

/// Symmetric mesh on `[−Λ, Λ]` graded towards `±qhat` with the default
/// coarse width.
pub fn thermal_mesh(qhat: f64, t: f64, lambda_max: f64, base_order: usize) -> Result<PanelMesh> {
    thermal_mesh_with_width(qhat, t, lambda_max, base_order, DEFAULT_COARSE_WIDTH)
}

/// Symmetric mesh on `[−Λ, Λ]`: panels of width `min(T, T/q̂)` touch `±q̂`
/// and double outward until they reach `coarse_width`, which is kept elsewhere.
/// The panel count grows like `log(coarse_width/T)`.
pub fn thermal_mesh_with_width(
    qhat: f64,
    t: f64,
    lambda_max: f64,
    base_order: usize,
    coarse_width: f64,
) -> Result<PanelMesh> {
    if !(t > 0.0) {
        return Err(Error::OutOfRange { what: "T", value: t });
    }
    if !(qhat > 0.0) {
        return Err(Error::OutOfRange {
            what: "qhat",
            value: qhat,
        });
    }
    if !(qhat < lambda_max) || !lambda_max.is_finite() {
        return Err(Error::InvalidParameter(format!(
            "thermal mesh needs 0 < qhat < Lambda, got qhat = {qhat}, Lambda = {lambda_max}"
        )));
    }
    if !(coarse_width > 0.0) {
        return Err(Error::OutOfRange {
            what: "coarse width",
            value: coarse_width,
        });
    }
    let first = (t / qhat.max(1.0)).min(coarse_width);
    if first <= 64.0 * f64::EPSILON * qhat {
        return Err(Error::Degenerate(format!(
            "T = {t} is too small to resolve the layer at qhat = {qhat}"
        )));
    }
    let mut left = graded_points(qhat, 0.0, first, coarse_width)?;
    left.reverse();
    let right = graded_points(qhat, lambda_max, first, coarse_width)?;
    let mut positive = left;
    positive.extend(right.into_iter().skip(1));
    PanelMesh::with_order(mirror(&positive), base_order)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn low_order_rules() {
        let r = gauss_rule(1).unwrap();
        assert_eq!(r.nodes(), &[0.0]);
        assert_eq!(r.weights(), &[2.0]);
        let r = gauss_rule(2).unwrap();
        assert!((r.nodes()[1] - 1.0 / 3f64.sqrt()).abs() < 1e-15);
        assert!(gauss_rule(0).is_err());
        assert!(gauss_rule(257).is_err());
    }

    #[test]
    fn rules_are_normalized_sorted_and_symmetric() {
        for order in [1, 2, 3, 7, 16, 24, 48, 100, 255, 256] {
            let r = gauss_rule(order).unwrap();
            let sum: f64 = r.weights().iter().sum();
            assert!((sum - 2.0).abs() < 1e-13, "order {order}: {sum}");
            assert!(r.weights().iter().all(|&w| w > 0.0));
            assert!(r.nodes().windows(2).all(|w| w[0] < w[1]));
            let n = r.order();
            for i in 0..n {
                assert_eq!(r.nodes()[i], -r.nodes()[n - 1 - i]);
            }
        }
    }

    #[test]
    fn rule_exactness() {
        let r16 = gauss_rule(16).unwrap();
        assert!((r16.integrate(-1.0, 1.0, |x| x * x) - 2.0 / 3.0).abs() < 1e-14);
        // Degree 31 is the highest degree integrated exactly by 16 points.
        assert!((r16.integrate(-1.0, 1.0, |x| x.powi(30)) - 2.0 / 31.0).abs() < 1e-14);
        let r32 = gauss_rule(32).unwrap();
        let exact = std::f64::consts::E - 1.0 / std::f64::consts::E;
        assert!((r32.integrate(-1.0, 1.0, f64::exp) - exact).abs() < 1e-13);
    }

    #[test]
    fn integrate_constant_and_odd() {
        let mesh = PanelMesh::uniform(-3.0, 3.0, 5, 8).unwrap();
        assert!((integrate(|_| 1.0, &mesh).unwrap() - 6.0).abs() < 1e-14);
        let sym = PanelMesh::symmetric_uniform(4.0, 0.7, 12).unwrap();
        assert!(sym.is_symmetric());
        assert!(integrate(|x| x * (-x * x).exp() + x.powi(3), &sym).unwrap().abs() < 1e-13);
    }

    #[test]
    fn integrate_reports_non_finite_node() {
        let mesh = PanelMesh::uniform(0.0, 1.0, 1, 4).unwrap();
        let err = integrate(|x| if x > 0.5 { f64::NAN } else { x }, &mesh).unwrap_err();
        match err {
            Error::NonFinite { node, .. } => assert!(node > 0.5 && node < 1.0),
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn mesh_validation() {
        assert!(PanelMesh::new(vec![0.0, 1.0], vec![]).is_err());
        assert!(PanelMesh::new(vec![1.0, 0.0], vec![4]).is_err());
        assert!(PanelMesh::new(vec![0.0, 1.0], vec![0]).is_err());
        assert!(thermal_mesh(5.0, 0.1, 5.0, 24).is_err());
        assert!(thermal_mesh(1.0, 0.0, 5.0, 24).is_err());
    }

    #[test]
    fn thermal_mesh_is_refined_at_the_fermi_points() {
        let mesh = thermal_mesh(1.0, 0.1, 5.0, 24).unwrap();
        assert!(mesh.is_symmetric());
        let bp = mesh.breakpoints();
        for target in [-1.0, 1.0] {
            let i = bp.iter().position(|&b| b == target).expect("±qhat is a breakpoint");
            assert!(bp[i + 1] - bp[i] <= 0.1 + 1e-15);
            assert!(bp[i] - bp[i - 1] <= 0.1 + 1e-15);
        }
        assert_eq!(mesh.lower(), -5.0);
        assert_eq!(mesh.upper(), 5.0);
    }

    #[test]
    fn thermal_mesh_grading_is_bounded() {
        let coarse = PanelMesh::symmetric_uniform(5.0, DEFAULT_COARSE_WIDTH, 24).unwrap();
        let warm = thermal_mesh(1.0, 0.5, 5.0, 24).unwrap();
        assert!(warm.panel_count() <= 2 * coarse.panel_count());
        // Panel count grows logarithmically in 1/T.
        let n1 = thermal_mesh(1.0, 1e-2, 5.0, 24).unwrap().panel_count();
        let n2 = thermal_mesh(1.0, 1e-4, 5.0, 24).unwrap().panel_count();
        let n3 = thermal_mesh(1.0, 1e-6, 5.0, 24).unwrap().panel_count();
        assert!(n2 > n1 && n3 > n2);
        assert!((n3 - n2) as i64 - (n2 - n1) as i64 <= 4);
    }

    #[test]
    fn thermal_mesh_matches_refined_uniform_mesh() {
        let t = 0.01;
        let f = |x: f64| {
            let e = x * x - 1.0;
            if e >= 0.0 {
                (-e / t).exp().ln_1p()
            } else {
                -e / t + (e / t).exp().ln_1p()
            }
        };
        let graded = integrate(f, &thermal_mesh(1.0, t, 5.0, 24).unwrap()).unwrap();
        let fine = integrate(
            f,
            &PanelMesh::symmetric_uniform(5.0, DEFAULT_COARSE_WIDTH / 10.0, 24).unwrap(),
        )
        .unwrap();
        assert!((graded - fine).abs() < 1e-9, "{graded} vs {fine}");
    }

    #[test]
    fn split_and_scale_preserve_symmetry() {
        let mesh = thermal_mesh(1.3, 0.05, 4.0, 12).unwrap();
        assert!(mesh.split(3).is_symmetric());
        assert_eq!(mesh.split(3).panel_count(), 3 * mesh.panel_count());
        assert_eq!(mesh.scale_orders(2).node_count(), 2 * mesh.node_count());
        let d = mesh.split(2).discretize().unwrap();
        let n = d.len();
        for i in 0..n {
            assert_eq!(d.nodes[i], -d.nodes[n - 1 - i]);
            assert_eq!(d.weights[i], d.weights[n - 1 - i]);
        }
    }

    #[test]
    fn graded_mesh_runs_either_direction() {
        let m = PanelMesh::graded(2.0, 0.0, 1e-3, 0.25, 8).unwrap();
        assert_eq!(m.upper(), 2.0);
        assert!(m.panel_widths().last().unwrap() <= 1e-3);
        let q = integrate(|x| x, &m).unwrap();
        assert!((q - 2.0).abs() < 1e-14);
    }

    proptest! {
        #[test]
        fn even_integrand_is_reflection_invariant(qhat in 0.3f64..3.0, t in 1e-3f64..0.5, a in 0.1f64..3.0) {
            let mesh = thermal_mesh(qhat, t, qhat + 2.0, 16).unwrap();
            let f = move |x: f64| (-a * x * x).exp() * (x * x).cos();
            let direct = integrate(f, &mesh).unwrap();
            let reflected = integrate(move |x: f64| f(-x), &mesh).unwrap();
            prop_assert_eq!(direct.to_bits(), reflected.to_bits());
        }
    }
}
