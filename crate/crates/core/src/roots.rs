//! Bracketed root finding: bisection safeguards with Newton steps.

use crate::error::{Error, Result};

/// Stopping tolerances for [`bracketed_newton`].
#[derive(Debug, Clone, Copy)]
pub struct RootTolerance {
    /// Stop once the bracket is narrower than this.
    pub x_tol: f64,
    /// Stop once `|f(x)| ≤ f_tol`.
    pub f_tol: f64,
    pub max_steps: usize,
}

impl Default for RootTolerance {
    fn default() -> Self {
        Self {
            x_tol: 1e-12,
            f_tol: 0.0,
            max_steps: 200,
        }
    }
}

/// Finds a root of `f` inside `[lo, hi]`, where `f(lo)` and `f(hi)` have
/// opposite signs. `f` returns the value and, optionally, the derivative.
///
/// A Newton step is taken whenever it stays inside the current bracket and
/// shrinks the residual fast enough; otherwise the bracket is bisected.
pub fn bracketed_newton<F>(mut f: F, lo: f64, hi: f64, tol: RootTolerance) -> Result<f64>
where
    F: FnMut(f64) -> Result<(f64, Option<f64>)>,
{
    let (mut a, mut b) = if lo < hi { (lo, hi) } else { (hi, lo) };
    let (fa, _) = f(a)?;
    let (fb, _) = f(b)?;
    if fa == 0.0 {
        return Ok(a);
    }
    if fb == 0.0 {
        return Ok(b);
    }
    if fa.signum() == fb.signum() || !fa.is_finite() || !fb.is_finite() {
        return Err(Error::NoSignChange {
            lo: a,
            hi: b,
            f_lo: fa,
            f_hi: fb,
        });
    }
    let increasing = fb > 0.0;
    let mut x = 0.5 * (a + b);
    let mut last_width = b - a;
    for _ in 0..tol.max_steps {
        let (fx, dfx) = f(x)?;
        if !fx.is_finite() {
            return Err(Error::NonFinite { node: x, value: fx });
        }
        if fx == 0.0 || fx.abs() <= tol.f_tol {
            return Ok(x);
        }
        if (fx > 0.0) == increasing {
            b = x;
        } else {
            a = x;
        }
        if b - a <= tol.x_tol {
            return Ok(0.5 * (a + b));
        }
        let newton = dfx.filter(|d| d.is_finite() && *d != 0.0).map(|d| x - fx / d);
        if let Some(n) = newton {
            // Converged from one side: the bracket no longer shrinks.
            if (n - x).abs() <= 0.5 * tol.x_tol.max(4.0 * f64::EPSILON * x.abs()) && n >= a && n <= b {
                return Ok(n);
            }
        }
        let width = b - a;
        x = match newton {
            Some(n) if n > a && n < b && width < 0.75 * last_width => n,
            Some(n) if n > a && n < b && (n - x).abs() < 0.25 * width => n,
            _ => 0.5 * (a + b),
        };
        last_width = width;
    }
    Err(Error::RootNotConverged(tol.max_steps))
}

/// Pure bisection to bracket width `x_tol`.
pub fn bisect<F>(mut f: F, lo: f64, hi: f64, x_tol: f64) -> Result<f64>
where
    F: FnMut(f64) -> Result<f64>,
{
    bracketed_newton(
        |x| Ok((f(x)?, None)),
        lo,
        hi,
        RootTolerance {
            x_tol,
            f_tol: 0.0,
            max_steps: 400,
        },
    )
}
