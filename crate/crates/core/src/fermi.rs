//! Overflow-free Fermi weights.

/// `ln(1 + e^{−x/T})`, evaluated as `log1p(e^{−x/T})` for `x ≥ 0` and as
/// `−x/T + log1p(e^{x/T})` for `x < 0`.
#[inline]
pub fn log_fermi(x: f64, t: f64) -> f64 {
    let y = x / t;
    if y >= 0.0 {
        (-y).exp().ln_1p()
    } else {
        -y + y.exp().ln_1p()
    }
}

/// `T·ln(1 + e^{−x/T})`.
#[inline]
pub fn thermal_log(x: f64, t: f64) -> f64 {
    t * log_fermi(x, t)
}

/// Fermi factor `1/(1 + e^{x/T})`, the derivative of `−T·ln(1 + e^{−x/T})`.
#[inline]
pub fn fermi_factor(x: f64, t: f64) -> f64 {
    let y = x / t;
    if y >= 0.0 {
        let e = (-y).exp();
        e / (1.0 + e)
    } else {
        1.0 / (1.0 + y.exp())
    }
}
