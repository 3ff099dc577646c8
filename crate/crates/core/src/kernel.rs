//! The Lieb kernel `K(λ) = 2c/(λ² + c²)` and the model parameters it depends on.
//!
//! The impenetrable limit `c = +∞` is represented explicitly; there the kernel
//! vanishes identically and every equation in the crate reduces to free fermions,
//! `ε(λ) = λ² − h`.

use std::f64::consts::PI;
use std::fmt;

use serde::de::{self, Deserializer, Visitor};
use serde::ser::Serializer;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Coupling constant of the delta interaction.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Coupling {
    Finite(f64),
    /// `c = +∞`, the kernel is identically zero.
    Impenetrable,
}

impl Coupling {
    pub fn value(self) -> f64 {
        match self {
            Coupling::Finite(c) => c,
            Coupling::Impenetrable => f64::INFINITY,
        }
    }
}

impl Serialize for Coupling {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            Coupling::Finite(c) => s.serialize_f64(*c),
            Coupling::Impenetrable => s.serialize_str("inf"),
        }
    }
}

impl<'de> Deserialize<'de> for Coupling {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        struct CouplingVisitor;

        impl Visitor<'_> for CouplingVisitor {
            type Value = Coupling;

            fn expecting(&self, f: &mut fmt::Formatter) -> fmt::Result {
                f.write_str("a positive number or \"inf\"")
            }

            fn visit_f64<E: de::Error>(self, v: f64) -> std::result::Result<Coupling, E> {
                if v > 0.0 && v.is_finite() {
                    Ok(Coupling::Finite(v))
                } else if v == f64::INFINITY {
                    Ok(Coupling::Impenetrable)
                } else {
                    Err(E::custom(format!("coupling must be positive, got {v}")))
                }
            }

            fn visit_u64<E: de::Error>(self, v: u64) -> std::result::Result<Coupling, E> {
                self.visit_f64(v as f64)
            }

            fn visit_i64<E: de::Error>(self, v: i64) -> std::result::Result<Coupling, E> {
                self.visit_f64(v as f64)
            }

            fn visit_str<E: de::Error>(self, v: &str) -> std::result::Result<Coupling, E> {
                parse_coupling(v).map_err(E::custom)
            }
        }

        d.deserialize_any(CouplingVisitor)
    }
}

/// Parses a coupling from text; `inf`, `+inf` and `infinity` select the
/// impenetrable limit.
pub fn parse_coupling(text: &str) -> Result<Coupling> {
    let t = text.trim();
    match t.to_ascii_lowercase().as_str() {
        "inf" | "+inf" | "infinity" | "+infinity" => Ok(Coupling::Impenetrable),
        _ => {
            let c: f64 = t
                .parse()
                .map_err(|_| Error::InvalidParameter(format!("cannot parse coupling {t:?}")))?;
            if c > 0.0 && c.is_finite() {
                Ok(Coupling::Finite(c))
            } else {
                Err(Error::InvalidParameter(format!("coupling must be positive, got {c}")))
            }
        }
    }
}

/// Coupling `c` and chemical potential `h` of the gas.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    c: Coupling,
    h: f64,
}

impl ModelParams {
    /// `c = f64::INFINITY` selects the impenetrable limit.
    pub fn new(c: f64, h: f64) -> Result<Self> {
        let coupling = if c == f64::INFINITY {
            Coupling::Impenetrable
        } else if c > 0.0 && c.is_finite() {
            Coupling::Finite(c)
        } else {
            return Err(Error::InvalidParameter(format!("coupling must be positive, got {c}")));
        };
        Self::with_coupling(coupling, h)
    }

    pub fn impenetrable(h: f64) -> Result<Self> {
        Self::with_coupling(Coupling::Impenetrable, h)
    }

    pub fn with_coupling(coupling: Coupling, h: f64) -> Result<Self> {
        if let Coupling::Finite(c) = coupling {
            if !(c > 0.0 && c.is_finite()) {
                return Err(Error::InvalidParameter(format!("coupling must be positive, got {c}")));
            }
        }
        if !(h > 0.0 && h.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "chemical potential must be positive, got {h}"
            )));
        }
        Ok(Self { c: coupling, h })
    }

    pub fn coupling(&self) -> Coupling {
        self.c
    }

    /// The coupling constant, `+∞` in the impenetrable limit.
    pub fn c(&self) -> f64 {
        self.c.value()
    }

    pub fn h(&self) -> f64 {
        self.h
    }

    pub fn is_impenetrable(&self) -> bool {
        matches!(self.c, Coupling::Impenetrable)
    }

    #[inline]
    pub fn kernel(&self, lambda: f64) -> f64 {
        lieb_kernel(lambda, self)
    }

    #[inline]
    pub fn kernel_deriv(&self, lambda: f64) -> f64 {
        lieb_kernel_deriv(lambda, self)
    }

    /// `‖K‖∞ = K(0) = 2/c`.
    pub fn kernel_sup(&self) -> f64 {
        lieb_kernel(0.0, self)
    }

    /// Length scale on which the kernel varies; `1` in the impenetrable limit.
    pub fn kernel_scale(&self) -> f64 {
        match self.c {
            Coupling::Finite(c) => c,
            Coupling::Impenetrable => 1.0,
        }
    }
}

/// `K(λ) = 2c/(λ² + c²)`.
#[inline]
pub fn lieb_kernel(lambda: f64, params: &ModelParams) -> f64 {
    match params.c {
        Coupling::Finite(c) => 2.0 * c / (lambda * lambda + c * c),
        Coupling::Impenetrable => 0.0,
    }
}

/// `K′(λ) = −4cλ/(λ² + c²)²`.
#[inline]
pub fn lieb_kernel_deriv(lambda: f64, params: &ModelParams) -> f64 {
    match params.c {
        Coupling::Finite(c) => {
            let d = lambda * lambda + c * c;
            -4.0 * c * lambda / (d * d)
        }
        Coupling::Impenetrable => 0.0,
    }
}

/// `(1/2π) ∫_{−α}^{α} K = (2/π)·arctan(α/c)`, the normalized kernel mass on
/// `[−α, α]`. It is below one for every finite `α`.
pub fn kernel_mass(alpha: f64, params: &ModelParams) -> Result<f64> {
    if !(alpha >= 0.0) {
        return Err(Error::OutOfRange {
            what: "alpha",
            value: alpha,
        });
    }
    Ok(match params.c {
        Coupling::Finite(c) => 2.0 / PI * (alpha / c).atan(),
        Coupling::Impenetrable => 0.0,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn p(c: f64) -> ModelParams {
        ModelParams::new(c, 1.0).unwrap()
    }

    #[test]
    fn kernel_values() {
        assert_eq!(lieb_kernel(0.0, &p(2.0)), 1.0);
        for c in [0.3, 1.0, 7.5] {
            assert!((lieb_kernel(c, &p(c)) - 1.0 / c).abs() < 1e-15);
        }
        assert_eq!(lieb_kernel(0.3, &ModelParams::impenetrable(1.0).unwrap()), 0.0);
    }

    #[test]
    fn kernel_derivative_values() {
        assert_eq!(lieb_kernel_deriv(0.0, &p(1.0)), 0.0);
        assert_eq!(lieb_kernel_deriv(1.0, &p(1.0)), -1.0);
        let params = p(2.0);
        let step = 1e-5;
        let fd = (lieb_kernel(0.7 + step, &params) - lieb_kernel(0.7 - step, &params)) / (2.0 * step);
        assert!((fd - lieb_kernel_deriv(0.7, &params)).abs() < 1e-8);
    }

    #[test]
    fn kernel_mass_values() {
        let params = p(1.7);
        assert_eq!(kernel_mass(0.0, &params).unwrap(), 0.0);
        assert!((kernel_mass(1.7, &params).unwrap() - 0.5).abs() < 1e-15);
        assert!(kernel_mass(-0.1, &params).is_err());
        let far = kernel_mass(1e6 * 1.7, &params).unwrap();
        assert!(far < 1.0 && (1.0 - far) < 1e-5);
    }

    #[test]
    fn params_validation() {
        assert!(ModelParams::new(0.0, 1.0).is_err());
        assert!(ModelParams::new(-1.0, 1.0).is_err());
        assert!(ModelParams::new(f64::NAN, 1.0).is_err());
        assert!(ModelParams::new(1.0, 0.0).is_err());
        assert!(ModelParams::new(f64::INFINITY, 1.0).unwrap().is_impenetrable());
        assert!(matches!(parse_coupling("inf"), Ok(Coupling::Impenetrable)));
        assert!(matches!(parse_coupling(" 2.5 "), Ok(Coupling::Finite(c)) if c == 2.5));
        assert!(parse_coupling("abc").is_err());
    }

    #[test]
    fn params_serde_round_trip() {
        for params in [
            ModelParams::new(1.25, 0.5).unwrap(),
            ModelParams::impenetrable(2.0).unwrap(),
        ] {
            let text = serde_json::to_string(&params).unwrap();
            let back: ModelParams = serde_json::from_str(&text).unwrap();
            assert_eq!(back, params);
        }
        let inf = serde_json::to_string(&ModelParams::impenetrable(1.0).unwrap()).unwrap();
        assert_eq!(inf, r#"{"c":"inf","h":1.0}"#);
    }

    proptest! {
        #[test]
        fn kernel_is_even_positive_and_decaying(
            c in 0.05f64..20.0,
            a in 0.0f64..50.0,
            b in 0.0f64..50.0,
        ) {
            let params = p(c);
            prop_assert_eq!(lieb_kernel(a, &params), lieb_kernel(-a, &params));
            prop_assert!(lieb_kernel(a, &params) > 0.0);
            let (lo, hi) = if a < b { (a, b) } else { (b, a) };
            prop_assert!(lieb_kernel(lo, &params) >= lieb_kernel(hi, &params));
            prop_assert_eq!(lieb_kernel_deriv(a, &params), -lieb_kernel_deriv(-a, &params));
        }

        #[test]
        fn kernel_mass_is_monotone_and_below_one(c in 0.05f64..20.0, a in 0.0f64..1e4, d in 1e-6f64..10.0) {
            let params = p(c);
            let m1 = kernel_mass(a, &params).unwrap();
            let m2 = kernel_mass(a + d, &params).unwrap();
            prop_assert!(m1 < 1.0 && m2 < 1.0);
            prop_assert!(m2 >= m1);
        }
    }
}
