//! Numerical solver and verification toolkit for the Yang-Yang equation of
//! the Lieb-Liniger (non-linear Schrödinger) gas.
//!
//! The pseudo-energy `ε(λ)` solves
//!
//! ```text
//! ε(λ) = λ² − h − (T/2π) ∫ K(λ−µ) ln(1 + e^{−ε(µ)/T}) dµ,   K(λ) = 2c/(λ² + c²)
//! ```
//!
//! The crate solves this equation by monotone fixed-point iteration, builds the
//! zero-temperature dressed energy and its Fermi point, evaluates Fredholm
//! resolvents and determinants of `I − K/2π`, and checks the low-temperature
//! expansion `ε = ε₀ + T²ε₂ + O(T⁴)` numerically.
//!
//! Module map:
//! - [`kernel`]: the Lieb kernel and model parameters
//! - [`quadrature`]: Gauss-Legendre panels and thermally graded meshes
//! - [`bounds`]: the scalar auxiliary functions `L`, `ω`, `V_h` and roots `z_h`, `w`
//! - [`nlie`]: the finite-temperature solver
//! - [`fredholm`]: resolvent kernels, Neumann series and log-determinants
//! - [`dressed`]: the dressed energy `ε₀(λ|α)` and the Fermi point `q`
//! - [`lowt`]: low-temperature decomposition, Sommerfeld coefficients and order fits
//! - [`freeenergy`]: the free energy and its `T → 0` fit
//! - [`cli`]: the command-line front end

// `!(x > 0.0)` is used on purpose so that NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bounds;
pub mod cli;
pub mod dressed;
pub mod error;
pub mod fermi;
pub mod fit;
pub mod fredholm;
pub mod freeenergy;
pub mod grid;
pub mod kernel;
pub mod lowt;
pub mod nlie;
pub mod quadrature;
pub mod roots;

pub use error::{Error, Result};
pub use grid::GridFunction;
pub use kernel::ModelParams;
