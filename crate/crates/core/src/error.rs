use thiserror::Error;

/// Errors raised by the solvers and verification routines.
#[derive(Debug, Clone, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("{what} = {value} is out of range")]
    OutOfRange { what: &'static str, value: f64 },

    #[error("non-finite integrand value {value} at node {node}")]
    NonFinite { node: f64, value: f64 },

    #[error("no sign change on [{lo}, {hi}] (f = {f_lo}, {f_hi})")]
    NoSignChange { lo: f64, hi: f64, f_lo: f64, f_hi: f64 },

    #[error("bracket expansion failed after {0} doublings")]
    BracketExpansion(usize),

    #[error("root search did not converge in {0} steps")]
    RootNotConverged(usize),

    #[error("fixed-point iteration did not converge within {0} iterations")]
    IterationCap(usize),

    #[error("monotone iteration violated at step {step}: nodewise change {excess:e} against the expected direction")]
    MonotonicityViolation { step: usize, excess: f64 },

    #[error("iterate fell below -z_h at step {step}: min v = {min}, -z_h = {bound}")]
    LowerBoundViolation { step: usize, min: f64, bound: f64 },

    #[error("matrix is numerically singular")]
    SingularMatrix,

    #[error("bound violated: {0}")]
    BoundViolation(String),

    #[error("degenerate configuration: {0}")]
    Degenerate(String),

    #[error("at T = {t}: {source}")]
    AtTemperature {
        t: f64,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    /// True for failures that signal a violated invariant or bound rather than
    /// a solver breakdown.
    pub fn is_invariant_violation(&self) -> bool {
        match self {
            Error::MonotonicityViolation { .. } | Error::LowerBoundViolation { .. } | Error::BoundViolation(_) => true,
            Error::AtTemperature { source, .. } => source.is_invariant_violation(),
            _ => false,
        }
    }

    pub(crate) fn at_temperature(self, t: f64) -> Self {
        Error::AtTemperature {
            t,
            source: Box::new(self),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
