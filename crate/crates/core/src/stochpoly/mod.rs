//! Exact polynomial algebra over state variables, grading parameters,
//! white-noise symbols and exponential-kernel noise convolutions.

mod display;
mod expectation;
mod grading;
mod json;
mod poly;
mod registry;
mod term;

#[cfg(test)]
mod tests;

use thiserror::Error;

pub use expectation::{moment, Expectation};
pub use grading::Grading;
pub use json::{parse_rational, ConvJson, NoiseJson, PolyJson, TermJson};
pub use poly::{int, ratio, StochPoly, Wrt};
pub use registry::{Registry, Var, VarKind};
pub use term::{Conv, Direction, Monomial, NoiseFactor, NoiseMonomial, TermKey};

/// Exact rational coefficient.
pub type Q = num_rational::BigRational;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum PolyError {
    #[error("polynomials built over different variable registries")]
    RegistryMismatch,
    #[error("unknown variable `{0}`")]
    UnknownVariable(String),
    #[error("variable `{0}` registered twice")]
    DuplicateVariable(String),
    #[error("invalid variable name `{0}`")]
    BadName(String),
    #[error("cannot differentiate with respect to noise channel {0}")]
    NoiseDerivative(u32),
    #[error("white noise phi{0} has no time derivative")]
    WhiteNoiseTimeDerivative(u32),
    #[error("cyclic substitution through `{0}`")]
    CyclicBinding(String),
    #[error("convolution rate must be positive, got {0}")]
    NonPositiveRate(String),
    #[error("convolution integrand depends on state variables")]
    StateInConvolution,
    #[error("monomial does not divide every term")]
    NotDivisible,
    #[error("invalid rational `{0}`")]
    BadRational(String),
    #[error("noise channel must be >= 1, got {0}")]
    BadChannel(u32),
    #[error("{0}")]
    Parse(String),
}
