//! End-to-end pipelines for the Duffing and SEIR case studies.

pub mod artifacts;
pub mod duffing;
pub mod seir;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cm::CmError;
use crate::nf::NfError;
use crate::sim::SimError;
use crate::stochpoly::PolyError;
use crate::system::SystemError;

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error("invalid config: {0}")]
    Config(String),
    #[error(transparent)]
    System(#[from] SystemError),
    #[error(transparent)]
    Cm(#[from] CmError),
    #[error(transparent)]
    Nf(#[from] NfError),
    #[error(transparent)]
    Poly(#[from] PolyError),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}

impl ExperimentError {
    /// Stable machine-readable error code.
    pub fn code(&self) -> &'static str {
        match self {
            ExperimentError::Config(_) => "E_CONFIG",
            ExperimentError::System(_) => "E_SYSTEM",
            ExperimentError::Cm(CmError::Resonance { .. }) => "E_RESONANCE",
            ExperimentError::Cm(_) => "E_MANIFOLD",
            ExperimentError::Nf(_) => "E_NORMAL_FORM",
            ExperimentError::Poly(_) => "E_POLY",
            ExperimentError::Sim(_) => "E_SIM",
            ExperimentError::Io(_) | ExperimentError::Csv(_) => "E_IO",
            ExperimentError::Json(_) => "E_JSON",
        }
    }
}

/// One acceptance band evaluated by a pipeline.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    /// Observed value, None when undefined (e.g. no escapes).
    pub value: Option<f64>,
    pub band: String,
    pub pass: bool,
}

impl Check {
    pub fn new(name: &str, value: Option<f64>, band: &str, pass: impl FnOnce(f64) -> bool) -> Self {
        Check {
            name: name.to_string(),
            value,
            band: band.to_string(),
            pass: value.is_some_and(pass),
        }
    }
}
