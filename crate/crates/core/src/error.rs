use thiserror::Error;

use crate::solver::TransportSolution;

/// Errors raised anywhere in the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("sites are degenerate: {0}")]
    DegenerateSites(String),
    #[error("site {site} lost its cell during a hull update")]
    EmptyCellDetected { site: usize },
    #[error("face ({0}, {1}, {2}) is too close to degenerate to locate its dual vertex")]
    NearDegenerateFace(usize, usize, usize),
    #[error("sites {0} and {1} coincide")]
    CoincidentSites(usize, usize),
    #[error("inadmissible heights: cell {site} is empty")]
    InadmissibleState { site: usize },
    #[error("reduced Newton system is singular: {0}")]
    SingularReducedSystem(String),
    #[error("no admissible step after {halvings} halvings")]
    StepExhausted { halvings: usize },
    #[error("source mass {source_mass} does not match target mass {target_mass}")]
    MassMismatch { source_mass: f64, target_mass: f64 },
    #[error("no convergence after {iterations} iterations (residual {residual:e})")]
    MaxIterationsExceeded {
        iterations: usize,
        residual: f64,
        best: Box<TransportSolution>,
    },
    #[error("triangle {face} has zero parameter-space area")]
    DegenerateTriangle { face: usize },
    #[error("transportation problem infeasible: {0}")]
    Infeasible(String),
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("parse error in {context}: {message}")]
    Parse { context: String, message: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    /// Stable machine-readable tag.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::DegenerateSites(_) => "DegenerateSites",
            Error::EmptyCellDetected { .. } => "EmptyCellDetected",
            Error::NearDegenerateFace(..) => "NearDegenerateFace",
            Error::CoincidentSites(..) => "CoincidentSites",
            Error::InadmissibleState { .. } => "InadmissibleState",
            Error::SingularReducedSystem(_) => "SingularReducedSystem",
            Error::StepExhausted { .. } => "StepExhausted",
            Error::MassMismatch { .. } => "MassMismatch",
            Error::MaxIterationsExceeded { .. } => "MaxIterationsExceeded",
            Error::DegenerateTriangle { .. } => "DegenerateTriangle",
            Error::Infeasible(_) => "Infeasible",
            Error::InvalidInput(_) => "InvalidInput",
            Error::Parse { .. } => "Parse",
            Error::Io(_) => "Io",
            Error::Csv(_) => "Csv",
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
