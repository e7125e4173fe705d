//! Error type shared by the numerical modules.

use thiserror::Error;

/// Errors produced by model construction, evaluation and the numerical
/// routines built on top of them.
#[derive(Debug, Error)]
pub enum Error {
    /// A coefficient field produced a non-finite value inside the domain box.
    #[error("coefficient `{name}` evaluated to {value} at (t={t}, x=({x1}, {x2}))")]
    NonFiniteCoefficient {
        name: String,
        value: f64,
        t: f64,
        x1: f64,
        x2: f64,
    },

    /// A derivative order was requested that the field does not provide.
    #[error("missing derivative: {0}")]
    MissingDerivative(String),

    /// Invalid argument or configuration value.
    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// Grid construction or lookup failure.
    #[error("grid error: {0}")]
    Grid(String),

    /// The implicit line solve failed during time stepping.
    #[error("linear solve failed at backward step {step}: {reason}")]
    LinearSolve { step: usize, reason: String },

    /// Model construction was rejected.
    #[error("model construction: {0}")]
    Construction(String),

    /// A quadrature did not converge to the requested accuracy.
    #[error("quadrature did not converge: {0}")]
    QuadratureNonConvergence(String),

    /// The requested operation is not available for this model.
    #[error("unsupported for this model: {0}")]
    Unsupported(String),

    /// Filesystem or serialization failure while writing reports.
    #[error("report output: {0}")]
    Output(String),

    /// Failure inside a named stage of a multi-stage run.
    #[error("stage `{stage}`: {source}")]
    Stage {
        stage: String,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    /// Wraps the error with the stage label of the pipeline step it came
    /// from.
    pub fn in_stage(self, stage: &str) -> Error {
        Error::Stage {
            stage: stage.to_string(),
            source: Box::new(self),
        }
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Output(e.to_string())
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Output(e.to_string())
    }
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        Error::Output(e.to_string())
    }
}
