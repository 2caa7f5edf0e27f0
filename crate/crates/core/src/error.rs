use std::path::PathBuf;

use thiserror::Error;

/// Errors produced anywhere in the source / channel / estimator / key-rate pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("simulation grid too short: {0}")]
    GridTooShort(String),

    #[error("step-halving residual {residual:.3e} exceeds tolerance {tolerance:.1e}")]
    NonConvergent { residual: f64, tolerance: f64 },

    #[error("{channel} channel tail mass {tail:.3e} exceeds {limit:.1e} at n_max = {n_max}")]
    TruncationTooSmall {
        channel: &'static str,
        tail: f64,
        limit: f64,
        n_max: usize,
    },

    #[error("negative probability {value} for n = {n}")]
    NegativeProbability { n: usize, value: f64 },

    #[error("probabilities sum to {sum}, not 1")]
    NotNormalized { sum: f64 },

    #[error("photon number {0} listed more than once")]
    DuplicateIndex(usize),

    #[error("tail mass {tail:.3e} exceeds the allowed {limit:.1e}")]
    TailTooHeavy { tail: f64, limit: f64 },

    #[error("yield of the {n}-photon state vanishes")]
    ZeroYield { n: usize },

    #[error("no vacuum decoy among the observations")]
    MissingVacuumState,

    #[error("state '{label}' is truncated at n = {have} but the estimator needs n = {need}")]
    TruncationMismatch {
        label: String,
        have: usize,
        need: usize,
    },

    #[error("observations are inconsistent with every channel (phase-one residual {residual:.3e})")]
    Infeasible { residual: f64 },

    #[error("linear program is unbounded")]
    Unbounded,

    #[error("simplex iteration limit reached")]
    IterationLimit,

    #[error("decoy intensity {nu} must be below signal intensity {mu}")]
    DegenerateIntensities { mu: f64, nu: f64 },

    #[error("single-photon yield bound vanishes ({0:.3e})")]
    VanishingYield(f64),

    #[error("argument {0} outside [0, 1]")]
    DomainError(f64),

    #[error("no positive key rate: {0}")]
    NoPositiveRate(String),

    #[error("estimator '{0}' is not applicable: {1}")]
    UnsupportedEstimator(&'static str, String),

    #[error("{path}:{line}: {field}: {message}")]
    ConfigParse {
        path: String,
        line: usize,
        field: String,
        message: String,
    },

    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{context}: {source}")]
    Context {
        context: String,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub fn context(self, context: impl Into<String>) -> Self {
        Error::Context {
            context: context.into(),
            source: Box::new(self),
        }
    }

    /// Innermost error, skipping any context wrappers.
    pub fn root(&self) -> &Error {
        match self {
            Error::Context { source, .. } => source.root(),
            other => other,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
