use thiserror::Error;

/// Errors produced by the solver and its building blocks.
#[derive(Debug, Error)]
pub enum Error {
    #[error("non-finite value in {what}")]
    NonFinite { what: String },

    #[error("dimension mismatch in {what}: expected {expected}, got {actual}")]
    Dimension {
        what: &'static str,
        expected: usize,
        actual: usize,
    },

    #[error("value model has no coefficients at time index {0}")]
    UndefinedTimeIndex(usize),

    #[error(
        "rank-deficient regression: {deficient} of {columns} columns are numerically dependent"
    )]
    RankDeficient { deficient: usize, columns: usize },

    #[error("regression needs at least {needed} positively weighted rows, got {available}")]
    TooFewSamples { needed: usize, available: usize },

    #[error("unknown tree node {0}")]
    UnknownNode(String),

    #[error("cannot add a child below depth {depth}: tree has {steps} steps")]
    DepthOverflow { depth: usize, steps: usize },

    #[error("node {0} still has children and cannot be removed")]
    HasChildren(String),

    #[error("no nodes at depth {0}")]
    EmptyDepth(usize),

    #[error("nearest-neighbour query over an empty node set")]
    EmptyNodeSet,

    #[error("exploitation requested (eps_opt > 0) but no value model is available")]
    ModelRequired,

    #[error("all heuristic values are infinite")]
    AllInfinite,

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error(
        "unknown problem '{0}' (expected lqr1d, double_integrator, double_pendulum or quadcopter)"
    )]
    UnknownProblem(String),

    #[error("regression failed at time step {step}: {source}")]
    Fit {
        step: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("path {path} at time step {step}: non-finite {what}")]
    NonFinitePath {
        step: usize,
        path: u64,
        what: &'static str,
    },

    #[error("iteration {iteration}, {stage} stage: {source}")]
    Stage {
        iteration: usize,
        stage: &'static str,
        #[source]
        source: Box<Error>,
    },

    #[error("no policy rollout produced a finite cost")]
    NoFiniteRollouts,

    #[error("every lambda candidate failed")]
    NoLambdaCandidate,

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn non_finite(what: impl Into<String>) -> Self {
        Error::NonFinite { what: what.into() }
    }

    pub(crate) fn at_stage(self, iteration: usize, stage: &'static str) -> Self {
        Error::Stage {
            iteration,
            stage,
            source: Box::new(self),
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
