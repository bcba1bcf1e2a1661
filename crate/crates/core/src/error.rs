use thiserror::Error;

pub type Result<T> = std::result::Result<T, DecoError>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DecoError {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("non-finite entry at ({row}, {col})")]
    NonFinite { row: usize, col: usize },

    #[error("column {0} is constant and cannot be scaled")]
    ConstantColumn(usize),

    #[error("need at least {needed} rows, got {got}")]
    TooFewRows { needed: usize, got: usize },

    #[error("matrix is not symmetric (relative asymmetry {0:e})")]
    NotSymmetric(f64),

    #[error("Jacobi eigensolver did not converge after {sweeps} sweeps (off-diagonal norm {off_norm:e})")]
    NoConvergence { sweeps: usize, off_norm: f64 },

    #[error("Gram matrix is numerically singular and no ridge was supplied (min/max eigenvalue ratio {0:e})")]
    SingularWithoutRidge(f64),

    #[error("matrix is not positive definite (pivot {0})")]
    NotPositiveDefinite(usize),

    #[error("invalid model spec: {0}")]
    InvalidSpec(String),

    #[error("signal Xβ has zero variance; noise cannot be calibrated")]
    DegenerateSignal,

    #[error("response is identically zero (λ_max = 0)")]
    DegenerateResponse,

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("coordinate descent hit the cap of {sweeps} sweeps (last max change {max_change:e})")]
    MaxIterations { sweeps: usize, max_change: f64 },

    #[error("lasso path is empty")]
    EmptyPath,

    #[error("invalid partition: need 1 <= m <= p, got m={m}, p={p}")]
    InvalidM { m: usize, p: usize },

    #[error("invalid partition: {0}")]
    InvalidPartition(String),

    #[error("worker vectors do not cover the partition: {0}")]
    CoverageGap(String),

    #[error("worker {worker}: {source}")]
    Worker {
        worker: usize,
        #[source]
        source: Box<DecoError>,
    },

    #[error("stage {stage}: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<DecoError>,
    },
}

impl DecoError {
    pub(crate) fn in_stage(stage: &'static str) -> impl FnOnce(DecoError) -> DecoError {
        move |source| DecoError::Stage {
            stage,
            source: Box::new(source),
        }
    }

    pub(crate) fn in_worker(worker: usize) -> impl FnOnce(DecoError) -> DecoError {
        move |source| DecoError::Worker {
            worker,
            source: Box::new(source),
        }
    }

    /// Strips stage and worker tags.
    pub fn root(&self) -> &DecoError {
        match self {
            DecoError::Worker { source, .. } | DecoError::Stage { source, .. } => source.root(),
            other => other,
        }
    }
}
