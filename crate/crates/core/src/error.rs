use std::io;

use crate::pool::SampleId;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("empty ensemble")]
    EmptyEnsemble,

    #[error("invalid distribution: {0}")]
    InvalidDistribution(String),

    #[error("mutual information {0:e} is below the rounding tolerance")]
    NegativeMutualInformation(f64),

    #[error("label {label} out of range for {classes} classes")]
    LabelOutOfRange { label: usize, classes: usize },

    #[error("error_count scoring requires ground-truth labels")]
    MissingLabels,

    #[error("random scoring requires a seed")]
    MissingSeed,

    #[error("acquisition function `{0}` is not supported here")]
    UnsupportedFunction(&'static str),

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("duplicate sample id {0}")]
    DuplicateId(SampleId),

    #[error("unknown sample id {0}")]
    UnknownId(SampleId),

    #[error("cannot select {k} samples, only {available} candidates")]
    SelectionTooLarge { k: usize, available: usize },

    #[error("outlier window ({skip} skipped + {k} selected) exceeds pool of {pool}")]
    OutlierWindow { skip: usize, k: usize, pool: usize },

    #[error("target size {0} is too small for the growth schedule (need at least 8)")]
    ScheduleTooSmall(usize),

    #[error("infeasible schedule: {0}")]
    InfeasibleSchedule(String),

    #[error("empty subset")]
    EmptySubset,

    #[error("empty partition: {0}")]
    EmptyPartition(&'static str),

    #[error("non-finite training loss at epoch {epoch} (run seed {seed})")]
    NonFiniteLoss { epoch: u32, seed: u64 },

    #[error("missing run {0} in checkpoint store")]
    MissingRun(String),

    #[error("missing checkpoint for run {run}, epoch {epoch}")]
    MissingCheckpoint { run: u64, epoch: u32 },

    #[error("malformed input: {0}")]
    Format(String),

    #[error("invalid generator spec: {0}")]
    InvalidSpec(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("results file {path} already holds a different config with hash {hash}")]
    HashCollision { path: String, hash: String },

    #[error(transparent)]
    Io(#[from] io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// True for errors caused by the user's configuration rather than a runtime failure.
    pub fn is_config(&self) -> bool {
        matches!(
            self,
            Error::Config(_)
                | Error::InvalidSpec(_)
                | Error::ScheduleTooSmall(_)
                | Error::InfeasibleSchedule(_)
                | Error::UnsupportedFunction(_)
        )
    }
}
