use std::path::PathBuf;

use crate::sequence::SampleId;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid dataset: {0}")]
    InvalidDataset(String),

    #[error("invalid batch size {batch} for a dataset of {samples} samples")]
    InvalidBatchSize { batch: usize, samples: u64 },

    #[error("invalid cached fraction {0}; expected 0 < alpha <= 1")]
    InvalidFraction(f64),

    #[error("batch of {batch} samples cannot be split evenly across {learners} learners")]
    UnevenSlice { batch: usize, learners: usize },

    #[error("learner {learner} out of range for {learners} learners")]
    LearnerOutOfRange { learner: usize, learners: usize },

    #[error("inconsistent imbalance: {0}")]
    InconsistentImbalance(String),

    #[error("exhaustive search is limited to {limit} learners, got {learners}")]
    OracleLimit { learners: usize, limit: usize },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("sample {id} is missing ({path})")]
    MissingSample { id: SampleId, path: PathBuf },

    #[error("sample {id} has {found} bytes, expected {expected} ({path})")]
    TruncatedSample {
        id: SampleId,
        path: PathBuf,
        expected: usize,
        found: u64,
    },

    #[error("{context}: {source}")]
    Io {
        context: String,
        #[source]
        source: std::io::Error,
    },

    #[error("loader workers exited before the epoch completed")]
    LoaderShutdown,
}

impl Error {
    /// Whether the error comes from bad parameters rather than from the
    /// environment.
    pub fn is_invalid_input(&self) -> bool {
        matches!(
            self,
            Error::InvalidBatchSize { .. }
                | Error::InvalidFraction(_)
                | Error::UnevenSlice { .. }
                | Error::LearnerOutOfRange { .. }
                | Error::InconsistentImbalance(_)
                | Error::OracleLimit { .. }
                | Error::InvalidConfig(_)
        )
    }

    pub(crate) fn io(context: impl Into<String>, source: std::io::Error) -> Self {
        Error::Io {
            context: context.into(),
            source,
        }
    }
}
