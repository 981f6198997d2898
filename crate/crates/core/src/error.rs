use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// Both members of a local-subset union have zero measure.
    #[error("degenerate local subsets: both members have zero measure")]
    DegenerateSubset,

    #[error("sampling starved after {attempts} attempts")]
    SamplingStarved { attempts: usize },

    #[error("environment too cluttered: found {found} of {wanted} valid beacons")]
    EnvironmentTooCluttered { found: usize, wanted: usize },

    #[error("no reference cost available for environment `{0}`")]
    ReferenceUnavailable(String),

    #[error("internal error: {0}")]
    Internal(String),

    #[error("environment file: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidArgument(msg.into())
}
