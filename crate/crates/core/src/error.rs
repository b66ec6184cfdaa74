use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("empty denominator: {0}")]
    EmptyDenominator(&'static str),

    #[error("missing data for country {country}: years {years:?}")]
    MissingYears { country: String, years: Vec<i32> },

    #[error("value out of domain: {0}")]
    Domain(String),

    #[error("inconsistent counts: {0}")]
    InconsistentCounts(String),

    #[error("dataset is empty: {0}")]
    EmptyDataset(&'static str),

    #[error("posterior density is not finite at initialization after {attempts} attempts")]
    NonFinitePosterior { attempts: usize },

    #[error("row {row}: {message}")]
    Row { row: usize, message: String },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// True for errors caused by the numbers themselves rather than by the
    /// input files or the configuration.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::NonFinitePosterior { .. } | Error::EmptyDenominator(_) | Error::Domain(_)
        )
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
