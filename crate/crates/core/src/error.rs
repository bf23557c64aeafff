use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("age {age} outside [0, {max_age}]")]
    AgeOutOfRange { age: usize, max_age: usize },

    #[error("threshold {threshold} outside [0, {max_age}]")]
    ThresholdOutOfRange { threshold: usize, max_age: usize },

    #[error("invalid `{field}`: {reason}")]
    InvalidParameter { field: &'static str, reason: String },

    #[error("length mismatch: {what} has {actual} entries, expected {expected}")]
    LengthMismatch {
        what: &'static str,
        expected: usize,
        actual: usize,
    },

    #[error("redirection table has no entry for age {age} (length {len})")]
    MissingTableEntry { age: usize, len: usize },

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("decision rule is not a threshold policy: update at age {update_at} followed by hold at age {hold_at}")]
    NonThresholdPolicy { update_at: usize, hold_at: usize },

    #[error("schedule event targets content {content} but the environment has {count}")]
    BadScheduleTarget { content: usize, count: usize },
}

impl Error {
    pub(crate) fn invalid(field: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            field,
            reason: reason.into(),
        }
    }
}
