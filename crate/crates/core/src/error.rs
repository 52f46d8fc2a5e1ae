use thiserror::Error;

use crate::model::ValidationReport;

pub type Result<T, E = PlcmError> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum PlcmError {
    #[error("invalid pathogen panel: {0}")]
    InvalidPanel(String),

    #[error("invalid parameters: {0}")]
    InvalidParams(String),

    #[error("invalid hyperpriors: {0}")]
    InvalidHyperPriors(String),

    #[error("dataset failed validation with {} violation(s)", .0.violations.len())]
    InvalidDataset(ValidationReport),

    #[error("case {case_id}: every cause has zero conditional weight")]
    ImpossibleRecord { case_id: String },

    #[error("could not match Beta quantiles to range ({lo}, {hi}): {reason}")]
    Elicitation { lo: f64, hi: f64, reason: String },

    #[error("usage: {0}")]
    Usage(String),

    #[error("{path}:{line}: {message}")]
    Parse {
        path: String,
        line: u64,
        field: Option<String>,
        message: String,
    },

    #[error("replicate {replicate}: {source}")]
    Replicate {
        replicate: usize,
        #[source]
        source: Box<PlcmError>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl PlcmError {
    pub(crate) fn usage(msg: impl Into<String>) -> Self {
        PlcmError::Usage(msg.into())
    }

    /// Short stable tag used in machine-readable error records.
    pub fn kind(&self) -> &'static str {
        match self {
            PlcmError::InvalidPanel(_) => "invalid_panel",
            PlcmError::InvalidParams(_) => "invalid_params",
            PlcmError::InvalidHyperPriors(_) => "invalid_hyperpriors",
            PlcmError::InvalidDataset(_) => "invalid_dataset",
            PlcmError::ImpossibleRecord { .. } => "impossible_record",
            PlcmError::Elicitation { .. } => "elicitation_failure",
            PlcmError::Usage(_) => "usage",
            PlcmError::Parse { .. } => "parse",
            PlcmError::Replicate { .. } => "replicate",
            PlcmError::Io(_) => "io",
        }
    }
}
