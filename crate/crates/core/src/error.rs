// SPDX-License-Identifier: MIT OR Apache-2.0

use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = LabError> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum LabError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("line {line}: malformed record: {message}")]
    MalformedLine { line: usize, message: String },

    #[error("unknown {kind} value {value:?}")]
    UnknownValue { kind: &'static str, value: String },

    #[error("line {line}: duplicate id {id:?}")]
    DuplicateId { line: usize, id: String },

    #[error("unpaired pair {pair_id:?}: {reason}")]
    UnpairedPair { pair_id: String, reason: String },

    #[error("invalid input: {0}")]
    Invalid(String),

    #[error("activation file: {0}")]
    Format(String),

    #[error("length mismatch: expected {expected}, found {found}")]
    LengthMismatch { expected: usize, found: usize },

    #[error("context overflow: {needed} tokens needed, max_context is {max}")]
    ContextOverflow { needed: usize, max: usize },

    #[error("layer {layer} out of range for a {n_layers}-layer model")]
    LayerOutOfRange { layer: usize, n_layers: usize },

    #[error("missing activation for prompt {prompt_id:?} at layer {layer}, position {position}")]
    MissingActivation {
        prompt_id: String,
        layer: usize,
        position: i32,
    },

    #[error("realized and paper means coincide; direction undefined")]
    ZeroDifference,

    #[error("design matrix is rank deficient: column {column:?} is colinear with preceding columns")]
    RankDeficient { column: String },

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("observation {row} has leverage 1; HC3 weight undefined")]
    UndefinedLeverage { row: usize },

    #[error("zero variance in {0}")]
    ZeroVariance(String),

    #[error("baseline level {level:?} absent from factor {factor:?}")]
    BaselineAbsent { factor: String, level: String },

    #[error("scale {0} has no rows")]
    MissingScale(String),

    #[error("missing prior for label {label} at scale {scale}")]
    MissingPrior { label: String, scale: String },

    #[error("unknown prompt id {0:?}")]
    UnknownPrompt(String),

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),

    #[error("toml: {0}")]
    Toml(#[from] toml::de::Error),
}

impl LabError {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        LabError::Io {
            path: path.into(),
            source,
        }
    }

    /// True for errors caused by malformed or inconsistent inputs, as opposed
    /// to failures while computing on valid inputs.
    pub fn is_validation(&self) -> bool {
        matches!(
            self,
            LabError::Io { .. }
                | LabError::MalformedLine { .. }
                | LabError::UnknownValue { .. }
                | LabError::DuplicateId { .. }
                | LabError::UnpairedPair { .. }
                | LabError::Invalid(_)
                | LabError::Format(_)
                | LabError::Csv(_)
                | LabError::Json(_)
                | LabError::Toml(_)
        )
    }
}
