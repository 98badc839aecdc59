use thiserror::Error;

use crate::ir::{Diagnostic, Dtype, ParseError};

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Parse(#[from] ParseError),

    #[error("kernel `{kernel}` failed validation:\n{}", render_diagnostics(.diagnostics))]
    Invalid {
        kernel: String,
        diagnostics: Vec<Diagnostic>,
    },

    #[error("E_TYPE_CONFLICT: line {line}: assigning {rhs} value to {lhs} array `{array}` narrows without a cast")]
    TypeConflict {
        line: usize,
        array: String,
        lhs: Dtype,
        rhs: Dtype,
    },

    #[error("E_NEEDS_FALLBACK: {0}")]
    NeedsFallback(String),

    #[error("E_NEEDS_BINDING: {0}")]
    NeedsBinding(String),

    #[error("E_ASSUMPTION_VIOLATED: binding `{binding}` violates `{constraint}`")]
    AssumptionViolated { constraint: String, binding: String },

    #[error("E_UNBOUND_PARAM: parameter `{0}` has no value in the binding")]
    UnboundParam(String),

    #[error("E_CAP_EXCEEDED: more than {cap} statement instances (statement at line {line})")]
    CapExceeded { cap: u64, line: usize },

    #[error("E_NONPOSITIVE_TIME: {0}")]
    NonPositiveTime(String),

    #[error("E_EMPTY: {0}")]
    Empty(String),

    #[error("E_SCHEMA_MISMATCH: expected schema version {expected}, found {found}")]
    SchemaMismatch { expected: String, found: String },

    #[error("E_UNKNOWN_KERNEL: {0}")]
    UnknownKernel(String),

    #[error("E_OVERFLOW: {0}")]
    Overflow(String),

    #[error("E_FORMAT: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    /// Stable machine-readable code.
    pub fn code(&self) -> &'static str {
        match self {
            Error::Parse(_) => "E_PARSE",
            Error::Invalid { .. } => "E_INVALID",
            Error::TypeConflict { .. } => "E_TYPE_CONFLICT",
            Error::NeedsFallback(_) => "E_NEEDS_FALLBACK",
            Error::NeedsBinding(_) => "E_NEEDS_BINDING",
            Error::AssumptionViolated { .. } => "E_ASSUMPTION_VIOLATED",
            Error::UnboundParam(_) => "E_UNBOUND_PARAM",
            Error::CapExceeded { .. } => "E_CAP_EXCEEDED",
            Error::NonPositiveTime(_) => "E_NONPOSITIVE_TIME",
            Error::Empty(_) => "E_EMPTY",
            Error::SchemaMismatch { .. } => "E_SCHEMA_MISMATCH",
            Error::UnknownKernel(_) => "E_UNKNOWN_KERNEL",
            Error::Overflow(_) => "E_OVERFLOW",
            Error::Format(_) => "E_FORMAT",
            Error::Io(_) => "E_IO",
            Error::Json(_) => "E_JSON",
            Error::Csv(_) => "E_CSV",
        }
    }

    /// True for errors caused by the kernel source itself.
    pub fn is_kernel_error(&self) -> bool {
        matches!(
            self,
            Error::Parse(_)
                | Error::Invalid { .. }
                | Error::TypeConflict { .. }
                | Error::UnknownKernel(_)
        )
    }
}

fn render_diagnostics(diags: &[Diagnostic]) -> String {
    diags
        .iter()
        .map(|d| format!("  {d}"))
        .collect::<Vec<_>>()
        .join("\n")
}
