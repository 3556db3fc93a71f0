use thiserror::Error;

/// Errors raised by the watchdog library.
///
/// Variants fall in two groups: usage errors (bad arguments from the caller)
/// and structural errors (an inference step has nothing to work with).
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("field width {0} is outside the supported range 1..=16")]
    InvalidWidth(u32),
    #[error("width mismatch: {left} vs {right}")]
    WidthMismatch { left: u8, right: u8 },
    #[error("value {value} does not fit in {width} bits")]
    ValueOutOfRange { value: u32, width: u8 },
    #[error("polynomial {poly:#x} is not irreducible of degree {width}")]
    NotIrreducible { poly: u32, width: u8 },
    #[error("linear combination needs at least one term")]
    EmptyCombination,
    #[error("length mismatch: {what} ({left} vs {right})")]
    LengthMismatch {
        what: &'static str,
        left: usize,
        right: usize,
    },
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },
    #[error("no candidate consistent with hash value {target}")]
    NoCandidates { target: u32 },
    #[error("inverse-transition normalizer is zero")]
    ZeroNormalizer,
    #[error("unknown node `{0}`")]
    UnknownNode(String),
    #[error("topology: {0}")]
    Topology(String),
    #[error("config: {0}")]
    Config(String),
    #[error("output: {0}")]
    Output(String),
}

impl Error {
    pub(crate) fn param(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name,
            reason: reason.into(),
        }
    }

    /// True for errors caused by inconsistent inference inputs rather than by
    /// malformed arguments.
    pub fn is_structural(&self) -> bool {
        matches!(self, Error::NoCandidates { .. } | Error::ZeroNormalizer)
    }
}

pub type Result<T> = std::result::Result<T, Error>;
