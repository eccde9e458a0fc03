use alloc::string::String;
use alloc::vec::Vec;

/// Errors raised by the algorithmic core.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    /// Two operands (or an operand and a parameter) have incompatible shapes.
    #[error("{op}: shape {left:?} is incompatible with {right:?}")]
    Dimension {
        op: &'static str,
        left: Vec<usize>,
        right: Vec<usize>,
    },
    /// A configuration value is out of its valid range.
    #[error("invalid configuration: {0}")]
    Config(String),
    /// A caller violated an operation's contract.
    #[error("contract violation: {0}")]
    Contract(String),
    /// An internal invariant no longer holds.
    #[error("invariant violated: {0}")]
    Invariant(String),
    /// A mathematical quantity is undefined for the given input.
    #[error("domain error: {0}")]
    Domain(String),
    /// A finite-difference probe evaluated to a non-finite value.
    #[error("finite-difference probe at coordinate {index} produced a non-finite value")]
    Probe { index: usize },
    /// A value that must be finite is not.
    #[error("non-finite value in {0}")]
    NonFinite(String),
    /// Text input could not be parsed.
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    /// Input contained no data.
    #[error("empty input: {0}")]
    Empty(String),
}

pub type Result<T, E = Error> = core::result::Result<T, E>;

impl Error {
    pub(crate) fn dim(op: &'static str, left: &[usize], right: &[usize]) -> Self {
        Error::Dimension {
            op,
            left: left.to_vec(),
            right: right.to_vec(),
        }
    }
}
