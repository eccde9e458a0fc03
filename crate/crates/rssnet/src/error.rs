use std::path::PathBuf;

/// Errors raised by file handling and the command-line front end.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error(transparent)]
    Core(#[from] rssnet_core::Error),
    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: std::io::Error },
    /// A file exists but its contents are not in the expected layout.
    #[error("{}: {message}", path.display())]
    Format { path: PathBuf, message: String },
    #[error("{}: checksum mismatch (stored {stored}, computed {computed})", path.display())]
    Checksum {
        path: PathBuf,
        stored: String,
        computed: String,
    },
    /// Two artifacts that must agree do not (config hash, format version).
    #[error("{what} mismatch: expected {expected}, found {found}")]
    Mismatch {
        what: String,
        expected: String,
        found: String,
    },
    #[error("could not read {} library file(s):\n{}", .0.len(), .0.join("\n"))]
    Library(Vec<String>),
    #[error("{0}")]
    Usage(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    /// Process exit status: 2 input or configuration error, 3 numerical
    /// failure, 4 compatibility mismatch, 5 shape contract violation.
    pub fn exit_code(&self) -> i32 {
        use rssnet_core::Error as E;
        match self {
            Error::Core(E::Dimension { .. }) => 5,
            Error::Core(E::NonFinite(_) | E::Domain(_) | E::Probe { .. } | E::Invariant(_)) => 3,
            Error::Core(E::Config(_) | E::Contract(_) | E::Parse { .. } | E::Empty(_)) => 2,
            Error::Mismatch { .. } => 4,
            Error::Io { .. } | Error::Format { .. } | Error::Checksum { .. } | Error::Library(_) | Error::Usage(_) => 2,
        }
    }

    pub(crate) fn format(path: impl Into<PathBuf>, message: impl Into<String>) -> Self {
        Error::Format {
            path: path.into(),
            message: message.into(),
        }
    }
}
