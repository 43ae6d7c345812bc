use thiserror::Error;

/// Errors produced by the token-statistics library.
#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("bad magic: expected {expected:?}, found {found:?}")]
    BadMagic { expected: [u8; 4], found: [u8; 4] },

    #[error("unsupported format version {0}")]
    UnsupportedVersion(u8),

    #[error("invalid header: {0}")]
    InvalidHeader(String),

    #[error("token id {id} out of range for codebook size {codebook}")]
    TokenOutOfRange { id: u32, codebook: u32 },

    #[error("truncated payload: expected {expected} bytes, got {got}")]
    Truncated { expected: u64, got: u64 },

    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("line {line}: expected {expected} tokens, found {found}")]
    WrongLength { line: usize, expected: usize, found: usize },

    #[error("non-finite value at index {0}")]
    NonFinite(usize),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("empty dataset")]
    EmptyDataset,

    #[error("dataset has no grid layout")]
    MissingLayout,

    #[error("incompatible inputs: {0}")]
    Incompatible(String),

    #[error("numeric failure: {0}")]
    Numeric(String),

    #[error("image error: {0}")]
    Image(String),
}

impl From<image::ImageError> for Error {
    fn from(e: image::ImageError) -> Self {
        match e {
            image::ImageError::IoError(io) => Error::Io(io),
            other => Error::Image(other.to_string()),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidParameter(msg.into())
}
