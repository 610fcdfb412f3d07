use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("parse error at byte {offset}: {msg}")]
    Parse { offset: usize, msg: String },

    #[error("truncated data: {0}")]
    Truncated(String),

    #[error("unsupported format: {0}")]
    Unsupported(String),

    #[error("downsampling factor {factor} not admissible for {width}x{height}")]
    InvalidFactor { factor: u32, width: usize, height: usize },

    #[error("curves have no overlapping PSNR range")]
    NoOverlap,

    #[error("bitstream format error: {0}")]
    Format(String),

    #[error("truncated at frame {frame}: {msg}")]
    TruncatedFrame { frame: usize, msg: String },

    #[error("conformance error at frame {frame}: {msg}")]
    Conformance { frame: usize, msg: String },

    #[error("internal consistency failure: {0}")]
    Internal(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::InvalidInput(msg.into()))
}
