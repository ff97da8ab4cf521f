use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("empty input")]
    EmptyInput,

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("shape mismatch in {context}: {dim} is {found}, expected {expected}")]
    Shape {
        context: &'static str,
        dim: &'static str,
        expected: usize,
        found: usize,
    },

    #[error("negative magnitude at index {0}")]
    NegativeMagnitude(usize),

    #[error("backward pass for {0} requested without a cached forward pass")]
    MissingCache(&'static str),

    #[error("training diverged at step {step}: loss is {loss}")]
    Diverged { step: usize, loss: f64 },

    #[error("unexpected end of file")]
    UnexpectedEof,

    #[error("bad magic: not an LSNW weight file")]
    BadMagic,

    #[error("unsupported LSNW version {0}")]
    UnsupportedVersion(u32),

    #[error("checksum mismatch in {path}: stored {stored:08x}, computed {computed:08x}")]
    Checksum {
        path: PathBuf,
        stored: u32,
        computed: u32,
    },

    #[error("malformed LSNW header: {0}")]
    Header(String),

    #[error("tensor {name}: {reason}")]
    Tensor { name: String, reason: String },

    #[error("expected 16000 Hz, found {0} Hz")]
    SampleRate(u32),

    #[error("unsupported wav format: {0}")]
    WavFormat(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn check_dim(
    context: &'static str,
    dim: &'static str,
    expected: usize,
    found: usize,
) -> Result<()> {
    if expected == found {
        Ok(())
    } else {
        Err(Error::Shape {
            context,
            dim,
            expected,
            found,
        })
    }
}
