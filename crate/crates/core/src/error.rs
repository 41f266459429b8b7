use std::io;

use thiserror::Error;

/// Errors raised while reading a TXR1 container.
///
/// Each variant is a distinct integrity category so callers (and the CLI exit
/// code mapping) can tell them apart.
#[derive(Debug, Error)]
pub enum FormatError {
    #[error("bad magic: expected \"TXR1\", found {0:?}")]
    BadMagic([u8; 4]),
    #[error("unsupported format version {0}")]
    UnsupportedVersion(u32),
    #[error("checksum mismatch: stored {stored:#010x}, computed {computed:#010x}")]
    ChecksumMismatch { stored: u32, computed: u32 },
    #[error("truncated file: {0}")]
    Truncated(String),
    #[error("malformed file: {0}")]
    Malformed(String),
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("{kind} id {id} out of range (space size {size})")]
    IdOutOfRange {
        kind: &'static str,
        id: usize,
        size: usize,
    },
    #[error("task mismatch: {0}")]
    TaskMismatch(String),
    #[error("invalid hypothesis: {0}")]
    InvalidHypothesis(String),
    #[error("arithmetic overflow computing {0}")]
    Overflow(&'static str),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("sampling exhausted: {0}")]
    Exhausted(String),
    #[error("index {index} out of range ({len} available)")]
    IndexOutOfRange { index: usize, len: usize },
    #[error("cannot encode: {0}")]
    Encode(String),
    #[error("cannot decode utterance: {0}")]
    Decode(String),
    #[error("annotation parse error: {0}")]
    Parse(String),
    #[error(transparent)]
    Format(#[from] FormatError),
    #[error(transparent)]
    Io(#[from] io::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
