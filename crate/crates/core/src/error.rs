use std::io;

use thiserror::Error;

/// Errors produced by the conversion, training and simulation pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("input outside domain: {0}")]
    InputDomain(String),

    #[error("no output neuron spiked")]
    NoDecision,

    #[error("conversion failed: {0}")]
    Conversion(String),

    #[error("training diverged: {0}")]
    Divergence(String),

    #[error("mapping failed: {0}")]
    Mapping(String),

    #[error("simulation fault: {0}")]
    SimFault(String),

    #[error("format error: {0}")]
    Format(String),

    #[error("i/o error: {0}")]
    Io(#[from] io::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
