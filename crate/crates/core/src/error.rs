use thiserror::Error;

/// Errors produced anywhere in the simulation pipeline.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("time must be strictly positive, got {0}")]
    InvalidTime(f64),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("degenerate geometry: {0}")]
    DegenerateGeometry(String),
    #[error("particle count must be at least 1")]
    InvalidParticleCount,
    #[error("emission at t={time} s lies outside the grid [{start}, {end}] s")]
    ScheduleOutOfRange { time: f64, start: f64, end: f64 },
    #[error("grid mismatch: {0}")]
    GridMismatch(String),
    #[error("no start indicator found in trace")]
    NoStartIndicator,
    #[error("preamble not detected: {0}")]
    PreambleNotDetected(String),
    #[error("frame needs samples up to index {needed} but trace has {available}")]
    TraceTooShort { needed: usize, available: usize },
    #[error("unsupported character {0:?}")]
    UnsupportedCharacter(char),
    #[error("message is empty")]
    EmptyMessage,
    #[error("stream {0} has no end indicator")]
    MissingEndIndicator(usize),
    #[error("stream {stream} has {len} bits, not a multiple of 5")]
    MalformedStream { stream: usize, len: usize },
    #[error("sweep needs at least one noise level and one repetition")]
    InvalidSweep,
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
}

pub type Result<T> = std::result::Result<T, Error>;
