use std::io;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("invalid configuration: {0}")]
    Invalid(String),
    #[error("invalid ROI layout: {0}")]
    Layout(String),
    #[error("depth buffer has {actual} samples, expected {expected}")]
    FrameSize { expected: usize, actual: usize },
}

#[derive(Debug, Error)]
pub enum ReplayError {
    #[error("replay i/o: {0}")]
    Io(#[from] io::Error),
    #[error("corrupt replay header: {0}")]
    CorruptHeader(String),
    #[error("dimension mismatch: frame {frame} is {actual_width}x{actual_height}, stream is {width}x{height}")]
    DimensionMismatch {
        frame: u64,
        width: u32,
        height: u32,
        actual_width: u32,
        actual_height: u32,
    },
    #[error("replay truncated inside frame {frame} of {frame_count}")]
    Truncated { frame: u32, frame_count: u32 },
    #[error("frame index {index} at position {frame} does not increase (previous {previous})")]
    NonMonotonicIndex {
        frame: u32,
        previous: u64,
        index: u64,
    },
    #[error("{0} unexpected bytes after the last frame")]
    TrailingData(u64),
    #[error("cannot write an empty replay")]
    Empty,
}

#[derive(Debug, Error)]
pub enum LogError {
    #[error("log i/o: {0}")]
    Io(#[from] io::Error),
    #[error("out of order: {what} {got} is not greater than last written {last}")]
    OutOfOrder {
        what: &'static str,
        last: u64,
        got: u64,
    },
    #[error("malformed log line {line}: {reason}")]
    Malformed { line: usize, reason: String },
}

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("infeasible scenario geometry: {0}")]
    Geometry(String),
    #[error("invalid scenario parameter: {0}")]
    Param(String),
    #[error(transparent)]
    Config(#[from] ConfigError),
}

#[derive(Debug, Error)]
pub enum ReportError {
    #[error("report window is reversed: from {from_us} > to {to_us}")]
    ReversedWindow { from_us: u64, to_us: u64 },
    #[error("bucket width must be > 0")]
    ZeroBucket,
    #[error("report would need {0} buckets (limit {limit})", limit = crate::store::MAX_REPORT_BUCKETS)]
    TooManyBuckets(u64),
}
