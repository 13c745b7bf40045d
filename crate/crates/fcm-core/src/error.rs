//! Error types shared across the crate.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CoreError {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("simulation diverged at t = {t:.4} s: {what}")]
    Diverged { t: f64, what: String },

    #[error("signal error: {0}")]
    Signal(#[from] SignalError),

    #[error("detector error: {0}")]
    Fcm(#[from] FcmError),

    #[error("flight log error: {0}")]
    Ingest(#[from] IngestError),
}

#[derive(Debug, Error)]
pub enum SignalError {
    #[error("cutoff {cutoff_hz} Hz is at or above Nyquist ({nyquist_hz} Hz)")]
    CutoffAboveNyquist { cutoff_hz: f64, nyquist_hz: f64 },

    #[error("series too short: {len} samples, need more than {min} for filter warm-up")]
    TooShort { len: usize, min: usize },

    #[error("alignment shift {shift} exceeds bound of {bound} samples")]
    ShiftOutOfBounds { shift: i32, bound: i32 },

    #[error("channel alignment leaves no common valid samples")]
    EmptyOverlap,

    #[error("channel count mismatch: {channels} channels, {shifts} shifts")]
    ChannelCountMismatch { channels: usize, shifts: usize },
}

#[derive(Debug, Error)]
pub enum FcmError {
    #[error("effectiveness window of {got} samples is below the minimum of {min}")]
    WindowTooShort { got: usize, min: usize },

    #[error("effectiveness channel {axis} is numerically singular (|B_ii| = {value:.3e})")]
    SingularEffectiveness { axis: usize, value: f64 },

    #[error("invalid detector configuration: {0}")]
    Config(String),

    #[error("flight log is unusable: {0}")]
    BadLog(String),

    #[error(transparent)]
    Signal(#[from] SignalError),
}

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("missing mandatory column \"{0}\"")]
    MissingColumn(String),

    #[error("log has {0} data rows, need at least 2")]
    TooFewRows(usize),

    #[error("column \"{column}\" has {bad} NaN/unparsable values out of {total} (> 1%)")]
    TooManyNans {
        column: String,
        bad: usize,
        total: usize,
    },

    #[error("row {row}, column \"{column}\": {what}")]
    BadValue {
        row: usize,
        column: String,
        what: String,
    },

    #[error("timestamps are not strictly increasing at row {0}")]
    NonMonotonicTime(usize),

    #[error("time step jitter {jitter:.2e} exceeds the 1e-6 relative bound and resampling is disabled")]
    ExcessiveJitter { jitter: f64 },

    #[error("synthetic flight generation failed: {0}")]
    Generation(String),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}
