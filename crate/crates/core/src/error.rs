use std::path::PathBuf;

use thiserror::Error;

use crate::sigdata::QualityReason;

pub type Result<T> = std::result::Result<T, Error>;

/// Every failure the pipeline can report. [`Error::code`] gives the stable
/// machine-readable code printed by the CLI.
#[derive(Debug, Error)]
pub enum Error {
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("file not found: {0}")]
    MissingFile(PathBuf),
    #[error("malformed record at line {line}: {message}")]
    MalformedRow { line: usize, message: String },
    #[error("record at line {line} has {found} channels, expected 12")]
    ChannelCount { line: usize, found: usize },
    #[error("invalid sample: {0}")]
    InvalidSample(String),
    #[error("noise level must be nonnegative, got {0}")]
    NegativeNoise(f64),
    #[error("sample {index} failed quality check: {reasons:?}")]
    Quality { index: usize, reasons: Vec<QualityReason> },
    #[error("enrollment samples failed quality check: {indices:?}")]
    EnrollmentQuality { indices: Vec<usize> },
    #[error("cannot split {rows} rows into {parts} partitions")]
    SplitTooFine { rows: usize, parts: usize },
    #[error("partition count must be at least 1")]
    ZeroPartitions,
    #[error("partition {0} is empty")]
    EmptyPartition(usize),
    #[error("dimension mismatch: expected {expected}, got {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("need at least 2 samples for covariance, got {0}")]
    InsufficientSamples(usize),
    #[error("feature column {0} has zero variance")]
    DegenerateFeature(usize),
    #[error("matrix is not symmetric (max asymmetry {0:e})")]
    NonSymmetric(f64),
    #[error("variance target must lie in (0, 1], got {0}")]
    InvalidVarianceTarget(f64),
    #[error("network layers must be nonempty")]
    ZeroLayer,
    #[error("empty training batch")]
    EmptyBatch,
    #[error("verifier needs both genuine and forged rows")]
    OneClass,
    #[error("ensemble was trained against pca model {expected}, got {found}")]
    PcaMismatch { expected: String, found: String },
    #[error("unknown user {0}")]
    UnknownUser(String),
    #[error("corrupt record {path}: {reason}")]
    CorruptRecord { path: PathBuf, reason: String },
    #[error("store has no pca model; enroll the population first")]
    MissingPca,
    #[error("need at least {required} genuine enrollment samples, got {found}")]
    InsufficientEnrollment { required: usize, found: usize },
    #[error("invalid threshold policy: {0}")]
    InvalidPolicy(String),
    #[error("no genuine probes")]
    NoGenuineProbes,
    #[error("no forged probes")]
    NoForgedProbes,
    #[error("no probes to score")]
    EmptyProbes,
    #[error("score {0} is not a finite value in [0, 1]")]
    InvalidScore(f64),
    #[error("timings come from different workloads: {0} vs {1}")]
    WorkloadMismatch(String, String),
    #[error("worker counts must include 1 as the speedup baseline")]
    MissingBaseline,
    #[error("{0} held-out probes also appear in the enrollment set")]
    OverlappingSplit(usize),
    #[error("task {index} failed: {source}")]
    Task {
        index: usize,
        #[source]
        source: Box<Error>,
    },
    #[error("user {user}: {source}")]
    User {
        user: String,
        #[source]
        source: Box<Error>,
    },
    #[error("invalid configuration: {0}")]
    Config(String),
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn code(&self) -> &'static str {
        match self {
            Error::Io { .. } => "IO",
            Error::MissingFile(_) => "MISSING_FILE",
            Error::MalformedRow { .. } => "MALFORMED_ROW",
            Error::ChannelCount { .. } => "CHANNEL_COUNT",
            Error::InvalidSample(_) => "INVALID_SAMPLE",
            Error::NegativeNoise(_) => "NEGATIVE_NOISE",
            Error::Quality { .. } => "QUALITY_FAILURE",
            Error::EnrollmentQuality { .. } => "QUALITY_FAILURE",
            Error::SplitTooFine { .. } => "SPLIT_TOO_FINE",
            Error::ZeroPartitions => "ZERO_PARTITIONS",
            Error::EmptyPartition(_) => "EMPTY_PARTITION",
            Error::DimensionMismatch { .. } => "DIMENSION_MISMATCH",
            Error::InsufficientSamples(_) => "INSUFFICIENT_SAMPLES",
            Error::DegenerateFeature(_) => "DEGENERATE_FEATURE",
            Error::NonSymmetric(_) => "NON_SYMMETRIC",
            Error::InvalidVarianceTarget(_) => "INVALID_VARIANCE_TARGET",
            Error::ZeroLayer => "ZERO_LAYER",
            Error::EmptyBatch => "EMPTY_BATCH",
            Error::OneClass => "ONE_CLASS",
            Error::PcaMismatch { .. } => "PCA_MISMATCH",
            Error::UnknownUser(_) => "UNKNOWN_USER",
            Error::CorruptRecord { .. } => "CORRUPT_RECORD",
            Error::MissingPca => "MISSING_PCA",
            Error::InsufficientEnrollment { .. } => "INSUFFICIENT_ENROLLMENT",
            Error::InvalidPolicy(_) => "INVALID_POLICY",
            Error::NoGenuineProbes => "NO_GENUINE_PROBES",
            Error::NoForgedProbes => "NO_FORGED_PROBES",
            Error::EmptyProbes => "EMPTY_PROBES",
            Error::InvalidScore(_) => "INVALID_SCORE",
            Error::WorkloadMismatch(..) => "WORKLOAD_MISMATCH",
            Error::MissingBaseline => "MISSING_BASELINE",
            Error::OverlappingSplit(_) => "OVERLAPPING_SPLIT",
            Error::Task { source, .. } | Error::User { source, .. } => source.code(),
            Error::Config(_) => "CONFIG",
        }
    }
}
