use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: malformed header: {message}")]
    Header { path: PathBuf, message: String },
    #[error("{path}: malformed manifest: {message}")]
    Manifest { path: PathBuf, message: String },
    #[error("invalid grid dims {d}x{h}x{w}")]
    InvalidDims { d: u64, h: u64, w: u64 },
    #[error("payload holds {actual} elements, dims require {expected}")]
    PayloadSize { expected: u64, actual: u64 },
    #[error("confidence out of range at voxel {index}: {value}")]
    ConfidenceOutOfRange { index: usize, value: f64 },
    #[error("mask value not in {{0,1}} at voxel {index}: {value}")]
    MaskValue { index: usize, value: u8 },
    #[error("unknown dtype {0:?}")]
    UnknownDtype(String),
    #[error("expected a {expected} volume, found dtype {found}")]
    WrongVolumeKind {
        expected: &'static str,
        found: &'static str,
    },
    #[error("dims mismatch for sample {id:?}: confidence {confidence}, label {label}")]
    DimsMismatch {
        id: String,
        confidence: String,
        label: String,
    },
    #[error("duplicate sample id {0:?}")]
    DuplicateId(String),
    #[error("empty ground truth in sample {0:?}")]
    EmptyGroundTruth(String),
    #[error("{name} = {value} is outside {range}")]
    OutOfRange {
        name: &'static str,
        value: f64,
        range: &'static str,
    },
    #[error("non-positive tolerance {0}")]
    NonPositiveTolerance(f64),
    #[error("empty dataset")]
    EmptyDataset,
    #[error("empty test split")]
    EmptyTestSplit,
    #[error("split ratio {ratio} on {n} samples leaves {calibration} calibration and {test} test samples")]
    DegenerateSplit {
        ratio: f64,
        n: usize,
        calibration: usize,
        test: usize,
    },
    #[error("inconsistent score set: {0}")]
    InconsistentScores(String),
    #[error("invalid generator config: {0}")]
    GeneratorConfig(String),
    #[error("{0} already exists; refusing to overwrite")]
    AlreadyExists(PathBuf),
    #[error("invalid classifier row {row}: {message}")]
    ClassifierRow { row: usize, message: String },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// True for failures of the filesystem rather than of the data.
    pub fn is_io(&self) -> bool {
        matches!(self, Error::Io { .. })
    }
}

pub(crate) fn check_unit(name: &'static str, value: f64) -> Result<()> {
    if (0.0..=1.0).contains(&value) {
        Ok(())
    } else {
        Err(Error::OutOfRange {
            name,
            value,
            range: "[0, 1]",
        })
    }
}

pub(crate) fn check_open_unit(name: &'static str, value: f64) -> Result<()> {
    if value > 0.0 && value < 1.0 {
        Ok(())
    } else {
        Err(Error::OutOfRange {
            name,
            value,
            range: "(0, 1)",
        })
    }
}
