use std::path::PathBuf;

use crate::jsn::Compartment;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("image error on {path}: {source}")]
    Image {
        path: PathBuf,
        #[source]
        source: image::ImageError,
    },

    #[error("missing required column `{0}`")]
    MissingColumn(String),

    #[error("header mismatch: expected column `{expected}` at position {position}, found `{found}`")]
    HeaderMismatch {
        position: usize,
        expected: String,
        found: String,
    },

    #[error("row {row}, column `{column}`: {message}")]
    InvalidCell {
        row: usize,
        column: String,
        message: String,
    },

    #[error("{0} is not a grayscale image")]
    NotGrayscale(PathBuf),

    #[error("mask value {value} at ({x}, {y}) is outside {{0,1,2}}")]
    InvalidMaskValue { x: usize, y: usize, value: u8 },

    #[error("dimension mismatch: {a_width}x{a_height} vs {b_width}x{b_height}")]
    DimensionMismatch {
        a_width: usize,
        a_height: usize,
        b_width: usize,
        b_height: usize,
    },

    #[error("image of {width}x{height} is too small for a {tiles_x}x{tiles_y} tile grid")]
    TileTooSmall {
        width: usize,
        height: usize,
        tiles_x: usize,
        tiles_y: usize,
    },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("unknown {kind} `{value}`")]
    UnknownName { kind: &'static str, value: String },

    #[error("{0:?} compartment absent or too small")]
    CompartmentAbsent(Compartment),

    #[error("{compartment:?} span of {width} columns is too narrow (need {required})")]
    SpanTooNarrow {
        compartment: Compartment,
        width: usize,
        required: usize,
    },

    #[error("region of {width}x{height} is too small (need at least {required}x{required})")]
    RegionTooSmall {
        width: usize,
        height: usize,
        required: usize,
    },

    #[error("no eligible KL-0 training images with a measured {0:?} compartment")]
    NoKl0Reference(Compartment),

    #[error("reference median must be positive")]
    ZeroReference,

    #[error("imputer not fitted but {0} slots are missing")]
    ImputerNotFitted(usize),

    #[error("expected {expected} values, got {found}")]
    LengthMismatch { expected: usize, found: usize },

    #[error("non-finite input at row {row}, column {column}")]
    NonFinite { row: usize, column: usize },

    #[error("label {label} outside 0..{classes}")]
    LabelOutOfRange { label: usize, classes: usize },

    #[error("not enough data: {0}")]
    InsufficientData(String),

    #[error("model format version {found} is not supported (expected {expected})")]
    FormatVersion { found: u32, expected: u32 },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
