use std::path::PathBuf;

use thiserror::Error;

/// Every failure the pipeline can report.
#[derive(Debug, Error)]
pub enum Error {
    #[error("no ink pixels in mask")]
    NoInk,

    #[error("marking band not found in the bottom of the check")]
    BandNotFound,

    #[error("marking band too tall: {rows} rows, limit {limit}")]
    BandTooTall { rows: usize, limit: usize },

    #[error("marking band contains no ink columns")]
    EmptyBand,

    #[error("marking band holds {found} characters, need more than {needed}")]
    BandTooShort { found: usize, needed: usize },

    #[error("dilation did not converge after {iterations} iterations ({components} components left)")]
    DidNotConverge { iterations: usize, components: usize },

    #[error("glyph clip contains no ink")]
    EmptyGlyph,

    #[error("label {0} does not exist in the label map")]
    UnknownLabel(u32),

    #[error("contour has {points} points, need at least {needed}")]
    TooFewPoints { points: usize, needed: usize },

    #[error("degenerate shape: first harmonic vanishes")]
    DegenerateShape,

    #[error("descriptor orders differ: {0} vs {1}")]
    MismatchedOrder(usize, usize),

    #[error("descriptor set is not normalized")]
    NotNormalized,

    #[error("unknown bank: {0}")]
    UnknownBank(String),

    #[error("filled and blank histograms do not differ above the noise floor")]
    NoDifference,

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("unsupported image format in {path}: {reason}")]
    ImageFormat { path: PathBuf, reason: String },

    #[error("PNG decode error: {0}")]
    PngDecode(#[from] png::DecodingError),

    #[error("PNG encode error: {0}")]
    PngEncode(#[from] png::EncodingError),

    #[error("JSON error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),
}

impl Error {
    /// Process exit code reported by the command-line front end.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::BandNotFound | Error::BandTooTall { .. } => 3,
            Error::UnknownBank(_) => 4,
            Error::NoDifference => 5,
            Error::EmptyBand
            | Error::BandTooShort { .. }
            | Error::DidNotConverge { .. }
            | Error::EmptyGlyph
            | Error::UnknownLabel(_)
            | Error::TooFewPoints { .. }
            | Error::DegenerateShape
            | Error::MismatchedOrder(..)
            | Error::NotNormalized => 6,
            Error::NoInk
            | Error::InvalidInput(_)
            | Error::ImageFormat { .. }
            | Error::PngDecode(_)
            | Error::PngEncode(_)
            | Error::Json(_)
            | Error::Io(_) => 2,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
