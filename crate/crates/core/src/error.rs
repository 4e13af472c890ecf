use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid mode index {0}, expected 1..=4")]
    InvalidMode(usize),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("image too small: {width}x{height}, need at least {min}x{min}")]
    ImageTooSmall { width: usize, height: usize, min: usize },

    #[error("region is empty")]
    EmptyRegion,

    #[error("region too small: {area} pixels, need at least {min}")]
    RegionTooSmall { area: usize, min: usize },

    #[error("unbalanced transport problem: supply {supply}, demand {demand}")]
    Unbalanced { supply: f64, demand: f64 },

    #[error("simplex exceeded its cap of {cap} pivots")]
    IterationCap { cap: usize, best_basis: Vec<usize> },

    #[error("phase-one optimum {0:e} is nonzero; transport problem infeasible")]
    Infeasible(f64),

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("lost contour: zero level set is empty")]
    LostContour,

    #[error("degenerate ellipse radii a={a}, b={b}")]
    DegenerateEllipse { a: f64, b: f64 },

    #[error("synthetic object leaves the canvas at frame {frame}")]
    ObjectOutOfCanvas { frame: usize },

    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{}: malformed image: {reason}", path.display())]
    ImageFormat { path: PathBuf, reason: String },

    #[error("config line {line}: {reason}")]
    Config { line: usize, reason: String },

    #[error("parse error at line {line}: {reason}")]
    Parse { line: usize, reason: String },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }

    pub(crate) fn param(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter { name, reason: reason.into() }
    }
}
