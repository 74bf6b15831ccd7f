use crate::grid::Dims;

/// Errors raised by the numerical core.
#[allow(missing_docs)]
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("voxel dimensions must be positive, got {0}")]
    InvalidDims(Dims),
    #[error("voxel spacing must be finite and strictly positive, got {0:?}")]
    InvalidSpacing([f64; 3]),
    #[error("data length {actual} does not match {expected} voxels")]
    LengthMismatch { expected: usize, actual: usize },
    #[error("non-finite value at voxel {index}")]
    NonFinite { index: usize },
    #[error("probability {value} at voxel {index} lies outside [0, 1]")]
    ProbabilityOutOfRange { index: usize, value: f64 },
    #[error("threshold {0} must lie in (0, 1]")]
    InvalidThreshold(f64),
    #[error("dimension mismatch: {left} vs {right}")]
    DimsMismatch { left: Dims, right: Dims },
    #[error("mask has no foreground voxels")]
    EmptyMask,
    #[error("index box {min:?}..={max:?} does not fit inside {dims}")]
    BoxOutOfRange {
        min: [usize; 3],
        max: [usize; 3],
        dims: Dims,
    },
    #[error("a sample set needs at least 2 samples, got {0}")]
    TooFewSamples(usize),
    #[error("window lower bound {lo} must be below upper bound {hi}")]
    InvalidWindow { lo: f64, hi: f64 },
    #[error("normalization requires a finite mean and a strictly positive std (mean {mean}, std {std})")]
    InvalidStats { mean: f64, std: f64 },
    #[error("input is empty or has fewer than {required} values")]
    NotEnoughData { required: usize },
    #[error("{n} usable observations, at least 3 are required")]
    TooFewObservations { n: usize },
    #[error("x and y have different lengths ({x} vs {y})")]
    UnequalLengths { x: usize, y: usize },
    #[error("correlation is undefined: all values tied in {0}")]
    UndefinedCorrelation(&'static str),
    #[error("report for case {0} has no dice against ground truth")]
    MissingDice(alloc::string::String),
    #[error("invalid parameter: {0}")]
    InvalidParameter(&'static str),
    #[error("shape does not fit inside the grid with a one-voxel margin")]
    ShapeOutOfBounds,
}

/// Result alias for the core crate.
pub type Result<T> = core::result::Result<T, Error>;
