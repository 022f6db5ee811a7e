use thiserror::Error;

/// Errors raised by the pose estimation library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("quaternion norm {norm:e} is too small to normalize")]
    DegenerateQuaternion { norm: f64 },

    #[error("input point set is empty")]
    EmptyInput,

    #[error("non-finite coordinate at point {index}")]
    NonFiniteCoordinate { index: usize },

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("scene contains no regular voxels")]
    NoRegularVoxels,

    #[error("no object point has a plausible correspondence")]
    NoCorrespondences,

    #[error("weight sum must be positive")]
    ZeroWeightSum,

    #[error("invalid translation bounds: {0}")]
    InvalidBounds(String),

    #[error("initial pose has zero density")]
    InfeasibleInit,

    #[error("every particle has zero density")]
    AllInfeasible,

    #[error("at least {required} samples are needed, got {got}")]
    TooFewSamples { required: usize, got: usize },

    #[error("grid geometry mismatch: {0}")]
    GeometryMismatch(String),

    #[error("invalid synthetic scene spec: {0}")]
    InvalidSpec(String),

    #[error(transparent)]
    Format(#[from] crate::io::FormatError),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
