use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("principal logarithm is ill-conditioned: eigenvalue within {distance:.3e} of -1")]
    CutLocus { distance: f64 },

    #[error("matrix is not in the group: unitarity defect {unitarity:.3e}, determinant defect {determinant:.3e}")]
    NotInGroup { unitarity: f64, determinant: f64 },

    #[error("matrix is not in the Lie algebra: skewness defect {defect:.3e}")]
    NotSkew { defect: f64 },

    #[error("group specifications differ")]
    SpecMismatch,

    #[error("step {step} exceeds the resolution limit {limit}")]
    StepTooLarge { step: f64, limit: f64 },

    #[error("observable is not centered: invariant mean {mean:.6e}")]
    NotCentered { mean: f64 },

    #[error("fast group is not a one-dimensional torus")]
    NotTorus,

    #[error("averaged matrix is not negative semidefinite: eigenvalue {eigenvalue:.6e} of -a_sym")]
    NotPsd { eigenvalue: f64 },

    #[error("Fourier mode {mode} has magnitude {magnitude:.3e} above the declared maximum frequency {max_frequency}")]
    SpectralLeak {
        mode: usize,
        magnitude: f64,
        max_frequency: usize,
    },

    #[error("observable has no closed-form Lie derivatives")]
    RequiresDerivatives,

    #[error("ensemble sizes differ: {left} vs {right}")]
    SizeMismatch { left: usize, right: usize },

    #[error("ensemble size {size} exceeds the exact-assignment limit {limit}")]
    TooLarge { size: usize, limit: usize },

    #[error("rate fit is degenerate: {0}")]
    DegenerateFit(String),

    #[error("strong Hörmander condition fails: generated dimension {generated} < {required}")]
    HormanderFails { generated: usize, required: usize },

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("i/o error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidArgument(msg.into())
}
