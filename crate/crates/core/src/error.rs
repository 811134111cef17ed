use thiserror::Error;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("dimension mismatch: {left_h}x{left_w} vs {right_h}x{right_w}")]
    DimensionMismatch {
        left_h: usize,
        left_w: usize,
        right_h: usize,
        right_w: usize,
    },
    #[error("plane dimensions must be positive, got {height}x{width}")]
    EmptyPlane { height: usize, width: usize },
    #[error("inverse DFT discarded an imaginary residue of {ratio:e} of total energy")]
    ImaginaryResidue { ratio: f64 },
    #[error("kernel of size {size} does not fit a {height}x{width} grid")]
    KernelTooLarge {
        size: usize,
        height: usize,
        width: usize,
    },
    #[error("kernel size must be odd, got {0}")]
    EvenSize(usize),
    #[error("kernel weights sum to {0}, expected 1")]
    NotNormalized(f64),
    #[error("kernel weight {value} at index {index} is negative")]
    NegativeWeight { index: usize, value: f64 },
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),
    #[error("kernel support {support} too small for motion length {length}")]
    SupportTooSmall { support: usize, length: f64 },
    #[error("invalid motion parameters: {0}")]
    InvalidMotion(&'static str),
    #[error("denominator {value:e} below floor at frequency ({row}, {col})")]
    SingularDenominator { row: usize, col: usize, value: f64 },
    #[error("gradient reached node {0}, which is not differentiable or not on this record")]
    UnrecordedNode(usize),
    #[error("shape mismatch: {0}")]
    ShapeMismatch(&'static str),
    #[error("image must be at least {min}x{min}, got {height}x{width}")]
    ImageTooSmall {
        height: usize,
        width: usize,
        min: usize,
    },
    #[error("invalid parameter: {0}")]
    InvalidParameter(&'static str),
    #[error("non-finite loss on record {record}")]
    NonFiniteLoss { record: usize },
}
