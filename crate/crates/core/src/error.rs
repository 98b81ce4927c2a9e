use thiserror::Error;

#[derive(Debug, Error)]
pub enum GasError {
    #[error("dimension mismatch at layer {layer}: expected {expected}, got {got}")]
    DimensionMismatch {
        layer: usize,
        expected: usize,
        got: usize,
    },
    #[error("invalid layer sizes {0:?}: {1}")]
    InvalidLayers(Vec<usize>, &'static str),
    #[error("axis {axis} out of range for dimension {dim}")]
    AxisOutOfRange { axis: usize, dim: usize },
    #[error("empty {0} batch")]
    EmptyBatch(&'static str),
    #[error("non-finite value in {stage} at batch index {index}")]
    NonFinite { stage: &'static str, index: usize },
    #[error("shape mismatch: expected {expected} parameters, got {got}")]
    ShapeMismatch { expected: usize, got: usize },
    #[error("point {point:?} is not on the boundary of the domain")]
    NotOnBoundary { point: Vec<f64> },
    #[error("point {point:?} lies outside the domain")]
    OutsideDomain { point: Vec<f64> },
    #[error("need at least {needed} samples, got {got}")]
    TooFewSamples { needed: usize, got: usize },
    #[error("requested batch of {requested} from a set of {available}; grow the dataset first")]
    BatchTooLarge { requested: usize, available: usize },
    #[error("{0}")]
    InvalidArgument(String),
    #[error("estimated curvature {0} is not positive; the point is not a local maximum")]
    NotLocalMax(f64),
    #[error("sizes must be nondecreasing, got {prev} then {next}")]
    DecreasingSizes { prev: usize, next: usize },
    #[error("invalid configuration:\n{}", .0.join("\n"))]
    Config(Vec<String>),
    #[error("round {round}: {source}")]
    Round {
        round: usize,
        #[source]
        source: Box<GasError>,
    },
    #[error("epoch {epoch}: {source}")]
    Epoch {
        epoch: usize,
        #[source]
        source: Box<GasError>,
    },
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, GasError>;
