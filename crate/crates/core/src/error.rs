use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{context}: expected {expected} channels, got {actual}")]
    ChannelMismatch {
        context: String,
        expected: usize,
        actual: usize,
    },
    #[error("shape error: {0}")]
    Shape(String),
    #[error("residual pair (conv{src}, conv{dst}): {reason}")]
    Residual {
        src: usize,
        dst: usize,
        reason: String,
    },
    #[error("model spec line {line}: {message}")]
    SpecParse { line: usize, message: String },
    #[error("model spec: {0}")]
    SpecInvalid(String),
    #[error("bad magic: expected {expected:?}, found {found:?}")]
    BadMagic { expected: [u8; 4], found: [u8; 4] },
    #[error("unsupported container version {found} (expected {expected})")]
    VersionMismatch { expected: u32, found: u32 },
    #[error("truncated payload: {0}")]
    Truncated(String),
    #[error("malformed container: {0}")]
    Malformed(String),
    #[error("missing tensor {0:?}")]
    MissingTensor(String),
    #[error("tensor {name:?}: expected dims {expected:?}, found {found:?}")]
    TensorShape {
        name: String,
        expected: Vec<usize>,
        found: Vec<usize>,
    },
    #[error("label {label} out of range for {classes} classes (sample {index})")]
    LabelOutOfRange {
        index: usize,
        label: usize,
        classes: usize,
    },
    #[error("no samples of class {0}")]
    NoClassSamples(usize),
    #[error("empty dataset")]
    EmptyDataset,
    #[error("training diverged: non-finite loss at epoch {epoch}, batch {batch}")]
    NonFiniteLoss { epoch: usize, batch: usize },
    #[error("genome: {0}")]
    Genome(String),
    #[error("conv{layer} has every group removed and repair is disabled")]
    EmptyLayer { layer: usize },
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("unknown {kind} strategy {name:?} (available: {available})")]
    UnknownStrategy {
        kind: &'static str,
        name: String,
        available: String,
    },
    #[error("evaluation at generation {generation}: {source}")]
    Generation {
        generation: usize,
        #[source]
        source: Box<Error>,
    },
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}
