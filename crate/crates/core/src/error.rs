use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("density must lie in (0, 1], got {0}")]
    InvalidDensity(f64),
    #[error("layer sizes must have at least two entries, all positive: {0:?}")]
    InvalidLayerSizes(Vec<usize>),
    #[error("head layout does not partition {outputs} output units: {detail}")]
    InvalidHeadLayout { outputs: usize, detail: String },
    #[error("unknown task id {0}")]
    UnknownTask(usize),
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("label {label} lies outside the head of task {task}")]
    LabelOutsideHead { label: usize, task: usize },
    #[error("dataset is empty")]
    EmptyDataset,
    #[error("no snapshot stored for phase {0}")]
    MissingSnapshot(usize),
    #[error("tau must lie in [0, 1], got {0}")]
    TauOutOfRange(f64),
    #[error("structural isolation violated in layer {layer}: plastic source {source_unit} feeds stable target {target}")]
    IsolationViolation {
        layer: usize,
        source_unit: usize,
        target: usize,
    },
    #[error("partition does not match the network: {0}")]
    PartitionMismatch(String),
    #[error("class {0} is already stored in the replay buffer")]
    DuplicateClass(usize),
    #[error("class {0} is not present in the dataset")]
    UnknownClass(usize),
    #[error("cannot silence {k} units in a layer of {size}")]
    AblationTooLarge { k: usize, size: usize },
    #[error("malformed IDX data: {0}")]
    Idx(String),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("unsupported buffer format version {0}")]
    BufferVersion(u32),
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
