use thiserror::Error;

/// Errors produced by the fairness testing toolkit.
#[derive(Debug, Error)]
pub enum Error {
    #[error("input shape mismatch: expected {expected}, got {actual}")]
    InputShape { expected: usize, actual: usize },

    #[error("non-finite value in layer {layer}")]
    NumericOverflow { layer: usize },

    #[error("label {label} out of range for {class_count} classes")]
    Label { label: usize, class_count: usize },

    #[error("data error: {0}")]
    Data(String),

    #[error("parse error at byte {offset}: {message}")]
    Parse { offset: usize, message: String },

    #[error("validation error in layer {layer}: {message}")]
    Validation { layer: usize, message: String },

    #[error("invalid model: {0}")]
    InvalidModel(String),

    #[error("no registered counterpart for sample")]
    MissingPair,

    #[error("unknown attribute tag {0}")]
    Attribute(String),

    #[error("no eligible samples to pair ({skipped} already in target domain)")]
    EmptyPairing { skipped: usize },

    #[error("construction error: {0}")]
    Construction(String),

    #[error("degenerate partition: {0}")]
    DegeneratePartition(String),

    #[error("statistic undefined: {0}")]
    UndefinedStatistic(String),

    #[error("parameter error: {0}")]
    Parameter(String),

    #[error("shape error: lengths {0} and {1} differ")]
    Shape(usize, usize),

    #[error("configuration error: {0}")]
    Configuration(String),

    #[error("selection error: {0}")]
    Selection(String),

    #[error("mutation error: {0}")]
    Mutation(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// Short machine-readable kind used in error records.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::InputShape { .. } => "input_shape",
            Error::NumericOverflow { .. } => "numeric_overflow",
            Error::Label { .. } => "label",
            Error::Data(_) => "data",
            Error::Parse { .. } => "parse",
            Error::Validation { .. } => "validation",
            Error::InvalidModel(_) => "invalid_model",
            Error::MissingPair => "missing_pair",
            Error::Attribute(_) => "attribute",
            Error::EmptyPairing { .. } => "empty_pairing",
            Error::Construction(_) => "construction",
            Error::DegeneratePartition(_) => "degenerate_partition",
            Error::UndefinedStatistic(_) => "undefined_statistic",
            Error::Parameter(_) => "parameter",
            Error::Shape(..) => "shape",
            Error::Configuration(_) => "configuration",
            Error::Selection(_) => "selection",
            Error::Mutation(_) => "mutation",
            Error::Io(_) => "io",
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
