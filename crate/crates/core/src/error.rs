use std::path::PathBuf;

/// Result alias used throughout the crate.
pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("schema error: missing column `{column}`")]
    Schema { column: String },

    #[error("line {line}: {message}")]
    Row { line: u64, message: String },

    #[error("line {line}: unknown {field} token `{token}`")]
    Enumeration {
        line: u64,
        field: &'static str,
        token: String,
    },

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("invalid argument: {0}")]
    Argument(String),

    #[error("unknown material `{name}` (known: {known})")]
    UnknownMaterial { name: String, known: String },

    #[error("material `{0}` has no thermal properties")]
    MissingThermal(String),

    #[error("element `{element}` has no `{property}` value")]
    Coverage { element: String, property: String },

    #[error("domain error: {0}")]
    Domain(String),

    #[error("feature `{0}` is not available")]
    FeatureAvailability(String),

    #[error("no rows survive: {0}")]
    EmptyMatrix(String),

    #[error("encoding error: `{value}` is not one of {categories:?}")]
    Encoding {
        value: String,
        categories: Vec<String>,
    },

    #[error("point source singularity at R = 0")]
    Singularity,

    #[error("not identifiable: {0}")]
    Identifiability(String),

    #[error("numerical error: {0}")]
    Numerical(String),

    #[error("degenerate labels: {0}")]
    DegenerateLabel(String),

    #[error("wrong model kind: {0}")]
    Kind(String),

    #[error("search failed: {0}")]
    Search(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
