use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// A single malformed row in an input table.
    #[error("line {line}: {message}")]
    Row { line: u64, message: String },

    #[error("invalid configuration: {0}")]
    Config(String),

    /// A caller broke a precondition (negative idle time, unsorted trace, ...).
    #[error("contract violation: {0}")]
    Contract(String),

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("validation failed: {0}")]
    Validation(String),

    #[error("app {app_id}: {source}")]
    App {
        app_id: String,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Toml(#[from] toml::de::Error),
}

impl Error {
    /// Short machine-readable tag, used by the CLI error record.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Row { .. } => "row",
            Error::Config(_) => "config",
            Error::Contract(_) => "contract",
            Error::InsufficientData(_) => "insufficient_data",
            Error::Validation(_) => "validation",
            Error::App { source, .. } => source.kind(),
            Error::Io(_) => "io",
            Error::Csv(_) => "csv",
            Error::Json(_) => "json",
            Error::Toml(_) => "toml",
        }
    }
}
