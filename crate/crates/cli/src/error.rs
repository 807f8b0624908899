use manifold_plm::PlmError;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Config(String),
    #[error("insufficient data: {usable} usable rows, need at least {needed}")]
    InsufficientData { usable: usize, needed: usize },
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    Csv {
        path: String,
        #[source]
        source: csv::Error,
    },
    #[error(transparent)]
    Model(#[from] PlmError),
}

impl CliError {
    /// 2 for bad input or configuration, 3 for numerical failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Model(e) if !e.is_config() => 3,
            _ => 2,
        }
    }
}

pub type CliResult<T> = Result<T, CliError>;
