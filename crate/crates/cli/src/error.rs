use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = CliError> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),

    #[error("{0}")]
    Data(String),

    #[error("cannot access {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: {source}")]
    Csv {
        path: PathBuf,
        #[source]
        source: csv::Error,
    },

    #[error(transparent)]
    Model(#[from] frn_core::Error),
}

impl CliError {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.into(),
            source,
        }
    }

    pub fn csv(path: impl Into<PathBuf>, source: csv::Error) -> Self {
        CliError::Csv {
            path: path.into(),
            source,
        }
    }

    /// 1 usage, 2 data validation, 3 numerical failure.
    pub fn exit_code(&self) -> i32 {
        use frn_core::Error as E;
        match self {
            CliError::Usage(_) => 1,
            CliError::Data(_) | CliError::Io { .. } | CliError::Csv { .. } => 2,
            CliError::Model(e) => match e {
                E::Config(_) | E::UnknownFamily(_) => 1,
                E::Dimension(_) | E::InvalidScores(_) | E::RankRowEffects(_) => 2,
                E::EmptyInterval { .. }
                | E::ConstraintViolation { .. }
                | E::Singular(_)
                | E::Numerical(_) => 3,
            },
        }
    }
}
