use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("invalid configuration: {0}")]
    Validation(String),
    #[error("numerical failure: {0}")]
    Numerical(String),
    #[error("i/o error at {}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl HarnessError {
    /// Process exit status: 1 validation, 2 numerical, 3 i/o.
    pub fn exit_code(&self) -> i32 {
        match self {
            HarnessError::Validation(_) => 1,
            HarnessError::Numerical(_) => 2,
            HarnessError::Io { .. } => 3,
        }
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        HarnessError::Io { path: path.into(), source }
    }
}

impl From<cnls_core::Error> for HarnessError {
    fn from(e: cnls_core::Error) -> Self {
        use cnls_core::Error as E;
        match e {
            E::Parameter(_) | E::Construction(_) | E::Domain(_) | E::Contract(_) | E::NotAntisymmetric(_) => {
                HarnessError::Validation(e.to_string())
            }
            _ => HarnessError::Numerical(e.to_string()),
        }
    }
}

pub type Result<T, E = HarnessError> = std::result::Result<T, E>;
