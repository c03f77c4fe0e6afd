use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("parameter error: {0}")]
    Parameter(String),
    #[error("construction error: {0}")]
    Construction(String),
    #[error("evaluation error: {0}")]
    Evaluation(String),
    #[error("numerical integrity error: {0}")]
    Integrity(String),
    #[error("domain error: {0}")]
    Domain(String),
    #[error("contract violation: {0}")]
    Contract(String),
    #[error("resolution error: {0}")]
    Resolution(String),
    #[error("constraint cannot be reached by amplitude scaling: {0}")]
    NoScaling(String),
    #[error("no feasible candidate in family `{0}`")]
    Infeasible(String),
    #[error("no ground state: {0}")]
    NoGroundState(String),
    #[error("ratio undefined for the zero field")]
    UndefinedRatio,
    #[error("field is not antisymmetric about the equator (max even-parity coefficient {0:e})")]
    NotAntisymmetric(f64),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

macro_rules! bail {
    ($kind:ident, $($arg:tt)*) => {
        return Err($crate::error::Error::$kind(format!($($arg)*)))
    };
}
pub(crate) use bail;
