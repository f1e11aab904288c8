use thiserror::Error;

/// Library-wide error type.
///
/// Variants map onto the CLI exit-code classes: `Usage`/`Config` are
/// caller mistakes, `Format`/`Data` are bad bytes or ids, and
/// `Contract` is an internal invariant caught at runtime.
#[derive(Error, Debug)]
pub enum Error {
    #[error("dimension mismatch in {op}: {lhs:?} vs {rhs:?}")]
    Dimension {
        op: &'static str,
        lhs: Vec<usize>,
        rhs: Vec<usize>,
    },

    #[error("config error: {0}")]
    Config(String),

    #[error("unknown id: {0}")]
    Registry(String),

    #[error("split error: {0}")]
    Split(String),

    #[error("format error at byte {offset}: {msg}")]
    Format { msg: String, offset: u64 },

    #[error("data error: {0}")]
    Data(String),

    #[error("contract violation: {0}")]
    Contract(String),

    #[error("training error: non-finite gradient for {0}")]
    NonFiniteGradient(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn dim(op: &'static str, lhs: &[usize], rhs: &[usize]) -> Self {
        Error::Dimension {
            op,
            lhs: lhs.to_vec(),
            rhs: rhs.to_vec(),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
