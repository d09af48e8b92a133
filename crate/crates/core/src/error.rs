use thiserror::Error;

/// Errors raised across the crate.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    Input(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },

    #[error("assumption violated ({what}) at {point:?}")]
    Assumption { what: String, point: Vec<f64> },

    #[error("domain error ({what}) at {point:?}")]
    Domain { what: String, point: Vec<f64> },

    #[error("model is not declared in product form")]
    NotProductForm,

    #[error("numerical failure: {0}")]
    Numeric(String),

    #[error("parse error at byte {offset}: {message}")]
    Parse { offset: usize, message: String },

    #[error("evaluation error: {0}")]
    Eval(String),

    #[error("config error at line {line}: {message}")]
    Config { line: usize, message: String },

    #[error("path file error at line {line}: {message}")]
    PathFile { line: usize, message: String },

    #[error("interval {index}: {source}")]
    Interval { index: usize, source: Box<Error> },
}

impl Error {
    /// Strips interval context.
    pub fn root(&self) -> &Error {
        match self {
            Error::Interval { source, .. } => source.root(),
            e => e,
        }
    }

    pub(crate) fn at_interval(index: usize) -> impl Fn(Error) -> Error {
        move |e| match e {
            Error::Interval { .. } => e,
            e => Error::Interval { index, source: Box::new(e) },
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn check_dim(expected: usize, got: usize) -> Result<()> {
    if expected == got {
        Ok(())
    } else {
        Err(Error::Dimension { expected, got })
    }
}
