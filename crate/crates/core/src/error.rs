use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("validation failed: {}", .0.join("; "))]
    Validation(Vec<String>),

    #[error("counting rate for source pair {pair} is undefined: nothing was sent")]
    ZeroSent { pair: String },

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("bound is vacuous: {0}")]
    VacuousBound(String),

    #[error("argument outside domain: {0}")]
    Domain(String),

    #[error("linear program is infeasible: {0}")]
    Infeasible(String),

    #[error("structural error: {0}")]
    Structural(String),

    #[error("missing key `{0}`")]
    MissingKey(String),

    #[error("parse error at line {line}, column {column}: {message}")]
    Parse {
        line: usize,
        column: usize,
        message: String,
    },

    #[error("usage: {0}")]
    Usage(String),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

/// Process exit codes used by the command-line front end.
pub mod exit_code {
    pub const OK: i32 = 0;
    pub const USAGE: i32 = 2;
    pub const PARSE: i32 = 3;
    pub const VALIDATION: i32 = 4;
    pub const VACUOUS: i32 = 5;
}

impl Error {
    /// Short machine-readable class name.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Validation(_) | Error::Domain(_) | Error::Structural(_) => "validation",
            Error::ZeroSent { .. } | Error::InsufficientData(_) | Error::Infeasible(_) => "insufficient-data",
            Error::VacuousBound(_) => "vacuous-bound",
            Error::MissingKey(_) | Error::Parse { .. } | Error::Io { .. } => "parse",
            Error::Usage(_) => "usage",
        }
    }

    pub fn exit_code(&self) -> i32 {
        match self.kind() {
            "usage" => exit_code::USAGE,
            "parse" => exit_code::PARSE,
            "vacuous-bound" | "insufficient-data" => exit_code::VACUOUS,
            _ => exit_code::VALIDATION,
        }
    }

    pub(crate) fn from_json(err: serde_json::Error) -> Self {
        Error::Parse {
            line: err.line(),
            column: err.column(),
            message: err.to_string(),
        }
    }
}
