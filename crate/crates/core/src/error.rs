use std::path::PathBuf;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// A file could not be decoded. `line`/`column` are 1-based when known.
    #[error("{}: {message}{}", path.display(), location(*line, *column))]
    Parse {
        path: PathBuf,
        line: Option<usize>,
        column: Option<usize>,
        message: String,
    },

    #[error("validation error: {0}")]
    Validation(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("translator `{translator}` failed on sentence {sentence_hash}: {message}")]
    Translation {
        sentence_hash: String,
        translator: String,
        message: String,
    },

    #[error("parse provider failed on sentence {sentence_hash}: {message}")]
    ParseProvider { sentence_hash: String, message: String },

    #[error("evaluation error: {0}")]
    Evaluation(String),

    #[error("{context}: {source}")]
    Io {
        context: String,
        #[source]
        source: std::io::Error,
    },
}

fn location(line: Option<usize>, column: Option<usize>) -> String {
    match (line, column) {
        (Some(l), Some(c)) => format!(" (line {l}, column {c})"),
        (Some(l), None) => format!(" (line {l})"),
        _ => String::new(),
    }
}

impl Error {
    pub(crate) fn io(context: impl Into<String>, source: std::io::Error) -> Self {
        Error::Io {
            context: context.into(),
            source,
        }
    }

    /// Process exit code for the command-line front end.
    ///
    /// 2 = configuration, 3 = external service, 4 = data validation.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) => 2,
            Error::Translation { .. } | Error::ParseProvider { .. } => 3,
            Error::Parse { .. } | Error::Validation(_) | Error::Evaluation(_) => 4,
            Error::Io { .. } => 1,
        }
    }
}
