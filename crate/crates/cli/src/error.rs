use serde::Serialize;

/// Process exit codes.
pub mod exit {
    pub const OK: i32 = 0;
    pub const NON_HAMILTONIAN: i32 = 10;
    pub const AUDIT_FAILED: i32 = 20;
    pub const USAGE: i32 = 64;
    pub const DATA: i32 = 65;
    pub const NO_INPUT: i32 = 66;
    pub const SOFTWARE: i32 = 70;
    pub const IO: i32 = 74;
}

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("cannot read {path}: {source}")]
    Read {
        path: String,
        source: std::io::Error,
    },
    #[error("cannot write {path}: {source}")]
    Write {
        path: String,
        source: std::io::Error,
    },
    #[error("{message}")]
    Config {
        message: String,
        field: Option<String>,
        line: Option<usize>,
        column: Option<usize>,
        /// 1-based offset inside an expression string.
        offset: Option<usize>,
    },
    #[error(transparent)]
    Compute(#[from] metricflow::Error),
}

#[derive(Serialize)]
struct ErrorBody<'a> {
    kind: &'static str,
    message: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    field: Option<&'a str>,
    #[serde(skip_serializing_if = "Option::is_none")]
    line: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    column: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    offset: Option<usize>,
}

#[derive(Serialize)]
struct ErrorObject<'a> {
    error: ErrorBody<'a>,
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => exit::USAGE,
            CliError::Read { .. } => exit::NO_INPUT,
            CliError::Write { .. } => exit::IO,
            CliError::Config { .. } => exit::DATA,
            CliError::Compute(_) => exit::SOFTWARE,
        }
    }

    fn kind(&self) -> &'static str {
        match self {
            CliError::Usage(_) => "usage",
            CliError::Read { .. } => "input",
            CliError::Write { .. } => "output",
            CliError::Config { .. } => "config",
            CliError::Compute(_) => "computation",
        }
    }

    /// `{"error": {...}}` as a single JSON line.
    pub fn to_json(&self) -> String {
        let (field, line, column, offset) = match self {
            CliError::Config {
                field,
                line,
                column,
                offset,
                ..
            } => (field.as_deref(), *line, *column, *offset),
            _ => (None, None, None, None),
        };
        let obj = ErrorObject {
            error: ErrorBody {
                kind: self.kind(),
                message: self.to_string(),
                field,
                line,
                column,
                offset,
            },
        };
        serde_json::to_string(&obj).expect("error object serializes")
    }
}
