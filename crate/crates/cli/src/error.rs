use std::fmt;
use std::path::{Path, PathBuf};

use serde_json::json;
use sphere_equilibria::Error as CoreError;

/// Failure of a run, mapped onto the process exit status.
#[derive(Debug)]
pub enum CliError {
    /// Invalid or unreadable configuration (exit 2).
    Config { field: Option<String>, message: String },
    /// A numerical routine failed (exit 3).
    Numerical(String),
    /// Strict mode and some Monte Carlo instances were not saturated (exit 4).
    Unsaturated { instances: usize },
    /// Filesystem failure (exit 1).
    Io { path: PathBuf, message: String },
}

impl CliError {
    pub fn config(field: impl Into<String>, message: impl Into<String>) -> Self {
        CliError::Config {
            field: Some(field.into()),
            message: message.into(),
        }
    }

    pub fn io(path: &Path, err: impl fmt::Display) -> Self {
        CliError::Io {
            path: path.to_path_buf(),
            message: err.to_string(),
        }
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Io { .. } => 1,
            CliError::Config { .. } => 2,
            CliError::Numerical(_) => 3,
            CliError::Unsaturated { .. } => 4,
        }
    }

    fn kind(&self) -> &'static str {
        match self {
            CliError::Io { .. } => "io",
            CliError::Config { .. } => "config",
            CliError::Numerical(_) => "numerical",
            CliError::Unsaturated { .. } => "unsaturated",
        }
    }

    /// Machine-readable form written to stderr.
    pub fn to_json(&self) -> String {
        let mut body = json!({
            "kind": self.kind(),
            "message": self.to_string(),
            "exit_code": self.exit_code(),
        });
        match self {
            CliError::Config { field: Some(f), .. } => body["field"] = json!(f),
            CliError::Io { path, .. } => body["path"] = json!(path.display().to_string()),
            CliError::Unsaturated { instances } => body["instances"] = json!(instances),
            _ => {}
        }
        json!({ "error": body }).to_string()
    }

    /// Attach a field name to a core error raised while validating it.
    pub fn from_core_in(field: &str, e: CoreError) -> Self {
        match CliError::from(e) {
            CliError::Config { field: None, message } => CliError::Config {
                field: Some(field.to_string()),
                message,
            },
            CliError::Config { field: Some(inner), message } => CliError::Config {
                field: Some(format!("{field}.{inner}")),
                message,
            },
            other => other,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Config { field: Some(field), message } => write!(f, "config field `{field}`: {message}"),
            CliError::Config { field: None, message } => write!(f, "config: {message}"),
            CliError::Numerical(m) => write!(f, "numerical failure: {m}"),
            CliError::Unsaturated { instances } => {
                write!(f, "{instances} Monte Carlo instance(s) did not saturate (strict mode)")
            }
            CliError::Io { path, message } => write!(f, "{}: {message}", path.display()),
        }
    }
}

impl std::error::Error for CliError {}

impl From<CoreError> for CliError {
    fn from(e: CoreError) -> Self {
        match e {
            CoreError::InvalidParameter { name, .. } => CliError::Config {
                field: Some(name.to_string()),
                message: e.to_string(),
            },
            CoreError::Numerical(_) => CliError::Numerical(e.to_string()),
            CoreError::Io { ref path, .. } => CliError::Io {
                path: path.clone(),
                message: e.to_string(),
            },
            CoreError::Format(m) => CliError::Io {
                path: PathBuf::from("<output>"),
                message: m,
            },
            _ => CliError::Config {
                field: None,
                message: e.to_string(),
            },
        }
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;
