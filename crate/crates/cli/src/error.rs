use serde::Serialize;

use crate::report::SCHEMA_VERSION;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("cannot read {path}: {source}")]
    ConfigIo {
        path: String,
        source: std::io::Error,
    },
    #[error("invalid JSON in {path}: {source}")]
    ConfigParse {
        path: String,
        source: serde_json::Error,
    },
    #[error("unknown model {0:?}")]
    UnknownModel(String),
    #[error("{0}")]
    InvalidConfig(String),
    #[error("section has no base-point guess")]
    MissingBasePoint,
    #[error("cannot write {path}: {message}")]
    OutputIo { path: String, message: String },
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Model(#[from] hybrid_orbit::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Category {
    Config,
    Numerical,
    Assumption,
}

impl CliError {
    pub fn code(&self) -> &'static str {
        match self {
            CliError::ConfigIo { .. } => "CONFIG_IO",
            CliError::ConfigParse { .. } => "CONFIG_PARSE",
            CliError::UnknownModel(_) => "UNKNOWN_MODEL",
            CliError::InvalidConfig(_) => "INVALID_CONFIG",
            CliError::MissingBasePoint => "MISSING_BASE_POINT",
            CliError::OutputIo { .. } => "OUTPUT_IO",
            CliError::Usage(_) => "USAGE",
            CliError::Model(e) => e.code(),
        }
    }

    pub fn category(&self) -> Category {
        use hybrid_orbit::error::ErrorCategory;
        match self {
            CliError::Model(e) => match e.category() {
                ErrorCategory::Input => Category::Config,
                ErrorCategory::Numerical => Category::Numerical,
                ErrorCategory::Assumption => Category::Assumption,
            },
            _ => Category::Config,
        }
    }

    pub fn exit_code(&self) -> i32 {
        match self.category() {
            Category::Config => 2,
            Category::Numerical => 3,
            Category::Assumption => 4,
        }
    }

    pub fn to_json(&self) -> String {
        #[derive(Serialize)]
        struct Body<'a> {
            code: &'a str,
            category: Category,
            message: String,
            exit_code: i32,
        }
        #[derive(Serialize)]
        struct Doc<'a> {
            schema_version: u32,
            error: Body<'a>,
        }
        let doc = Doc {
            schema_version: SCHEMA_VERSION,
            error: Body {
                code: self.code(),
                category: self.category(),
                message: self.to_string(),
                exit_code: self.exit_code(),
            },
        };
        serde_json::to_string(&doc)
            .unwrap_or_else(|_| format!("{{\"error\":{{\"code\":\"{}\"}}}}", self.code()))
    }
}

pub fn invalid(msg: impl Into<String>) -> CliError {
    CliError::InvalidConfig(msg.into())
}

pub type CliResult<T> = Result<T, CliError>;
