use serde::Serialize;
use serde_json::Value;
use steadypop::Error;

pub const EXIT_PROPERTY: i32 = 1;
pub const EXIT_INPUT: i32 = 2;
pub const EXIT_SOLVER: i32 = 3;

#[derive(Debug, Clone, Serialize)]
pub struct ScenarioInfo {
    pub source: String,
    pub name: Option<String>,
    pub sha256: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct ErrorInfo {
    pub code: String,
    pub message: String,
}

/// Envelope printed on stdout by every command.
#[derive(Debug, Clone, Serialize)]
pub struct RunReport {
    pub command: &'static str,
    pub scenario: Option<ScenarioInfo>,
    pub outputs: Value,
    pub warnings: Vec<String>,
    pub error: Option<ErrorInfo>,
}

#[derive(Debug, Clone)]
pub enum Failure {
    Input { code: String, message: String },
    Solver { code: String, message: String },
    Property { message: String },
}

impl Failure {
    pub fn input(code: &str, message: impl Into<String>) -> Self {
        Failure::Input {
            code: code.into(),
            message: message.into(),
        }
    }

    /// Every error raised while loading a scenario counts as an input error.
    pub fn loading(e: Error) -> Self {
        Failure::input(e.code(), e.to_string())
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            Failure::Input { .. } => EXIT_INPUT,
            Failure::Solver { .. } => EXIT_SOLVER,
            Failure::Property { .. } => EXIT_PROPERTY,
        }
    }

    pub fn info(&self) -> ErrorInfo {
        let (code, message) = match self {
            Failure::Input { code, message } | Failure::Solver { code, message } => {
                (code.clone(), message.clone())
            }
            Failure::Property { message } => ("PropertyFailure".to_string(), message.clone()),
        };
        ErrorInfo { code, message }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let (code, message) = (e.code().to_string(), e.to_string());
        if e.is_input_error() {
            Failure::Input { code, message }
        } else {
            Failure::Solver { code, message }
        }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::input("Io", e.to_string())
    }
}

/// JSON number, or `null` for non-finite values.
pub fn num(x: f64) -> Value {
    if x.is_finite() {
        Value::from(x)
    } else {
        Value::Null
    }
}

/// CSV text with a one-line header; numbers use the shortest round-trip form.
pub fn csv(header: &[&str], rows: impl IntoIterator<Item = Vec<String>>) -> String {
    let mut out = header.join(",");
    out.push('\n');
    for row in rows {
        out.push_str(&row.join(","));
        out.push('\n');
    }
    out
}

pub fn cell(x: f64) -> String {
    format!("{x}")
}
