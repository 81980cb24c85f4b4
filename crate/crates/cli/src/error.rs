use serde::Serialize;

/// Why a command stopped. Validation failures exit with 1, runtime failures
/// with 2.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Failure {
    pub kind: FailureKind,
    pub message: String,
    /// Per-item diagnostics, e.g. one line per mismatched document id.
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub details: Vec<String>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum FailureKind {
    Validation,
    Runtime,
}

impl Failure {
    pub fn validation(message: impl Into<String>) -> Self {
        Self {
            kind: FailureKind::Validation,
            message: message.into(),
            details: Vec::new(),
        }
    }

    pub fn runtime(message: impl Into<String>) -> Self {
        Self {
            kind: FailureKind::Runtime,
            message: message.into(),
            details: Vec::new(),
        }
    }

    pub fn with_details(mut self, details: Vec<String>) -> Self {
        self.details = details;
        self
    }

    pub fn exit_code(&self) -> i32 {
        match self.kind {
            FailureKind::Validation => 1,
            FailureKind::Runtime => 2,
        }
    }

    /// One-line JSON record for standard error.
    pub fn record(&self) -> String {
        serde_json::json!({ "error": self }).to_string()
    }
}

impl std::fmt::Display for Failure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.message)
    }
}

impl std::error::Error for Failure {}

/// Tags a core error as a validation failure, prefixed with `context`.
pub fn invalid(context: impl std::fmt::Display) -> impl FnOnce(tpp_core::Error) -> Failure {
    move |e| Failure::validation(format!("{context}: {e}"))
}

/// Tags a core error as a runtime failure, prefixed with `context`.
pub fn failed(context: impl std::fmt::Display) -> impl FnOnce(tpp_core::Error) -> Failure {
    move |e| Failure::runtime(format!("{context}: {e}"))
}
