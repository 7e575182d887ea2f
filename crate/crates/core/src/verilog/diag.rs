use serde::{Deserialize, Serialize};

use super::ast::Span;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, PartialOrd, Ord)]
#[serde(rename_all = "lowercase")]
pub enum Severity {
    Error,
    Warning,
}

/// One compiler message. Serializes to the diagnostics JSONL row layout.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Diagnostic {
    pub severity: Severity,
    pub code: String,
    pub line: u32,
    pub col: u32,
    pub message: String,
}

impl Diagnostic {
    pub fn error(code: &str, span: Span, message: impl Into<String>) -> Self {
        Self {
            severity: Severity::Error,
            code: code.to_string(),
            line: span.line,
            col: span.col,
            message: message.into(),
        }
    }

    pub fn warning(code: &str, span: Span, message: impl Into<String>) -> Self {
        Self {
            severity: Severity::Warning,
            code: code.to_string(),
            line: span.line,
            col: span.col,
            message: message.into(),
        }
    }

    pub fn is_error(&self) -> bool {
        self.severity == Severity::Error
    }
}

impl std::fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let sev = match self.severity {
            Severity::Error => "error",
            Severity::Warning => "warning",
        };
        write!(f, "{}:{}: {sev}[{}]: {}", self.line, self.col, self.code, self.message)
    }
}

pub mod codes {
    pub const UNTERMINATED_COMMENT: &str = "unterminated_comment";
    pub const UNTERMINATED_STRING: &str = "unterminated_string";
    pub const BAD_CHAR: &str = "bad_character";
    pub const BAD_NUMBER: &str = "bad_number";
    pub const SYNTAX: &str = "syntax";
    pub const UNSUPPORTED: &str = "unsupported";
    pub const UNDECLARED: &str = "undeclared";
    pub const DUPLICATE: &str = "duplicate";
    pub const PORT: &str = "port";
    pub const ASSIGN_KIND: &str = "assign_kind";
    pub const INSTANCE: &str = "instance";
    pub const UNUSED: &str = "unused";
    pub const WIDTH: &str = "width";
    pub const IMPLICIT_NET: &str = "implicit_net";
    pub const UNRESOLVED_MODULE: &str = "unresolved_module";
}
