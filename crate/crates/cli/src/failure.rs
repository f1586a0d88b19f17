//! Categorised failures and their one-line rendering.

use std::fmt;

/// A failure with a short machine-readable category.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Failure {
    pub kind: &'static str,
    pub message: String,
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.kind, self.message)
    }
}

impl std::error::Error for Failure {}

pub fn fail(kind: &'static str, message: impl Into<String>) -> Failure {
    Failure {
        kind,
        message: message.into(),
    }
}

/// Category of an error chain: the first [`Failure`] or core error found, else `internal`.
pub fn kind_of(err: &anyhow::Error) -> &'static str {
    for cause in err.chain() {
        if let Some(f) = cause.downcast_ref::<Failure>() {
            return f.kind;
        }
        if let Some(e) = cause.downcast_ref::<randpad_core::Error>() {
            return e.kind();
        }
    }
    "internal"
}

/// `error: kind=<kind> msg=<message>` on a single line.
pub fn render(err: &anyhow::Error) -> String {
    let msg = err
        .chain()
        .map(|c| match c.downcast_ref::<Failure>() {
            Some(f) => f.message.clone(),
            None => c.to_string(),
        })
        .collect::<Vec<_>>()
        .join(": ");
    let msg: String = msg.chars().map(|c| if c == '\n' || c == '\r' { ' ' } else { c }).collect();
    format!("error: kind={} msg={}", kind_of(err), msg)
}
