use logsob_core::Error;

pub const EXIT_OK: i32 = 0;
/// Some deficit fell below its discretization tolerance.
pub const EXIT_NEGATIVE: i32 = 2;
pub const EXIT_USAGE: i32 = 64;
pub const EXIT_DATA: i32 = 65;
pub const EXIT_INTERNAL: i32 = 70;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Failure {
    pub code: i32,
    pub message: String,
}

impl Failure {
    pub fn usage(message: impl Into<String>) -> Self {
        Self { code: EXIT_USAGE, message: message.into() }
    }

    pub fn data(message: impl Into<String>) -> Self {
        Self { code: EXIT_DATA, message: message.into() }
    }

    pub fn internal(message: impl Into<String>) -> Self {
        Self { code: EXIT_INTERNAL, message: message.into() }
    }
}

pub fn exit_code(error: &Error) -> i32 {
    match error {
        Error::Config(_) => EXIT_USAGE,
        Error::NoConvergence { .. }
        | Error::QuadratureUnderflow { .. }
        | Error::MixedForms
        | Error::Overflow(_)
        | Error::Diverged(_) => EXIT_INTERNAL,
        _ => EXIT_DATA,
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Self { code: exit_code(&e), message: e.to_string() }
    }
}

impl From<serde_json::Error> for Failure {
    fn from(e: serde_json::Error) -> Self {
        Self::internal(format!("serialization: {e}"))
    }
}

impl From<csv::Error> for Failure {
    fn from(e: csv::Error) -> Self {
        Self::data(format!("csv: {e}"))
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Self::data(e.to_string())
    }
}
