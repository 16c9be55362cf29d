use serde::{Deserialize, Serialize};

/// Broad failure class; fixes the exit code and the HTTP status.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorClass {
    /// Malformed JSON, unknown or missing fields, inconsistent field sets.
    Validation,
    /// Values outside a formula's domain, infinite variances, missing moments.
    Numeric,
    /// Root finding, Newton or IRLS failures.
    Convergence,
    Internal,
}

impl ErrorClass {
    pub fn exit_code(self) -> i32 {
        match self {
            ErrorClass::Validation => 2,
            ErrorClass::Numeric => 3,
            ErrorClass::Convergence => 4,
            ErrorClass::Internal => 1,
        }
    }

    pub fn http_status(self) -> u16 {
        match self {
            ErrorClass::Validation => 400,
            ErrorClass::Numeric | ErrorClass::Convergence => 422,
            ErrorClass::Internal => 500,
        }
    }
}

/// Body returned for every failure, on stderr and over HTTP alike.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorDocument {
    pub code: String,
    pub message: String,
    pub offending_field: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ApiError {
    pub class: ErrorClass,
    pub doc: ErrorDocument,
}

impl ApiError {
    pub fn new(class: ErrorClass, code: &str, message: impl Into<String>, field: Option<String>) -> Self {
        ApiError {
            class,
            doc: ErrorDocument {
                code: code.to_string(),
                message: message.into(),
                offending_field: field,
            },
        }
    }

    pub fn validation(message: impl Into<String>, field: Option<&str>) -> Self {
        Self::new(
            ErrorClass::Validation,
            "invalid-request",
            message,
            field.map(str::to_string),
        )
    }

    pub fn internal(message: impl Into<String>) -> Self {
        Self::new(ErrorClass::Internal, "internal", message, None)
    }

    pub fn to_json(&self, pretty: bool) -> String {
        let out = if pretty {
            serde_json::to_string_pretty(&self.doc)
        } else {
            serde_json::to_string(&self.doc)
        };
        out.expect("error documents always serialize")
    }
}

impl std::fmt::Display for ApiError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}: {}", self.doc.code, self.doc.message)
    }
}

impl std::error::Error for ApiError {}

impl From<survpower_core::Error> for ApiError {
    fn from(e: survpower_core::Error) -> Self {
        use survpower_core::Error as E;
        let class = match e {
            E::Domain { .. } | E::Degenerate(_) | E::InfiniteVariance { .. } | E::Existence { .. } | E::Data(_) => {
                ErrorClass::Numeric
            }
            E::Convergence { .. }
            | E::Bracket { .. }
            | E::Separation(_)
            | E::RankDeficient
            | E::SingularInformation(_) => ErrorClass::Convergence,
        };
        ApiError::new(class, e.code(), e.to_string(), e.field().map(str::to_string))
    }
}
