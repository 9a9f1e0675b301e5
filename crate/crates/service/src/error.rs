use std::fmt;

use rebuild_core::agents::AgentError;
use rebuild_core::bench::BenchError;
use rebuild_core::city::{DatasetError, Location};
use rebuild_core::planner::{LineageError, PlannerError};
use serde::Serialize;
use serde_json::{json, Value};

/// Broad failure class; decides the exit code and the HTTP status.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ErrorKind {
    Validation,
    NotFound,
    Conflict,
    NoPlan,
    Internal,
}

impl ErrorKind {
    pub fn exit_code(self) -> i32 {
        match self {
            ErrorKind::Validation | ErrorKind::NotFound | ErrorKind::Conflict => 1,
            ErrorKind::NoPlan => 2,
            ErrorKind::Internal => 3,
        }
    }

    pub fn http_status(self) -> u16 {
        match self {
            ErrorKind::Validation | ErrorKind::NoPlan => 422,
            ErrorKind::NotFound => 404,
            ErrorKind::Conflict => 409,
            ErrorKind::Internal => 500,
        }
    }
}

/// Error with a stable machine-readable code.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ServiceError {
    #[serde(skip)]
    pub kind: ErrorKind,
    pub code: &'static str,
    pub message: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub details: Option<Value>,
}

impl ServiceError {
    pub fn new(kind: ErrorKind, code: &'static str, message: impl Into<String>) -> Self {
        ServiceError {
            kind,
            code,
            message: message.into(),
            details: None,
        }
    }

    pub fn with_details(mut self, details: Value) -> Self {
        self.details = Some(details);
        self
    }

    pub fn validation(code: &'static str, message: impl Into<String>) -> Self {
        Self::new(ErrorKind::Validation, code, message)
    }

    pub fn not_found(code: &'static str, message: impl Into<String>) -> Self {
        Self::new(ErrorKind::NotFound, code, message)
    }

    pub fn internal(message: impl Into<String>) -> Self {
        Self::new(ErrorKind::Internal, "internal", message)
    }

    /// `{"error": {...}}` body shared by the CLI and the HTTP API.
    pub fn body(&self) -> Value {
        json!({ "error": self })
    }

    /// Problems with a dataset supplied by the user.
    pub fn from_input(err: DatasetError) -> Self {
        let location = |at: &Location| json!({ "table": at.table, "row": at.row, "field": at.field });
        let (code, details) = match &err {
            DatasetError::Schema { at, .. } => ("invalid_dataset", Some(location(at))),
            DatasetError::DanglingReference { at, id } => {
                ("dangling_reference", Some(json!({ "location": location(at), "id": id })))
            }
            DatasetError::DependencyCycle { at, path } => {
                ("dependency_cycle", Some(json!({ "location": location(at), "cycle": path })))
            }
            DatasetError::UnknownItem(id) => ("unknown_item", Some(json!({ "id": id }))),
            DatasetError::Io { path, .. } => ("unreadable_input", Some(json!({ "path": path }))),
        };
        let mut e = ServiceError::validation(code, err.to_string());
        e.details = details;
        e
    }
}

impl fmt::Display for ServiceError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.code, self.message)
    }
}

impl std::error::Error for ServiceError {}

impl From<LineageError> for ServiceError {
    fn from(err: LineageError) -> Self {
        let msg = err.to_string();
        match err {
            LineageError::Exists(_) => {
                ServiceError::new(ErrorKind::Conflict, "lineage_exists", format!("{msg} (use --force to replace it)"))
            }
            LineageError::Missing(_) => ServiceError::not_found(
                "no_lineage",
                format!("{msg}; run `ingest` or `generate` first"),
            ),
            LineageError::UnknownPlan(_) => ServiceError::not_found("unknown_plan", msg),
            LineageError::AlreadyApplied(_) => ServiceError::new(ErrorKind::Conflict, "already_applied", msg),
            LineageError::StalePlan { .. } => ServiceError::new(ErrorKind::Conflict, "stale_plan", msg),
            LineageError::Corrupt(_) | LineageError::Io { .. } | LineageError::Dataset(_) => {
                ServiceError::internal(msg)
            }
        }
    }
}

impl From<AgentError> for ServiceError {
    fn from(err: AgentError) -> Self {
        match err {
            AgentError::InvalidConfig(_) => ServiceError::validation("invalid_config", err.to_string()),
            AgentError::NothingToPlan => ServiceError::new(ErrorKind::NoPlan, "nothing_to_plan", err.to_string()),
            other => ServiceError::internal(other.to_string()),
        }
    }
}

impl From<PlannerError> for ServiceError {
    fn from(err: PlannerError) -> Self {
        match err {
            PlannerError::NothingToPlan => {
                ServiceError::new(ErrorKind::NoPlan, "nothing_to_plan", err.to_string())
            }
            PlannerError::InvalidRequest(_) => ServiceError::validation("invalid_request", err.to_string()),
            PlannerError::Agent(e) => e.into(),
            other => ServiceError::internal(other.to_string()),
        }
    }
}

impl From<BenchError> for ServiceError {
    fn from(err: BenchError) -> Self {
        match err {
            BenchError::InvalidConfig(_) => ServiceError::validation("invalid_config", err.to_string()),
            BenchError::Agent(e) => e.into(),
            other => ServiceError::internal(other.to_string()),
        }
    }
}
