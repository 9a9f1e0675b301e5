//! Command-line and HTTP front ends over a dataset lineage.

pub mod cli;
pub mod error;
pub mod http;
pub mod jobs;
pub mod ops;

pub use error::{ErrorKind, ServiceError};
