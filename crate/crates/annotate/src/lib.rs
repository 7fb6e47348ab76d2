//! Annotation editing service: an in-memory session over one sequence's
//! annotation file, exposed as a small JSON HTTP API.

mod error;
mod http;
mod session;

pub use error::{Error, Result};
pub use http::{router, serve, ServeConfig, SharedSession};
pub use session::{Session, SessionOptions, SequenceSummary, DEFAULT_PREASSIGN_GATE};
