//! Two-step annotation service: intent judgment, then answer judgment.

mod error;
mod http;
mod store;

pub use error::{Result, ServiceError};
pub use http::{router, serve, SharedStore};
pub use store::{
    Annotator, AnnotationStore, AnnotationTask, Export, Intent, Judgment, LogEvent, Progress, Submission,
    TARGET_VOTES,
};
