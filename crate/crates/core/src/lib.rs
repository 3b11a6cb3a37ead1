//! Query-code matching: corpus construction, a siamese relation matcher over a
//! pluggable encoder, contrastive training with in-batch and query-rewrite
//! augmentation, and evaluation.

pub mod agreement;
pub mod coclr;
pub mod corpus;
pub mod curation;
pub mod encoder;
pub mod error;
pub mod eval;
pub mod intent;
pub mod matcher;
pub mod model;
pub mod pyfunc;
pub mod synth;

pub use error::{Error, Result};
