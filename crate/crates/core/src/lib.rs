//! Sketch-then-summarize dialogue summarization with controllable
//! granularity.
//!
//! The pipeline: clean and merge turns ([`corpus`]), label turn intents
//! ([`intent`]), extract key phrases against the reference ([`phrase`]),
//! build a sketch ([`sketch`]), align summary sentences to turn segments
//! ([`segment`]), learn where to cut ([`cutmodel`]) and generate one
//! sentence per highlighted segment ([`generate`]). [`metrics`] scores the
//! result with ROUGE.

pub mod corpus;
pub mod cutmodel;
pub mod error;
pub mod generate;
pub mod intent;
pub mod metrics;
pub mod phrase;
pub mod segment;
pub mod sketch;

pub use error::{Error, Result};
