//! Batch pipeline (extract, cluster, mine) and the autosuggest service
//! behind the `pubsuggest` binary.

pub mod manifest;
pub mod pipeline;
pub mod server;

pub use manifest::{Counters, PipelineManifest};
pub use pipeline::{RunConfig, StageOptions};
pub use server::Suggester;
