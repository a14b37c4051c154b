//! Pipeline engine and evaluation toolkit for audio-guided referring video
//! object segmentation.
//!
//! A query's spoken expression is transcribed, a has-target gate decides
//! whether the expression refers to anything in the video, and only then is a
//! text-referring segmenter asked for masks. Model stages sit behind the
//! protocol in [`backends`]; scoring lives in [`metrics`] and [`evaluate`].

pub mod backends;
pub mod config;
pub mod evaluate;
pub mod frames;
pub mod manifest;
pub mod mask;
pub mod metrics;
pub mod pipeline;
pub mod report;
pub mod rle;
pub mod sampler;
pub mod types;

pub use config::RunConfig;
pub use manifest::{ExpressionQuery, Manifest};
pub use mask::{BinaryMask, FrameDims, MaskSequence};
pub use metrics::EvaluationReport;
pub use pipeline::{Pipeline, QueryResult, QueryStatus, RunOptions, RunOutcome, RunReport};
pub use rle::RleMask;
pub use sampler::FramePlan;
pub use types::{GateDecision, Transcript};
