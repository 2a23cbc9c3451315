//! Issue-to-commit trace link recovery for bilingual projects.
//!
//! Artifacts are cleaned, non-English sentences are translated by several
//! machine translators, and dependency biterms that recur across issues and
//! commits are appended to the documents before VSM ranking.

pub mod consensus;
pub mod corpus;
pub mod error;
pub mod evaluation;
pub mod hashing;
pub mod parsing;
pub mod pipeline;
pub mod preprocess;
pub mod retrieval;
pub mod stem;
pub mod translation;
pub mod weighting;

pub use corpus::{load_project, Artifact, ArtifactKind, GroundTruth, Project, SectionKind, TraceLink};
pub use error::{Error, Result};
pub use evaluation::MetricsReport;
pub use pipeline::{ablate, run, Mode, PipelineConfig, RunManifest, Services};
pub use retrieval::RankedLink;
