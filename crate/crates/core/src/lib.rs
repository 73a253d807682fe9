//! Cross-category sketch retrieval.
//!
//! Sketches are featurized, clustered per category with k-means and indexed
//! by a precomputed cross-category cluster distance matrix. A query sketch is
//! answered with a sketch from a *different* category whose visual similarity
//! and label-embedding similarity agree, at a requested novelty level.

pub mod cluster;
pub mod embeddings;
pub mod engine;
pub mod error;
pub mod features;
pub mod fixture;
pub mod ingest;
pub mod sketch;

pub use cluster::{build_index, load_index, save_index, ClusterId, ClusterIndex, DistanceMatrix};
pub use embeddings::{conceptual_similarity, load_embeddings, EmbeddingStore};
pub use engine::{
    conceptual_shift, Novelty, ShiftCandidate, ShiftConfig, ShiftEngine, ShiftResponse,
};
pub use error::{Error, Result};
pub use features::{extract, ExtractorKind, ExtractorSpec, FeatureVector};
pub use ingest::{scan_corpus, Corpus, CorpusManifest};
pub use sketch::{Label, Point, Sketch, Stroke};
