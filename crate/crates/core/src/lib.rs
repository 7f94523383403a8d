//! Corpus-to-keywords engine: GloVe embeddings trained from document
//! corpora, used to extract, rank and iteratively update keyword sets for
//! tracking drifting online discussions.

pub mod cluster;
pub mod config;
pub mod cooccur;
pub mod corpus;
pub mod domain;
pub mod error;
pub mod glove;
pub mod keywords;
pub mod tsne;
pub mod vectors;

pub use cluster::{KMeansConfig, KMeansResult};
pub use config::PipelineConfig;
pub use cooccur::{CooccurrenceTable, Weighting};
pub use corpus::{Document, TokenRules, Vocabulary};
pub use domain::{DomainReport, TableFormat};
pub use error::{Error, Result};
pub use glove::{EmbeddingModel, ExportMode, TrainConfig, TrainMode};
pub use keywords::{Candidate, Collector, DriftConfig, FileCollector, KeywordSet, SimCollector};
pub use tsne::{Projection2D, TsneConfig};
pub use vectors::{Neighbor, Query, VectorSpace};
