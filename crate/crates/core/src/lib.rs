//! Verbatim-first memory palace for LLM agents.
//!
//! Drawers hold raw text addressed by wing/room/hall/closet metadata; a flat
//! HNSW index plus BM25 serve hybrid retrieval, a temporal triple store keeps
//! facts, and a small layered stack assembles wake-up context.

pub mod aaak;
pub mod config;
pub mod embed;
pub mod error;
pub mod evalbench;
pub mod ingest;
pub mod kgraph;
pub mod palace;
pub mod scalar;
pub mod search;
pub mod server;
pub mod stack;
pub mod text;
pub mod timestamp;
pub mod types;
pub mod vindex;

pub use config::PalaceConfig;
pub use embed::DistanceMetric;
pub use error::{PalaceError, Result};
pub use palace::Palace;
pub use search::{SearchMode, SearchRequest, SearchResult};
pub use types::{derive_drawer_id, Drawer, DrawerKind, PalaceAddress};

/// Embedding vectors as produced by the providers.
pub type Embedding = embed::EmbeddingVector<f32>;
/// Double-precision embeddings, for offline analysis.
pub type Embedding64 = embed::EmbeddingVector<f64>;
/// The vector index the palace persists.
pub type Index = vindex::VectorIndex<f32>;
