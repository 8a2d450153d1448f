//! Partition-level embeddings and their 2-D projection.

mod extract;
mod silhouette;
mod tsne;

pub use extract::{embed_recordings, extract_embeddings, write_projection_csv, EmbeddingSet};
pub use silhouette::silhouette_score;
pub use tsne::{conditional_affinities, joint_affinities, tsne, Affinities, TsneConfig, TsneResult};
